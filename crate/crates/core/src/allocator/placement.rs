use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AllocationPlan, JobId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlacementError {
    #[error("invalid cluster: {0}")]
    InvalidCluster(String),
    #[error("cannot place job {job}: needs {needed} GPUs, {free} free")]
    Infeasible { job: JobId, needed: u32, free: u32 },
}

/// Homogeneous cluster of `node_count` nodes with `gpus_per_node` GPUs each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub capacity: u32,
    pub gpus_per_node: u32,
    pub node_count: u32,
}

impl ClusterConfig {
    pub fn new(node_count: u32, gpus_per_node: u32) -> Result<Self, PlacementError> {
        let cluster = Self { capacity: node_count.saturating_mul(gpus_per_node), gpus_per_node, node_count };
        cluster.validate()?;
        Ok(cluster)
    }

    pub fn validate(&self) -> Result<(), PlacementError> {
        if self.gpus_per_node == 0 || self.node_count == 0 {
            return Err(PlacementError::InvalidCluster("empty cluster".into()));
        }
        if self.node_count.checked_mul(self.gpus_per_node) != Some(self.capacity) {
            return Err(PlacementError::InvalidCluster(format!(
                "capacity {} != {} nodes x {} GPUs",
                self.capacity, self.node_count, self.gpus_per_node
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSlot {
    pub node: u32,
    pub gpus: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobPlacement {
    pub job_id: JobId,
    pub slots: Vec<NodeSlot>,
}

impl JobPlacement {
    pub fn gpus(&self) -> u32 {
        self.slots.iter().map(|s| s.gpus).sum()
    }
}

/// Job placements in plan order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Placement {
    pub jobs: Vec<JobPlacement>,
}

impl Placement {
    pub fn job(&self, id: JobId) -> Option<&JobPlacement> {
        self.jobs.iter().find(|j| j.job_id == id)
    }

    pub fn node_usage(&self, cluster: &ClusterConfig) -> Vec<u32> {
        let mut used = vec![0; cluster.node_count as usize];
        for slot in self.jobs.iter().flat_map(|j| &j.slots) {
            used[slot.node as usize] += slot.gpus;
        }
        used
    }
}

/// First-fit-decreasing placement of a plan onto nodes.
///
/// Jobs are taken largest first. A job that fits on one node goes to the
/// first node with room. Otherwise it takes the emptiest nodes until the
/// remainder fits on a single node, which is then chosen first-fit; this
/// spans the fewest nodes the current free slots allow.
pub fn place_tasks(plan: &AllocationPlan, cluster: &ClusterConfig) -> Result<Placement, PlacementError> {
    cluster.validate()?;
    let mut free = vec![cluster.gpus_per_node; cluster.node_count as usize];
    let mut order: Vec<usize> = (0..plan.entries.len()).collect();
    order.sort_by(|&a, &b| plan.entries[b].workers.cmp(&plan.entries[a].workers));

    let mut placed: Vec<Option<JobPlacement>> = vec![None; plan.entries.len()];
    for idx in order {
        let entry = &plan.entries[idx];
        let total_free: u32 = free.iter().sum();
        if entry.workers > total_free {
            return Err(PlacementError::Infeasible { job: entry.job_id, needed: entry.workers, free: total_free });
        }
        let mut slots = Vec::new();
        let mut remaining = entry.workers;
        while remaining > 0 {
            if let Some(node) = free.iter().position(|&f| f >= remaining) {
                free[node] -= remaining;
                slots.push(NodeSlot { node: node as u32, gpus: remaining });
                break;
            }
            // No single node holds the rest: take the emptiest one whole.
            let (node, &avail) = free
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .expect("cluster has nodes");
            free[node] = 0;
            remaining -= avail;
            slots.push(NodeSlot { node: node as u32, gpus: avail });
        }
        slots.sort_by_key(|s| s.node);
        placed[idx] = Some(JobPlacement { job_id: entry.job_id, slots });
    }
    Ok(Placement { jobs: placed.into_iter().map(|p| p.expect("every job placed")).collect() })
}
