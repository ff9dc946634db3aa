use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// How the simulated scheduler sizes jobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Strategy {
    /// Speed and convergence models are known when a job arrives.
    Precompute,
    /// A new job holds 8 GPUs for its first ten minutes, measuring speed
    /// at 1, 2, 4 and 8 workers before the doubling heuristic takes over.
    Exploratory,
    /// Every job requests exactly this many GPUs for its whole lifetime.
    Fixed(u32),
}

impl Strategy {
    /// The six strategies of the strategy-comparison experiment, in table order.
    pub const COMPARISON: [Strategy; 6] = [
        Strategy::Precompute,
        Strategy::Exploratory,
        Strategy::Fixed(8),
        Strategy::Fixed(4),
        Strategy::Fixed(2),
        Strategy::Fixed(1),
    ];

    pub const VALID_NAMES: &'static str = "precompute, exploratory, fixed-<k> (e.g. fixed-8), one, two, four, eight";

    /// Row label used in comparison tables.
    pub fn label(&self) -> String {
        match self {
            Strategy::Precompute => "Precompute".into(),
            Strategy::Exploratory => "Exploratory".into(),
            Strategy::Fixed(1) => "One".into(),
            Strategy::Fixed(2) => "Two".into(),
            Strategy::Fixed(4) => "Four".into(),
            Strategy::Fixed(8) => "Eight".into(),
            Strategy::Fixed(k) => format!("Fixed({k})"),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Precompute => f.write_str("precompute"),
            Strategy::Exploratory => f.write_str("exploratory"),
            Strategy::Fixed(k) => write!(f, "fixed-{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown strategy {0:?}; valid strategies: {valid}", valid = Strategy::VALID_NAMES)]
pub struct UnknownStrategy(pub String);

impl FromStr for Strategy {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let fixed = match lower.as_str() {
            "precompute" => return Ok(Strategy::Precompute),
            "exploratory" => return Ok(Strategy::Exploratory),
            "one" => Some(1),
            "two" => Some(2),
            "four" => Some(4),
            "eight" => Some(8),
            other => other
                .strip_prefix("fixed-")
                .or_else(|| other.strip_prefix("fixed"))
                .and_then(|k| k.parse::<u32>().ok())
                .filter(|&k| k >= 1),
        };
        fixed.map(Strategy::Fixed).ok_or_else(|| UnknownStrategy(s.to_string()))
    }
}

impl TryFrom<String> for Strategy {
    type Error = UnknownStrategy;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        for s in Strategy::COMPARISON {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("Eight".parse::<Strategy>().unwrap(), Strategy::Fixed(8));
        assert_eq!("fixed3".parse::<Strategy>().unwrap(), Strategy::Fixed(3));
        let err = "random".parse::<Strategy>().unwrap_err();
        assert!(err.to_string().contains("precompute"));
        assert!("fixed-0".parse::<Strategy>().is_err());
    }
}
