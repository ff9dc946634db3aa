//! Replays the checked-in fuzz corpus on stable: every seed must parse, and
//! the formats with writers must round-trip.

use std::path::PathBuf;

use ringsched::formats::{self as f, parse_loss_points, parse_trace, write_loss_points, write_trace};

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let text = std::fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

macro_rules! seeds_parse {
    ($($name:ident),*) => {$(
        #[test]
        fn $name() {
            for (path, text) in seeds(stringify!($name)) {
                if let Err(e) = ringsched::formats::$name(&text) {
                    panic!("{}: {e}", path.display());
                }
            }
        }
    )*};
}

seeds_parse!(parse_model_file, parse_jobs_file, parse_plan_file, parse_report, parse_speed_samples);

#[test]
fn parse_trace_round_trips() {
    for (_, text) in seeds("parse_trace") {
        let workload = parse_trace(&text).unwrap();
        let mut out = Vec::new();
        write_trace(&mut out, &workload).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }
}

#[test]
fn parse_loss_points_round_trips() {
    for (_, text) in seeds("parse_loss_points") {
        let points = parse_loss_points(&text).unwrap();
        assert_eq!(parse_loss_points(&write_loss_points(&points)).unwrap(), points);
    }
}

#[test]
fn garbage_is_rejected_not_panicking() {
    let inputs = ["", "\n", "{", "null", "[]", "{\"format\":1}", "a,b\n1,2", "\u{feff}{}", "workers\n-1"];
    for text in inputs {
        let _ = parse_trace(text);
        let _ = f::parse_model_file(text);
        let _ = f::parse_jobs_file(text);
        let _ = f::parse_plan_file(text);
        let _ = f::parse_report(text);
        let _ = f::parse_speed_samples(text);
        let _ = parse_loss_points(text);
    }
    assert!(parse_trace("").is_err());
    assert!(f::parse_report("{").is_err());
}
