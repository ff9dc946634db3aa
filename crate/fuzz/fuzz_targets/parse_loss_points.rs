#![no_main]

use libfuzzer_sys::fuzz_target;
use ringsched::formats::{parse_loss_points, write_loss_points};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(points) = parse_loss_points(text) {
        assert_eq!(parse_loss_points(&write_loss_points(&points)).expect("written points parse"), points);
    }
});
