#![no_main]

use libfuzzer_sys::fuzz_target;
use ringsched::formats::{parse_trace, write_trace};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(workload) = parse_trace(text) {
        let mut out = Vec::new();
        write_trace(&mut out, &workload).expect("in-memory write");
        let again = parse_trace(std::str::from_utf8(&out).expect("utf-8")).expect("written trace parses");
        assert_eq!(again, workload);
    }
});
