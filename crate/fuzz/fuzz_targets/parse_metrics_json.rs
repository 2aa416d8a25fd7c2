#![no_main]

use arolc::metrics::MetricsReport;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(report) = MetricsReport::from_json(text) {
        let again = MetricsReport::from_json(&report.to_json()).expect("serialized report parses");
        assert_eq!(again.to_json(), report.to_json());
    }
});
