#![no_main]

use arolc::Scenario;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(sc) = Scenario::from_toml_str(text) {
        let again =
            Scenario::from_toml_str(&sc.to_toml_string()).expect("serialized scenario parses");
        assert_eq!(again.hash(), sc.hash());
    }
});
