#![no_main]

use libfuzzer_sys::fuzz_target;
use lyapgen::pipeline::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::parse(text) {
        let again = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::parse(&again).unwrap(), cfg);
    }
});
