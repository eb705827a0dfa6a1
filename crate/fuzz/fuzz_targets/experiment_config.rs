#![no_main]

use libfuzzer_sys::fuzz_target;
use streamq::record::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_toml(text) {
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).expect("written config parses");
        assert_eq!(cfg.hash(), back.hash());
    }
});
