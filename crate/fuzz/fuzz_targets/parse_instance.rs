#![no_main]

use libfuzzer_sys::fuzz_target;
use streamq::envs::{parse_instance, write_instance};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(mdp) = parse_instance(text) {
        // Anything accepted must survive a write/parse cycle unchanged.
        let once = write_instance(&mdp);
        let again = parse_instance(&once).expect("written instance parses");
        assert_eq!(once, write_instance(&again));
    }
});
