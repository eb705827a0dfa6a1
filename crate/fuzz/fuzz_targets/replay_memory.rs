#![no_main]

use libfuzzer_sys::fuzz_target;
use streamq::s4q::ReplayMemory;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(mem) = ReplayMemory::from_json(text) {
        let back = ReplayMemory::from_json(&mem.to_json()).expect("written memory parses");
        assert_eq!(mem.to_json(), back.to_json());
    }
});
