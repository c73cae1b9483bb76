#![no_main]

use libfuzzer_sys::fuzz_target;
use pdwalker::hzd::OrbitRecord;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(rec) = OrbitRecord::from_json(text) else { return };
    let again = OrbitRecord::from_json(&rec.to_json().unwrap()).unwrap();
    assert_eq!(rec, again);
    // validated records can always be lifted back to joint coordinates or refused cleanly
    let _ = rec.post_impact_state();
    let _ = rec.pre_impact_state();
});
