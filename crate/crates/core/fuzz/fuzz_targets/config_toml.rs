#![no_main]

use libfuzzer_sys::fuzz_target;
use pdwalker::config::ScenarioConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = ScenarioConfig::from_toml_str(text) else {
        return;
    };
    // anything accepted must survive a round trip unchanged
    let again = ScenarioConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
    assert_eq!(cfg, again);
});
