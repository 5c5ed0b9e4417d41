#![no_main]

use diamond_cli::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = ExperimentConfig::parse(text) else { return };
    // the resolved config a run writes out must load back unchanged
    let written = toml::to_string(&cfg).expect("valid config serializes");
    assert_eq!(ExperimentConfig::parse(&written).expect("written config parses"), cfg);
});
