#![no_main]

use libfuzzer_sys::fuzz_target;
use kdvision_cli::config::{parse_intervals, parse_vector, PipelineConfig};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let mut cfg = PipelineConfig::default();
        if cfg.apply_text(text).is_ok() {
            let _ = cfg.validate();
        }
        let _ = parse_intervals(text);
        let _ = parse_vector(text);
    }
});
