#![no_main]

use libfuzzer_sys::fuzz_target;
use kdvision::moments::parse_feature_rows;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_feature_rows(text);
    }
});
