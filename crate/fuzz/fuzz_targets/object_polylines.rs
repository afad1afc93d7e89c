#![no_main]

use libfuzzer_sys::fuzz_target;
use kdvision_cli::pipeline::parse_object_polylines;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_object_polylines(text);
    }
});
