#![no_main]

use libfuzzer_sys::fuzz_target;
use kdvision::index::Archive;

fuzz_target!(|data: &[u8]| {
    let _ = Archive::decode(data);
});
