#![no_main]

use libfuzzer_sys::fuzz_target;
use kdvision::raster::pnm::decode_pnm;

fuzz_target!(|data: &[u8]| {
    let _ = decode_pnm(data);
});
