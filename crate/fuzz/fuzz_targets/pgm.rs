#![no_main]

use libfuzzer_sys::fuzz_target;
use kdvision::raster::pnm::decode_pgm;

fuzz_target!(|data: &[u8]| {
    let _ = decode_pgm(data);
});
