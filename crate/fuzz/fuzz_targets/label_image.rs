#![no_main]

use libfuzzer_sys::fuzz_target;
use kdvision::raster::pnm::decode_label_image;

// raster bytes, a NUL, then the legend text
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    if let Ok(legend) = std::str::from_utf8(data.get(split + 1..).unwrap_or_default()) {
        let _ = decode_label_image(&data[..split], legend);
    }
});
