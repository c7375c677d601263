#![no_main]

use fpt_core::backbone::decode_tensors;
use libfuzzer_sys::fuzz_target;

// Input layout: a little-endian u32 manifest length, the manifest text, then
// the blob.
fuzz_target!(|data: &[u8]| {
    if data.len() < 4 {
        return;
    }
    let len = u32::from_le_bytes([data[0], data[1], data[2], data[3]]) as usize;
    let rest = &data[4..];
    if len > rest.len() {
        return;
    }
    let (manifest, blob) = rest.split_at(len);
    if let Ok(text) = std::str::from_utf8(manifest) {
        if let Ok(tensors) = decode_tensors(text, blob) {
            for t in tensors {
                assert_eq!(t.values.len(), t.shape.iter().product::<usize>());
            }
        }
    }
});
