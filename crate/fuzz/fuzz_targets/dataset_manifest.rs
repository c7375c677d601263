#![no_main]

use fpt_core::data::DatasetManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = DatasetManifest::from_json_str(text) {
            for name in m.datasets.keys() {
                let _ = m.schema(name);
            }
        }
    }
});
