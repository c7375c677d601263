#![no_main]

use fpt_core::data::{parse_csv, CsvSchema};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(ds) = parse_csv(text, &CsvSchema::named("fuzz")) {
            assert!(ds.values.is_finite());
            assert!(ds.len() > 0);
        }
    }
});
