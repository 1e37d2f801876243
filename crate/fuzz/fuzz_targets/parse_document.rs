#![no_main]

use libfuzzer_sys::fuzz_target;
use lyapgen::io::{check_document, parse_document};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(doc) = parse_document(text) {
        let _ = check_document(&doc);
    }
});
