#![no_main]

use libfuzzer_sys::fuzz_target;
use lyapgen::pipeline::SystemFile;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(file) = SystemFile::parse(text) {
        let _ = file.resolve();
    }
});
