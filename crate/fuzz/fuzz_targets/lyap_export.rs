#![no_main]

use libfuzzer_sys::fuzz_target;
use lyapgen::lyap::{LyapExport, LyapFunction};

fuzz_target!(|data: &[u8]| {
    let Ok(export) = serde_json::from_slice::<LyapExport>(data) else { return };
    if let Ok(w) = LyapFunction::from_export(&export) {
        let _ = w.value(&lyapgen::linalg::Vector::zeros(w.dim()));
    }
});
