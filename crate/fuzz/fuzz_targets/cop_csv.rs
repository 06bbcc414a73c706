#![no_main]

use copguide::copstream::{read_cop_csv, resample_uniform, ResampleOptions};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(samples) = read_cop_csv(data) {
        let _ = resample_uniform(&samples, ResampleOptions::default());
    }
});
