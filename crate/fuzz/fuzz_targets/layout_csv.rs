#![no_main]

use copguide::PlateLayout;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = PlateLayout::from_reader(data);
});
