#![no_main]

use copguide::copstream::{fuse_stream, parse_plate_reader, DEFAULT_CONTACT_THRESHOLD_N};
use copguide::PlateLayout;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let mut layout = PlateLayout::new();
    for id in 1..=4 {
        layout.insert(id, f64::from(id - 1) * 0.6, 0.0);
    }
    if let Ok(frames) = parse_plate_reader(data, &layout) {
        let _ = fuse_stream(&frames, DEFAULT_CONTACT_THRESHOLD_N);
    }
});
