#![no_main]

use copguide::ReferencePath;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(path) = ReferencePath::parse(text) {
        let t = path.duration() * 0.5;
        let _ = path.lookup(t);
        let _ = path.anticipatory_lookup(t, 0.1);
        let again = ReferencePath::parse(&path.to_file_string()).expect("saved path reparses");
        assert_eq!(again.len(), path.len());
    }
});
