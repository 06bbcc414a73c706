#![no_main]

use copguide::WalkerParams;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(params) = WalkerParams::parse(text) {
            let again = WalkerParams::parse(&params.to_file_string()).expect("saved params reparse");
            assert_eq!(again.rng_seed, params.rng_seed);
        }
    }
});
