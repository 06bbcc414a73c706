#![no_main]

use copguide::ActuatorCommand;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cmd) = ActuatorCommand::decode(data) {
        let frame = cmd.encode().expect("decoded command encodes");
        assert_eq!(&frame[..], data);
    }
});
