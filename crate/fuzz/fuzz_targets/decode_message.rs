#![no_main]

use gorilla_harness::message::{GorillaMessage, ProtoMsg, SandglassMessage};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // decoding is the exact inverse of the canonical encoding
    if let Ok(m) = GorillaMessage::decode(data) {
        assert_eq!(m.encode(), data);
    }
    if let Ok(m) = SandglassMessage::decode(data) {
        assert_eq!(m.encode(), data);
    }
});
