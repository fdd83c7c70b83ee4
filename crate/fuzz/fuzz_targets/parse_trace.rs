#![no_main]

use gorilla_harness::trace::Trace;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = Trace::parse(text) {
        let out = t.to_text();
        assert_eq!(Trace::parse(&out).expect("re-parse").to_text(), out);
    }
});
