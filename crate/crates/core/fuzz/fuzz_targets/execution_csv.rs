//! Execution CSV parser: never panics, and anything it accepts survives a
//! write/parse round trip unchanged.

#![no_main]

use libfuzzer_sys::fuzz_target;
use lvad_core::data::{execution_to_string, parse_execution};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(e) = parse_execution(text) {
        let written = execution_to_string(&e).expect("parsed executions are writable");
        assert_eq!(parse_execution(&written).expect("written executions parse"), e);
    }
});
