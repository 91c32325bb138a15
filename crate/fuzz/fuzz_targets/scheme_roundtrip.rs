#![no_main]

use biasprice::config::{parse_config, parse_scheme, scheme_table};
use libfuzzer_sys::fuzz_target;

// Any scheme that parses must survive emit + reparse unchanged.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(scheme) = parse_scheme(text) else { return };
    let emitted = scheme_table(&scheme, Some("fuzz"));
    let back = parse_config(&emitted).expect("emitted table reparses");
    assert_eq!(back.scheme.expect("scheme table").scheme, scheme);
});
