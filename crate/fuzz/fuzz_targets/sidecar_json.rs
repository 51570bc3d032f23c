#![no_main]

use correntropy::io::{parse_sidecar_json, sidecar_to_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let s = String::from_utf8_lossy(data);
    let Ok(sc) = parse_sidecar_json(&s) else {
        return;
    };
    let again = parse_sidecar_json(&sidecar_to_json(&sc)).expect("written sidecar parses");
    assert_eq!(again, sc);
});
