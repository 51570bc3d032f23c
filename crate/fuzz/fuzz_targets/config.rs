#![no_main]

use correntropy::io::{config_to_args, parse_config};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = parse_config(text) {
            let _ = config_to_args(&cfg);
        }
    }
});
