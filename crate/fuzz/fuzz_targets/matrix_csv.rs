#![no_main]

use correntropy::io::parse_matrix_csv;
use correntropy::richness::normalize_columns;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(x) = parse_matrix_csv(text) {
            assert!(x.dim() >= 1 && !x.is_empty());
            let _ = normalize_columns(&x);
        }
    }
});
