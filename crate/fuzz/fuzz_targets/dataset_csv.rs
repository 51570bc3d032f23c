#![no_main]

use correntropy::datagen::RegressionDataset;
use correntropy::io::{dataset_to_csv, parse_dataset_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok((x, y)) = parse_dataset_csv(text) else {
        return;
    };
    let Ok(ds) = RegressionDataset::new(x, y) else {
        return;
    };
    // anything we accept must survive a write/read cycle bit for bit
    let (x2, y2) = parse_dataset_csv(&dataset_to_csv(&ds)).expect("written dataset parses");
    assert_eq!(x2, ds.x);
    assert_eq!(y2, ds.y);
});
