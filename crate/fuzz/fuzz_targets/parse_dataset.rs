#![no_main]

use drustat::data::Bounds;
use drustat::io::parse_dataset_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = parse_dataset_csv(data) {
        assert_eq!(table.a.len(), table.len());
        assert_eq!(table.x.len(), table.len() * table.d);
        let _ = table.into_dataset(&Bounds::default());
    }
});
