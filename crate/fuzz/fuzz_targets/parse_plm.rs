#![no_main]

use drustat::io::parse_plm_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = parse_plm_csv(data) {
        assert_eq!(table.x.len(), table.len() * table.d);
        let _ = table.to_plm_data();
    }
});
