#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 1 << 16 {
        return;
    }
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(table) = spingarch::io::parse_covariates_csv(text) {
            let back = spingarch::io::write_covariates_csv(&table);
            let again =
                spingarch::io::parse_covariates_csv(&back).expect("round trip parses");
            assert_eq!(again, table);
            let _ = table.aligned_to(&table.site_ids);
        }
    }
});
