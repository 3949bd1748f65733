#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 1 << 16 {
        return;
    }
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(table) = spingarch::io::parse_chains_csv(text) {
            let back = spingarch::io::write_chains_csv(&table);
            let again = spingarch::io::parse_chains_csv(&back).expect("round trip parses");
            assert_eq!(again, table);
            for name in &table.param_names {
                let _ = table.column(name);
            }
        }
    }
});
