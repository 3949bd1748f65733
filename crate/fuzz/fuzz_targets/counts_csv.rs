#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 1 << 16 {
        return;
    }
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(panel) = spingarch::io::parse_counts_csv(text) {
            let back = spingarch::io::write_counts_csv(&panel);
            let again = spingarch::io::parse_counts_csv(&back).expect("round trip parses");
            assert_eq!(again.counts(), panel.counts());
            assert_eq!(again.site_ids(), panel.site_ids());
        }
    }
});
