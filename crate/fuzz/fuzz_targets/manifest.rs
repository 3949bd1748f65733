#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 1 << 16 {
        return;
    }
    if let Ok(text) = std::str::from_utf8(data) {
        // parsing includes hash verification, so almost all random inputs
        // are rejected; whatever survives must re-serialize stably
        if let Ok(manifest) = spingarch::io::parse_manifest(text) {
            let back = manifest.to_text();
            let again = spingarch::io::parse_manifest(&back).expect("round trip parses");
            assert_eq!(again, manifest);
        }
    }
});
