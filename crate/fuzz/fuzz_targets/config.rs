#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 1 << 16 {
        return;
    }
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = spingarch::io::parse_config(text) {
            // canonical serialization must be a fixed point
            let canon = cfg.to_text();
            let again = spingarch::io::parse_config(&canon).expect("canonical form parses");
            assert_eq!(again.to_text(), canon);
            // typed getters must never panic, whatever the values are
            for section in cfg.sections() {
                for key in cfg.keys(section) {
                    let _ = cfg.require_f64(section, &key);
                    let _ = cfg.require_usize(section, &key);
                    let _ = cfg.require_f64_list(section, &key);
                    let _ = cfg.require_str(section, &key);
                }
            }
        }
    }
});
