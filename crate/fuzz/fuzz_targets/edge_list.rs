#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 1 << 14 {
        return;
    }
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // construction runs a dense eigendecomposition; keep fuzz inputs small
    // enough to stay fast (the library itself caps at MAX_SITES)
    if let Some(n_line) = text.lines().find(|l| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('#')
    }) {
        if let Some(n) = n_line.trim().strip_prefix("n=") {
            if n.trim().parse::<usize>().map(|n| n > 64).unwrap_or(false) {
                return;
            }
        }
    }
    if let Ok(graph) = spingarch::io::parse_edge_list(text) {
        let _ = graph.zeta_bounds();
        let back = spingarch::io::write_edge_list(&graph);
        let again = spingarch::io::parse_edge_list(&back).expect("round trip parses");
        assert_eq!(again.edges(), graph.edges());
    }
});
