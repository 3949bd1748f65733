//! `stats`: one CSV row of summary statistics for a count panel.

use std::path::Path;

use spingarch::io::{read_counts_csv, read_edge_list};
use spingarch::stats::{SummaryStats, MORAN_POOLING_RULE};

use crate::errors::CliError;

pub fn run(counts: &Path, edges: &Path) -> Result<(), CliError> {
    let panel = read_counts_csv(counts)?;
    let graph = read_edge_list(edges)?;
    if graph.n_sites() != panel.n_sites() {
        return Err(CliError::validation(format!(
            "graph has {} sites, counts have {}",
            graph.n_sites(),
            panel.n_sites()
        )));
    }
    let stats = SummaryStats::compute(&panel, &graph);
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    println!("# spingarch-csv v1 stats");
    println!("# moran pooling: {MORAN_POOLING_RULE}");
    println!("n_sites,n_times,moran_i,vmr,log_vmr,diff_variance,mean_lag1_ar,max_count,zero_count");
    println!(
        "{},{},{},{},{},{},{},{},{}",
        panel.n_sites(),
        panel.n_times(),
        fmt(stats.moran_i),
        fmt(stats.log_vmr.map(f64::exp)),
        fmt(stats.log_vmr),
        fmt(stats.diff_variance),
        fmt(stats.mean_lag1_ar),
        stats.max_count,
        stats.zero_count
    );
    Ok(())
}
