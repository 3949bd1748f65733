//! Observable summary statistics used for exploratory checks and posterior
//! predictive assessment.
//!
//! All statistics pool over the full panel. Moran's I is computed per time
//! slice with binary adjacency weights and the standard `n/S0` scaling,
//! then averaged over slices with nonzero variance (see
//! [`MORAN_POOLING_RULE`], which is recorded in run manifests so fitted
//! p-values are reproducible). Sites or slices with zero variance are
//! skipped rather than failing the whole statistic; only an entirely
//! degenerate panel is an error.

use thiserror::Error;

use crate::graph::NeighborhoodGraph;
use crate::process::CountPanel;

/// Space-time pooling convention for Moran's I, recorded in run manifests.
pub const MORAN_POOLING_RULE: &str =
    "per-slice binary-weight Moran I with n/S0 scaling, averaged over slices with nonzero variance";

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("panel has {panel} sites but graph has {graph}")]
    ShapeMismatch { panel: usize, graph: usize },
    #[error("statistic undefined: every time slice has zero variance")]
    AllSlicesConstant,
    #[error("statistic undefined: every site has zero variance over time")]
    AllSitesConstant,
    #[error("statistic undefined: panel mean is zero")]
    ZeroMean,
    #[error("panel needs at least {need} time points, got {got}")]
    TooFewTimes { need: usize, got: usize },
}

fn slice_moran(values: &[f64], graph: &NeighborhoodGraph) -> Option<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let dev: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if denom == 0.0 {
        return None;
    }
    let cross: f64 = graph.edges().iter().map(|&(a, b)| dev[a] * dev[b]).sum();
    let s0 = 2.0 * graph.edges().len() as f64;
    Some(n / s0 * 2.0 * cross / denom)
}

/// Per-slice Moran's I averaged over slices with nonzero variance.
pub fn morans_i(panel: &CountPanel, graph: &NeighborhoodGraph) -> Result<f64, StatsError> {
    if panel.n_sites() != graph.n_sites() {
        return Err(StatsError::ShapeMismatch { panel: panel.n_sites(), graph: graph.n_sites() });
    }
    let mut acc = 0.0;
    let mut used = 0usize;
    let counts = panel.counts();
    for t in 0..panel.n_times() {
        let col: Vec<f64> = (0..panel.n_sites()).map(|i| counts[(i, t)] as f64).collect();
        if let Some(i_t) = slice_moran(&col, graph) {
            acc += i_t;
            used += 1;
        }
    }
    if used == 0 {
        return Err(StatsError::AllSlicesConstant);
    }
    Ok(acc / used as f64)
}

fn pooled_mean_var(panel: &CountPanel) -> (f64, f64) {
    let m = (panel.n_sites() * panel.n_times()) as f64;
    let mean = panel.counts().iter().map(|&z| z as f64).sum::<f64>() / m;
    let ss = panel.counts().iter().map(|&z| (z as f64 - mean).powi(2)).sum::<f64>();
    let var = if m > 1.0 { ss / (m - 1.0) } else { 0.0 };
    (mean, var)
}

/// Pooled sample variance over pooled sample mean.
pub fn variance_mean_ratio(panel: &CountPanel) -> Result<f64, StatsError> {
    let (mean, var) = pooled_mean_var(panel);
    if mean == 0.0 {
        return Err(StatsError::ZeroMean);
    }
    Ok(var / mean)
}

/// Log of [`variance_mean_ratio`].
pub fn log_variance_mean_ratio(panel: &CountPanel) -> Result<f64, StatsError> {
    Ok(variance_mean_ratio(panel)?.ln())
}

/// Pooled sample variance of all first differences `z_t - z_{t-1}`.
pub fn diff_variance(panel: &CountPanel) -> Result<f64, StatsError> {
    if panel.n_times() < 2 {
        return Err(StatsError::TooFewTimes { need: 2, got: panel.n_times() });
    }
    let counts = panel.counts();
    let m = (panel.n_sites() * (panel.n_times() - 1)) as f64;
    let mut mean = 0.0;
    for i in 0..panel.n_sites() {
        for t in 1..panel.n_times() {
            mean += counts[(i, t)] as f64 - counts[(i, t - 1)] as f64;
        }
    }
    mean /= m;
    let mut ss = 0.0;
    for i in 0..panel.n_sites() {
        for t in 1..panel.n_times() {
            let d = counts[(i, t)] as f64 - counts[(i, t - 1)] as f64;
            ss += (d - mean) * (d - mean);
        }
    }
    Ok(if m > 1.0 { ss / (m - 1.0) } else { 0.0 })
}

/// Per-site lag-1 sample autocorrelation, averaged over sites with nonzero
/// variance.
pub fn mean_lag1_ar(panel: &CountPanel) -> Result<f64, StatsError> {
    if panel.n_times() < 2 {
        return Err(StatsError::TooFewTimes { need: 2, got: panel.n_times() });
    }
    let counts = panel.counts();
    let t_len = panel.n_times();
    let mut acc = 0.0;
    let mut used = 0usize;
    for i in 0..panel.n_sites() {
        let series: Vec<f64> = (0..t_len).map(|t| counts[(i, t)] as f64).collect();
        let mean = series.iter().sum::<f64>() / t_len as f64;
        let denom: f64 = series.iter().map(|z| (z - mean) * (z - mean)).sum();
        if denom == 0.0 {
            continue;
        }
        let num: f64 =
            (1..t_len).map(|t| (series[t] - mean) * (series[t - 1] - mean)).sum();
        acc += num / denom;
        used += 1;
    }
    if used == 0 {
        return Err(StatsError::AllSitesConstant);
    }
    Ok(acc / used as f64)
}

/// Largest count in the panel.
pub fn max_count(panel: &CountPanel) -> u64 {
    panel.counts().iter().copied().max().unwrap_or(0)
}

/// Number of zero cells in the panel.
pub fn zero_count(panel: &CountPanel) -> u64 {
    panel.counts().iter().filter(|&&z| z == 0).count() as u64
}

/// The full statistic set used by posterior predictive checks; statistics
/// that are undefined on a given panel come back as `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStats {
    pub moran_i: Option<f64>,
    pub log_vmr: Option<f64>,
    pub diff_variance: Option<f64>,
    pub mean_lag1_ar: Option<f64>,
    pub max_count: u64,
    pub zero_count: u64,
}

impl SummaryStats {
    pub fn compute(panel: &CountPanel, graph: &NeighborhoodGraph) -> Self {
        Self {
            moran_i: morans_i(panel, graph).ok(),
            log_vmr: log_variance_mean_ratio(panel).ok(),
            diff_variance: diff_variance(panel).ok(),
            mean_lag1_ar: mean_lag1_ar(panel).ok(),
            max_count: max_count(panel),
            zero_count: zero_count(panel),
        }
    }
}
