//! Chain diagnostics: split R-hat and posterior summaries.

/// Split potential scale reduction factor.
///
/// Each chain is halved, between/within variances are combined, and the
/// usual `sqrt(var_plus / W)` is returned. `NaN` when draws are degenerate
/// (zero within-variance with zero between-variance collapses to 1).
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let mut halves: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    for chain in chains {
        let half = chain.len() / 2;
        if half < 2 {
            return f64::NAN;
        }
        halves.push(&chain[..half]);
        halves.push(&chain[chain.len() - half..]);
    }
    let m = halves.len() as f64;
    let len = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / len).collect();
    let grand = means.iter().sum::<f64>() / m;
    let between = len / (m - 1.0) * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>();
    let within = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (len - 1.0))
        .sum::<f64>()
        / m;
    if within == 0.0 {
        return if between == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (len - 1.0) / len * within + between / len;
    (var_plus / within).sqrt()
}

/// Equal-tailed quantile with linear interpolation on sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Mean and central 95% interval of a draw sequence.
pub fn mean_and_interval(draws: &[f64]) -> (f64, f64, f64) {
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    (mean, quantile(&sorted, 0.025), quantile(&sorted, 0.975))
}
