//! Posterior predictive checks.
//!
//! For each replicate, one posterior draw is selected (uniformly, from a
//! seeded stream), fresh latents are drawn from the variant's latent model,
//! a panel of the observed shape is simulated forward under the same
//! pre-sample convention the likelihood uses, and the summary statistics
//! are compared with the observed ones. The reported p-value is
//! `Pr(T(replicate) >= T(observed))`. Replicates on which a statistic is
//! undefined (constant panels) are excluded for that statistic and the
//! exclusion count is reported.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::car::{CarSpec, Weighting};
use crate::graph::NeighborhoodGraph;
use crate::process::{CountPanel, INTENSITY_DIVERGENCE_LIMIT};
use crate::seed::{child_seed, stream_rng};
use crate::stats::SummaryStats;

use super::posterior::{Posterior, VariantKind};
use super::{InferenceError, PosteriorChains};

#[derive(Debug, Clone)]
pub struct PpcStat {
    pub name: String,
    pub observed: Option<f64>,
    pub p_value: Option<f64>,
    /// Replicates excluded because the statistic was undefined on them.
    pub excluded: usize,
    pub rep_q025: Option<f64>,
    pub rep_q50: Option<f64>,
    pub rep_q975: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PpcReport {
    pub stats: Vec<PpcStat>,
    pub n_reps: usize,
}

impl PpcReport {
    pub fn stat(&self, name: &str) -> Option<&PpcStat> {
        self.stats.iter().find(|s| s.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("# spingarch-csv v1 ppc\n");
        out.push_str(&format!("# replicates={}\n", self.n_reps));
        out.push_str("statistic,observed,p_value,excluded,rep_q025,rep_q50,rep_q975\n");
        let fmt = |v: &Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for s in &self.stats {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.name,
                fmt(&s.observed),
                fmt(&s.p_value),
                s.excluded,
                fmt(&s.rep_q025),
                fmt(&s.rep_q50),
                fmt(&s.rep_q975)
            ));
        }
        out
    }
}

/// Run `n_reps` posterior predictive replications.
///
/// `stat_graph` supplies the adjacency for Moran's I; it need not be part
/// of the fitted model (an aspatial fit is still checked against spatial
/// structure in the data).
pub fn posterior_predictive(
    posterior: &Posterior,
    chains: &PosteriorChains,
    stat_graph: &NeighborhoodGraph,
    n_reps: usize,
    seed: u64,
) -> Result<PpcReport, InferenceError> {
    if chains.n_draws() == 0 {
        return Err(InferenceError::NoDraws);
    }
    if stat_graph.n_sites() != posterior.data().n_sites() {
        return Err(InferenceError::Shape(format!(
            "statistic graph has {} sites, data has {}",
            stat_graph.n_sites(),
            posterior.data().n_sites()
        )));
    }
    if n_reps == 0 {
        return Err(InferenceError::Ppc("need at least one replicate".into()));
    }
    let observed = SummaryStats::compute(posterior.data(), stat_graph);

    let mut reps: Vec<SummaryStats> = Vec::with_capacity(n_reps);
    for r in 0..n_reps {
        let mut rng = stream_rng(child_seed(seed, r as u64), 0);
        let k = rng.random_range(0..chains.n_draws());
        let row = chains.draw_row(k);
        match replicate_panel(posterior, &row, &mut rng) {
            Some(panel) => reps.push(SummaryStats::compute(&panel, stat_graph)),
            // a numerically divergent replicate counts as undefined for
            // every statistic
            None => reps.push(SummaryStats {
                moran_i: None,
                log_vmr: None,
                diff_variance: None,
                mean_lag1_ar: None,
                max_count: 0,
                zero_count: 0,
            }),
        }
    }

    let pick = |f: &dyn Fn(&SummaryStats) -> Option<f64>, name: &str| -> PpcStat {
        let obs = f(&observed);
        let values: Vec<f64> = reps.iter().filter_map(f).collect();
        let excluded = n_reps - values.len();
        let (p_value, q) = if let (Some(obs), false) = (obs, values.is_empty()) {
            let count = values.iter().filter(|&&v| v >= obs).count();
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            (
                Some(count as f64 / values.len() as f64),
                Some((
                    super::quantile(&sorted, 0.025),
                    super::quantile(&sorted, 0.5),
                    super::quantile(&sorted, 0.975),
                )),
            )
        } else {
            (None, None)
        };
        PpcStat {
            name: name.to_string(),
            observed: obs,
            p_value,
            excluded,
            rep_q025: q.map(|q| q.0),
            rep_q50: q.map(|q| q.1),
            rep_q975: q.map(|q| q.2),
        }
    };

    let stats = vec![
        pick(&|s| s.moran_i, "moran_i"),
        pick(&|s| s.log_vmr, "log_vmr"),
        pick(&|s| s.diff_variance, "diff_variance"),
        pick(&|s| s.mean_lag1_ar, "mean_lag1_ar"),
        pick(&|s| Some(s.max_count as f64), "max_count"),
        pick(&|s| Some(s.zero_count as f64), "zero_count"),
    ];
    Ok(PpcReport { stats, n_reps })
}

/// Simulate one replicate panel of the observed shape from a natural
/// parameter row, drawing fresh latents. Returns `None` if the intensity
/// recursion overflows.
pub(crate) fn replicate_panel(
    posterior: &Posterior,
    row: &[f64],
    rng: &mut ChaCha12Rng,
) -> Option<CountPanel> {
    let n = posterior.data().n_sites();
    let t_len = posterior.data().n_times();

    let (innovations, eta, kappa) = match posterior.kind() {
        VariantKind::Ingarch => {
            let d = row[0].exp();
            (DMatrix::from_element(n, t_len, d), row[1], row[2])
        }
        VariantKind::Spingarch | VariantKind::TiSpingarch => {
            let (alpha, eta, kappa, sigma2, zeta) = (row[0], row[1], row[2], row[3], row[4]);
            let graph = posterior.graph().expect("spatial variant").clone();
            let car =
                CarSpec::with_constant_mean(graph, alpha, zeta, sigma2, Weighting::Standard)
                    .ok()?;
            let w = if posterior.kind() == VariantKind::TiSpingarch {
                let u = car.sample_slice(rng);
                DMatrix::from_fn(n, t_len, |i, _| u[i].exp())
            } else {
                car.sample_with_rng(t_len, rng).values.map(f64::exp)
            };
            (w, eta, kappa)
        }
        VariantKind::CovSpingarch => {
            let design = posterior.design().expect("covariate variant");
            let p_len = design.ncols();
            let beta = DVector::from_column_slice(&row[..p_len]);
            let (eta, kappa) = (row[p_len], row[p_len + 1]);
            let sigma2_ind = row[p_len + 2];
            let sigma2_sp = row[p_len + 3];
            let graph = posterior.graph().expect("spatial variant").clone();
            let wcar = CarSpec::with_constant_mean(
                graph,
                0.0,
                posterior.zeta_fixed(),
                sigma2_sp,
                Weighting::DegreeWeighted,
            )
            .ok()?;
            let u = wcar.sample_slice(rng);
            let xb = design * &beta;
            let sd = sigma2_ind.sqrt();
            let w = DMatrix::from_fn(n, t_len, |i, _| {
                (sd * rng.sample::<f64, _>(StandardNormal) + u[i] + xb[i]).exp()
            });
            (w, eta, kappa)
        }
    };

    let lambda0 = posterior.lambda0();
    let mut lambda_prev = DVector::<f64>::zeros(n);
    let mut z_prev = DVector::<f64>::zeros(n);
    let mut counts = DMatrix::<u64>::zeros(n, t_len);
    for t in 0..t_len {
        for i in 0..n {
            let lam = innovations[(i, t)]
                + if t == 0 {
                    kappa * lambda0[i]
                } else {
                    eta * z_prev[i] + kappa * lambda_prev[i]
                };
            if !lam.is_finite() || lam <= 0.0 || lam > INTENSITY_DIVERGENCE_LIMIT {
                return None;
            }
            let z = Poisson::new(lam).ok()?.sample(rng) as u64;
            counts[(i, t)] = z;
            lambda_prev[i] = lam;
            z_prev[i] = z as f64;
        }
    }
    Some(CountPanel::from_counts(counts))
}
