//! Bayesian fitting: priors, the HMC driver over parallel chains, chain
//! summaries, posterior predictive checks, and the misspecification-study
//! harness.

mod diagnostics;
mod hmc;
mod posterior;
mod ppc;
mod study;
mod transforms;

pub use diagnostics::{mean_and_interval, quantile, split_rhat};
pub use hmc::{run_chain, ChainRunStats, HmcOptions, HmcTarget, DIVERGENCE_THRESHOLD};
pub use posterior::{Latents, NaturalParams, Posterior, VariantKind};
pub use ppc::{posterior_predictive, PpcReport, PpcStat};
pub use study::{
    misspecification_study, study_params_csv, study_pvalues_csv, FitVariantSel, StudyConfig,
    StudyReport, StudyVariantResult,
};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::seed::child_seed;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("invalid fit options: {0}")]
    BadOptions(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("could not find an initial point with finite posterior density")]
    InitFailed,
    #[error("post-warmup divergence rate {rate:.1}% exceeds {limit:.0}%: retry with a higher target acceptance (smaller step size)")]
    TooManyDivergences { rate: f64, limit: f64 },
    #[error("no posterior draws available")]
    NoDraws,
    #[error("posterior predictive check failed: {0}")]
    Ppc(String),
    #[error("prior specification invalid: {0}")]
    BadPrior(String),
    #[error(transparent)]
    Car(#[from] crate::car::CarError),
    #[error(transparent)]
    Process(#[from] crate::process::ProcessError),
    #[error(transparent)]
    Stats(#[from] crate::stats::StatsError),
}

/// Prior families: Normal(0, sd^2) on location coefficients, half-Normal
/// (0, sd^2) on scale parameters, uniform over the triangle for the
/// feedback pair, uniform over the spectral bounds (or fixed) for the
/// spatial dependence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub location_sd: f64,
    pub scale_sd: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self { location_sd: 10.0, scale_sd: 5.0 }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<(), InferenceError> {
        for (name, v) in [("location_sd", self.location_sd), ("scale_sd", self.scale_sd)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(InferenceError::BadPrior(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Sampler configuration for a full fit.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    pub base_leapfrog: usize,
    pub target_accept: f64,
    /// Keep every k-th latent draw (0 disables latent retention).
    pub latent_thin: usize,
    pub max_divergence_rate: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            chains: 3,
            iterations: 1000,
            warmup: 1000,
            seed: 0,
            base_leapfrog: 24,
            target_accept: 0.8,
            latent_thin: 10,
            max_divergence_rate: 0.2,
        }
    }
}

/// Posterior draws in natural space, per chain, plus run metadata.
#[derive(Debug, Clone)]
pub struct PosteriorChains {
    pub param_names: Vec<String>,
    /// One matrix per chain: iterations x parameters.
    pub chains: Vec<DMatrix<f64>>,
    /// Thinned latent draws per chain as (iteration, values).
    pub latent_draws: Vec<Vec<(usize, Latents)>>,
    pub divergences: Vec<usize>,
    pub step_sizes: Vec<f64>,
    pub seed: u64,
    pub warmup: usize,
    pub iterations: usize,
}

impl PosteriorChains {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    /// All draws of one parameter pooled across chains.
    pub fn pooled(&self, param: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_chains() * self.iterations);
        for chain in &self.chains {
            out.extend(chain.column(param).iter().copied());
        }
        out
    }

    /// Per-chain draws of one parameter.
    pub fn per_chain(&self, param: usize) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.column(param).iter().copied().collect()).collect()
    }

    /// Draw `k` (pooled row-major over chains) as a natural parameter row.
    pub fn draw_row(&self, k: usize) -> Vec<f64> {
        let per = self.iterations;
        let chain = k / per;
        let iter = k % per;
        self.chains[chain].row(iter).iter().copied().collect()
    }

    pub fn n_draws(&self) -> usize {
        self.n_chains() * self.iterations
    }

    pub fn to_chains_table(&self) -> crate::io::ChainsTable {
        let mut chain = Vec::new();
        let mut iter = Vec::new();
        let mut values = Vec::new();
        for (c, m) in self.chains.iter().enumerate() {
            for i in 0..m.nrows() {
                chain.push(c as u32);
                iter.push(i as u32);
                values.push(m.row(i).iter().copied().collect());
            }
        }
        crate::io::ChainsTable { param_names: self.param_names.clone(), chain, iter, values }
    }

    pub fn from_chains_table(table: &crate::io::ChainsTable) -> Result<Self, InferenceError> {
        let n_chains = table.chain.iter().copied().max().map(|c| c as usize + 1).unwrap_or(0);
        if n_chains == 0 {
            return Err(InferenceError::NoDraws);
        }
        let p = table.param_names.len();
        let mut per_chain: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_chains];
        for k in 0..table.n_draws() {
            per_chain[table.chain[k] as usize].push(table.values[k].clone());
        }
        let iterations = per_chain.iter().map(Vec::len).min().unwrap_or(0);
        if iterations == 0 || per_chain.iter().any(|c| c.len() != iterations) {
            return Err(InferenceError::Shape("chains have unequal lengths".into()));
        }
        let chains = per_chain
            .into_iter()
            .map(|rows| DMatrix::from_fn(iterations, p, |i, j| rows[i][j]))
            .collect();
        Ok(Self {
            param_names: table.param_names.clone(),
            chains,
            latent_draws: Vec::new(),
            divergences: Vec::new(),
            step_sizes: Vec::new(),
            seed: 0,
            warmup: 0,
            iterations,
        })
    }
}

/// Posterior mean, central 95% interval and split R-hat for one parameter.
#[derive(Debug, Clone)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub lower95: f64,
    pub upper95: f64,
    pub rhat: f64,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub params: Vec<ParamSummary>,
    pub divergence_count: usize,
    pub divergence_rate: f64,
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
}

impl FitReport {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("# spingarch-csv v1 report\n");
        out.push_str(&format!(
            "# chains={} iterations={} warmup={} divergences={}\n",
            self.chains, self.iterations, self.warmup, self.divergence_count
        ));
        out.push_str("parameter,mean,lower95,upper95,rhat\n");
        for p in &self.params {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.4}\n",
                p.name, p.mean, p.lower95, p.upper95, p.rhat
            ));
        }
        out
    }
}

impl HmcTarget for Posterior {
    fn dim(&self) -> usize {
        Posterior::dim(self)
    }

    fn logp_grad(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        Posterior::logp_grad(self, x)
    }

    fn gibbs_refresh(&self, x: &mut DVector<f64>, rng: &mut dyn rand::RngCore) -> bool {
        self.gibbs_alpha(x, rng)
    }
}

/// Fit a posterior by HMC over `options.chains` parallel chains.
///
/// Chains are seeded from the root seed with the documented splitting rule
/// and run on their own threads; results are deterministic for a fixed
/// `(seed, chains)` regardless of scheduling. A post-warmup divergence rate
/// above `options.max_divergence_rate` is an error.
pub fn fit(
    posterior: &Posterior,
    options: &FitOptions,
) -> Result<(PosteriorChains, FitReport), InferenceError> {
    if options.chains < 2 {
        return Err(InferenceError::BadOptions(format!(
            "need at least 2 chains, got {}",
            options.chains
        )));
    }
    if options.iterations == 0 {
        return Err(InferenceError::BadOptions("iterations must be positive".into()));
    }
    if !(options.target_accept > 0.0 && options.target_accept < 1.0) {
        return Err(InferenceError::BadOptions("target_accept must be in (0, 1)".into()));
    }

    let hmc_options = HmcOptions {
        iterations: options.iterations,
        warmup: options.warmup,
        base_leapfrog: options.base_leapfrog,
        target_accept: options.target_accept,
    };
    let n_params = posterior.param_names().len();

    struct ChainOutput {
        natural: DMatrix<f64>,
        latents: Vec<(usize, Latents)>,
        stats: ChainRunStats,
    }

    let run_one = |c: usize| -> Result<ChainOutput, InferenceError> {
        let chain_seed = child_seed(options.seed, c as u64);
        let mut natural = DMatrix::zeros(options.iterations, n_params);
        let mut latents = Vec::new();
        let init = {
            let mut init_rng = crate::seed::stream_rng(chain_seed, 1);
            Some(posterior.init_position(&mut init_rng))
        };
        let stats = hmc::run_chain(posterior, &hmc_options, chain_seed, init, |i, x| {
            let row = posterior.natural_row(x);
            for (j, v) in row.iter().enumerate() {
                natural[(i, j)] = *v;
            }
            if options.latent_thin > 0 && i % options.latent_thin == 0 {
                latents.push((i, posterior.natural_latents(x)));
            }
        })?;
        Ok(ChainOutput { natural, latents, stats })
    };

    let outputs: Vec<Result<ChainOutput, InferenceError>> = std::thread::scope(|scope| {
        let handles: Vec<_> =
            (0..options.chains).map(|c| scope.spawn(move || run_one(c))).collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });

    let mut chains = Vec::new();
    let mut latent_draws = Vec::new();
    let mut divergences = Vec::new();
    let mut step_sizes = Vec::new();
    for out in outputs {
        let out = out?;
        chains.push(out.natural);
        latent_draws.push(out.latents);
        divergences.push(out.stats.divergences);
        step_sizes.push(out.stats.step_size);
    }

    let total_div: usize = divergences.iter().sum();
    let rate = total_div as f64 / (options.chains * options.iterations) as f64;
    if rate > options.max_divergence_rate {
        return Err(InferenceError::TooManyDivergences {
            rate: 100.0 * rate,
            limit: 100.0 * options.max_divergence_rate,
        });
    }

    let result = PosteriorChains {
        param_names: posterior.param_names(),
        chains,
        latent_draws,
        divergences,
        step_sizes,
        seed: options.seed,
        warmup: options.warmup,
        iterations: options.iterations,
    };
    let report = summarize(&result, total_div, rate, options);
    Ok((result, report))
}

fn summarize(
    chains: &PosteriorChains,
    total_div: usize,
    rate: f64,
    options: &FitOptions,
) -> FitReport {
    let params = chains
        .param_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let pooled = chains.pooled(j);
            let (mean, lower95, upper95) = mean_and_interval(&pooled);
            let rhat = split_rhat(&chains.per_chain(j));
            ParamSummary { name: name.clone(), mean, lower95, upper95, rhat }
        })
        .collect();
    FitReport {
        params,
        divergence_count: total_div,
        divergence_rate: rate,
        chains: options.chains,
        iterations: options.iterations,
        warmup: options.warmup,
    }
}
