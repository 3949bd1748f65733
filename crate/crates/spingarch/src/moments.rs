//! Closed-form stationary moments of the count process.
//!
//! With self-excitation `eta`, persistence `kappa` (with `eta + kappa < 1`),
//! latent mean `alpha` and latent marginal variance `sigma_ii`, the
//! stationary law of a site has
//!
//! ```text
//! mean      = exp(alpha + sigma_ii/2) / (1 - eta - kappa)
//! variance  = Var(exp Y) / (1 - s^2) + mean * (1 - kappa^2 - 2*kappa*eta) / (1 - s^2)
//! cov-lag1  = s * variance - kappa * mean                (s = eta + kappa)
//! ```
//!
//! plus a spatial covariance driven by latent cross-covariance `sigma_ij`.
//! Every formula here is validated against Monte Carlo estimates from the
//! forward simulator in the acceptance suite. The time-invariant variant has
//! no closed forms; use [`mc_moments`] for it.

use thiserror::Error;

use crate::process::{simulate, ModelSpec, ProcessParams, ProcessError};

#[derive(Debug, Error)]
pub enum MomentsError {
    #[error("latent variance must be nonnegative, got {0}")]
    NegativeSigma(f64),
    #[error("lag must be at least 1 (use the variance for lag 0)")]
    ZeroLag,
    #[error("variance-to-mean ratio must exceed 1, got {0}")]
    RatioNotAboveOne(f64),
}

fn check_sigma(sigma_ii: f64) -> Result<(), MomentsError> {
    if sigma_ii < 0.0 || !sigma_ii.is_finite() {
        return Err(MomentsError::NegativeSigma(sigma_ii));
    }
    Ok(())
}

/// Stationary mean `exp(alpha + sigma_ii/2) / (1 - eta - kappa)`.
pub fn stationary_mean(
    alpha: f64,
    sigma_ii: f64,
    params: &ProcessParams,
) -> Result<f64, MomentsError> {
    check_sigma(sigma_ii)?;
    Ok((alpha + sigma_ii / 2.0).exp() / (1.0 - params.eta() - params.kappa()))
}

/// Variance of the log-normal innovation `exp(Y)`.
pub fn var_exp_latent(alpha: f64, sigma_ii: f64) -> f64 {
    (2.0 * alpha + sigma_ii).exp() * (sigma_ii.exp_m1())
}

/// Stationary variance; always at least the stationary mean.
pub fn stationary_variance(
    alpha: f64,
    sigma_ii: f64,
    params: &ProcessParams,
) -> Result<f64, MomentsError> {
    check_sigma(sigma_ii)?;
    let (eta, kappa) = (params.eta(), params.kappa());
    let s = eta + kappa;
    let denom = 1.0 - s * s;
    let mean = stationary_mean(alpha, sigma_ii, params)?;
    Ok(var_exp_latent(alpha, sigma_ii) / denom
        + mean * (1.0 - kappa * kappa - 2.0 * kappa * eta) / denom)
}

/// Lag-h autocovariance of a single site.
///
/// The lag-1 value is exact; lags beyond 1 decay geometrically at rate
/// `eta + kappa`, which is exact when `kappa = 0` and an extrapolation
/// otherwise (see [`lag_h_is_extrapolated`]).
pub fn lag_h_autocovariance(
    alpha: f64,
    sigma_ii: f64,
    params: &ProcessParams,
    h: u32,
) -> Result<f64, MomentsError> {
    if h == 0 {
        return Err(MomentsError::ZeroLag);
    }
    let s = params.eta() + params.kappa();
    let lag1 = s * stationary_variance(alpha, sigma_ii, params)?
        - params.kappa() * stationary_mean(alpha, sigma_ii, params)?;
    Ok(s.powi(h as i32 - 1) * lag1)
}

/// Whether the lag-h autocovariance is a geometric-decay extrapolation
/// rather than an exact closed form.
pub fn lag_h_is_extrapolated(params: &ProcessParams, h: u32) -> bool {
    h > 1 && params.kappa() > 0.0
}

/// Lag-h autocorrelation (autocovariance over variance).
pub fn lag_h_autocorrelation(
    alpha: f64,
    sigma_ii: f64,
    params: &ProcessParams,
    h: u32,
) -> Result<f64, MomentsError> {
    Ok(lag_h_autocovariance(alpha, sigma_ii, params, h)?
        / stationary_variance(alpha, sigma_ii, params)?)
}

/// Same-time covariance between two sites with latent covariance `sigma_ij`.
pub fn spatial_covariance(
    alpha: f64,
    sigma_ii: f64,
    sigma_ij: f64,
    params: &ProcessParams,
) -> Result<f64, MomentsError> {
    check_sigma(sigma_ii)?;
    if !sigma_ij.is_finite() {
        return Err(MomentsError::NegativeSigma(sigma_ij));
    }
    let s = params.eta() + params.kappa();
    Ok((2.0 * alpha).exp() / (1.0 - s * s)
        * ((sigma_ii + sigma_ij).exp() - sigma_ii.exp()))
}

/// Same-time cross-site correlation: spatial covariance over the stationary
/// variance.
pub fn spatial_correlation(
    alpha: f64,
    sigma_ii: f64,
    sigma_ij: f64,
    params: &ProcessParams,
) -> Result<f64, MomentsError> {
    Ok(spatial_covariance(alpha, sigma_ii, sigma_ij, params)?
        / stationary_variance(alpha, sigma_ii, params)?)
}

/// Monte Carlo stationary moment estimates, pooled over sites.
///
/// For variants without closed forms (the time-invariant family), this is
/// the only route; treat the values as estimates, not formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McMoments {
    pub mean: f64,
    pub variance: f64,
    pub lag1_autocorrelation: f64,
    pub t_steps: usize,
}

/// Estimate stationary moments by simulating the model forward.
pub fn mc_moments(
    model: &ModelSpec,
    t_steps: usize,
    burn_in: usize,
    seed: u64,
) -> Result<McMoments, ProcessError> {
    let out = simulate(model, t_steps, burn_in, seed)?;
    let z = out.panel.counts_f64();
    let (n, t_len) = (z.nrows(), z.ncols());
    let m = (n * t_len) as f64;
    let mean = z.iter().sum::<f64>() / m;
    let ss: f64 = z.iter().map(|v| (v - mean) * (v - mean)).sum();
    let variance = ss / (m - 1.0);
    let mut num = 0.0;
    for i in 0..n {
        for t in 1..t_len {
            num += (z[(i, t)] - mean) * (z[(i, t - 1)] - mean);
        }
    }
    let lag1 = num / (n * (t_len - 1)) as f64 / variance;
    Ok(McMoments { mean, variance, lag1_autocorrelation: lag1, t_steps })
}

/// Model family for the variance/autocorrelation tradeoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TradeoffFamily {
    /// Latent-driven counts with `kappa = 0`: the latent variance absorbs
    /// overdispersion without constraining the autocorrelation from below.
    SpingarchKappaZero,
    /// Constant-innovation counts: overdispersion can only come from the
    /// feedback terms, which forces autocorrelation up.
    Ingarch,
}

/// Admissible open interval of lag-1 autocorrelations at a fixed
/// variance-to-mean ratio.
///
/// Both families share the upper endpoint `sqrt(1 - 1/ratio)` (the
/// `kappa = 0` corner); the constant-innovation family is additionally
/// bounded below by `1 - 1/ratio`. At ratio 2 the intervals are
/// (0, 0.707...) and (0.5, 0.707...).
pub fn variance_autocorr_tradeoff(
    ratio: f64,
    family: TradeoffFamily,
) -> Result<(f64, f64), MomentsError> {
    if !(ratio > 1.0) || !ratio.is_finite() {
        return Err(MomentsError::RatioNotAboveOne(ratio));
    }
    let upper = (1.0 - 1.0 / ratio).sqrt();
    let lower = match family {
        TradeoffFamily::SpingarchKappaZero => 0.0,
        TradeoffFamily::Ingarch => 1.0 - 1.0 / ratio,
    };
    Ok((lower, upper))
}
