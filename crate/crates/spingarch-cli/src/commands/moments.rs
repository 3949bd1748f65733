//! `moments`: closed-form stationary moments for given parameters, as a
//! labeled CSV table on stdout.

use clap::Args;

use spingarch::moments;
use spingarch::process::ProcessParams;

use crate::errors::CliError;

#[derive(Args, Debug, Clone)]
pub struct MomentsArgs {
    /// Latent mean.
    #[arg(long)]
    pub alpha: f64,
    /// Latent marginal variance at a site.
    #[arg(long)]
    pub sigma_ii: f64,
    /// Latent cross-covariances to report spatial correlation for
    /// (repeatable).
    #[arg(long = "sigma-ij")]
    pub sigma_ij: Vec<f64>,
    #[arg(long)]
    pub eta: f64,
    #[arg(long)]
    pub kappa: f64,
    /// Autocovariance lags to report beyond 1 (repeatable).
    #[arg(long = "lag")]
    pub lags: Vec<u32>,
}

pub fn run(args: &MomentsArgs) -> Result<(), CliError> {
    let params = ProcessParams::new(args.eta, args.kappa)?;
    let mean = moments::stationary_mean(args.alpha, args.sigma_ii, &params)?;
    let variance = moments::stationary_variance(args.alpha, args.sigma_ii, &params)?;
    let lag1 = moments::lag_h_autocorrelation(args.alpha, args.sigma_ii, &params, 1)?;

    println!("# spingarch-csv v1 moments");
    println!("quantity,value,note");
    println!("mean,{mean:.8},");
    println!("variance,{variance:.8},");
    println!("vmr,{:.8},", variance / mean);
    println!("lag1_autocorr,{lag1:.8},");
    for &h in &args.lags {
        let rho = moments::lag_h_autocorrelation(args.alpha, args.sigma_ii, &params, h)?;
        let note = if moments::lag_h_is_extrapolated(&params, h) {
            "extrapolated geometric decay"
        } else {
            ""
        };
        println!("lag{h}_autocorr,{rho:.8},{note}");
    }
    for &sij in &args.sigma_ij {
        let rho = moments::spatial_correlation(args.alpha, args.sigma_ii, sij, &params)?;
        println!("spatial_corr[sigma_ij={sij}],{rho:.8},");
    }
    Ok(())
}
