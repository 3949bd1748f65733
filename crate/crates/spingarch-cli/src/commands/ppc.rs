//! `ppc`: posterior predictive p-values from a saved chains CSV.

use std::path::{Path, PathBuf};

use clap::Args;

use spingarch::inference::{posterior_predictive, PosteriorChains};
use spingarch::io::{read_chains_csv, write_manifest};

use crate::build;
use crate::commands::fit::{build_posterior, FitArgs};
use crate::errors::CliError;

#[derive(Args, Debug, Clone)]
pub struct PpcArgs {
    /// Model variant the chains were fit with.
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub counts: PathBuf,
    #[arg(long)]
    pub edges: PathBuf,
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    /// Chains CSV produced by `fit`.
    #[arg(long)]
    pub chains_csv: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.999)]
    pub zeta_fixed: f64,
    #[arg(long = "prior")]
    pub priors: Vec<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(args: &PpcArgs) -> Result<(), CliError> {
    let fit_args = FitArgs {
        model: args.model.clone(),
        counts: args.counts.clone(),
        edges: args.edges.clone(),
        covariates: args.covariates.clone(),
        chains: 2,
        iters: 1,
        warmup: 0,
        seed: args.seed,
        leapfrog: 1,
        target_accept: 0.8,
        zeta_fixed: args.zeta_fixed,
        priors: args.priors.clone(),
        out_dir: args.out_dir.clone(),
    };
    let posterior = build_posterior(&fit_args)?;
    let graph = posterior
        .graph()
        .cloned()
        .unwrap_or(std::sync::Arc::new(spingarch::io::read_edge_list(&args.edges)?));

    let table = read_chains_csv(&args.chains_csv)?;
    if table.param_names != posterior.param_names() {
        return Err(CliError::validation(format!(
            "chains CSV parameters {:?} do not match model `{}` ({:?})",
            table.param_names,
            args.model,
            posterior.param_names()
        )));
    }
    let chains = PosteriorChains::from_chains_table(&table)?;
    let report = posterior_predictive(&posterior, &chains, &graph, args.reps, args.seed)?;

    build::write_artifact(&args.out_dir, "pvalues.csv", &report.to_csv())?;
    let mut manifest = build::manifest_base("ppc");
    manifest.set("seed", args.seed);
    manifest.set("arg.model", &args.model);
    manifest.set("arg.counts", args.counts.to_string_lossy());
    manifest.set("arg.edges", args.edges.to_string_lossy());
    if let Some(c) = &args.covariates {
        manifest.set("arg.covariates", c.to_string_lossy());
    }
    manifest.set("arg.chains_csv", args.chains_csv.to_string_lossy());
    manifest.set("arg.reps", args.reps);
    manifest.set("arg.zeta_fixed", args.zeta_fixed);
    for p in &args.priors {
        let key = p.split('=').next().unwrap_or("override");
        manifest.set(&format!("arg.prior.{key}"), p);
    }
    write_manifest(&args.out_dir.join("manifest.json"), &manifest)?;

    print!("{}", report.to_csv());
    Ok(())
}

/// Rebuild `PpcArgs` from a ppc manifest (for replays).
pub fn args_from_manifest(
    manifest: &spingarch::io::Manifest,
    out_dir: &Path,
) -> Result<PpcArgs, CliError> {
    let get = |k: &str| manifest.require(k).map(str::to_string).map_err(CliError::from);
    let mut priors = Vec::new();
    for key in manifest.keys_with_prefix("arg.prior.") {
        if let Some(v) = manifest.get(key) {
            priors.push(v.to_string());
        }
    }
    Ok(PpcArgs {
        model: get("arg.model")?,
        counts: PathBuf::from(get("arg.counts")?),
        edges: PathBuf::from(get("arg.edges")?),
        covariates: manifest.get("arg.covariates").map(PathBuf::from),
        chains_csv: PathBuf::from(get("arg.chains_csv")?),
        reps: get("arg.reps")?
            .parse()
            .map_err(|e| CliError::validation(format!("manifest reps: {e}")))?,
        seed: get("seed")?
            .parse()
            .map_err(|e| CliError::validation(format!("manifest seed: {e}")))?,
        zeta_fixed: get("arg.zeta_fixed")?
            .parse()
            .map_err(|e| CliError::validation(format!("manifest zeta_fixed: {e}")))?,
        priors,
        out_dir: out_dir.to_path_buf(),
    })
}
