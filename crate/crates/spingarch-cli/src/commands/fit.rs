//! `fit`: HMC fit of a model variant to a count panel; writes chains CSV,
//! report CSV, and a manifest.

use std::path::{Path, PathBuf};

use clap::Args;

use spingarch::inference::{fit, FitOptions, Posterior, PriorSpec};
use spingarch::io::{
    read_counts_csv, read_covariates_csv, read_edge_list, write_chains_csv, write_manifest,
};

use crate::build;
use crate::errors::CliError;

#[derive(Args, Debug, Clone)]
pub struct FitArgs {
    /// Model variant: ingarch | spingarch | ti-spingarch | cov-spingarch.
    #[arg(long)]
    pub model: String,
    /// Count panel CSV (site_id,t,count).
    #[arg(long)]
    pub counts: PathBuf,
    /// Edge-list file describing the neighborhood graph.
    #[arg(long)]
    pub edges: PathBuf,
    /// Site covariates CSV (cov-spingarch only).
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub chains: usize,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1000)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Base leapfrog path length (jittered per iteration).
    #[arg(long, default_value_t = 24)]
    pub leapfrog: usize,
    #[arg(long, default_value_t = 0.8)]
    pub target_accept: f64,
    /// Fixed spatial dependence of the weighted field (cov-spingarch).
    #[arg(long, default_value_t = 0.999)]
    pub zeta_fixed: f64,
    /// Prior overrides as key=value (location_sd, scale_sd), repeatable.
    #[arg(long = "prior")]
    pub priors: Vec<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn parse_priors(overrides: &[String]) -> Result<PriorSpec, CliError> {
    let mut priors = PriorSpec::default();
    for item in overrides {
        let (key, value) = item.split_once('=').ok_or_else(|| {
            CliError::validation(format!("prior override `{item}` is not key=value"))
        })?;
        let parsed: f64 = value.trim().parse().map_err(|e| {
            CliError::validation(format!("bad prior value in `{item}`: {e}"))
        })?;
        match key.trim() {
            "location_sd" => priors.location_sd = parsed,
            "scale_sd" => priors.scale_sd = parsed,
            other => {
                return Err(CliError::validation(format!(
                    "unknown prior key `{other}` (expected location_sd or scale_sd)"
                )))
            }
        }
    }
    Ok(priors)
}

pub fn build_posterior(args: &FitArgs) -> Result<Posterior, CliError> {
    let panel = read_counts_csv(&args.counts)?;
    let graph = std::sync::Arc::new(read_edge_list(&args.edges)?);
    let priors = parse_priors(&args.priors)?;
    let posterior = match args.model.as_str() {
        "ingarch" => {
            if graph.n_sites() != panel.n_sites() {
                return Err(CliError::validation(format!(
                    "graph has {} sites, counts have {}",
                    graph.n_sites(),
                    panel.n_sites()
                )));
            }
            Posterior::new_ingarch(panel, priors)?
        }
        "spingarch" => Posterior::new_spingarch(panel, graph, priors)?,
        "ti-spingarch" => Posterior::new_ti_spingarch(panel, graph, priors)?,
        "cov-spingarch" => {
            let path = args.covariates.as_ref().ok_or_else(|| {
                CliError::validation("cov-spingarch requires --covariates")
            })?;
            let table = read_covariates_csv(path)?;
            let aligned = table.aligned_to(panel.site_ids())?;
            Posterior::new_cov_spingarch(
                panel,
                graph,
                aligned,
                table.names.clone(),
                args.zeta_fixed,
                priors,
            )?
        }
        other => {
            return Err(CliError::validation(format!(
                "unknown model `{other}` (expected ingarch, spingarch, ti-spingarch, cov-spingarch)"
            )))
        }
    };
    Ok(posterior)
}

pub fn run(args: &FitArgs) -> Result<(), CliError> {
    let posterior = build_posterior(args)?;
    let options = FitOptions {
        chains: args.chains,
        iterations: args.iters,
        warmup: args.warmup,
        seed: args.seed,
        base_leapfrog: args.leapfrog,
        target_accept: args.target_accept,
        ..Default::default()
    };
    let (chains, report) = fit(&posterior, &options)?;

    build::write_artifact(
        &args.out_dir,
        "chains.csv",
        &write_chains_csv(&chains.to_chains_table()),
    )?;
    build::write_artifact(&args.out_dir, "report.csv", &report.to_csv())?;

    let mut manifest = build::manifest_base("fit");
    embed_fit_args(&mut manifest, args);
    write_manifest(&args.out_dir.join("manifest.json"), &manifest)?;

    for p in &report.params {
        println!(
            "{:>16}  mean {:>10.4}  95% ({:>10.4}, {:>10.4})  rhat {:.3}",
            p.name, p.mean, p.lower95, p.upper95, p.rhat
        );
    }
    println!(
        "divergences: {} ({:.2}% of draws)",
        report.divergence_count,
        100.0 * report.divergence_rate
    );
    Ok(())
}

pub fn embed_fit_args(manifest: &mut spingarch::io::Manifest, args: &FitArgs) {
    let canon = |p: &Path| p.to_string_lossy().into_owned();
    manifest.set("seed", args.seed);
    manifest.set("arg.model", &args.model);
    manifest.set("arg.counts", canon(&args.counts));
    manifest.set("arg.edges", canon(&args.edges));
    if let Some(c) = &args.covariates {
        manifest.set("arg.covariates", canon(c));
    }
    manifest.set("arg.chains", args.chains);
    manifest.set("arg.iters", args.iters);
    manifest.set("arg.warmup", args.warmup);
    manifest.set("arg.leapfrog", args.leapfrog);
    manifest.set("arg.target_accept", args.target_accept);
    manifest.set("arg.zeta_fixed", args.zeta_fixed);
    for p in &args.priors {
        let key = p.split('=').next().unwrap_or("override");
        manifest.set(&format!("arg.prior.{key}"), p);
    }
    for (name, path) in [("counts", &args.counts), ("edges", &args.edges)] {
        if let Ok(bytes) = std::fs::read(path) {
            manifest.set(&format!("input_hash.{name}"), format!("{:016x}", spingarch::io::fnv1a64(&bytes)));
        }
    }
}

/// Rebuild `FitArgs` from a fit manifest (for replays).
pub fn args_from_manifest(
    manifest: &spingarch::io::Manifest,
    out_dir: &Path,
) -> Result<FitArgs, CliError> {
    let get = |k: &str| manifest.require(k).map(str::to_string).map_err(CliError::from);
    let parse_usize = |k: &str| -> Result<usize, CliError> {
        get(k)?.parse().map_err(|e| CliError::validation(format!("manifest {k}: {e}")))
    };
    let mut priors = Vec::new();
    for key in manifest.keys_with_prefix("arg.prior.") {
        if let Some(v) = manifest.get(key) {
            priors.push(v.to_string());
        }
    }
    Ok(FitArgs {
        model: get("arg.model")?,
        counts: PathBuf::from(get("arg.counts")?),
        edges: PathBuf::from(get("arg.edges")?),
        covariates: manifest.get("arg.covariates").map(PathBuf::from),
        chains: parse_usize("arg.chains")?,
        iters: parse_usize("arg.iters")?,
        warmup: parse_usize("arg.warmup")?,
        seed: get("seed")?.parse().map_err(|e| CliError::validation(format!("manifest seed: {e}")))?,
        leapfrog: parse_usize("arg.leapfrog")?,
        target_accept: get("arg.target_accept")?
            .parse()
            .map_err(|e| CliError::validation(format!("manifest target_accept: {e}")))?,
        zeta_fixed: get("arg.zeta_fixed")?
            .parse()
            .map_err(|e| CliError::validation(format!("manifest zeta_fixed: {e}")))?,
        priors,
        out_dir: out_dir.to_path_buf(),
    })
}
