//! `study`: simulate from one generating model, fit several variants,
//! tabulate credible intervals and predictive p-values.

use std::path::Path;

use spingarch::inference::{
    misspecification_study, study_params_csv, study_pvalues_csv, FitOptions, FitVariantSel,
    StudyConfig,
};
use spingarch::io::{read_config, write_counts_csv, write_manifest, RunConfig};

use crate::build;
use crate::commands::fit::parse_priors;
use crate::errors::CliError;

pub fn run(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let cfg = read_config(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    // resolve file-path keys up front, as simulate does
    let mut cfg = cfg;
    for (section, key) in [("graph", "file"), ("generator", "covariates")] {
        if let Some(raw) = cfg.get(section, key) {
            let abs = build::resolve(base, raw).to_string_lossy().into_owned();
            cfg.set(section, key, &abs);
        }
    }
    execute(&cfg, out_dir)
}

pub fn execute(cfg: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let base = Path::new(".");
    let graph = build::graph_from_config(cfg, base)?;
    let generator = build::model_from_config(cfg, "generator", &graph, base)?;

    let variants = cfg
        .require_str("study", "variants")?
        .split(',')
        .map(|v| match v.trim() {
            "ingarch" => Ok(FitVariantSel::Ingarch),
            "spingarch" => Ok(FitVariantSel::Spingarch),
            "ti-spingarch" => Ok(FitVariantSel::TiSpingarch),
            other => Err(CliError::validation(format!("unknown study variant `{other}`"))),
        })
        .collect::<Result<Vec<_>, _>>()?;

    let priors = match cfg.opt_str("priors", "overrides") {
        Some(raw) => parse_priors(
            &raw.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>(),
        )?,
        None => Default::default(),
    };

    let fit_options = FitOptions {
        chains: cfg.opt_usize("fit", "chains")?.unwrap_or(2),
        iterations: cfg.opt_usize("fit", "iters")?.unwrap_or(600),
        warmup: cfg.opt_usize("fit", "warmup")?.unwrap_or(600),
        base_leapfrog: cfg.opt_usize("fit", "leapfrog")?.unwrap_or(24),
        target_accept: cfg.opt_f64("fit", "target_accept")?.unwrap_or(0.8),
        ..Default::default()
    };

    let study = StudyConfig {
        generator,
        graph,
        t_total: cfg.require_usize("study", "t")?,
        burn_in: cfg.opt_usize("study", "burn_in")?.unwrap_or(500),
        variants,
        priors,
        fit_options,
        ppc_reps: cfg.opt_usize("study", "ppc_reps")?.unwrap_or(200),
        seed: cfg.require_u64("study", "seed")?,
    };
    let report = misspecification_study(&study)?;

    build::write_artifact(out_dir, "data_counts.csv", &write_counts_csv(&report.panel))?;
    build::write_artifact(out_dir, "study_params.csv", &study_params_csv(&report))?;
    build::write_artifact(out_dir, "study_pvalues.csv", &study_pvalues_csv(&report))?;

    let mut manifest = build::manifest_base("study");
    manifest.set("seed", study.seed);
    build::embed_config(&mut manifest, cfg);
    write_manifest(&out_dir.join("manifest.json"), &manifest)?;

    print!("{}", study_params_csv(&report));
    print!("{}", study_pvalues_csv(&report));
    Ok(())
}
