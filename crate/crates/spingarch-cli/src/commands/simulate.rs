//! `simulate`: draw a count panel from a configured generative model and
//! persist counts, intensities, latent draws, the true parameters, and a
//! regenerable manifest.

use std::path::Path;

use spingarch::io::{read_config, write_counts_csv, write_manifest, write_value_csv, Manifest, RunConfig};
use spingarch::process::simulate;

use crate::build;
use crate::errors::CliError;

pub fn run(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let cfg = read_config(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let cfg = resolve_paths(cfg, base);
    execute(&cfg, out_dir)
}

/// File-path keys are made absolute before embedding so a manifest replay
/// resolves identically from anywhere.
fn resolve_paths(mut cfg: RunConfig, base: &Path) -> RunConfig {
    for (section, key) in [("graph", "file"), ("model", "covariates"), ("generator", "covariates")]
    {
        if let Some(raw) = cfg.get(section, key) {
            let abs = build::resolve(base, raw).to_string_lossy().into_owned();
            cfg.set(section, key, &abs);
        }
    }
    cfg
}

/// Run a simulation from an already path-resolved config.
pub fn execute(cfg: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let base = Path::new(".");
    let graph = build::graph_from_config(cfg, base)?;
    let model = build::model_from_config(cfg, "model", &graph, base)?;

    let t_total = cfg.require_usize("sim", "t")?;
    let burn_in = cfg.opt_usize("sim", "burn_in")?.unwrap_or(500);
    let seed = cfg.require_u64("sim", "seed")?;

    let output = simulate(&model, t_total, burn_in, seed)?;
    let panel = &output.panel;

    build::write_artifact(out_dir, "counts.csv", &write_counts_csv(panel))?;
    if let Some(lam) = panel.intensities() {
        build::write_artifact(
            out_dir,
            "intensities.csv",
            &write_value_csv("intensities", panel.site_ids(), lam),
        )?;
    }
    if let Some(latents) = &output.latent_panel {
        build::write_artifact(
            out_dir,
            "latents.csv",
            &write_value_csv("latents", panel.site_ids(), &latents.values),
        )?;
    }
    if let Some(field) = &output.field {
        let as_matrix = nalgebra::DMatrix::from_column_slice(field.len(), 1, field.as_slice());
        build::write_artifact(
            out_dir,
            "field.csv",
            &write_value_csv("field", panel.site_ids(), &as_matrix),
        )?;
    }

    // true-parameter manifest
    let mut truth = Manifest::new();
    truth.set("kind", "true-params");
    for key in cfg.keys("model") {
        if let Some(v) = cfg.get("model", &key) {
            truth.set(&format!("model.{key}"), v);
        }
    }
    truth.set("sim.seed", seed);
    truth.set("sim.t", t_total);
    truth.set("sim.burn_in", burn_in);
    write_manifest(&out_dir.join("true_params.json"), &truth)?;

    let mut manifest = build::manifest_base("simulate");
    manifest.set("seed", seed);
    build::embed_config(&mut manifest, cfg);
    write_manifest(&out_dir.join("manifest.json"), &manifest)?;

    println!(
        "simulated {} sites x {} times -> {}",
        panel.n_sites(),
        panel.n_times(),
        out_dir.display()
    );
    Ok(())
}
