//! Shared construction of graphs and generative models from config files,
//! and manifest plumbing.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DVector;

use spingarch::car::{CarSpec, Weighting};
use spingarch::graph::NeighborhoodGraph;
use spingarch::io::{read_covariates_csv, read_edge_list, Manifest, RunConfig};
use spingarch::process::{ModelSpec, ModelVariant, ProcessParams};
use spingarch::stats::MORAN_POOLING_RULE;

use crate::errors::CliError;

/// Resolve a config-relative path.
pub fn resolve(base: &Path, raw: &str) -> PathBuf {
    let p = Path::new(raw);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn graph_from_config(
    cfg: &RunConfig,
    base: &Path,
) -> Result<Arc<NeighborhoodGraph>, CliError> {
    let kind = cfg.require_str("graph", "kind")?;
    let graph = match kind {
        "torus" => {
            let rows = cfg.require_usize("graph", "rows")?;
            let cols = cfg.require_usize("graph", "cols")?;
            NeighborhoodGraph::torus_grid(rows, cols)?
        }
        "edges" => {
            let file = cfg.require_str("graph", "file")?;
            read_edge_list(&resolve(base, file))?
        }
        other => {
            return Err(CliError::validation(format!(
                "[graph] kind must be `torus` or `edges`, got `{other}`"
            )))
        }
    };
    Ok(Arc::new(graph))
}

/// Build a generative model from a config section (`[model]` for simulate,
/// `[generator]` for studies).
pub fn model_from_config(
    cfg: &RunConfig,
    section: &str,
    graph: &Arc<NeighborhoodGraph>,
    base: &Path,
) -> Result<ModelSpec, CliError> {
    let eta = cfg.require_f64(section, "eta")?;
    let kappa = cfg.require_f64(section, "kappa")?;
    let params = ProcessParams::new(eta, kappa)?;
    let variant = match cfg.require_str(section, "variant")? {
        "ingarch" => ModelVariant::Ingarch11 {
            d: cfg.require_f64(section, "d")?,
            n_sites: graph.n_sites(),
        },
        "spingarch" | "ti-spingarch" => {
            let car = CarSpec::with_constant_mean(
                graph.clone(),
                cfg.require_f64(section, "alpha")?,
                cfg.require_f64(section, "zeta")?,
                cfg.require_f64(section, "sigma2")?,
                Weighting::Standard,
            )?;
            if cfg.require_str(section, "variant")? == "spingarch" {
                ModelVariant::Spingarch { car }
            } else {
                ModelVariant::TimeInvariantSpingarch { car }
            }
        }
        "cov-spingarch" => {
            let table = read_covariates_csv(&resolve(
                base,
                cfg.require_str(section, "covariates")?,
            ))?;
            let beta = DVector::from_vec(cfg.require_f64_list(section, "beta")?);
            let zeta = cfg.opt_f64(section, "zeta")?.unwrap_or(0.999);
            let weighted_car = CarSpec::with_constant_mean(
                graph.clone(),
                0.0,
                zeta,
                cfg.require_f64(section, "sigma2_sp")?,
                Weighting::DegreeWeighted,
            )?;
            ModelVariant::CovariateSpingarch {
                beta,
                covariates: table.values,
                sigma2_ind: cfg.require_f64(section, "sigma2_ind")?,
                weighted_car,
            }
        }
        other => {
            return Err(CliError::validation(format!(
                "[{section}] variant must be one of ingarch, spingarch, ti-spingarch, cov-spingarch; got `{other}`"
            )))
        }
    };
    let lambda0 = cfg
        .opt_f64(section, "lambda0")?
        .map(|v| DVector::from_element(graph.n_sites(), v));
    Ok(ModelSpec::new(variant, params, lambda0)?)
}

/// Manifest skeleton shared by every artifact-producing command.
pub fn manifest_base(command: &str) -> Manifest {
    let mut m = Manifest::new();
    m.set("tool", "spingarch");
    m.set("tool_version", env!("CARGO_PKG_VERSION"));
    m.set("command", command);
    m.set("stat.moran_pooling", MORAN_POOLING_RULE);
    m
}

/// Embed a config document so the run can be regenerated from the manifest.
pub fn embed_config(manifest: &mut Manifest, cfg: &RunConfig) {
    let text = cfg.to_text();
    manifest.set("config_hash", format!("{:016x}", spingarch::io::fnv1a64(text.as_bytes())));
    for section in cfg.sections() {
        for key in cfg.keys(section) {
            if let Some(v) = cfg.get(section, &key) {
                manifest.set(&format!("config.{section}.{key}"), v);
            }
        }
    }
}

/// Reconstruct the embedded config from a manifest.
pub fn config_from_manifest(manifest: &Manifest) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    for (key, value) in manifest.entries() {
        if let Some(rest) = key.strip_prefix("config.") {
            let (section, k) = rest.split_once('.').ok_or_else(|| {
                CliError::validation(format!("malformed manifest key `{key}`"))
            })?;
            cfg.set(section, k, value);
        }
    }
    let text = cfg.to_text();
    let recorded = manifest.require("config_hash")?;
    let actual = format!("{:016x}", spingarch::io::fnv1a64(text.as_bytes()));
    if recorded != actual {
        return Err(CliError::validation(
            "embedded config does not match its recorded hash".to_string(),
        ));
    }
    Ok(cfg)
}

pub fn write_artifact(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), text)?;
    Ok(())
}
