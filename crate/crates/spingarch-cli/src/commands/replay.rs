//! `replay`: regenerate a run's outputs from its manifest alone.
//!
//! The manifest names the command and either embeds the resolved config
//! (simulate, study) or records the original flags and input paths (fit,
//! ppc). Replayed outputs are byte-identical because every source of
//! randomness flows from the recorded seed.

use std::path::Path;

use spingarch::io::read_manifest;

use crate::build::config_from_manifest;
use crate::commands;
use crate::errors::CliError;

pub fn run(manifest_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let manifest = read_manifest(manifest_path)?;
    match manifest.require("command")? {
        "simulate" => {
            let cfg = config_from_manifest(&manifest)?;
            commands::simulate::execute(&cfg, out_dir)
        }
        "study" => {
            let cfg = config_from_manifest(&manifest)?;
            commands::study::execute(&cfg, out_dir)
        }
        "fit" => {
            let args = commands::fit::args_from_manifest(&manifest, out_dir)?;
            verify_input_hashes(&manifest, &[("counts", &args.counts), ("edges", &args.edges)])?;
            commands::fit::run(&args)
        }
        "ppc" => {
            let args = commands::ppc::args_from_manifest(&manifest, out_dir)?;
            commands::ppc::run(&args)
        }
        other => Err(CliError::validation(format!("cannot replay command `{other}`"))),
    }
}

fn verify_input_hashes(
    manifest: &spingarch::io::Manifest,
    inputs: &[(&str, &std::path::PathBuf)],
) -> Result<(), CliError> {
    for (name, path) in inputs {
        if let Some(recorded) = manifest.get(&format!("input_hash.{name}")) {
            let bytes = std::fs::read(path)?;
            let actual = format!("{:016x}", spingarch::io::fnv1a64(&bytes));
            if recorded != actual {
                return Err(CliError::validation(format!(
                    "input `{}` changed since the recorded run (hash {actual} != {recorded})",
                    path.display()
                )));
            }
        }
    }
    Ok(())
}
