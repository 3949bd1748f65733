//! CLI integration: command round trips, exit codes, manifest replay.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spingarch"))
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("spingarch-cli-{name}-{}", std::process::id()));
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_torus_edges(path: &Path, rows: usize, cols: usize) {
    let mut text = format!("n={}\n", rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            text.push_str(&format!("{i},{}\n", r * cols + (c + 1) % cols));
            text.push_str(&format!("{i},{}\n", ((r + 1) % rows) * cols + c));
        }
    }
    std::fs::write(path, text).unwrap();
}

fn sim_config(dir: &Path, rows: usize, cols: usize, t: usize, seed: u64) -> PathBuf {
    let path = dir.join("sim.cfg");
    std::fs::write(
        &path,
        format!(
            "[graph]\nkind = torus\nrows = {rows}\ncols = {cols}\n\n[model]\nvariant = spingarch\neta = 0.2\nkappa = 0.3\nalpha = 0.0\nsigma2 = 0.5\nzeta = 0.2\n\n[sim]\nt = {t}\nburn_in = 100\nseed = {seed}\n"
        ),
    )
    .unwrap();
    path
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn bundled_config_reproduces_400_by_100_panel() {
    let dir = tmp_dir("bundled");
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/sim_ti_20x20.cfg");
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .args(["--out-dir"])
        .arg(dir.join("run"))
        .output()
        .unwrap();
    assert_success(&out);
    let counts = std::fs::read_to_string(dir.join("run/counts.csv")).unwrap();
    // header comment + csv header + 400 * 100 rows
    assert_eq!(counts.lines().count(), 2 + 400 * 100);
    assert!(dir.join("run/field.csv").exists());
    assert!(dir.join("run/true_params.json").exists());
}

#[test]
fn simulate_is_seed_replayable_byte_identically() {
    let dir = tmp_dir("replay");
    let config = sim_config(&dir, 4, 4, 30, 99);
    for name in ["a", "b"] {
        let out = bin()
            .args(["simulate", "--config"])
            .arg(&config)
            .args(["--out-dir"])
            .arg(dir.join(name))
            .output()
            .unwrap();
        assert_success(&out);
    }
    for file in ["counts.csv", "intensities.csv", "latents.csv", "manifest.json"] {
        let a = std::fs::read(dir.join("a").join(file)).unwrap();
        let b = std::fs::read(dir.join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs across identical runs");
    }

    // manifest-driven replay is also byte-identical
    let out = bin()
        .args(["replay", "--manifest"])
        .arg(dir.join("a/manifest.json"))
        .args(["--out-dir"])
        .arg(dir.join("c"))
        .output()
        .unwrap();
    assert_success(&out);
    let a = std::fs::read(dir.join("a/counts.csv")).unwrap();
    let c = std::fs::read(dir.join("c/counts.csv")).unwrap();
    assert_eq!(a, c);
}

#[test]
fn malformed_config_is_line_precise_and_exit_2() {
    let dir = tmp_dir("badcfg");
    let config = dir.join("bad.cfg");
    std::fs::write(&config, "[graph]\nkind = torus\nrows 10\n").unwrap();
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .args(["--out-dir"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "stderr: {err}");
}

#[test]
fn missing_edges_file_is_exit_2() {
    let dir = tmp_dir("noedges");
    let counts = dir.join("counts.csv");
    std::fs::write(&counts, "site_id,t,count\na,0,1\nb,0,2\n").unwrap();
    let out = bin()
        .args(["stats", "--counts"])
        .arg(&counts)
        .args(["--edges"])
        .arg(dir.join("nope.edges"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ppc_shape_mismatch_is_exit_2() {
    let dir = tmp_dir("ppcshape");
    let config = sim_config(&dir, 4, 4, 20, 7);
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .args(["--out-dir"])
        .arg(dir.join("run"))
        .output()
        .unwrap();
    assert_success(&out);
    // graph with the wrong number of sites
    let edges = dir.join("wrong.edges");
    write_torus_edges(&edges, 3, 3);
    let chains = dir.join("chains.csv");
    std::fs::write(
        &chains,
        "chain,iter,alpha,eta,kappa\n0,0,0.5,0.2,0.3\n1,0,0.5,0.2,0.3\n",
    )
    .unwrap();
    let out = bin()
        .args(["ppc", "--model", "ingarch", "--counts"])
        .arg(dir.join("run/counts.csv"))
        .args(["--edges"])
        .arg(&edges)
        .args(["--chains-csv"])
        .arg(&chains)
        .args(["--out-dir"])
        .arg(dir.join("ppc"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_fit_ppc_round_trip_on_6x6_torus() {
    let dir = tmp_dir("roundtrip");
    let config = dir.join("sim.cfg");
    std::fs::write(
        &config,
        "[graph]\nkind = torus\nrows = 6\ncols = 6\n\n[model]\nvariant = spingarch\neta = 0.2\nkappa = 0.3\nalpha = 0.0\nsigma2 = 0.5\nzeta = 0.2\n\n[sim]\nt = 50\nburn_in = 200\nseed = 606\n",
    )
    .unwrap();
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .args(["--out-dir"])
        .arg(dir.join("run"))
        .output()
        .unwrap();
    assert_success(&out);

    let edges = dir.join("torus6.edges");
    write_torus_edges(&edges, 6, 6);
    let out = bin()
        .args(["fit", "--model", "spingarch", "--counts"])
        .arg(dir.join("run/counts.csv"))
        .args(["--edges"])
        .arg(&edges)
        .args([
            "--chains", "2", "--iters", "250", "--warmup", "250", "--seed", "11", "--leapfrog",
            "16", "--out-dir",
        ])
        .arg(dir.join("fit"))
        .output()
        .unwrap();
    assert_success(&out);
    assert!(dir.join("fit/chains.csv").exists());
    assert!(dir.join("fit/report.csv").exists());
    let report = std::fs::read_to_string(dir.join("fit/report.csv")).unwrap();
    assert!(report.contains("zeta"), "report: {report}");

    let out = bin()
        .args(["ppc", "--model", "spingarch", "--counts"])
        .arg(dir.join("run/counts.csv"))
        .args(["--edges"])
        .arg(&edges)
        .args(["--chains-csv"])
        .arg(dir.join("fit/chains.csv"))
        .args(["--reps", "80", "--seed", "13", "--out-dir"])
        .arg(dir.join("ppc"))
        .output()
        .unwrap();
    assert_success(&out);
    let pvals = std::fs::read_to_string(dir.join("ppc/pvalues.csv")).unwrap();
    assert!(pvals.lines().count() >= 9, "pvalues: {pvals}");

    // the fit itself replays byte-identically from its manifest
    let out = bin()
        .args(["replay", "--manifest"])
        .arg(dir.join("fit/manifest.json"))
        .args(["--out-dir"])
        .arg(dir.join("fit2"))
        .output()
        .unwrap();
    assert_success(&out);
    let a = std::fs::read(dir.join("fit/chains.csv")).unwrap();
    let b = std::fs::read(dir.join("fit2/chains.csv")).unwrap();
    assert_eq!(a, b, "replayed chains differ");
}

#[test]
fn tampered_manifest_is_rejected() {
    let dir = tmp_dir("tamper");
    let config = sim_config(&dir, 4, 4, 10, 3);
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .args(["--out-dir"])
        .arg(dir.join("run"))
        .output()
        .unwrap();
    assert_success(&out);
    let path = dir.join("run/manifest.json");
    let text = std::fs::read_to_string(&path).unwrap().replace("\"3\"", "\"4\"");
    std::fs::write(&path, text).unwrap();
    let out = bin()
        .args(["replay", "--manifest"])
        .arg(&path)
        .args(["--out-dir"])
        .arg(dir.join("again"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash"));
}

#[test]
fn stats_and_moments_emit_csv() {
    let dir = tmp_dir("statsmoments");
    let config = sim_config(&dir, 4, 4, 30, 21);
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .args(["--out-dir"])
        .arg(dir.join("run"))
        .output()
        .unwrap();
    assert_success(&out);
    let edges = dir.join("torus4.edges");
    write_torus_edges(&edges, 4, 4);
    let out = bin()
        .args(["stats", "--counts"])
        .arg(dir.join("run/counts.csv"))
        .args(["--edges"])
        .arg(&edges)
        .output()
        .unwrap();
    assert_success(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("moran_i"), "stats output: {text}");
    let data_row = text.lines().last().unwrap();
    assert!(data_row.starts_with("16,30,"), "row: {data_row}");

    // Poisson point: zero latent variance and no feedback gives
    // mean = variance = vmr = 1
    let out = bin()
        .args([
            "moments", "--alpha", "0", "--sigma-ii", "0", "--eta", "0", "--kappa", "0",
            "--sigma-ij", "0",
        ])
        .output()
        .unwrap();
    assert_success(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("mean,1.00000000"), "moments output: {text}");
    assert!(text.contains("vmr,1.00000000"));
    assert!(text.contains("spatial_corr[sigma_ij=0],0.00000000"));
}

#[test]
fn covariate_model_round_trip() {
    let dir = tmp_dir("covfit");
    // covariates for a 3x3 torus; simulate from the covariate variant
    let covs = dir.join("covs.csv");
    let mut text = String::from("site_id,wealth\n");
    for i in 0..9 {
        text.push_str(&format!("s{i},{}\n", 0.2 * (i % 3) as f64));
    }
    std::fs::write(&covs, text).unwrap();
    let config = dir.join("sim.cfg");
    std::fs::write(
        &config,
        format!(
            "[graph]\nkind = torus\nrows = 3\ncols = 3\n\n[model]\nvariant = cov-spingarch\neta = 0.15\nkappa = 0.2\nbeta = 0.3, 0.5\ncovariates = {}\nsigma2_ind = 0.3\nsigma2_sp = 0.4\nzeta = 0.999\n\n[sim]\nt = 40\nburn_in = 150\nseed = 12\n",
            covs.display()
        ),
    )
    .unwrap();
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .args(["--out-dir"])
        .arg(dir.join("run"))
        .output()
        .unwrap();
    assert_success(&out);
    assert!(dir.join("run/field.csv").exists());
    assert!(dir.join("run/latents.csv").exists());

    let edges = dir.join("torus3.edges");
    write_torus_edges(&edges, 3, 3);
    let out = bin()
        .args(["fit", "--model", "cov-spingarch", "--counts"])
        .arg(dir.join("run/counts.csv"))
        .args(["--edges"])
        .arg(&edges)
        .args(["--covariates"])
        .arg(&covs)
        .args([
            "--chains", "2", "--iters", "150", "--warmup", "200", "--seed", "4", "--out-dir",
        ])
        .arg(dir.join("fit"))
        .output()
        .unwrap();
    assert_success(&out);
    let report = std::fs::read_to_string(dir.join("fit/report.csv")).unwrap();
    assert!(report.contains("beta_wealth"), "report: {report}");
    assert!(report.contains("sigma2_sp"), "report: {report}");

    let out = bin()
        .args(["ppc", "--model", "cov-spingarch", "--counts"])
        .arg(dir.join("run/counts.csv"))
        .args(["--edges"])
        .arg(&edges)
        .args(["--covariates"])
        .arg(&covs)
        .args(["--chains-csv"])
        .arg(dir.join("fit/chains.csv"))
        .args(["--reps", "40", "--seed", "9", "--out-dir"])
        .arg(dir.join("ppc"))
        .output()
        .unwrap();
    assert_success(&out);
}

#[test]
fn study_command_emits_tables() {
    let dir = tmp_dir("study");
    let config = dir.join("study.cfg");
    std::fs::write(
        &config,
        "[graph]\nkind = torus\nrows = 3\ncols = 3\n\n[generator]\nvariant = ti-spingarch\neta = 0.2\nkappa = 0.3\nalpha = 0.0\nsigma2 = 0.5\nzeta = 0.2\n\n[study]\nt = 30\nburn_in = 100\nvariants = ingarch\nseed = 5\nppc_reps = 30\n\n[fit]\nchains = 2\niters = 100\nwarmup = 150\n",
    )
    .unwrap();
    let out = bin()
        .args(["study", "--config"])
        .arg(&config)
        .args(["--out-dir"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_success(&out);
    let params = std::fs::read_to_string(dir.join("out/study_params.csv")).unwrap();
    assert!(params.contains("ingarch,eta"), "{params}");
    let pvals = std::fs::read_to_string(dir.join("out/study_pvalues.csv")).unwrap();
    assert!(pvals.contains("ingarch,moran_i"), "{pvals}");
    assert!(dir.join("out/data_counts.csv").exists());
    assert!(dir.join("out/manifest.json").exists());
}

#[test]
fn moments_flags_extrapolated_lags() {
    let out = bin()
        .args([
            "moments", "--alpha", "0", "--sigma-ii", "0.5", "--eta", "0.2", "--kappa", "0.3",
            "--lag", "3",
        ])
        .output()
        .unwrap();
    assert_success(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("lag3_autocorr") && text.contains("extrapolated"), "{text}");
}
