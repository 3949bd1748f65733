//! End-to-end sampler tests at desk scale: parameter recovery, prior
//! sampling, determinism, and predictive-check calibration.

use std::sync::Arc;

use nalgebra::DVector;
use spingarch::car::{CarSpec, Weighting};
use spingarch::graph::NeighborhoodGraph;
use spingarch::inference::{
    fit, posterior_predictive, FitOptions, Posterior, PriorSpec,
};
use spingarch::process::{simulate, CountPanel, ModelSpec, ModelVariant, ProcessParams};

fn strip(panel: &CountPanel) -> CountPanel {
    CountPanel::new(panel.counts().clone(), panel.site_ids().to_vec(), None).unwrap()
}

#[test]
fn ingarch_fit_recovers_generating_parameters() {
    let truth = (2.0f64, 0.2, 0.3);
    let model = ModelSpec::new(
        ModelVariant::Ingarch11 { d: truth.0, n_sites: 25 },
        ProcessParams::new(truth.1, truth.2).unwrap(),
        None,
    )
    .unwrap();
    let out = simulate(&model, 150, 200, 4242).unwrap();
    let posterior = Posterior::new_ingarch(strip(&out.panel), PriorSpec::default()).unwrap();
    let options = FitOptions {
        chains: 2,
        iterations: 500,
        warmup: 500,
        seed: 7,
        base_leapfrog: 16,
        ..Default::default()
    };
    let (_, report) = fit(&posterior, &options).unwrap();

    let alpha = report.param("alpha").unwrap();
    assert!(
        alpha.lower95 < truth.0.ln() && truth.0.ln() < alpha.upper95,
        "alpha CI ({}, {}) misses {}",
        alpha.lower95,
        alpha.upper95,
        truth.0.ln()
    );
    let eta = report.param("eta").unwrap();
    assert!(eta.lower95 < truth.1 && truth.1 < eta.upper95);
    let kappa = report.param("kappa").unwrap();
    assert!(kappa.lower95 < truth.2 && truth.2 < kappa.upper95);
    for p in &report.params {
        assert!(p.rhat < 1.05, "{} rhat {}", p.name, p.rhat);
        assert!(p.lower95 <= p.mean && p.mean <= p.upper95);
    }
}

#[test]
fn ingarch_coverage_across_seeded_replications() {
    // fitting the generating variant: the 95% intervals should cover each
    // true value in at least 8 of 10 seeded replications
    let truth = (2.0f64, 0.2, 0.3);
    let mut covered = [0usize; 3];
    for rep in 0..10u64 {
        let model = ModelSpec::new(
            ModelVariant::Ingarch11 { d: truth.0, n_sites: 49 },
            ProcessParams::new(truth.1, truth.2).unwrap(),
            None,
        )
        .unwrap();
        let out = simulate(&model, 150, 200, 30_000 + rep).unwrap();
        let posterior = Posterior::new_ingarch(strip(&out.panel), PriorSpec::default()).unwrap();
        let options = FitOptions {
            chains: 2,
            iterations: 300,
            warmup: 300,
            seed: 40_000 + rep,
            base_leapfrog: 12,
            latent_thin: 0,
            ..Default::default()
        };
        let (_, report) = fit(&posterior, &options).unwrap();
        let targets = [("alpha", truth.0.ln()), ("eta", truth.1), ("kappa", truth.2)];
        for (k, (name, value)) in targets.iter().enumerate() {
            let p = report.param(name).unwrap();
            if p.lower95 <= *value && *value <= p.upper95 {
                covered[k] += 1;
            }
        }
    }
    assert!(
        covered.iter().all(|&c| c >= 8),
        "coverage out of 10: alpha {}, eta {}, kappa {}",
        covered[0],
        covered[1],
        covered[2]
    );
}

#[test]
fn prior_only_fit_recovers_triangle_mean() {
    // uniform over the feedback triangle has E[eta] = E[kappa] = 1/3
    let counts = nalgebra::DMatrix::<u64>::zeros(4, 4);
    let posterior = Posterior::new_ingarch(CountPanel::from_counts(counts), PriorSpec::default())
        .unwrap()
        .prior_only();
    let options = FitOptions {
        chains: 2,
        iterations: 2000,
        warmup: 500,
        seed: 11,
        base_leapfrog: 12,
        ..Default::default()
    };
    let (chains, report) = fit(&posterior, &options).unwrap();
    let eta_draws = chains.pooled(1);
    let mean = eta_draws.iter().sum::<f64>() / eta_draws.len() as f64;
    assert!((mean - 1.0 / 3.0).abs() < 0.03, "prior mean of eta = {mean}");
    assert!(report.param("eta").unwrap().rhat < 1.05);
}

#[test]
fn fits_are_deterministic_per_seed_and_chain_count() {
    let model = ModelSpec::new(
        ModelVariant::Ingarch11 { d: 1.5, n_sites: 9 },
        ProcessParams::new(0.25, 0.2).unwrap(),
        None,
    )
    .unwrap();
    let out = simulate(&model, 60, 50, 5).unwrap();
    let posterior = Posterior::new_ingarch(strip(&out.panel), PriorSpec::default()).unwrap();
    let options = FitOptions {
        chains: 2,
        iterations: 80,
        warmup: 100,
        seed: 3,
        ..Default::default()
    };
    let (a, _) = fit(&posterior, &options).unwrap();
    let (b, _) = fit(&posterior, &options).unwrap();
    assert_eq!(a.chains, b.chains);
    let different = FitOptions { seed: 4, ..options };
    let (c, _) = fit(&posterior, &different).unwrap();
    assert_ne!(a.chains, c.chains);
}

#[test]
fn divergence_budget_is_enforced() {
    let model = ModelSpec::new(
        ModelVariant::Ingarch11 { d: 1.5, n_sites: 4 },
        ProcessParams::new(0.2, 0.2).unwrap(),
        None,
    )
    .unwrap();
    let out = simulate(&model, 30, 20, 5).unwrap();
    let posterior = Posterior::new_ingarch(strip(&out.panel), PriorSpec::default()).unwrap();
    // an impossible budget turns any run into an error, exercising the
    // advisory message path
    let options = FitOptions {
        chains: 2,
        iterations: 20,
        warmup: 30,
        seed: 3,
        max_divergence_rate: -1.0,
        ..Default::default()
    };
    match fit(&posterior, &options) {
        Err(spingarch::inference::InferenceError::TooManyDivergences { .. }) => {}
        other => panic!("expected divergence error, got {other:?}"),
    }
}

#[test]
fn well_specified_ppc_p_values_are_moderate() {
    let graph = Arc::new(NeighborhoodGraph::torus_grid(5, 5).unwrap());
    let model = ModelSpec::new(
        ModelVariant::Ingarch11 { d: 2.0, n_sites: 25 },
        ProcessParams::new(0.2, 0.3).unwrap(),
        None,
    )
    .unwrap();
    let out = simulate(&model, 120, 100, 99).unwrap();
    let posterior = Posterior::new_ingarch(strip(&out.panel), PriorSpec::default()).unwrap();
    let options = FitOptions {
        chains: 2,
        iterations: 400,
        warmup: 400,
        seed: 13,
        base_leapfrog: 16,
        ..Default::default()
    };
    let (chains, _) = fit(&posterior, &options).unwrap();
    let ppc = posterior_predictive(&posterior, &chains, &graph, 200, 17).unwrap();
    for name in ["moran_i", "log_vmr", "diff_variance", "mean_lag1_ar"] {
        let stat = ppc.stat(name).unwrap();
        let p = stat.p_value.unwrap();
        assert!(
            (0.02..=0.98).contains(&p),
            "{name} p-value {p} out of calibration range"
        );
        assert_eq!(stat.excluded, 0);
    }
}

#[test]
fn ppc_rank_is_roughly_uniform_under_exchangeability() {
    // Degenerate "posterior" concentrated on the truth: the observed panel
    // is then exchangeable with the replicates and its p-value should be
    // spread over (0, 1) across generating seeds.
    let graph = Arc::new(NeighborhoodGraph::torus_grid(4, 4).unwrap());
    let truth_row = vec![2.0f64.ln(), 0.2, 0.3];
    let mut p_values = Vec::new();
    for seed in 0..30u64 {
        let model = ModelSpec::new(
            ModelVariant::Ingarch11 { d: 2.0, n_sites: 16 },
            ProcessParams::new(0.2, 0.3).unwrap(),
            None,
        )
        .unwrap();
        let out = simulate(&model, 50, 80, 1000 + seed).unwrap();
        let posterior = Posterior::new_ingarch(strip(&out.panel), PriorSpec::default()).unwrap();
        let table = spingarch::io::ChainsTable {
            param_names: vec!["alpha".into(), "eta".into(), "kappa".into()],
            chain: vec![0, 1],
            iter: vec![0, 0],
            values: vec![truth_row.clone(), truth_row.clone()],
        };
        let chains = spingarch::inference::PosteriorChains::from_chains_table(&table).unwrap();
        let ppc = posterior_predictive(&posterior, &chains, &graph, 60, seed).unwrap();
        p_values.push(ppc.stat("log_vmr").unwrap().p_value.unwrap());
    }
    let mean = p_values.iter().sum::<f64>() / p_values.len() as f64;
    assert!((0.3..0.7).contains(&mean), "mean rank {mean}");
    assert!(p_values.iter().filter(|&&p| p < 0.4).count() >= 5);
    assert!(p_values.iter().filter(|&&p| p > 0.6).count() >= 5);
}

#[test]
fn time_invariant_fit_short_run_mixes() {
    let graph = Arc::new(NeighborhoodGraph::torus_grid(4, 4).unwrap());
    let car = CarSpec::with_constant_mean(graph.clone(), 0.0, 0.24, 0.5, Weighting::Standard)
        .unwrap();
    let model = ModelSpec::new(
        ModelVariant::TimeInvariantSpingarch { car },
        ProcessParams::new(0.2, 0.3).unwrap(),
        None,
    )
    .unwrap();
    let out = simulate(&model, 80, 300, 21).unwrap();
    let posterior =
        Posterior::new_ti_spingarch(strip(&out.panel), graph, PriorSpec::default()).unwrap();
    let options = FitOptions {
        chains: 2,
        iterations: 400,
        warmup: 600,
        seed: 29,
        base_leapfrog: 48,
        ..Default::default()
    };
    let (chains, report) = fit(&posterior, &options).unwrap();
    for p in &report.params {
        assert!(p.rhat < 1.2, "{} rhat {}", p.name, p.rhat);
    }
    // latent draws retained and of the right shape
    let (_, latents) = &chains.latent_draws[0][0];
    assert_eq!(latents.u.as_ref().unwrap().len(), 16);

    let eta = report.param("eta").unwrap();
    assert!(eta.lower95 < 0.35, "eta interval badly off: ({}, {})", eta.lower95, eta.upper95);
}

#[test]
fn lambda0_matches_each_variant_stationary_level() {
    let counts = nalgebra::DMatrix::<u64>::from_row_slice(2, 3, &[1, 2, 3, 0, 0, 0]);
    // site-homogeneous variant seeds with the pooled mean
    let posterior =
        Posterior::new_ingarch(CountPanel::from_counts(counts.clone()), PriorSpec::default())
            .unwrap();
    assert_eq!(posterior.lambda0(), &DVector::from_element(2, 1.0));
    // latent-field variants seed per site
    let graph = Arc::new(NeighborhoodGraph::from_edge_list(2, &[(0, 1)]).unwrap());
    let posterior = Posterior::new_ti_spingarch(
        CountPanel::from_counts(counts),
        graph,
        PriorSpec::default(),
    )
    .unwrap();
    assert_eq!(posterior.lambda0(), &DVector::from_vec(vec![2.0, 0.0]));
}
