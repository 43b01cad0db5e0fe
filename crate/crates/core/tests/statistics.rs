//! Distributional checks on the generator: the total background count over
//! many independent seeds must be Poisson with mean rate x duration.

use pepsim_core::flow::{CurrentSchedule, ElectronFlowModel};
use pepsim_core::montecarlo::{generate_run, GeneratorConfig, Truth};
use pepsim_core::spectra::{ContinuumModel, ContinuumShape, LineKind, LineModel, ResponseModel};

// Test-side Poisson pmf, independent of the library internals.
fn poisson_pmf(k: u64, mean: f64) -> f64 {
    (k as f64 * mean.ln() - mean - libm::lgamma(k as f64 + 1.0)).exp()
}

/// Partition the Poisson(mean) outcome space into `n_bins` roughly
/// equiprobable count intervals; returns (upper edges, probabilities).
fn equiprobable_bins(mean: f64, n_bins: usize) -> (Vec<u64>, Vec<f64>) {
    let k_max = (mean + 12.0 * mean.sqrt() + 30.0).ceil() as u64;
    let mut edges = Vec::new();
    let mut probs = Vec::new();
    let mut cum = 0.0;
    let mut bin_prob = 0.0;
    let mut next_quantile = 1.0 / n_bins as f64;
    for k in 0..=k_max {
        let p = poisson_pmf(k, mean);
        cum += p;
        bin_prob += p;
        if cum >= next_quantile && edges.len() < n_bins - 1 {
            edges.push(k);
            probs.push(bin_prob);
            bin_prob = 0.0;
            next_quantile += 1.0 / n_bins as f64;
        }
    }
    edges.push(u64::MAX);
    probs.push((1.0f64 - probs.iter().sum::<f64>()).max(0.0));
    (edges, probs)
}

#[test]
fn background_counts_pass_chi_square_poisson_gof() {
    let continuum =
        ContinuumModel::new(ContinuumShape::Flat { rate_density: 1.0 }, 7000.0, 9500.0).unwrap();
    let response = ResponseModel::new(180.0, 8048.0, false).unwrap();
    let lines = [LineModel {
        centroid_ev: 7729.0,
        intensity: 0.0,
        kind: LineKind::Forbidden,
    }];
    let flow = ElectronFlowModel::new(
        CurrentSchedule::constant(0.0, 1e4).unwrap(),
        0.1,
        3.9e-8,
        0.1,
        0.01,
    )
    .unwrap();

    let rate = 0.01;
    let duration_s = 1e4;
    let mean = rate * duration_s; // 100
    let n_seeds = 200;

    let mut observed_counts = Vec::with_capacity(n_seeds);
    for seed in 0..n_seeds as u64 {
        let cfg = GeneratorConfig {
            seed,
            duration_s,
            sdd_background_rate_cps: rate,
            cosmic_rate_cps: 0.0,
            coincidence_jitter_ns: 0,
            injected_beta2_over_2: 0.0,
        };
        let events = generate_run(&cfg, &flow, &lines, &continuum, &response).unwrap();
        let n = events.iter().filter(|e| e.truth == Truth::Background).count() as u64;
        observed_counts.push(n);
    }

    let n_bins = 10;
    let (edges, probs) = equiprobable_bins(mean, n_bins);
    let mut observed = vec![0.0f64; n_bins];
    for &n in &observed_counts {
        let bin = edges.iter().position(|&e| n <= e).unwrap();
        observed[bin] += 1.0;
    }

    let mut chi2 = 0.0;
    for (o, p) in observed.iter().zip(&probs) {
        let e = p * n_seeds as f64;
        assert!(e > 4.0, "bad binning: expected count {e}");
        chi2 += (o - e) * (o - e) / e;
    }
    // chi-square critical value, df = 9, significance 0.01
    let critical = 21.666;
    assert!(
        chi2 < critical,
        "chi2 = {chi2:.2} exceeds the 1% critical value {critical}"
    );
}

#[test]
fn mean_background_count_tracks_rate_times_duration() {
    let continuum =
        ContinuumModel::new(ContinuumShape::Flat { rate_density: 1.0 }, 7000.0, 9500.0).unwrap();
    let response = ResponseModel::new(180.0, 8048.0, false).unwrap();
    let lines: [LineModel; 0] = [];
    let flow = ElectronFlowModel::new(
        CurrentSchedule::constant(0.0, 1e4).unwrap(),
        0.1,
        3.9e-8,
        0.1,
        0.01,
    )
    .unwrap();

    let mean = 50.0;
    let n_seeds = 400;
    let mut total = 0usize;
    for seed in 1000..(1000 + n_seeds) as u64 {
        let cfg = GeneratorConfig {
            seed,
            duration_s: 1e3,
            sdd_background_rate_cps: mean / 1e3,
            cosmic_rate_cps: 0.0,
            coincidence_jitter_ns: 0,
            injected_beta2_over_2: 0.0,
        };
        total += generate_run(&cfg, &flow, &lines, &continuum, &response)
            .unwrap()
            .len();
    }
    let sample_mean = total as f64 / n_seeds as f64;
    let se = (mean / n_seeds as f64).sqrt();
    assert!(
        (sample_mean - mean).abs() < 4.0 * se,
        "sample mean {sample_mean} vs expected {mean} (se {se:.3})"
    );
}
