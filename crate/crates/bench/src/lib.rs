//! Shared fixtures for the pipeline benchmarks.

use pepsim_core::flow::{CurrentSchedule, ElectronFlowModel};
use pepsim_core::montecarlo::{generate_run, EventRecord, GeneratorConfig};
use pepsim_core::spectra::{
    ContinuumModel, ContinuumShape, EnergySpectrum, LineKind, LineModel, ResponseModel,
};

pub fn continuum() -> ContinuumModel {
    ContinuumModel::new(ContinuumShape::Flat { rate_density: 1.0 }, 7000.0, 9500.0).unwrap()
}

pub fn response() -> ResponseModel {
    ResponseModel::new(180.0, 8048.0, false).unwrap()
}

pub fn lines() -> Vec<LineModel> {
    vec![
        LineModel {
            centroid_ev: 8048.0,
            intensity: 0.0,
            kind: LineKind::Allowed,
        },
        LineModel {
            centroid_ev: 7729.0,
            intensity: 0.0,
            kind: LineKind::Forbidden,
        },
    ]
}

pub fn flow() -> ElectronFlowModel {
    ElectronFlowModel::new(
        CurrentSchedule::constant(100.0, 3.456e6).unwrap(),
        0.1,
        3.9e-8,
        0.1,
        0.01,
    )
    .unwrap()
}

/// ~20k-event mixed stream (background + cosmic pairs + signal).
pub fn event_stream(seed: u64) -> Vec<EventRecord> {
    let cfg = GeneratorConfig {
        seed,
        duration_s: 1e4,
        sdd_background_rate_cps: 1.0,
        cosmic_rate_cps: 0.5,
        coincidence_jitter_ns: 100,
        injected_beta2_over_2: 1e-27,
    };
    generate_run(&cfg, &flow(), &lines(), &continuum(), &response()).unwrap()
}

/// Busy 250-bin spectrum for the convolution benchmark.
pub fn busy_spectrum() -> EnergySpectrum {
    let counts: Vec<f64> = (0..250).map(|i| (i % 17) as f64 * 3.0 + 1.0).collect();
    EnergySpectrum::with_counts(7000.0, 9500.0, 1e4, counts).unwrap()
}
