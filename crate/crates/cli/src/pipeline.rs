//! The four batch workflows: simulate, analyze, project, compare.
//!
//! Result files are written to a temporary name in the target directory and
//! renamed into place, so a failing run never leaves a half-written artifact.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use pepsim_core::flow::FlowError;
use pepsim_core::limits::{
    analyze_with, project_sensitivity, ExcessConvention, LimitError, LimitResult,
    ProjectionResult,
};
use pepsim_core::montecarlo::{
    apply_veto, derive_stream_seed, events_to_spectrum, events_to_text, generate_run,
    GeneratorConfig, GeneratorError,
};
use pepsim_core::spectra::{compare_spectra, EnergySpectrum, SpectrumError};

use crate::config::{ConfigError, RunConfig};
use crate::report;

// Per-run seed labels; the component sub-streams hang off these.
pub const ON_RUN_SEED_LABEL: u64 = 0x6F6E; // "on"
pub const OFF_RUN_SEED_LABEL: u64 = 0x6F66_66; // "off"

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Limit(#[from] LimitError),
}

impl PipelineError {
    /// 2 = config/validation, 3 = io, 4 = analysis.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(ConfigError::Io { .. }) => 3,
            PipelineError::Config(_) => 2,
            PipelineError::Io { .. } => 3,
            _ => 4,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn atomic_write(path: &Path, contents: &str) -> Result<(), PipelineError> {
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "artifact".into());
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn read_spectrum(path: &Path) -> Result<EnergySpectrum, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(EnergySpectrum::from_text(&text)?)
}

#[derive(Debug, Clone)]
pub struct SimulateArtifacts {
    pub events_on: PathBuf,
    pub events_off: PathBuf,
    pub spectrum_on: PathBuf,
    pub spectrum_off: PathBuf,
    pub manifest: PathBuf,
}

/// Generate the on and off runs, apply the veto, bin the surviving events
/// and write the four artifacts plus a manifest.
///
/// Event files hold the raw streams (scintillator hits included); the
/// spectra hold the post-veto SDD events.
pub fn run_simulate(cfg: &RunConfig) -> Result<SimulateArtifacts, PipelineError> {
    let flow = cfg.flow_model()?;
    let t_on = cfg.schedule_on.total_duration_s();
    let t_off = cfg.off_duration_s;

    let gen_on = GeneratorConfig {
        seed: derive_stream_seed(cfg.seed, ON_RUN_SEED_LABEL),
        duration_s: t_on,
        sdd_background_rate_cps: cfg.sdd_background_rate_cps,
        cosmic_rate_cps: cfg.cosmic_rate_cps,
        coincidence_jitter_ns: cfg.coincidence_jitter_ns,
        injected_beta2_over_2: cfg.injected_beta2_over_2,
    };
    let gen_off = GeneratorConfig {
        seed: derive_stream_seed(cfg.seed, OFF_RUN_SEED_LABEL),
        duration_s: t_off,
        injected_beta2_over_2: 0.0,
        ..gen_on.clone()
    };

    let events_on = generate_run(&gen_on, &flow, &cfg.lines, &cfg.continuum, &cfg.response)?;
    let events_off = generate_run(&gen_off, &flow, &cfg.lines, &cfg.continuum, &cfg.response)?;
    let kept_on = apply_veto(&events_on, &cfg.veto)?;
    let kept_off = apply_veto(&events_off, &cfg.veto)?;
    let spectrum_on = events_to_spectrum(&kept_on, &cfg.template_spectrum(t_on, "on")?)?;
    let spectrum_off = events_to_spectrum(&kept_off, &cfg.template_spectrum(t_off, "off")?)?;

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let artifacts = SimulateArtifacts {
        events_on: dir.join("events_on.txt"),
        events_off: dir.join("events_off.txt"),
        spectrum_on: dir.join("spectrum_on.txt"),
        spectrum_off: dir.join("spectrum_off.txt"),
        manifest: dir.join("manifest.txt"),
    };
    atomic_write(
        &artifacts.events_on,
        &events_to_text(&events_on, gen_on.seed, t_on),
    )?;
    atomic_write(
        &artifacts.events_off,
        &events_to_text(&events_off, gen_off.seed, t_off),
    )?;
    atomic_write(&artifacts.spectrum_on, &spectrum_on.to_text())?;
    atomic_write(&artifacts.spectrum_off, &spectrum_off.to_text())?;
    atomic_write(&artifacts.manifest, &report::manifest_text(cfg))?;
    Ok(artifacts)
}

/// On/off ROI analysis of two spectrum files; writes the `key=value` limit
/// file and the human-readable report, and returns the result.
pub fn run_analyze(
    cfg: &RunConfig,
    on_spectrum: &Path,
    off_spectrum: &Path,
) -> Result<(LimitResult, PathBuf, PathBuf), PipelineError> {
    let on = read_spectrum(on_spectrum)?;
    let off = read_spectrum(off_spectrum)?;
    let flow = cfg.flow_model()?;
    let convention = if cfg.clamp_negative_excess {
        ExcessConvention::ClampToZero
    } else {
        ExcessConvention::Carry
    };
    let result = analyze_with(&on, &off, &cfg.roi, &flow, cfg.n_sigma, convention)?;

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let limit_path = dir.join("limit.txt");
    let report_path = dir.join("report.txt");
    atomic_write(&limit_path, &result.to_text())?;
    atomic_write(
        &report_path,
        &report::analyze_report(cfg, &flow, &result, on_spectrum, off_spectrum),
    )?;
    Ok((result, limit_path, report_path))
}

/// Projection for the configured future plan; writes the projection report.
pub fn run_project(cfg: &RunConfig) -> Result<(ProjectionResult, PathBuf), PipelineError> {
    let flow = cfg.projection_flow_model()?;
    let projection = project_sensitivity(
        &flow,
        cfg.projection.off_duration_s,
        cfg.projection.roi_background_cps,
        cfg.n_sigma,
    )?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("projection.txt");
    atomic_write(&path, &report::projection_report(cfg, &projection))?;
    Ok((projection, path))
}

/// Relative difference of two spectra in the configured ROI and over the
/// full range; writes the comparison report.
pub fn run_compare(
    cfg: &RunConfig,
    mc_spectrum: &Path,
    data_spectrum: &Path,
) -> Result<(f64, f64, PathBuf), PipelineError> {
    let mc = read_spectrum(mc_spectrum)?;
    let data = read_spectrum(data_spectrum)?;
    let roi_diff = compare_spectra(&mc, &data, (cfg.roi.lo_ev, cfg.roi.hi_ev))?;
    let full_diff = compare_spectra(&mc, &data, (mc.e_min_ev(), mc.e_max_ev()))?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("comparison.txt");
    atomic_write(
        &path,
        &report::comparison_report(cfg, mc_spectrum, data_spectrum, roi_diff, full_diff),
    )?;
    Ok((roi_diff, full_diff, path))
}
