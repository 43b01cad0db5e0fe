//! Deterministic plain-text reports. Every report carries a provenance
//! block (tool version, config digest, seed) so a published number can be
//! traced back to the exact configuration that produced it.

use std::fmt::Write as _;
use std::path::Path;

use pepsim_core::flow::ElectronFlowModel;
use pepsim_core::limits::{LimitResult, ProjectionResult};

use crate::config::RunConfig;

/// Ramberg-Snow Fermilab result, for context in reports.
pub const RAMBERG_SNOW_BETA2_LIMIT: f64 = 1.7e-26;
/// VIP (LNGS, CCDs) result, the baseline that projections are compared to.
pub const VIP_BETA2_LIMIT: f64 = 4.7e-29;

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn provenance(out: &mut String, cfg: &RunConfig) {
    writeln!(out, "provenance").unwrap();
    writeln!(out, "  tool          = pepsim {VERSION}").unwrap();
    writeln!(out, "  config_digest = {}", cfg.digest()).unwrap();
    writeln!(out, "  seed          = {}", cfg.seed).unwrap();
}

pub fn manifest_text(cfg: &RunConfig) -> String {
    let mut s = String::new();
    writeln!(s, "# simulate manifest").unwrap();
    writeln!(s, "tool = pepsim {VERSION}").unwrap();
    writeln!(s, "seed = {}", cfg.seed).unwrap();
    writeln!(s, "config_digest = {}", cfg.digest()).unwrap();
    writeln!(s, "events_on = events_on.txt").unwrap();
    writeln!(s, "events_off = events_off.txt").unwrap();
    writeln!(s, "spectrum_on = spectrum_on.txt").unwrap();
    writeln!(s, "spectrum_off = spectrum_off.txt").unwrap();
    s
}

pub fn analyze_report(
    cfg: &RunConfig,
    flow: &ElectronFlowModel,
    result: &LimitResult,
    on_path: &Path,
    off_path: &Path,
) -> String {
    let mut s = String::new();
    writeln!(s, "on/off ROI counting analysis").unwrap();
    writeln!(s, "============================").unwrap();
    writeln!(s).unwrap();
    provenance(&mut s, cfg);
    writeln!(s).unwrap();
    writeln!(s, "inputs").unwrap();
    writeln!(s, "  on_spectrum    = {}", on_path.display()).unwrap();
    writeln!(s, "  off_spectrum   = {}", off_path.display()).unwrap();
    writeln!(s, "  roi_ev         = [{}, {}]", cfg.roi.lo_ev, cfg.roi.hi_ev).unwrap();
    writeln!(s, "  livetime_on_s  = {}", result.livetime_on_s).unwrap();
    writeln!(s, "  livetime_off_s = {}", result.livetime_off_s).unwrap();
    writeln!(s, "  n_sigma        = {}", cfg.n_sigma).unwrap();
    writeln!(s).unwrap();
    writeln!(s, "electron flow").unwrap();
    writeln!(
        s,
        "  integrated_charge_c  = {:e}",
        flow.integrated_charge_c()
    )
    .unwrap();
    writeln!(s, "  n_new                = {:e}", flow.n_new()).unwrap();
    writeln!(s, "  n_scatter            = {:e}", flow.n_scatter()).unwrap();
    writeln!(
        s,
        "  capture_probability  = {}",
        flow.capture_probability()
    )
    .unwrap();
    writeln!(
        s,
        "  detection_efficiency = {}",
        flow.detection_efficiency()
    )
    .unwrap();
    writeln!(
        s,
        "  sensitivity          = {:e} counts per unit beta2/2",
        flow.sensitivity_factor()
    )
    .unwrap();
    writeln!(s).unwrap();
    writeln!(s, "result").unwrap();
    writeln!(s, "  n_on        = {}", result.n_on).unwrap();
    writeln!(s, "  n_off       = {}", result.n_off).unwrap();
    writeln!(s, "  scale       = {}", result.scale).unwrap();
    writeln!(s, "  delta       = {}", result.delta).unwrap();
    writeln!(
        s,
        "  delta_upper = {} ({} sigma)",
        result.delta_upper, cfg.n_sigma
    )
    .unwrap();
    writeln!(s, "  beta2_limit = {:e}", result.beta2_limit).unwrap();
    writeln!(s).unwrap();
    writeln!(s, "context").unwrap();
    writeln!(
        s,
        "  Ramberg-Snow (Fermilab): beta2/2 <= {RAMBERG_SNOW_BETA2_LIMIT:e}"
    )
    .unwrap();
    writeln!(s, "  VIP (LNGS, CCDs):        beta2/2 <= {VIP_BETA2_LIMIT:e}").unwrap();
    writeln!(
        s,
        "  this analysis:           beta2/2 <= {:e}",
        result.beta2_limit
    )
    .unwrap();
    s
}

pub fn projection_report(cfg: &RunConfig, projection: &ProjectionResult) -> String {
    let improvement = VIP_BETA2_LIMIT / projection.beta2_limit;
    let mut s = String::new();
    writeln!(s, "sensitivity projection (zero-signal expectation)").unwrap();
    writeln!(s, "================================================").unwrap();
    writeln!(s).unwrap();
    provenance(&mut s, cfg);
    writeln!(s).unwrap();
    writeln!(s, "plan").unwrap();
    writeln!(s, "  t_on_s             = {}", projection.t_on_s).unwrap();
    writeln!(s, "  t_off_s            = {}", projection.t_off_s).unwrap();
    writeln!(s, "  current_a          = {}", cfg.projection.current_a).unwrap();
    writeln!(
        s,
        "  roi_background_cps = {}",
        cfg.projection.roi_background_cps
    )
    .unwrap();
    writeln!(s, "  n_sigma            = {}", cfg.n_sigma).unwrap();
    writeln!(s).unwrap();
    writeln!(s, "expectation").unwrap();
    writeln!(s, "  n_on_expected  = {}", projection.n_on_expected).unwrap();
    writeln!(s, "  n_off_expected = {}", projection.n_off_expected).unwrap();
    writeln!(s, "  delta_upper    = {}", projection.delta_upper).unwrap();
    writeln!(s, "  sensitivity    = {:e}", projection.sensitivity).unwrap();
    writeln!(s).unwrap();
    writeln!(s, "projected limit").unwrap();
    writeln!(s, "  beta2_limit        = {:e}", projection.beta2_limit).unwrap();
    writeln!(
        s,
        "  improvement_vs_vip = {improvement:.1}x (baseline {VIP_BETA2_LIMIT:e})"
    )
    .unwrap();
    s
}

pub fn comparison_report(
    cfg: &RunConfig,
    mc_path: &Path,
    data_path: &Path,
    roi_diff: f64,
    full_diff: f64,
) -> String {
    let mut s = String::new();
    writeln!(s, "spectrum comparison").unwrap();
    writeln!(s, "===================").unwrap();
    writeln!(s).unwrap();
    provenance(&mut s, cfg);
    writeln!(s).unwrap();
    writeln!(s, "inputs").unwrap();
    writeln!(s, "  mc_spectrum   = {}", mc_path.display()).unwrap();
    writeln!(s, "  data_spectrum = {}", data_path.display()).unwrap();
    writeln!(s, "  roi_ev        = [{}, {}]", cfg.roi.lo_ev, cfg.roi.hi_ev).unwrap();
    writeln!(s).unwrap();
    writeln!(s, "relative rate difference |Ra-Rb|/max(Ra,Rb)").unwrap();
    writeln!(s, "  roi        = {roi_diff}").unwrap();
    writeln!(s, "  full_range = {full_diff}").unwrap();
    s
}
