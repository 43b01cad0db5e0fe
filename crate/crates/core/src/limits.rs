//! Region-of-interest counting analysis: current-on vs current-off
//! comparison, the count upper limit, the derived β²/2 limit and sensitivity
//! projections for future run plans.
//!
//! The count upper limit is the Gaussian n-sigma bound on the on/off
//! difference,
//!
//! ```text
//! delta_upper = max(0, n_on - scale * n_off) + n_sigma * sqrt(n_on + scale^2 * n_off)
//! ```
//!
//! with `scale = livetime_on / livetime_off`. An exact-Poisson coverage
//! routine is provided as a cross-check for small counts; the headline
//! number always comes from the closed form above.

use thiserror::Error;

use crate::flow::ElectronFlowModel;
use crate::spectra::EnergySpectrum;

#[derive(Debug, Error, PartialEq)]
pub enum LimitError {
    #[error("invalid ROI: lo ({lo}) must be < hi ({hi})")]
    InvalidRoi { lo: f64, hi: f64 },
    #[error("roi-out-of-range: [{lo}, {hi}] not contained in [{e_min}, {e_max}]")]
    RoiOutOfRange {
        lo: f64,
        hi: f64,
        e_min: f64,
        e_max: f64,
    },
    #[error("invalid-scale: livetime scale must be > 0 and finite (got {0})")]
    InvalidScale(f64),
    #[error("invalid-sigma: n_sigma must be > 0 (got {0})")]
    InvalidSigma(f64),
    #[error("zero-sensitivity: no expected signal counts per unit beta2/2 (current-off-only configuration?)")]
    ZeroSensitivity,
    #[error("binning-mismatch: on/off spectra differ in range or binning")]
    BinningMismatch,
    #[error("invalid mean for exact-Poisson routine: {0}")]
    InvalidMean(f64),
}

/// Energy window used for counting, in eV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiDefinition {
    pub lo_ev: f64,
    pub hi_ev: f64,
}

impl RoiDefinition {
    pub fn new(lo_ev: f64, hi_ev: f64) -> Result<Self, LimitError> {
        if !(lo_ev < hi_ev) || !lo_ev.is_finite() || !hi_ev.is_finite() {
            return Err(LimitError::InvalidRoi {
                lo: lo_ev,
                hi: hi_ev,
            });
        }
        Ok(Self { lo_ev, hi_ev })
    }

    pub fn width_ev(&self) -> f64 {
        self.hi_ev - self.lo_ev
    }
}

/// How a negative on-off excess enters the upper limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExcessConvention {
    /// Replace a negative excess by zero before adding the fluctuation term.
    ClampToZero,
    /// Keep the negative excess; the final bound is still floored at zero.
    Carry,
}

/// Complete outcome of one on/off analysis, with the factor breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitResult {
    pub n_on: f64,
    pub n_off: f64,
    pub livetime_on_s: f64,
    pub livetime_off_s: f64,
    /// livetime_on / livetime_off
    pub scale: f64,
    /// n_on - scale * n_off
    pub delta: f64,
    /// Count upper limit at the configured significance.
    pub delta_upper: f64,
    /// Expected counts per unit β²/2.
    pub sensitivity: f64,
    /// delta_upper / sensitivity
    pub beta2_limit: f64,
}

impl LimitResult {
    /// Flat `key=value` serialization for machine diffing.
    pub fn to_text(&self) -> String {
        format!(
            "n_on={}\nn_off={}\nscale={}\ndelta={}\ndelta_upper={}\nsensitivity={}\nbeta2_limit={}\n",
            self.n_on,
            self.n_off,
            self.scale,
            self.delta,
            self.delta_upper,
            self.sensitivity,
            self.beta2_limit
        )
    }
}

/// Counts inside the ROI, edges snapped outward to bin boundaries.
pub fn roi_counts(spectrum: &EnergySpectrum, roi: &RoiDefinition) -> Result<f64, LimitError> {
    if !(roi.lo_ev < roi.hi_ev) {
        return Err(LimitError::InvalidRoi {
            lo: roi.lo_ev,
            hi: roi.hi_ev,
        });
    }
    if roi.lo_ev < spectrum.e_min_ev() || roi.hi_ev > spectrum.e_max_ev() {
        return Err(LimitError::RoiOutOfRange {
            lo: roi.lo_ev,
            hi: roi.hi_ev,
            e_min: spectrum.e_min_ev(),
            e_max: spectrum.e_max_ev(),
        });
    }
    Ok(spectrum.window_counts(roi.lo_ev, roi.hi_ev))
}

/// Gaussian n-sigma count upper limit with the default clamp-to-zero
/// handling of negative excesses.
pub fn count_upper_limit(
    n_on: f64,
    n_off: f64,
    scale: f64,
    n_sigma: f64,
) -> Result<f64, LimitError> {
    count_upper_limit_with(n_on, n_off, scale, n_sigma, ExcessConvention::ClampToZero)
}

/// Gaussian n-sigma count upper limit with an explicit excess convention.
pub fn count_upper_limit_with(
    n_on: f64,
    n_off: f64,
    scale: f64,
    n_sigma: f64,
    convention: ExcessConvention,
) -> Result<f64, LimitError> {
    debug_assert!(n_on >= 0.0 && n_off >= 0.0, "counts must be non-negative");
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(LimitError::InvalidScale(scale));
    }
    if !(n_sigma > 0.0) || !n_sigma.is_finite() {
        return Err(LimitError::InvalidSigma(n_sigma));
    }
    let excess = n_on - scale * n_off;
    let fluctuation = n_sigma * (n_on + scale * scale * n_off).sqrt();
    Ok(match convention {
        ExcessConvention::ClampToZero => excess.max(0.0) + fluctuation,
        ExcessConvention::Carry => (excess + fluctuation).max(0.0),
    })
}

/// Convert a count upper limit into a β²/2 upper limit.
pub fn beta2_limit(delta_upper: f64, sensitivity: f64) -> Result<f64, LimitError> {
    if sensitivity <= 0.0 {
        return Err(LimitError::ZeroSensitivity);
    }
    Ok(delta_upper / sensitivity)
}

/// Full on/off ROI analysis with the clamp-to-zero excess convention.
pub fn analyze(
    on: &EnergySpectrum,
    off: &EnergySpectrum,
    roi: &RoiDefinition,
    flow: &ElectronFlowModel,
    n_sigma: f64,
) -> Result<LimitResult, LimitError> {
    analyze_with(on, off, roi, flow, n_sigma, ExcessConvention::ClampToZero)
}

/// Full on/off ROI analysis: ROI counting, livetime scaling, count upper
/// limit and the β²/2 conversion, with every intermediate factor reported.
pub fn analyze_with(
    on: &EnergySpectrum,
    off: &EnergySpectrum,
    roi: &RoiDefinition,
    flow: &ElectronFlowModel,
    n_sigma: f64,
    convention: ExcessConvention,
) -> Result<LimitResult, LimitError> {
    if !on.same_binning(off) {
        return Err(LimitError::BinningMismatch);
    }
    let n_on = roi_counts(on, roi)?;
    let n_off = roi_counts(off, roi)?;
    let scale = on.livetime_s() / off.livetime_s();
    let delta = n_on - scale * n_off;
    let delta_upper = count_upper_limit_with(n_on, n_off, scale, n_sigma, convention)?;
    let sensitivity = flow.sensitivity_factor();
    let beta2 = beta2_limit(delta_upper, sensitivity)?;
    Ok(LimitResult {
        n_on,
        n_off,
        livetime_on_s: on.livetime_s(),
        livetime_off_s: off.livetime_s(),
        scale,
        delta,
        delta_upper,
        sensitivity,
        beta2_limit: beta2,
    })
}

/// Median-expected, zero-signal projection for a future run plan.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub t_on_s: f64,
    pub t_off_s: f64,
    pub scale: f64,
    pub n_on_expected: f64,
    pub n_off_expected: f64,
    pub delta_upper: f64,
    pub sensitivity: f64,
    pub beta2_limit: f64,
}

/// Project the β²/2 limit for a plan: expected counts
/// `n_on = rate * t_on`, `n_off = rate * t_off` substituted into the count
/// upper limit, sensitivity from the flow model (whose schedule is the
/// planned on-period).
pub fn project_sensitivity(
    flow: &ElectronFlowModel,
    off_duration_s: f64,
    roi_background_cps: f64,
    n_sigma: f64,
) -> Result<ProjectionResult, LimitError> {
    if !(off_duration_s > 0.0) || !off_duration_s.is_finite() {
        return Err(LimitError::InvalidScale(off_duration_s));
    }
    if !(roi_background_cps >= 0.0) || !roi_background_cps.is_finite() {
        return Err(LimitError::InvalidMean(roi_background_cps));
    }
    let t_on = flow.schedule().total_duration_s();
    let t_off = off_duration_s;
    let scale = t_on / t_off;
    let n_on = roi_background_cps * t_on;
    let n_off = roi_background_cps * t_off;
    let delta_upper = count_upper_limit(n_on, n_off, scale, n_sigma)?;
    let sensitivity = flow.sensitivity_factor();
    let beta2 = beta2_limit(delta_upper, sensitivity)?;
    Ok(ProjectionResult {
        t_on_s: t_on,
        t_off_s: t_off,
        scale,
        n_on_expected: n_on,
        n_off_expected: n_off,
        delta_upper,
        sensitivity,
        beta2_limit: beta2,
    })
}

// log Poisson pmf via lgamma, stable for large means.
fn poisson_ln_pmf(k: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * mean.ln() - mean - libm::lgamma(k as f64 + 1.0)
}

fn poisson_pmf_table(mean: f64) -> Vec<f64> {
    // truncate where the remaining tail is far below 1e-12
    let k_max = (mean + 12.0 * mean.sqrt() + 30.0).ceil() as u64;
    (0..=k_max).map(|k| poisson_ln_pmf(k, mean).exp()).collect()
}

/// Probability that the Gaussian count upper limit covers a true signal of
/// `signal` counts, computed by brute-force summation over Poisson outcomes
/// `n_on ~ Poisson(on_background_mean + signal)`, `n_off ~ Poisson(off_mean)`.
///
/// Diagnostic cross-check for the small-count regime; not part of the
/// limit-setting path.
pub fn exact_poisson_coverage(
    on_background_mean: f64,
    off_mean: f64,
    scale: f64,
    n_sigma: f64,
    signal: f64,
) -> Result<f64, LimitError> {
    if !(on_background_mean >= 0.0) || !on_background_mean.is_finite() {
        return Err(LimitError::InvalidMean(on_background_mean));
    }
    if !(off_mean >= 0.0) || !off_mean.is_finite() {
        return Err(LimitError::InvalidMean(off_mean));
    }
    if !(signal >= 0.0) || !signal.is_finite() {
        return Err(LimitError::InvalidMean(signal));
    }
    let p_on = poisson_pmf_table(on_background_mean + signal);
    let p_off = poisson_pmf_table(off_mean);
    let mut covered = 0.0;
    for (n_on, w_on) in p_on.iter().enumerate() {
        for (n_off, w_off) in p_off.iter().enumerate() {
            let limit = count_upper_limit(n_on as f64, n_off as f64, scale, n_sigma)?;
            if limit >= signal {
                covered += w_on * w_off;
            }
        }
    }
    Ok(covered.min(1.0))
}
