//! The "new electron" arithmetic behind current-driven searches for
//! exclusion-principle-violating transitions.
//!
//! A current through the copper conductor feeds electrons that are new to
//! its atoms. Each new electron scatters `conductor_length / scattering_length`
//! times while drifting through; each scattering is one chance to be captured
//! into a violating cascade, which is then seen with some detection
//! efficiency. The product
//!
//! ```text
//! sensitivity = n_new * n_scatter * capture_probability * detection_efficiency
//! ```
//!
//! converts a violation probability β²/2 into expected forbidden-line counts.

use thiserror::Error;

/// Elementary charge in coulomb, exact by SI definition.
pub const ELEMENTARY_CHARGE_C: f64 = 1.602_176_634e-19;

#[derive(Debug, Error, PartialEq)]
pub enum FlowError {
    #[error("invalid schedule segment {index}: {msg}")]
    InvalidSchedule { index: usize, msg: String },
    #[error("empty current schedule")]
    EmptySchedule,
    #[error("nonpositive-length: {name} must be > 0 (got {value})")]
    NonpositiveLength { name: &'static str, value: f64 },
    #[error("capture_probability must lie in (0, 1] (got {0})")]
    InvalidCaptureProbability(f64),
    #[error("detection_efficiency must lie in (0, 1] (got {0})")]
    InvalidDetectionEfficiency(f64),
}

/// One constant-current stretch of a run plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSegment {
    pub current_a: f64,
    pub duration_s: f64,
}

/// Piecewise-constant current schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentSchedule {
    segments: Vec<ScheduleSegment>,
}

impl CurrentSchedule {
    pub fn new(segments: Vec<ScheduleSegment>) -> Result<Self, FlowError> {
        if segments.is_empty() {
            return Err(FlowError::EmptySchedule);
        }
        for (index, seg) in segments.iter().enumerate() {
            if !(seg.current_a >= 0.0) || !seg.current_a.is_finite() {
                return Err(FlowError::InvalidSchedule {
                    index,
                    msg: format!("current must be >= 0 (got {})", seg.current_a),
                });
            }
            if !(seg.duration_s > 0.0) || !seg.duration_s.is_finite() {
                return Err(FlowError::InvalidSchedule {
                    index,
                    msg: format!("duration must be > 0 (got {})", seg.duration_s),
                });
            }
        }
        Ok(Self { segments })
    }

    /// Single-segment schedule at a constant current.
    pub fn constant(current_a: f64, duration_s: f64) -> Result<Self, FlowError> {
        Self::new(vec![ScheduleSegment {
            current_a,
            duration_s,
        }])
    }

    pub fn segments(&self) -> &[ScheduleSegment] {
        &self.segments
    }

    pub fn total_duration_s(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }

    /// Total charge ∑ I·Δt in coulomb.
    pub fn integrated_charge_c(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.current_a * s.duration_s)
            .sum()
    }

    /// Charge-preserving average current over the whole schedule.
    pub fn mean_current_a(&self) -> f64 {
        self.integrated_charge_c() / self.total_duration_s()
    }
}

/// Number of electrons new to the conductor: integrated charge over the
/// elementary charge.
pub fn count_new_electrons(schedule: &CurrentSchedule) -> f64 {
    schedule.integrated_charge_c() / ELEMENTARY_CHARGE_C
}

/// Number of scatterings per new electron crossing the conductor.
pub fn count_scatterings(
    conductor_length_m: f64,
    scattering_length_m: f64,
) -> Result<f64, FlowError> {
    if !(conductor_length_m > 0.0) || !conductor_length_m.is_finite() {
        return Err(FlowError::NonpositiveLength {
            name: "conductor_length",
            value: conductor_length_m,
        });
    }
    if !(scattering_length_m > 0.0) || !scattering_length_m.is_finite() {
        return Err(FlowError::NonpositiveLength {
            name: "scattering_length",
            value: scattering_length_m,
        });
    }
    Ok(conductor_length_m / scattering_length_m)
}

/// Expected forbidden-line counts per unit β²/2.
pub fn sensitivity_factor(
    schedule: &CurrentSchedule,
    conductor_length_m: f64,
    scattering_length_m: f64,
    capture_probability: f64,
    detection_efficiency: f64,
) -> Result<f64, FlowError> {
    if !(capture_probability > 0.0 && capture_probability <= 1.0) {
        return Err(FlowError::InvalidCaptureProbability(capture_probability));
    }
    if !(detection_efficiency > 0.0 && detection_efficiency <= 1.0) {
        return Err(FlowError::InvalidDetectionEfficiency(detection_efficiency));
    }
    let n_new = count_new_electrons(schedule);
    let n_scatter = count_scatterings(conductor_length_m, scattering_length_m)?;
    Ok(n_new * n_scatter * capture_probability * detection_efficiency)
}

/// A current schedule with the conductor and detection parameters of the
/// Ramberg-Snow arithmetic; all derived quantities are computed once at
/// construction so they can never go stale.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectronFlowModel {
    schedule: CurrentSchedule,
    conductor_length_m: f64,
    scattering_length_m: f64,
    capture_probability: f64,
    detection_efficiency: f64,
    integrated_charge_c: f64,
    n_new: f64,
    n_scatter: f64,
    sensitivity_factor: f64,
}

impl ElectronFlowModel {
    pub fn new(
        schedule: CurrentSchedule,
        conductor_length_m: f64,
        scattering_length_m: f64,
        capture_probability: f64,
        detection_efficiency: f64,
    ) -> Result<Self, FlowError> {
        let sensitivity = sensitivity_factor(
            &schedule,
            conductor_length_m,
            scattering_length_m,
            capture_probability,
            detection_efficiency,
        )?;
        Ok(Self {
            integrated_charge_c: schedule.integrated_charge_c(),
            n_new: count_new_electrons(&schedule),
            n_scatter: count_scatterings(conductor_length_m, scattering_length_m)?,
            sensitivity_factor: sensitivity,
            schedule,
            conductor_length_m,
            scattering_length_m,
            capture_probability,
            detection_efficiency,
        })
    }

    pub fn schedule(&self) -> &CurrentSchedule {
        &self.schedule
    }

    pub fn conductor_length_m(&self) -> f64 {
        self.conductor_length_m
    }

    pub fn scattering_length_m(&self) -> f64 {
        self.scattering_length_m
    }

    pub fn capture_probability(&self) -> f64 {
        self.capture_probability
    }

    pub fn detection_efficiency(&self) -> f64 {
        self.detection_efficiency
    }

    pub fn integrated_charge_c(&self) -> f64 {
        self.integrated_charge_c
    }

    pub fn n_new(&self) -> f64 {
        self.n_new
    }

    pub fn n_scatter(&self) -> f64 {
        self.n_scatter
    }

    pub fn sensitivity_factor(&self) -> f64 {
        self.sensitivity_factor
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const FORTY_DAYS_S: f64 = 40.0 * 86400.0;

    #[test]
    fn new_electrons_for_the_hundred_amp_run() {
        let schedule = CurrentSchedule::constant(100.0, FORTY_DAYS_S).unwrap();
        let n = count_new_electrons(&schedule);
        assert_relative_eq!(n, 2.157e27, max_relative = 1e-3);
        assert_relative_eq!(n, 3.456e8 / ELEMENTARY_CHARGE_C, max_relative = 1e-15);
    }

    #[test]
    fn zero_current_means_zero_new_electrons() {
        let schedule = CurrentSchedule::constant(0.0, 1e6).unwrap();
        assert_eq!(count_new_electrons(&schedule), 0.0);
    }

    #[test]
    fn one_amp_second_is_one_over_e() {
        let schedule = CurrentSchedule::constant(1.0, 1.0).unwrap();
        assert_relative_eq!(count_new_electrons(&schedule), 6.241e18, max_relative = 1e-3);
    }

    #[test]
    fn scattering_count_is_length_ratio() {
        assert_relative_eq!(
            count_scatterings(0.1, 3.9e-8).unwrap(),
            2.564e6,
            max_relative = 1e-3
        );
        assert_eq!(count_scatterings(3.9e-8, 3.9e-8).unwrap(), 1.0);
    }

    #[test]
    fn scattering_count_rejects_nonpositive_lengths() {
        assert_eq!(
            count_scatterings(0.1, 0.0),
            Err(FlowError::NonpositiveLength {
                name: "scattering_length",
                value: 0.0
            })
        );
        assert!(matches!(
            count_scatterings(-1.0, 1.0),
            Err(FlowError::NonpositiveLength {
                name: "conductor_length",
                ..
            })
        ));
    }

    #[test]
    fn sensitivity_factor_is_the_four_way_product() {
        let schedule = CurrentSchedule::constant(100.0, FORTY_DAYS_S).unwrap();
        let s = sensitivity_factor(&schedule, 0.1, 3.9e-8, 0.1, 0.01).unwrap();
        assert_relative_eq!(s, 5.53e30, max_relative = 2e-3);
    }

    #[test]
    fn sensitivity_factor_vanishes_with_any_zero_factor() {
        let schedule = CurrentSchedule::constant(0.0, FORTY_DAYS_S).unwrap();
        assert_eq!(
            sensitivity_factor(&schedule, 0.1, 3.9e-8, 0.1, 0.01).unwrap(),
            0.0
        );
    }

    #[test]
    fn sensitivity_factor_is_linear_in_duration() {
        let one = CurrentSchedule::constant(100.0, FORTY_DAYS_S).unwrap();
        let two = CurrentSchedule::constant(100.0, 2.0 * FORTY_DAYS_S).unwrap();
        let s1 = sensitivity_factor(&one, 0.1, 3.9e-8, 0.1, 0.01).unwrap();
        let s2 = sensitivity_factor(&two, 0.1, 3.9e-8, 0.1, 0.01).unwrap();
        assert_eq!(s2, 2.0 * s1);
    }

    #[test]
    fn model_exposes_consistent_derived_fields() {
        let schedule = CurrentSchedule::constant(100.0, FORTY_DAYS_S).unwrap();
        let model = ElectronFlowModel::new(schedule, 0.1, 3.9e-8, 0.1, 0.01).unwrap();
        assert_eq!(model.integrated_charge_c(), 3.456e8);
        assert_eq!(
            model.sensitivity_factor(),
            model.n_new() * model.n_scatter() * 0.1 * 0.01
        );
    }

    #[test]
    fn model_rejects_out_of_range_probabilities() {
        let schedule = CurrentSchedule::constant(100.0, 1.0).unwrap();
        assert!(matches!(
            ElectronFlowModel::new(schedule.clone(), 0.1, 3.9e-8, 0.0, 0.01),
            Err(FlowError::InvalidCaptureProbability(_))
        ));
        assert!(matches!(
            ElectronFlowModel::new(schedule, 0.1, 3.9e-8, 0.1, 1.5),
            Err(FlowError::InvalidDetectionEfficiency(_))
        ));
    }
}
