//! Run-configuration file handling.
//!
//! The format is flat, line-oriented `section.key = value` text. Blank
//! lines, `#` comment lines and ` #` trailing comments are ignored. Unknown
//! keys are rejected so that a typo in a physics parameter can never
//! silently fall back to a default, and validation reports every violation
//! with its key path, not only the first.
//!
//! Every key is optional; the documented defaults describe the 2016-style
//! run plan (about 40 days with 100 A against about 70 days without current)
//! at a reduced desk-scale background rate.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use pepsim_core::flow::{CurrentSchedule, ElectronFlowModel, FlowError, ScheduleSegment};
use pepsim_core::limits::RoiDefinition;
use pepsim_core::montecarlo::VetoPolicy;
use pepsim_core::spectra::{
    ContinuumModel, ContinuumShape, EnergySpectrum, LineKind, LineModel, ResponseModel,
};

pub const DEFAULT_SEED: u64 = 1;
/// 40 days of current-on running.
pub const DEFAULT_ON_DURATION_S: f64 = 3.456e6;
/// 70 days of current-off running.
pub const DEFAULT_OFF_DURATION_S: f64 = 6.048e6;
pub const DEFAULT_CURRENT_A: f64 = 100.0;
pub const DEFAULT_CONDUCTOR_LENGTH_M: f64 = 0.1;
/// Room-temperature electron mean free path in copper (literature placeholder).
pub const DEFAULT_SCATTERING_LENGTH_M: f64 = 3.9e-8;
pub const DEFAULT_CAPTURE_PROBABILITY: f64 = 0.1;
/// Tuned placeholder covering solid angle and intrinsic efficiency.
pub const DEFAULT_DETECTION_EFFICIENCY: f64 = 0.01;
/// Cu K-alpha (literature placeholder).
pub const DEFAULT_ALLOWED_CENTROID_EV: f64 = 8048.0;
/// Screening-shifted violating transition (literature placeholder).
pub const DEFAULT_FORBIDDEN_CENTROID_EV: f64 = 7729.0;
pub const DEFAULT_FWHM_EV: f64 = 180.0;
/// Desk-scale background level; real runs sit orders of magnitude higher.
pub const DEFAULT_CONTINUUM_DENSITY: f64 = 2e-7;
pub const DEFAULT_COSMIC_RATE_CPS: f64 = 5e-5;
pub const DEFAULT_JITTER_NS: i64 = 100;
pub const DEFAULT_VETO_WINDOW_NS: i64 = 500;
pub const DEFAULT_N_SIGMA: f64 = 3.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown config key(s): {}", keys.join(", "))]
    UnknownKeys { keys: Vec<String> },
    #[error("config validation failed:\n  {}", violations.join("\n  "))]
    Validation { violations: Vec<String> },
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Binning shared by generated spectra, the continuum range and the ROI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Binning {
    pub e_min_ev: f64,
    pub e_max_ev: f64,
    pub n_bins: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub conductor_length_m: f64,
    pub scattering_length_m: f64,
    pub capture_probability: f64,
    pub detection_efficiency: f64,
}

/// Future run plan used by the `project` workflow; every field falls back
/// to the equivalent of the main run plan when not set explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionPlan {
    pub on_duration_s: f64,
    pub off_duration_s: f64,
    pub current_a: f64,
    pub roi_background_cps: f64,
}

/// Fully resolved experiment description; construct with [`parse_config`],
/// [`load_config`] or [`RunConfig::default`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Total SDD background rate over the spectrum range. Defaults to the
    /// continuum integral over the range, which keeps generation and the
    /// analytic expectations consistent.
    pub sdd_background_rate_cps: f64,
    pub cosmic_rate_cps: f64,
    pub coincidence_jitter_ns: i64,
    pub injected_beta2_over_2: f64,
    pub schedule_on: CurrentSchedule,
    pub off_duration_s: f64,
    pub flow: FlowParams,
    pub lines: Vec<LineModel>,
    pub continuum: ContinuumModel,
    pub response: ResponseModel,
    pub binning: Binning,
    /// Resolved ROI; `auto` (keys omitted) means forbidden centroid
    /// +- 1.5 FWHM snapped outward to bin edges.
    pub roi: RoiDefinition,
    pub veto: VetoPolicy,
    pub n_sigma: f64,
    pub clamp_negative_excess: bool,
    pub output_dir: PathBuf,
    pub projection: ProjectionPlan,
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config("").expect("the empty config is valid by construction")
    }
}

impl RunConfig {
    /// Electron-flow model of the current-on run.
    pub fn flow_model(&self) -> Result<ElectronFlowModel, FlowError> {
        ElectronFlowModel::new(
            self.schedule_on.clone(),
            self.flow.conductor_length_m,
            self.flow.scattering_length_m,
            self.flow.capture_probability,
            self.flow.detection_efficiency,
        )
    }

    /// Electron-flow model of the projected plan (single segment at the
    /// plan current).
    pub fn projection_flow_model(&self) -> Result<ElectronFlowModel, FlowError> {
        let schedule =
            CurrentSchedule::constant(self.projection.current_a, self.projection.on_duration_s)?;
        ElectronFlowModel::new(
            schedule,
            self.flow.conductor_length_m,
            self.flow.scattering_length_m,
            self.flow.capture_probability,
            self.flow.detection_efficiency,
        )
    }

    /// Empty spectrum carrying the configured binning.
    pub fn template_spectrum(
        &self,
        livetime_s: f64,
        label: &str,
    ) -> Result<EnergySpectrum, pepsim_core::spectra::SpectrumError> {
        Ok(EnergySpectrum::new(
            self.binning.e_min_ev,
            self.binning.e_max_ev,
            self.binning.n_bins,
            livetime_s,
        )?
        .with_label(label))
    }

    /// Canonical text form; reparsing it reproduces the config exactly.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("generator.seed", self.seed.to_string());
        kv(
            "generator.sdd_background_rate",
            self.sdd_background_rate_cps.to_string(),
        );
        kv("generator.cosmic_rate", self.cosmic_rate_cps.to_string());
        kv(
            "generator.coincidence_jitter",
            self.coincidence_jitter_ns.to_string(),
        );
        kv(
            "generator.injected_beta2_over_2",
            self.injected_beta2_over_2.to_string(),
        );
        for (i, seg) in self.schedule_on.segments().iter().enumerate() {
            kv(
                &format!("schedule_on.segments[{i}].current"),
                seg.current_a.to_string(),
            );
            kv(
                &format!("schedule_on.segments[{i}].duration"),
                seg.duration_s.to_string(),
            );
        }
        kv("off.duration", self.off_duration_s.to_string());
        kv(
            "flow.conductor_length",
            self.flow.conductor_length_m.to_string(),
        );
        kv(
            "flow.scattering_length",
            self.flow.scattering_length_m.to_string(),
        );
        kv(
            "flow.capture_probability",
            self.flow.capture_probability.to_string(),
        );
        kv(
            "flow.detection_efficiency",
            self.flow.detection_efficiency.to_string(),
        );
        for (i, line) in self.lines.iter().enumerate() {
            let kind = match line.kind {
                LineKind::Allowed => "allowed",
                LineKind::Forbidden => "forbidden",
            };
            kv(&format!("lines[{i}].kind"), kind.to_string());
            kv(&format!("lines[{i}].centroid"), line.centroid_ev.to_string());
            kv(&format!("lines[{i}].intensity"), line.intensity.to_string());
        }
        match self.continuum.shape() {
            ContinuumShape::Flat { rate_density } => {
                kv("continuum.shape", "flat".into());
                kv("continuum.rate_density", rate_density.to_string());
            }
            ContinuumShape::Linear {
                rate_density_min,
                rate_density_max,
            } => {
                kv("continuum.shape", "linear".into());
                kv(
                    "continuum.rate_density_at_min",
                    rate_density_min.to_string(),
                );
                kv(
                    "continuum.rate_density_at_max",
                    rate_density_max.to_string(),
                );
            }
        }
        kv("response.fwhm_ref", self.response.fwhm_ref_ev().to_string());
        kv("response.e_ref", self.response.e_ref_ev().to_string());
        kv(
            "response.fano_like_scaling",
            self.response.fano_like_scaling().to_string(),
        );
        kv("spectrum.e_min", self.binning.e_min_ev.to_string());
        kv("spectrum.e_max", self.binning.e_max_ev.to_string());
        kv("spectrum.n_bins", self.binning.n_bins.to_string());
        kv("roi.lo", self.roi.lo_ev.to_string());
        kv("roi.hi", self.roi.hi_ev.to_string());
        kv("veto.enabled", self.veto.enabled.to_string());
        kv("veto.window", self.veto.window_ns.to_string());
        kv("analysis.n_sigma", self.n_sigma.to_string());
        kv(
            "analysis.clamp_negative_excess",
            self.clamp_negative_excess.to_string(),
        );
        kv("output.dir", self.output_dir.display().to_string());
        kv(
            "project.on_duration",
            self.projection.on_duration_s.to_string(),
        );
        kv(
            "project.off_duration",
            self.projection.off_duration_s.to_string(),
        );
        kv("project.current", self.projection.current_a.to_string());
        kv(
            "project.roi_background_rate",
            self.projection.roi_background_cps.to_string(),
        );
        s
    }

    /// SHA-256 over the canonical text form, as `sha256:<hex>`.
    ///
    /// `output.dir` is excluded: it determines where artifacts land, never
    /// what they contain, so runs into different directories share a digest.
    pub fn digest(&self) -> String {
        let canonical: String = self
            .to_config_text()
            .lines()
            .filter(|line| !line.starts_with("output.dir"))
            .flat_map(|line| [line, "\n"])
            .collect();
        let hash = Sha256::digest(canonical.as_bytes());
        let mut out = String::from("sha256:");
        for byte in hash {
            write!(out, "{byte:02x}").unwrap();
        }
        out
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

// Ordered key/value store with duplicate detection and take-tracking.
struct KeyBag {
    map: BTreeMap<String, (String, usize)>,
}

impl KeyBag {
    fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigError::Parse {
                line,
                msg: format!("expected `section.key = value`, got `{trimmed}`"),
            })?;
            let key = key.trim().to_string();
            // a ` #` after the value starts a trailing comment
            let value = match value.find(" #") {
                Some(pos) => value[..pos].trim().to_string(),
                None => value.trim().to_string(),
            };
            if key.is_empty() {
                return Err(ConfigError::Parse {
                    line,
                    msg: "empty key".into(),
                });
            }
            if value.is_empty() {
                return Err(ConfigError::Parse {
                    line,
                    msg: format!("empty value for `{key}`"),
                });
            }
            if map.insert(key.clone(), (value, line)).is_some() {
                return Err(ConfigError::Parse {
                    line,
                    msg: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Self { map })
    }

    fn take_raw(&mut self, key: &str) -> Option<String> {
        self.map.remove(key).map(|(v, _)| v)
    }

    fn take<T: std::str::FromStr>(
        &mut self,
        key: &str,
        violations: &mut Vec<String>,
    ) -> Option<T> {
        let raw = self.take_raw(key)?;
        match raw.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                violations.push(format!(
                    "{key}: cannot parse `{raw}` as {}",
                    std::any::type_name::<T>()
                ));
                None
            }
        }
    }

    // Keys under `prefix[i].field`, grouped by index.
    fn take_indexed(
        &mut self,
        prefix: &str,
        violations: &mut Vec<String>,
    ) -> BTreeMap<usize, BTreeMap<String, String>> {
        let pattern = format!("{prefix}[");
        let keys: Vec<String> = self
            .map
            .keys()
            .filter(|k| k.starts_with(&pattern))
            .cloned()
            .collect();
        let mut grouped: BTreeMap<usize, BTreeMap<String, String>> = BTreeMap::new();
        for key in keys {
            let value = self.take_raw(&key).unwrap();
            let rest = &key[pattern.len()..];
            let parsed = rest.split_once("].").and_then(|(idx, field)| {
                idx.parse::<usize>().ok().map(|i| (i, field.to_string()))
            });
            match parsed {
                Some((index, field)) => {
                    grouped.entry(index).or_default().insert(field, value);
                }
                None => violations.push(format!("{key}: malformed list key")),
            }
        }
        grouped
    }

    fn remaining(&self) -> Vec<String> {
        self.map
            .iter()
            .map(|(k, (_, line))| format!("{k} (line {line})"))
            .collect()
    }
}

/// Parse and fully validate a run configuration, filling in the documented
/// defaults for absent keys.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut bag = KeyBag::from_text(text)?;
    let mut violations: Vec<String> = Vec::new();
    let v = &mut violations;

    let seed: u64 = bag.take("generator.seed", v).unwrap_or(DEFAULT_SEED);
    let explicit_background: Option<f64> = bag.take("generator.sdd_background_rate", v);
    let cosmic_rate_cps: f64 = bag
        .take("generator.cosmic_rate", v)
        .unwrap_or(DEFAULT_COSMIC_RATE_CPS);
    let coincidence_jitter_ns: i64 = bag
        .take("generator.coincidence_jitter", v)
        .unwrap_or(DEFAULT_JITTER_NS);
    let injected_beta2_over_2: f64 = bag
        .take("generator.injected_beta2_over_2", v)
        .unwrap_or(0.0);

    // current schedule
    let mut segments: Vec<ScheduleSegment> = Vec::new();
    let grouped = bag.take_indexed("schedule_on.segments", v);
    if grouped.is_empty() {
        segments.push(ScheduleSegment {
            current_a: DEFAULT_CURRENT_A,
            duration_s: DEFAULT_ON_DURATION_S,
        });
    } else {
        for (expected, (index, mut fields)) in grouped.into_iter().enumerate() {
            if index != expected {
                v.push(format!(
                    "schedule_on.segments[{index}]: indices must be dense from 0"
                ));
            }
            let path = format!("schedule_on.segments[{index}]");
            let current_a = match fields.remove("current") {
                Some(raw) => raw.parse::<f64>().unwrap_or_else(|_| {
                    v.push(format!("{path}.current: cannot parse `{raw}`"));
                    0.0
                }),
                None => {
                    v.push(format!("{path}.current: missing"));
                    0.0
                }
            };
            let duration_s = match fields.remove("duration") {
                Some(raw) => raw.parse::<f64>().unwrap_or_else(|_| {
                    v.push(format!("{path}.duration: cannot parse `{raw}`"));
                    1.0
                }),
                None => {
                    v.push(format!("{path}.duration: missing"));
                    1.0
                }
            };
            for field in fields.keys() {
                v.push(format!("{path}.{field}: unknown segment field"));
            }
            if !(current_a >= 0.0) || !current_a.is_finite() {
                v.push(format!("{path}.current: must be >= 0 (got {current_a})"));
            }
            if !(duration_s > 0.0) || !duration_s.is_finite() {
                v.push(format!("{path}.duration: must be > 0 (got {duration_s})"));
            }
            segments.push(ScheduleSegment {
                current_a,
                duration_s,
            });
        }
    }

    let off_duration_s: f64 = bag.take("off.duration", v).unwrap_or(DEFAULT_OFF_DURATION_S);

    let flow = FlowParams {
        conductor_length_m: bag
            .take("flow.conductor_length", v)
            .unwrap_or(DEFAULT_CONDUCTOR_LENGTH_M),
        scattering_length_m: bag
            .take("flow.scattering_length", v)
            .unwrap_or(DEFAULT_SCATTERING_LENGTH_M),
        capture_probability: bag
            .take("flow.capture_probability", v)
            .unwrap_or(DEFAULT_CAPTURE_PROBABILITY),
        detection_efficiency: bag
            .take("flow.detection_efficiency", v)
            .unwrap_or(DEFAULT_DETECTION_EFFICIENCY),
    };

    // spectral lines
    let mut lines: Vec<LineModel> = Vec::new();
    let grouped = bag.take_indexed("lines", v);
    if grouped.is_empty() {
        lines.push(LineModel {
            centroid_ev: DEFAULT_ALLOWED_CENTROID_EV,
            intensity: 0.0,
            kind: LineKind::Allowed,
        });
        lines.push(LineModel {
            centroid_ev: DEFAULT_FORBIDDEN_CENTROID_EV,
            intensity: 0.0,
            kind: LineKind::Forbidden,
        });
    } else {
        for (expected, (index, mut fields)) in grouped.into_iter().enumerate() {
            if index != expected {
                v.push(format!("lines[{index}]: indices must be dense from 0"));
            }
            let path = format!("lines[{index}]");
            let kind = match fields.remove("kind").as_deref() {
                Some("allowed") => LineKind::Allowed,
                Some("forbidden") => LineKind::Forbidden,
                Some(other) => {
                    v.push(format!(
                        "{path}.kind: expected `allowed` or `forbidden`, got `{other}`"
                    ));
                    LineKind::Allowed
                }
                None => {
                    v.push(format!("{path}.kind: missing"));
                    LineKind::Allowed
                }
            };
            let centroid_ev = match fields.remove("centroid") {
                Some(raw) => raw.parse::<f64>().unwrap_or_else(|_| {
                    v.push(format!("{path}.centroid: cannot parse `{raw}`"));
                    0.0
                }),
                None => {
                    v.push(format!("{path}.centroid: missing"));
                    0.0
                }
            };
            let intensity = match fields.remove("intensity") {
                Some(raw) => raw.parse::<f64>().unwrap_or_else(|_| {
                    v.push(format!("{path}.intensity: cannot parse `{raw}`"));
                    0.0
                }),
                None => 0.0,
            };
            for field in fields.keys() {
                v.push(format!("{path}.{field}: unknown line field"));
            }
            if !(intensity >= 0.0) || !intensity.is_finite() {
                v.push(format!("{path}.intensity: must be >= 0 (got {intensity})"));
            }
            lines.push(LineModel {
                centroid_ev,
                intensity,
                kind,
            });
        }
    }

    // binning first: the continuum range and ROI live on it
    let binning = Binning {
        e_min_ev: bag.take("spectrum.e_min", v).unwrap_or(7000.0),
        e_max_ev: bag.take("spectrum.e_max", v).unwrap_or(9500.0),
        n_bins: bag.take("spectrum.n_bins", v).unwrap_or(250),
    };
    if !(binning.e_min_ev < binning.e_max_ev) {
        v.push(format!(
            "spectrum.e_min/spectrum.e_max: need e_min < e_max (got {} and {})",
            binning.e_min_ev, binning.e_max_ev
        ));
    }
    if binning.n_bins < 1 {
        v.push("spectrum.n_bins: must be >= 1".into());
    }

    let shape_name: String = bag
        .take_raw("continuum.shape")
        .unwrap_or_else(|| "flat".into());
    let shape = match shape_name.as_str() {
        "flat" => {
            for key in ["continuum.rate_density_at_min", "continuum.rate_density_at_max"] {
                if bag.take_raw(key).is_some() {
                    v.push(format!("{key}: not applicable for the flat shape"));
                }
            }
            ContinuumShape::Flat {
                rate_density: bag
                    .take("continuum.rate_density", v)
                    .unwrap_or(DEFAULT_CONTINUUM_DENSITY),
            }
        }
        "linear" => {
            if bag.take_raw("continuum.rate_density").is_some() {
                v.push("continuum.rate_density: not applicable for the linear shape".into());
            }
            ContinuumShape::Linear {
                rate_density_min: bag
                    .take("continuum.rate_density_at_min", v)
                    .unwrap_or(DEFAULT_CONTINUUM_DENSITY),
                rate_density_max: bag
                    .take("continuum.rate_density_at_max", v)
                    .unwrap_or(DEFAULT_CONTINUUM_DENSITY),
            }
        }
        other => {
            v.push(format!(
                "continuum.shape: expected `flat` or `linear`, got `{other}`"
            ));
            ContinuumShape::Flat {
                rate_density: DEFAULT_CONTINUUM_DENSITY,
            }
        }
    };

    let fwhm_ref_ev: f64 = bag.take("response.fwhm_ref", v).unwrap_or(DEFAULT_FWHM_EV);
    let e_ref_ev: f64 = bag
        .take("response.e_ref", v)
        .unwrap_or(DEFAULT_ALLOWED_CENTROID_EV);
    let fano_like_scaling: bool = bag.take("response.fano_like_scaling", v).unwrap_or(false);

    let roi_lo: Option<f64> = bag.take("roi.lo", v);
    let roi_hi: Option<f64> = bag.take("roi.hi", v);

    let veto = VetoPolicy {
        window_ns: bag.take("veto.window", v).unwrap_or(DEFAULT_VETO_WINDOW_NS),
        enabled: bag.take("veto.enabled", v).unwrap_or(true),
    };

    let n_sigma: f64 = bag.take("analysis.n_sigma", v).unwrap_or(DEFAULT_N_SIGMA);
    let clamp_negative_excess: bool = bag
        .take("analysis.clamp_negative_excess", v)
        .unwrap_or(true);

    let output_dir = PathBuf::from(bag.take_raw("output.dir").unwrap_or_else(|| "out".into()));

    let project_on: Option<f64> = bag.take("project.on_duration", v);
    let project_off: Option<f64> = bag.take("project.off_duration", v);
    let project_current: Option<f64> = bag.take("project.current", v);
    let project_rate: Option<f64> = bag.take("project.roi_background_rate", v);

    // strict unknown-key rejection
    let leftover = bag.remaining();
    if !leftover.is_empty() {
        return Err(ConfigError::UnknownKeys { keys: leftover });
    }

    // semantic validation
    if let Some(rate) = explicit_background {
        if !(rate >= 0.0) || !rate.is_finite() {
            v.push(format!(
                "generator.sdd_background_rate: must be >= 0 (got {rate})"
            ));
        }
    }
    if !(cosmic_rate_cps >= 0.0) || !cosmic_rate_cps.is_finite() {
        v.push(format!(
            "generator.cosmic_rate: must be >= 0 (got {cosmic_rate_cps})"
        ));
    }
    if coincidence_jitter_ns < 0 {
        v.push(format!(
            "generator.coincidence_jitter: must be >= 0 (got {coincidence_jitter_ns})"
        ));
    }
    if !(injected_beta2_over_2 >= 0.0) || !injected_beta2_over_2.is_finite() {
        v.push(format!(
            "generator.injected_beta2_over_2: must be >= 0 (got {injected_beta2_over_2})"
        ));
    }
    if !(off_duration_s > 0.0) || !off_duration_s.is_finite() {
        v.push(format!("off.duration: must be > 0 (got {off_duration_s})"));
    }
    if !(flow.conductor_length_m > 0.0) {
        v.push(format!(
            "flow.conductor_length: must be > 0 (got {})",
            flow.conductor_length_m
        ));
    }
    if !(flow.scattering_length_m > 0.0) {
        v.push(format!(
            "flow.scattering_length: must be > 0 (got {})",
            flow.scattering_length_m
        ));
    }
    if !(flow.capture_probability > 0.0 && flow.capture_probability <= 1.0) {
        v.push(format!(
            "flow.capture_probability: must lie in (0, 1] (got {})",
            flow.capture_probability
        ));
    }
    if !(flow.detection_efficiency > 0.0 && flow.detection_efficiency <= 1.0) {
        v.push(format!(
            "flow.detection_efficiency: must lie in (0, 1] (got {})",
            flow.detection_efficiency
        ));
    }
    if !(fwhm_ref_ev > 0.0) {
        v.push(format!("response.fwhm_ref: must be > 0 (got {fwhm_ref_ev})"));
    }
    if !(e_ref_ev > 0.0) {
        v.push(format!("response.e_ref: must be > 0 (got {e_ref_ev})"));
    }
    if veto.window_ns < 0 {
        v.push(format!("veto.window: must be >= 0 (got {})", veto.window_ns));
    }
    if !(n_sigma > 0.0) || !n_sigma.is_finite() {
        v.push(format!("analysis.n_sigma: must be > 0 (got {n_sigma})"));
    }
    for (i, line) in lines.iter().enumerate() {
        if line.centroid_ev < binning.e_min_ev || line.centroid_ev > binning.e_max_ev {
            v.push(format!(
                "lines[{i}].centroid: {} outside the spectrum range [{}, {}]",
                line.centroid_ev, binning.e_min_ev, binning.e_max_ev
            ));
        }
    }
    let has_forbidden = lines.iter().any(|l| l.kind == LineKind::Forbidden);
    if injected_beta2_over_2 > 0.0 {
        if !has_forbidden {
            v.push(
                "generator.injected_beta2_over_2: signal injection needs a forbidden line".into(),
            );
        }
        let charge: f64 = segments.iter().map(|s| s.current_a * s.duration_s).sum();
        if charge == 0.0 {
            v.push(
                "generator.injected_beta2_over_2: signal injection needs a current-on schedule"
                    .into(),
            );
        }
    }

    // shape-dependent density validation is delegated to the model type
    let continuum = match ContinuumModel::new(shape, binning.e_min_ev, binning.e_max_ev) {
        Ok(c) => Some(c),
        Err(e) => {
            v.push(format!("continuum: {e}"));
            None
        }
    };

    // ROI resolution: explicit pair, or auto from the forbidden line
    let roi = match (roi_lo, roi_hi) {
        (Some(lo), Some(hi)) => {
            if !(lo < hi) {
                violations.push(format!("roi.lo/roi.hi: need lo < hi (got {lo} and {hi})"));
                None
            } else if lo < binning.e_min_ev || hi > binning.e_max_ev {
                violations.push(format!(
                    "roi.lo/roi.hi: [{lo}, {hi}] outside the spectrum range [{}, {}]",
                    binning.e_min_ev, binning.e_max_ev
                ));
                None
            } else {
                Some(RoiDefinition { lo_ev: lo, hi_ev: hi })
            }
        }
        (None, None) => {
            if !has_forbidden {
                violations.push("roi: auto ROI needs a forbidden line in `lines`".into());
                None
            } else if violations.is_empty() {
                match resolve_auto_roi(&lines, fwhm_ref_ev, e_ref_ev, fano_like_scaling, &binning)
                {
                    Ok(roi) => Some(roi),
                    Err(msg) => {
                        violations.push(format!("roi: {msg}"));
                        None
                    }
                }
            } else {
                None
            }
        }
        _ => {
            violations.push("roi.lo/roi.hi: set both keys or neither".into());
            None
        }
    };

    if !violations.is_empty() {
        return Err(ConfigError::Validation { violations });
    }

    // all constraints hold, so the core constructors cannot fail
    let schedule_on = CurrentSchedule::new(segments).expect("validated schedule");
    let continuum = continuum.expect("validated continuum");
    let response =
        ResponseModel::new(fwhm_ref_ev, e_ref_ev, fano_like_scaling).expect("validated response");
    let roi = roi.expect("validated roi");

    let sdd_background_rate_cps = explicit_background.unwrap_or_else(|| continuum.total_rate_cps());
    let projection = ProjectionPlan {
        on_duration_s: project_on.unwrap_or_else(|| schedule_on.total_duration_s()),
        off_duration_s: project_off.unwrap_or(off_duration_s),
        current_a: project_current.unwrap_or_else(|| schedule_on.mean_current_a()),
        roi_background_cps: project_rate
            .unwrap_or_else(|| continuum.integral_cps(roi.lo_ev, roi.hi_ev)),
    };

    let mut post = Vec::new();
    if !(projection.on_duration_s > 0.0) {
        post.push(format!(
            "project.on_duration: must be > 0 (got {})",
            projection.on_duration_s
        ));
    }
    if !(projection.off_duration_s > 0.0) {
        post.push(format!(
            "project.off_duration: must be > 0 (got {})",
            projection.off_duration_s
        ));
    }
    if !(projection.current_a >= 0.0) {
        post.push(format!(
            "project.current: must be >= 0 (got {})",
            projection.current_a
        ));
    }
    if !(projection.roi_background_cps >= 0.0) {
        post.push(format!(
            "project.roi_background_rate: must be >= 0 (got {})",
            projection.roi_background_cps
        ));
    }
    if !post.is_empty() {
        return Err(ConfigError::Validation { violations: post });
    }

    Ok(RunConfig {
        seed,
        sdd_background_rate_cps,
        cosmic_rate_cps,
        coincidence_jitter_ns,
        injected_beta2_over_2,
        schedule_on,
        off_duration_s,
        flow,
        lines,
        continuum,
        response,
        binning,
        roi,
        veto,
        n_sigma,
        clamp_negative_excess,
        output_dir,
        projection,
    })
}

// forbidden centroid +- 1.5 FWHM, snapped outward to bin edges and clipped
// to the spectrum range
fn resolve_auto_roi(
    lines: &[LineModel],
    fwhm_ref_ev: f64,
    e_ref_ev: f64,
    fano_like_scaling: bool,
    binning: &Binning,
) -> Result<RoiDefinition, String> {
    let forbidden = lines
        .iter()
        .find(|l| l.kind == LineKind::Forbidden)
        .ok_or("no forbidden line")?;
    let response = ResponseModel::new(fwhm_ref_ev, e_ref_ev, fano_like_scaling)
        .map_err(|e| e.to_string())?;
    let half_width = 1.5 * response.fwhm_at_ev(forbidden.centroid_ev);
    let template = EnergySpectrum::new(binning.e_min_ev, binning.e_max_ev, binning.n_bins, 1.0)
        .map_err(|e| e.to_string())?;
    let (i0, i1) = template.snapped_window_bins(
        forbidden.centroid_ev - half_width,
        forbidden.centroid_ev + half_width,
    );
    if i0 >= i1 {
        return Err(format!(
            "auto ROI around {} eV collapses to zero width",
            forbidden.centroid_ev
        ));
    }
    Ok(RoiDefinition {
        lo_ev: template.bin_low_ev(i0),
        hi_ev: template.bin_low_ev(i1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_yields_documented_defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.seed, DEFAULT_SEED);
        assert_eq!(cfg.schedule_on.segments().len(), 1);
        assert_eq!(cfg.schedule_on.segments()[0].current_a, 100.0);
        assert_eq!(cfg.schedule_on.segments()[0].duration_s, 3.456e6);
        assert_eq!(cfg.off_duration_s, 6.048e6);
        assert_eq!(cfg.binning.n_bins, 250);
        // background rate derived from the continuum integral
        assert!((cfg.sdd_background_rate_cps - 2e-7 * 2500.0).abs() < 1e-15);
        // auto ROI: 7729 +- 270, snapped outward to 10 eV edges
        assert_eq!(cfg.roi.lo_ev, 7450.0);
        assert_eq!(cfg.roi.hi_ev, 8000.0);
        assert!(cfg.veto.enabled);
        assert_eq!(cfg.n_sigma, 3.0);
    }

    #[test]
    fn minimal_config_fills_remaining_defaults() {
        let cfg = parse_config("generator.seed = 7\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.off_duration_s, 6.048e6);
    }

    #[test]
    fn negative_current_names_the_key_path() {
        let err = parse_config(
            "schedule_on.segments[0].current = -5\nschedule_on.segments[0].duration = 100\n",
        )
        .unwrap_err();
        match err {
            ConfigError::Validation { violations } => {
                assert!(
                    violations
                        .iter()
                        .any(|v| v.starts_with("schedule_on.segments[0].current")),
                    "violations: {violations:?}"
                );
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn unknown_key_is_a_parse_error_naming_the_key() {
        let err = parse_config("folw.conductor_length = 0.1\n").unwrap_err();
        match err {
            ConfigError::UnknownKeys { keys } => {
                assert_eq!(keys.len(), 1);
                assert!(keys[0].starts_with("folw.conductor_length"));
            }
            other => panic!("expected unknown-key error, got {other}"),
        }
    }

    #[test]
    fn all_violations_are_reported_not_only_the_first() {
        let err = parse_config(
            "off.duration = -1\nflow.capture_probability = 2\nanalysis.n_sigma = 0\n",
        )
        .unwrap_err();
        match err {
            ConfigError::Validation { violations } => {
                assert_eq!(violations.len(), 3, "violations: {violations:?}");
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let err = parse_config("generator.seed = 1\ngenerator.seed = 2\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 2, .. }));
    }

    #[test]
    fn config_round_trip_is_identity() {
        let cfg = parse_config(
            "generator.seed = 99\n\
             generator.injected_beta2_over_2 = 1e-27\n\
             continuum.shape = linear\n\
             continuum.rate_density_at_min = 3e-7\n\
             continuum.rate_density_at_max = 1e-7\n\
             lines[0].kind = forbidden\n\
             lines[0].centroid = 7729\n\
             lines[0].intensity = 12.5\n\
             schedule_on.segments[0].current = 50\n\
             schedule_on.segments[0].duration = 1000\n\
             schedule_on.segments[1].current = 120\n\
             schedule_on.segments[1].duration = 2500.5\n\
             response.fano_like_scaling = true\n",
        )
        .unwrap();
        let text = cfg.to_config_text();
        let back = parse_config(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.digest(), back.digest());
    }

    #[test]
    fn explicit_roi_overrides_auto() {
        let cfg = parse_config("roi.lo = 7600\nroi.hi = 7900\n").unwrap();
        assert_eq!(cfg.roi.lo_ev, 7600.0);
        assert_eq!(cfg.roi.hi_ev, 7900.0);
    }

    #[test]
    fn half_specified_roi_is_rejected() {
        let err = parse_config("roi.lo = 7600\n").unwrap_err();
        assert!(matches!(err, ConfigError::Validation { .. }));
    }

    #[test]
    fn injection_without_current_is_a_validation_error() {
        let err = parse_config(
            "generator.injected_beta2_over_2 = 1e-27\n\
             schedule_on.segments[0].current = 0\n\
             schedule_on.segments[0].duration = 3456000\n",
        )
        .unwrap_err();
        match err {
            ConfigError::Validation { violations } => {
                assert!(violations
                    .iter()
                    .any(|v| v.contains("needs a current-on schedule")));
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn projection_defaults_follow_the_main_plan() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.projection.on_duration_s, 3.456e6);
        assert_eq!(cfg.projection.off_duration_s, 6.048e6);
        assert_eq!(cfg.projection.current_a, 100.0);
        // continuum integral over the resolved ROI [7450, 8000]
        assert!((cfg.projection.roi_background_cps - 2e-7 * 550.0).abs() < 1e-18);
    }
}
