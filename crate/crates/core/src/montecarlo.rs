//! Seeded generation of timestamped event streams for current-on and
//! current-off runs, the scintillator coincidence veto, and event binning.
//!
//! Background, cosmic pairs and injected signal are three independent
//! homogeneous Poisson processes. Each draws from its own random sub-stream
//! derived from the run seed by a fixed label, so switching signal injection
//! on or off never perturbs the background sample. Timestamps are integer
//! nanoseconds, which keeps identical (seed, config) pairs bit-identical.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use thiserror::Error;

use crate::flow::ElectronFlowModel;
use crate::spectra::{ContinuumModel, EnergySpectrum, LineKind, LineModel, ResponseModel};

pub const NS_PER_S: f64 = 1e9;

const STREAM_BACKGROUND: u64 = 1;
const STREAM_COSMIC: u64 = 2;
const STREAM_SIGNAL: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detector {
    Sdd,
    Scintillator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    Background,
    Signal,
    Cosmic,
}

/// One detector hit.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    /// Nanoseconds from run start.
    pub t_ns: i64,
    pub detector: Detector,
    /// Deposited energy; scintillator hits carry 0.
    pub energy_ev: f64,
    pub truth: Truth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub duration_s: f64,
    /// Total SDD background rate over the configured range, shaped like the
    /// continuum model.
    pub sdd_background_rate_cps: f64,
    /// Rate of SDD hits that come paired with a scintillator hit.
    pub cosmic_rate_cps: f64,
    /// Half-width of the time offset between a cosmic SDD hit and its
    /// scintillator partner.
    pub coincidence_jitter_ns: i64,
    pub injected_beta2_over_2: f64,
}

/// Coincidence rejection window around each scintillator hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VetoPolicy {
    /// Half-width |Δt| of the rejection window.
    pub window_ns: i64,
    pub enabled: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum GeneratorError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(
        "signal-without-current: injected beta2/2 = {beta2} but the flow model carries zero integrated charge"
    )]
    SignalWithoutCurrent { beta2: f64 },
    #[error("no forbidden line configured; signal injection needs a forbidden-line centroid")]
    NoForbiddenLine,
    #[error("unsorted-input: events must be time-sorted")]
    UnsortedInput,
    #[error("non-empty-template: target spectrum already holds counts")]
    NonEmptyTemplate,
    #[error("event format error at line {line}: {msg}")]
    Format { line: usize, msg: String },
}

// splitmix64; decorrelates derived seeds even for adjacent inputs.
fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a decorrelated sub-seed from a master seed and a stream label.
pub fn derive_stream_seed(master_seed: u64, label: u64) -> u64 {
    splitmix64(master_seed ^ label.wrapping_mul(0xA076_1D64_78BD_642F))
}

fn stream_rng(master_seed: u64, label: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_stream_seed(master_seed, label))
}

// Arrival times of a homogeneous Poisson process over [0, duration), in ns.
fn poisson_arrivals_ns(rng: &mut ChaCha8Rng, rate_cps: f64, duration_s: f64) -> Vec<i64> {
    let mut times = Vec::new();
    if rate_cps <= 0.0 {
        return times;
    }
    let exp = Exp::new(rate_cps).expect("positive rate");
    let mut t_s = 0.0f64;
    loop {
        t_s += exp.sample(rng);
        if t_s >= duration_s {
            return times;
        }
        times.push((t_s * NS_PER_S).round() as i64);
    }
}

fn validate_config(cfg: &GeneratorConfig) -> Result<(), GeneratorError> {
    let mut problems = Vec::new();
    if !(cfg.duration_s > 0.0) || !cfg.duration_s.is_finite() {
        problems.push(format!("duration must be > 0 (got {})", cfg.duration_s));
    }
    if !(cfg.sdd_background_rate_cps >= 0.0) || !cfg.sdd_background_rate_cps.is_finite() {
        problems.push(format!(
            "sdd_background_rate must be >= 0 (got {})",
            cfg.sdd_background_rate_cps
        ));
    }
    if !(cfg.cosmic_rate_cps >= 0.0) || !cfg.cosmic_rate_cps.is_finite() {
        problems.push(format!(
            "cosmic_rate must be >= 0 (got {})",
            cfg.cosmic_rate_cps
        ));
    }
    if cfg.coincidence_jitter_ns < 0 {
        problems.push(format!(
            "coincidence_jitter must be >= 0 (got {})",
            cfg.coincidence_jitter_ns
        ));
    }
    if !(cfg.injected_beta2_over_2 >= 0.0) || !cfg.injected_beta2_over_2.is_finite() {
        problems.push(format!(
            "injected_beta2_over_2 must be >= 0 (got {})",
            cfg.injected_beta2_over_2
        ));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(GeneratorError::InvalidConfig(problems.join("; ")))
    }
}

/// Generate one run as a time-sorted event list.
///
/// Background SDD hits follow the continuum shape at the configured total
/// rate. Cosmic SDD hits come with a scintillator partner offset by at most
/// the coincidence jitter. Signal hits are Poisson with mean
/// `injected_beta2_over_2 * flow.sensitivity_factor()`, at the forbidden-line
/// centroid smeared by the detector response.
pub fn generate_run(
    cfg: &GeneratorConfig,
    flow: &ElectronFlowModel,
    lines: &[LineModel],
    continuum: &ContinuumModel,
    response: &ResponseModel,
) -> Result<Vec<EventRecord>, GeneratorError> {
    validate_config(cfg)?;
    if cfg.injected_beta2_over_2 > 0.0 && flow.integrated_charge_c() == 0.0 {
        return Err(GeneratorError::SignalWithoutCurrent {
            beta2: cfg.injected_beta2_over_2,
        });
    }

    let mut events = Vec::new();

    {
        let mut rng = stream_rng(cfg.seed, STREAM_BACKGROUND);
        let times = poisson_arrivals_ns(&mut rng, cfg.sdd_background_rate_cps, cfg.duration_s);
        for t_ns in times {
            events.push(EventRecord {
                t_ns,
                detector: Detector::Sdd,
                energy_ev: continuum.sample_energy_ev(&mut rng),
                truth: Truth::Background,
            });
        }
    }

    {
        let mut rng = stream_rng(cfg.seed, STREAM_COSMIC);
        let times = poisson_arrivals_ns(&mut rng, cfg.cosmic_rate_cps, cfg.duration_s);
        for t_ns in times {
            let energy_ev = continuum.sample_energy_ev(&mut rng);
            let offset = if cfg.coincidence_jitter_ns > 0 {
                rng.random_range(-cfg.coincidence_jitter_ns..=cfg.coincidence_jitter_ns)
            } else {
                0
            };
            events.push(EventRecord {
                t_ns,
                detector: Detector::Sdd,
                energy_ev,
                truth: Truth::Cosmic,
            });
            events.push(EventRecord {
                t_ns: (t_ns + offset).max(0),
                detector: Detector::Scintillator,
                energy_ev: 0.0,
                truth: Truth::Cosmic,
            });
        }
    }

    if cfg.injected_beta2_over_2 > 0.0 {
        let forbidden = lines
            .iter()
            .find(|l| l.kind == LineKind::Forbidden)
            .ok_or(GeneratorError::NoForbiddenLine)?;
        let mean = cfg.injected_beta2_over_2 * flow.sensitivity_factor();
        let rate = mean / cfg.duration_s;
        let sigma = response.sigma_at_ev(forbidden.centroid_ev);
        let mut rng = stream_rng(cfg.seed, STREAM_SIGNAL);
        let times = poisson_arrivals_ns(&mut rng, rate, cfg.duration_s);
        let smear = Normal::new(forbidden.centroid_ev, sigma.max(0.0))
            .map_err(|e| GeneratorError::InvalidConfig(e.to_string()))?;
        for t_ns in times {
            let energy_ev = if sigma > 0.0 {
                smear.sample(&mut rng)
            } else {
                forbidden.centroid_ev
            };
            events.push(EventRecord {
                t_ns,
                detector: Detector::Sdd,
                energy_ev,
                truth: Truth::Signal,
            });
        }
    }

    // stable sort + fixed component order above = deterministic tie order
    events.sort_by_key(|e| e.t_ns);
    Ok(events)
}

fn check_sorted(events: &[EventRecord]) -> Result<(), GeneratorError> {
    if events.windows(2).any(|w| w[0].t_ns > w[1].t_ns) {
        return Err(GeneratorError::UnsortedInput);
    }
    Ok(())
}

/// Apply the coincidence veto to a time-sorted stream.
///
/// When enabled, drops every SDD event that has at least one scintillator
/// event within `|Δt| <= window_ns`. Scintillator events are always stripped
/// from the output. Relative order of the survivors is preserved.
pub fn apply_veto(
    events: &[EventRecord],
    policy: &VetoPolicy,
) -> Result<Vec<EventRecord>, GeneratorError> {
    if policy.window_ns < 0 {
        return Err(GeneratorError::InvalidConfig(format!(
            "veto window must be >= 0 (got {})",
            policy.window_ns
        )));
    }
    check_sorted(events)?;
    let scint_times: Vec<i64> = events
        .iter()
        .filter(|e| e.detector == Detector::Scintillator)
        .map(|e| e.t_ns)
        .collect();
    let vetoed = |t: i64| {
        let lo = t - policy.window_ns;
        let hi = t + policy.window_ns;
        let i = scint_times.partition_point(|&s| s < lo);
        i < scint_times.len() && scint_times[i] <= hi
    };
    Ok(events
        .iter()
        .filter(|e| e.detector == Detector::Sdd && !(policy.enabled && vetoed(e.t_ns)))
        .cloned()
        .collect())
}

/// Fill SDD event energies into a fresh copy of `template` (which carries
/// the binning, livetime and label to use).
pub fn events_to_spectrum(
    events: &[EventRecord],
    template: &EnergySpectrum,
) -> Result<EnergySpectrum, GeneratorError> {
    if !template.is_empty() {
        return Err(GeneratorError::NonEmptyTemplate);
    }
    let mut spectrum = template.clone();
    for event in events.iter().filter(|e| e.detector == Detector::Sdd) {
        spectrum.fill(event.energy_ev);
    }
    Ok(spectrum)
}

/// Serialize events to the plain-text exchange format.
pub fn events_to_text(events: &[EventRecord], seed: u64, duration_s: f64) -> String {
    let mut s = String::new();
    writeln!(s, "# seed={seed} duration_s={duration_s}").unwrap();
    for e in events {
        let detector = match e.detector {
            Detector::Sdd => "sdd",
            Detector::Scintillator => "scint",
        };
        let truth = match e.truth {
            Truth::Background => "bkg",
            Truth::Signal => "sig",
            Truth::Cosmic => "cosmic",
        };
        writeln!(s, "{} {} {} {}", e.t_ns, detector, e.energy_ev, truth).unwrap();
    }
    s
}

/// Parse the event exchange format; returns the events plus the recorded
/// seed and duration.
pub fn events_from_text(text: &str) -> Result<(Vec<EventRecord>, u64, f64), GeneratorError> {
    let fail = |line: usize, msg: String| GeneratorError::Format { line, msg };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| fail(1, "empty input".into()))?;
    let body = header
        .strip_prefix("# ")
        .ok_or_else(|| fail(1, "expected `# seed=<int> duration_s=<real>`".into()))?;
    let mut tokens = body.split_whitespace();
    let seed: u64 = tokens
        .next()
        .and_then(|t| t.strip_prefix("seed="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| fail(1, "bad seed field".into()))?;
    let duration_s: f64 = tokens
        .next()
        .and_then(|t| t.strip_prefix("duration_s="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| fail(1, "bad duration_s field".into()))?;

    let mut events = Vec::new();
    for (ln, row) in lines {
        if row.trim().is_empty() {
            continue;
        }
        let mut tokens = row.split_whitespace();
        let t_ns: i64 = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| fail(ln + 1, "bad timestamp".into()))?;
        let detector = match tokens.next() {
            Some("sdd") => Detector::Sdd,
            Some("scint") => Detector::Scintillator,
            other => return Err(fail(ln + 1, format!("bad detector token {other:?}"))),
        };
        let energy_ev: f64 = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| fail(ln + 1, "bad energy".into()))?;
        let truth = match tokens.next() {
            Some("bkg") => Truth::Background,
            Some("sig") => Truth::Signal,
            Some("cosmic") => Truth::Cosmic,
            other => return Err(fail(ln + 1, format!("bad truth token {other:?}"))),
        };
        if tokens.next().is_some() {
            return Err(fail(ln + 1, "trailing tokens on event row".into()));
        }
        events.push(EventRecord {
            t_ns,
            detector,
            energy_ev,
            truth,
        });
    }
    Ok((events, seed, duration_s))
}
