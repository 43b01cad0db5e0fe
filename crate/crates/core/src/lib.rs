//! Simulation and statistical-analysis core for a current-driven search for
//! Pauli-exclusion-principle violating X-ray transitions in copper.
//!
//! The library covers the full chain of such a search:
//!
//! - [`spectra`] — uniform-bin energy histograms, spectral component models
//!   and the Gaussian detector-response convolution,
//! - [`montecarlo`] — seeded, reproducible generation of timestamped SDD and
//!   scintillator event streams plus the coincidence veto,
//! - [`flow`] — the "new electron" arithmetic that turns a current schedule
//!   into a sensitivity factor (expected forbidden-line counts per unit
//!   violation probability β²/2),
//! - [`limits`] — current-on vs current-off region-of-interest counting, the
//!   count upper limit, the derived β²/2 limit and sensitivity projections.

pub mod flow;
pub mod limits;
pub mod montecarlo;
pub mod spectra;

pub use flow::{CurrentSchedule, ElectronFlowModel, FlowError, ScheduleSegment};
pub use limits::{ExcessConvention, LimitError, LimitResult, ProjectionResult, RoiDefinition};
pub use montecarlo::{
    Detector, EventRecord, GeneratorConfig, GeneratorError, Truth, VetoPolicy,
};
pub use spectra::{
    ContinuumModel, ContinuumShape, EnergySpectrum, LineKind, LineModel, ResponseModel,
    SpectrumError,
};
