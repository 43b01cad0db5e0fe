//! Energy-spectrum histograms, spectral component models and the detector
//! response convolution.
//!
//! Spectra are uniform-bin histograms over `[e_min, e_max)` with half-open
//! bins. Out-of-range fills are tallied in underflow/overflow counters, never
//! silently dropped, so count bookkeeping stays exact end to end.

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

/// FWHM = 2·sqrt(2·ln 2) · sigma for a Gaussian response.
pub const FWHM_OVER_SIGMA: f64 = 2.354_820_045_030_949_4;

// Gaussian kernels are cut off at this many sigma during convolution; the
// truncated mass (< 2e-9 of a bin) is accounted as spill-out, so totals
// still balance exactly.
const KERNEL_CUTOFF_SIGMA: f64 = 6.0;

// Energies within this many bin widths of a bin edge are treated as lying
// exactly on the edge when windows are snapped to the binning.
const EDGE_SNAP: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SpectrumError {
    #[error("invalid-range: e_min ({e_min}) must be < e_max ({e_max})")]
    InvalidRange { e_min: f64, e_max: f64 },
    #[error("invalid-bins: n_bins must be >= 1 (got {n_bins})")]
    InvalidBins { n_bins: usize },
    #[error("invalid-livetime: livetime must be > 0 (got {livetime_s})")]
    InvalidLivetime { livetime_s: f64 },
    #[error("bin contents must be finite and >= 0 (got {value})")]
    InvalidCounts { value: f64 },
    #[error("window-out-of-range: [{lo}, {hi}] not contained in [{e_min}, {e_max}]")]
    WindowOutOfRange {
        lo: f64,
        hi: f64,
        e_min: f64,
        e_max: f64,
    },
    #[error("binning-mismatch: {0}")]
    BinningMismatch(String),
    #[error("invalid continuum model: {0}")]
    InvalidContinuum(String),
    #[error("invalid response model: {0}")]
    InvalidResponse(String),
    #[error("spectrum format error at line {line}: {msg}")]
    Format { line: usize, msg: String },
}

/// Uniform-bin histogram of counts vs energy with livetime metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySpectrum {
    e_min_ev: f64,
    e_max_ev: f64,
    n_bins: usize,
    counts: Vec<f64>,
    livetime_s: f64,
    label: String,
    overflow: f64,
    underflow: f64,
}

impl EnergySpectrum {
    /// Create an all-zero spectrum over `[e_min_ev, e_max_ev)`.
    pub fn new(
        e_min_ev: f64,
        e_max_ev: f64,
        n_bins: usize,
        livetime_s: f64,
    ) -> Result<Self, SpectrumError> {
        if !(e_min_ev < e_max_ev) || !e_min_ev.is_finite() || !e_max_ev.is_finite() {
            return Err(SpectrumError::InvalidRange {
                e_min: e_min_ev,
                e_max: e_max_ev,
            });
        }
        if n_bins < 1 {
            return Err(SpectrumError::InvalidBins { n_bins });
        }
        if !(livetime_s > 0.0) || !livetime_s.is_finite() {
            return Err(SpectrumError::InvalidLivetime { livetime_s });
        }
        Ok(Self {
            e_min_ev,
            e_max_ev,
            n_bins,
            counts: vec![0.0; n_bins],
            livetime_s,
            label: String::new(),
            overflow: 0.0,
            underflow: 0.0,
        })
    }

    /// Create a spectrum with given bin contents (model spectra, test
    /// fixtures); bin count comes from the vector length.
    pub fn with_counts(
        e_min_ev: f64,
        e_max_ev: f64,
        livetime_s: f64,
        counts: Vec<f64>,
    ) -> Result<Self, SpectrumError> {
        let mut spectrum = Self::new(e_min_ev, e_max_ev, counts.len().max(1), livetime_s)?;
        if counts.is_empty() {
            return Err(SpectrumError::InvalidBins { n_bins: 0 });
        }
        if let Some(&bad) = counts.iter().find(|c| !(**c >= 0.0) || !c.is_finite()) {
            return Err(SpectrumError::InvalidCounts { value: bad });
        }
        spectrum.counts = counts;
        Ok(spectrum)
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.to_string();
        self
    }

    pub fn e_min_ev(&self) -> f64 {
        self.e_min_ev
    }

    pub fn e_max_ev(&self) -> f64 {
        self.e_max_ev
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn livetime_s(&self) -> f64 {
        self.livetime_s
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn overflow(&self) -> f64 {
        self.overflow
    }

    pub fn underflow(&self) -> f64 {
        self.underflow
    }

    pub fn bin_width_ev(&self) -> f64 {
        (self.e_max_ev - self.e_min_ev) / self.n_bins as f64
    }

    pub fn bin_low_ev(&self, index: usize) -> f64 {
        self.e_min_ev + index as f64 * self.bin_width_ev()
    }

    pub fn bin_center_ev(&self, index: usize) -> f64 {
        self.e_min_ev + (index as f64 + 0.5) * self.bin_width_ev()
    }

    /// Sum of all in-range bin contents.
    pub fn total_in_range(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// In-range total plus the underflow/overflow tallies.
    pub fn grand_total(&self) -> f64 {
        self.total_in_range() + self.overflow + self.underflow
    }

    /// True when no fill has landed anywhere, tallies included.
    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0.0) && self.overflow == 0.0 && self.underflow == 0.0
    }

    /// Record one count at `energy_ev`. Energies below the range go to the
    /// underflow tally, energies at or above `e_max` to the overflow tally.
    pub fn fill(&mut self, energy_ev: f64) {
        let t = (energy_ev - self.e_min_ev) / self.bin_width_ev();
        let r = t.round();
        // snap near-edge energies onto the edge (half-open: edge -> upper bin)
        let idx = if (t - r).abs() <= EDGE_SNAP { r } else { t.floor() };
        if idx < 0.0 || energy_ev.is_nan() {
            self.underflow += 1.0;
        } else if idx >= self.n_bins as f64 {
            self.overflow += 1.0;
        } else {
            self.counts[idx as usize] += 1.0;
        }
    }

    pub fn same_binning(&self, other: &Self) -> bool {
        self.e_min_ev == other.e_min_ev
            && self.e_max_ev == other.e_max_ev
            && self.n_bins == other.n_bins
    }

    /// Bin-wise addition of another spectrum's counts and tallies.
    pub fn add_counts(&mut self, other: &Self) -> Result<(), SpectrumError> {
        if !self.same_binning(other) {
            return Err(SpectrumError::BinningMismatch(format!(
                "cannot add [{}, {}) x {} onto [{}, {}) x {}",
                other.e_min_ev,
                other.e_max_ev,
                other.n_bins,
                self.e_min_ev,
                self.e_max_ev,
                self.n_bins
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.overflow += other.overflow;
        self.underflow += other.underflow;
        Ok(())
    }

    // Largest bin-edge index at or below `e`, with edge snapping.
    fn edge_index_floor(&self, e: f64) -> isize {
        let t = (e - self.e_min_ev) / self.bin_width_ev();
        let r = t.round();
        if (t - r).abs() <= EDGE_SNAP {
            r as isize
        } else {
            t.floor() as isize
        }
    }

    // Smallest bin-edge index at or above `e`, with edge snapping.
    fn edge_index_ceil(&self, e: f64) -> isize {
        let t = (e - self.e_min_ev) / self.bin_width_ev();
        let r = t.round();
        if (t - r).abs() <= EDGE_SNAP {
            r as isize
        } else {
            t.ceil() as isize
        }
    }

    /// Counts in the window `[lo, hi]` after snapping its edges outward to
    /// bin boundaries; the window is clipped to the spectrum range.
    pub fn window_counts(&self, lo_ev: f64, hi_ev: f64) -> f64 {
        let (i0, i1) = self.snapped_window_bins(lo_ev, hi_ev);
        self.counts[i0..i1].iter().sum()
    }

    /// Bin index range `[i0, i1)` covering `[lo, hi]`, edges snapped outward.
    pub fn snapped_window_bins(&self, lo_ev: f64, hi_ev: f64) -> (usize, usize) {
        let n = self.n_bins as isize;
        let i0 = self.edge_index_floor(lo_ev).clamp(0, n) as usize;
        let i1 = self.edge_index_ceil(hi_ev).clamp(0, n) as usize;
        (i0, i1.max(i0))
    }

    /// Serialize to the plain-text exchange format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# label={}", self.label).unwrap();
        writeln!(s, "# livetime_s={}", self.livetime_s).unwrap();
        writeln!(
            s,
            "# e_min_ev={} e_max_ev={} n_bins={}",
            self.e_min_ev, self.e_max_ev, self.n_bins
        )
        .unwrap();
        writeln!(s, "# overflow={} underflow={}", self.overflow, self.underflow).unwrap();
        for i in 0..self.n_bins {
            writeln!(
                s,
                "{} {} {}",
                self.bin_low_ev(i),
                self.bin_low_ev(i + 1),
                self.counts[i]
            )
            .unwrap();
        }
        s
    }

    /// Parse the plain-text exchange format written by [`to_text`].
    ///
    /// [`to_text`]: EnergySpectrum::to_text
    pub fn from_text(text: &str) -> Result<Self, SpectrumError> {
        fn fail(line: usize, msg: impl Into<String>) -> SpectrumError {
            SpectrumError::Format {
                line,
                msg: msg.into(),
            }
        }
        fn field<T: std::str::FromStr>(
            token: &str,
            key: &str,
            line: usize,
        ) -> Result<T, SpectrumError> {
            let value = token
                .strip_prefix(key)
                .and_then(|rest| rest.strip_prefix('='))
                .ok_or_else(|| fail(line, format!("expected `{key}=<value>`, got `{token}`")))?;
            value
                .parse()
                .map_err(|_| fail(line, format!("cannot parse `{value}` for `{key}`")))
        }

        let mut lines = text.lines().enumerate();
        let (ln, label_line) = lines.next().ok_or_else(|| fail(1, "empty input"))?;
        let label = label_line
            .strip_prefix("# label=")
            .ok_or_else(|| fail(ln + 1, "expected `# label=<text>`"))?
            .to_string();

        let (ln, lt_line) = lines.next().ok_or_else(|| fail(2, "missing livetime line"))?;
        let body = lt_line
            .strip_prefix("# ")
            .ok_or_else(|| fail(ln + 1, "expected `# livetime_s=<real>`"))?;
        let livetime_s: f64 = field(body, "livetime_s", ln + 1)?;

        let (ln, range_line) = lines.next().ok_or_else(|| fail(3, "missing range line"))?;
        let body = range_line
            .strip_prefix("# ")
            .ok_or_else(|| fail(ln + 1, "expected `# e_min_ev=... e_max_ev=... n_bins=...`"))?;
        let mut tokens = body.split_whitespace();
        let e_min_ev: f64 = field(tokens.next().unwrap_or(""), "e_min_ev", ln + 1)?;
        let e_max_ev: f64 = field(tokens.next().unwrap_or(""), "e_max_ev", ln + 1)?;
        let n_bins: usize = field(tokens.next().unwrap_or(""), "n_bins", ln + 1)?;

        let (ln, tally_line) = lines.next().ok_or_else(|| fail(4, "missing tally line"))?;
        let body = tally_line
            .strip_prefix("# ")
            .ok_or_else(|| fail(ln + 1, "expected `# overflow=... underflow=...`"))?;
        let mut tokens = body.split_whitespace();
        let overflow: f64 = field(tokens.next().unwrap_or(""), "overflow", ln + 1)?;
        let underflow: f64 = field(tokens.next().unwrap_or(""), "underflow", ln + 1)?;

        let mut spectrum = Self::new(e_min_ev, e_max_ev, n_bins, livetime_s)?;
        spectrum.label = label;
        spectrum.overflow = overflow;
        spectrum.underflow = underflow;

        let width = spectrum.bin_width_ev();
        let mut filled = 0usize;
        for (ln, row) in &mut lines {
            if row.trim().is_empty() {
                continue;
            }
            if filled >= n_bins {
                return Err(fail(ln + 1, format!("more than {n_bins} bin rows")));
            }
            let mut tokens = row.split_whitespace();
            let lo: f64 = tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| fail(ln + 1, "bad bin row, expected `<lo> <hi> <counts>`"))?;
            let hi: f64 = tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| fail(ln + 1, "bad bin row, expected `<lo> <hi> <counts>`"))?;
            let counts: f64 = tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| fail(ln + 1, "bad bin row, expected `<lo> <hi> <counts>`"))?;
            if tokens.next().is_some() {
                return Err(fail(ln + 1, "trailing tokens on bin row"));
            }
            let expect_lo = spectrum.bin_low_ev(filled);
            let expect_hi = spectrum.bin_low_ev(filled + 1);
            if (lo - expect_lo).abs() > 1e-6 * width || (hi - expect_hi).abs() > 1e-6 * width {
                return Err(fail(
                    ln + 1,
                    format!("bin edges [{lo}, {hi}] disagree with header binning"),
                ));
            }
            if !(counts >= 0.0) {
                return Err(fail(ln + 1, format!("negative or NaN counts {counts}")));
            }
            spectrum.counts[filled] = counts;
            filled += 1;
        }
        if filled != n_bins {
            return Err(fail(0, format!("expected {n_bins} bin rows, found {filled}")));
        }
        Ok(spectrum)
    }
}

/// One spectral line: a delta component at `centroid_ev` carrying a total
/// expected count, smeared by the detector response during analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineModel {
    pub centroid_ev: f64,
    /// Expected total counts attributed to the line.
    pub intensity: f64,
    pub kind: LineKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineKind {
    /// Normal transition into a singly-occupied ground state.
    Allowed,
    /// Exclusion-principle-violating transition into the filled ground
    /// state; sits below the allowed line because of the extra screening.
    Forbidden,
}

/// Smooth background component with an analytic integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContinuumShape {
    Flat {
        /// counts / eV / s
        rate_density: f64,
    },
    Linear {
        /// counts / eV / s at the low edge of the range
        rate_density_min: f64,
        /// counts / eV / s at the high edge of the range
        rate_density_max: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumModel {
    shape: ContinuumShape,
    e_min_ev: f64,
    e_max_ev: f64,
}

impl ContinuumModel {
    pub fn new(shape: ContinuumShape, e_min_ev: f64, e_max_ev: f64) -> Result<Self, SpectrumError> {
        if !(e_min_ev < e_max_ev) || !e_min_ev.is_finite() || !e_max_ev.is_finite() {
            return Err(SpectrumError::InvalidRange {
                e_min: e_min_ev,
                e_max: e_max_ev,
            });
        }
        let ok = match shape {
            ContinuumShape::Flat { rate_density } => rate_density >= 0.0 && rate_density.is_finite(),
            ContinuumShape::Linear {
                rate_density_min,
                rate_density_max,
            } => {
                rate_density_min >= 0.0
                    && rate_density_max >= 0.0
                    && rate_density_min.is_finite()
                    && rate_density_max.is_finite()
            }
        };
        if !ok {
            return Err(SpectrumError::InvalidContinuum(
                "rate densities must be finite and >= 0".into(),
            ));
        }
        Ok(Self {
            shape,
            e_min_ev,
            e_max_ev,
        })
    }

    pub fn shape(&self) -> ContinuumShape {
        self.shape
    }

    pub fn e_min_ev(&self) -> f64 {
        self.e_min_ev
    }

    pub fn e_max_ev(&self) -> f64 {
        self.e_max_ev
    }

    /// Rate density (counts/eV/s) at energy `e`, zero outside the range.
    pub fn rate_density_at(&self, e_ev: f64) -> f64 {
        if e_ev < self.e_min_ev || e_ev >= self.e_max_ev {
            return 0.0;
        }
        match self.shape {
            ContinuumShape::Flat { rate_density } => rate_density,
            ContinuumShape::Linear {
                rate_density_min,
                rate_density_max,
            } => {
                let f = (e_ev - self.e_min_ev) / (self.e_max_ev - self.e_min_ev);
                rate_density_min + f * (rate_density_max - rate_density_min)
            }
        }
    }

    /// Integrated rate (counts/s) over `[lo, hi]` clipped to the range.
    pub fn integral_cps(&self, lo_ev: f64, hi_ev: f64) -> f64 {
        let lo = lo_ev.max(self.e_min_ev);
        let hi = hi_ev.min(self.e_max_ev);
        if !(lo < hi) {
            return 0.0;
        }
        match self.shape {
            ContinuumShape::Flat { rate_density } => rate_density * (hi - lo),
            ContinuumShape::Linear { .. } => {
                // trapezoid: mean density x width (clip endpoints inside range
                // so rate_density_at does not see the half-open upper edge)
                let d_lo = self.rate_density_at(lo);
                let f_hi = (hi - self.e_min_ev) / (self.e_max_ev - self.e_min_ev);
                let d_hi = match self.shape {
                    ContinuumShape::Linear {
                        rate_density_min,
                        rate_density_max,
                    } => rate_density_min + f_hi * (rate_density_max - rate_density_min),
                    ContinuumShape::Flat { rate_density } => rate_density,
                };
                0.5 * (d_lo + d_hi) * (hi - lo)
            }
        }
    }

    /// Total rate (counts/s) over the whole range.
    pub fn total_rate_cps(&self) -> f64 {
        self.integral_cps(self.e_min_ev, self.e_max_ev)
    }

    /// Draw one energy from the continuum shape treated as a pdf over the
    /// range. A shape that integrates to zero falls back to uniform.
    pub fn sample_energy_ev<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let span = self.e_max_ev - self.e_min_ev;
        match self.shape {
            ContinuumShape::Flat { .. } => self.e_min_ev + u * span,
            ContinuumShape::Linear {
                rate_density_min: d0,
                rate_density_max: d1,
            } => {
                if d0 + d1 <= 0.0 || d0 == d1 {
                    return self.e_min_ev + u * span;
                }
                // invert the quadratic CDF of the trapezoidal density
                let disc = (d0 * d0 + u * (d1 * d1 - d0 * d0)).max(0.0);
                let f = (disc.sqrt() - d0) / (d1 - d0);
                self.e_min_ev + f.clamp(0.0, 1.0) * span
            }
        }
    }
}

/// Gaussian detector response: FWHM at a reference energy, optionally
/// scaling like sqrt(E) (statistics-limited) instead of staying constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseModel {
    fwhm_ref_ev: f64,
    e_ref_ev: f64,
    fano_like_scaling: bool,
}

impl ResponseModel {
    pub fn new(
        fwhm_ref_ev: f64,
        e_ref_ev: f64,
        fano_like_scaling: bool,
    ) -> Result<Self, SpectrumError> {
        if !(fwhm_ref_ev > 0.0) || !fwhm_ref_ev.is_finite() {
            return Err(SpectrumError::InvalidResponse(format!(
                "fwhm_ref must be > 0 (got {fwhm_ref_ev})"
            )));
        }
        if !(e_ref_ev > 0.0) || !e_ref_ev.is_finite() {
            return Err(SpectrumError::InvalidResponse(format!(
                "e_ref must be > 0 (got {e_ref_ev})"
            )));
        }
        Ok(Self {
            fwhm_ref_ev,
            e_ref_ev,
            fano_like_scaling,
        })
    }

    pub fn fwhm_ref_ev(&self) -> f64 {
        self.fwhm_ref_ev
    }

    pub fn e_ref_ev(&self) -> f64 {
        self.e_ref_ev
    }

    pub fn fano_like_scaling(&self) -> bool {
        self.fano_like_scaling
    }

    pub fn fwhm_at_ev(&self, e_ev: f64) -> f64 {
        if self.fano_like_scaling {
            self.fwhm_ref_ev * (e_ev.max(0.0) / self.e_ref_ev).sqrt()
        } else {
            self.fwhm_ref_ev
        }
    }

    pub fn sigma_at_ev(&self, e_ev: f64) -> f64 {
        self.fwhm_at_ev(e_ev) / FWHM_OVER_SIGMA
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Fraction of a Gaussian of mean `centroid` and width `sigma` that falls
/// inside `[lo, hi]`. A zero-width Gaussian is an indicator on `[lo, hi)`.
pub fn gaussian_window_fraction(centroid_ev: f64, sigma_ev: f64, lo_ev: f64, hi_ev: f64) -> f64 {
    if sigma_ev <= 0.0 {
        return if centroid_ev >= lo_ev && centroid_ev < hi_ev {
            1.0
        } else {
            0.0
        };
    }
    std_normal_cdf((hi_ev - centroid_ev) / sigma_ev) - std_normal_cdf((lo_ev - centroid_ev) / sigma_ev)
}

/// Redistribute every bin's content under the Gaussian response kernel
/// centered on the bin center.
///
/// Mass smeared beyond `[e_min, e_max)` (plus the tiny kernel-truncation
/// remainder) is added to the underflow/overflow tallies, so the grand total
/// of the output equals the grand total of the input up to rounding.
pub fn convolve_response(ideal: &EnergySpectrum, response: &ResponseModel) -> EnergySpectrum {
    let mut out = ideal.clone();
    out.counts.iter_mut().for_each(|c| *c = 0.0);
    let n = ideal.n_bins;
    let w = ideal.bin_width_ev();
    for i in 0..n {
        let c = ideal.counts[i];
        if c == 0.0 {
            continue;
        }
        let center = ideal.bin_center_ev(i);
        let sigma = response.sigma_at_ev(center);
        if sigma <= 0.0 {
            out.counts[i] += c;
            continue;
        }
        let reach = KERNEL_CUTOFF_SIGMA * sigma;
        let j0 = (((center - reach) - ideal.e_min_ev) / w).floor().max(0.0) as usize;
        let j1 = ((((center + reach) - ideal.e_min_ev) / w).ceil().min(n as f64)).max(0.0) as usize;
        let mut placed = 0.0;
        if j0 < j1 {
            let mut cdf_prev = std_normal_cdf((ideal.bin_low_ev(j0) - center) / sigma);
            for j in j0..j1 {
                let cdf = std_normal_cdf((ideal.bin_low_ev(j + 1) - center) / sigma);
                let mass = c * (cdf - cdf_prev);
                out.counts[j] += mass;
                placed += mass;
                cdf_prev = cdf;
            }
        }
        // spill-out by subtraction keeps the total balance exact
        let spill = (c - placed).max(0.0);
        let below = (c * std_normal_cdf((ideal.e_min_ev - center) / sigma)).min(spill);
        out.underflow += below;
        out.overflow += spill - below;
    }
    out
}

/// Expected counts in `[window.0, window.1]`: the continuum integral times
/// livetime plus each line's intensity weighted by the fraction of its
/// response Gaussian inside the window.
pub fn expected_counts_in_window(
    lines: &[LineModel],
    continuum: &ContinuumModel,
    response: &ResponseModel,
    window: (f64, f64),
    livetime_s: f64,
) -> Result<f64, SpectrumError> {
    let (lo, hi) = window;
    if !(lo < hi) || lo < continuum.e_min_ev() || hi > continuum.e_max_ev() {
        return Err(SpectrumError::WindowOutOfRange {
            lo,
            hi,
            e_min: continuum.e_min_ev(),
            e_max: continuum.e_max_ev(),
        });
    }
    let mut total = continuum.integral_cps(lo, hi) * livetime_s;
    for line in lines {
        let sigma = response.sigma_at_ev(line.centroid_ev);
        total += line.intensity * gaussian_window_fraction(line.centroid_ev, sigma, lo, hi);
    }
    Ok(total)
}

/// Relative difference of the window count rates of two spectra:
/// `|Ra - Rb| / max(Ra, Rb)` with `R = window counts / livetime`.
/// Symmetric; 0 when both rates vanish.
pub fn compare_spectra(
    a: &EnergySpectrum,
    b: &EnergySpectrum,
    window: (f64, f64),
) -> Result<f64, SpectrumError> {
    if !a.same_binning(b) {
        return Err(SpectrumError::BinningMismatch(format!(
            "[{}, {}) x {} vs [{}, {}) x {}",
            a.e_min_ev, a.e_max_ev, a.n_bins, b.e_min_ev, b.e_max_ev, b.n_bins
        )));
    }
    let ra = a.window_counts(window.0, window.1) / a.livetime_s;
    let rb = b.window_counts(window.0, window.1) / b.livetime_s;
    let m = ra.max(rb);
    Ok(if m == 0.0 { 0.0 } else { (ra - rb).abs() / m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn default_response() -> ResponseModel {
        ResponseModel::new(180.0, 8048.0, false).unwrap()
    }

    #[test]
    fn new_spectrum_is_all_zero_with_exact_metadata() {
        let s = EnergySpectrum::new(7000.0, 9500.0, 250, 86400.0).unwrap();
        assert_eq!(s.n_bins(), 250);
        assert_eq!(s.bin_width_ev(), 10.0);
        assert_eq!(s.e_min_ev(), 7000.0);
        assert_eq!(s.e_max_ev(), 9500.0);
        assert_eq!(s.livetime_s(), 86400.0);
        assert!(s.counts().iter().all(|&c| c == 0.0));
        assert!(s.is_empty());
    }

    #[test]
    fn new_spectrum_rejects_zero_bins() {
        assert_eq!(
            EnergySpectrum::new(7000.0, 9500.0, 0, 86400.0),
            Err(SpectrumError::InvalidBins { n_bins: 0 })
        );
    }

    #[test]
    fn new_spectrum_rejects_inverted_range() {
        assert_eq!(
            EnergySpectrum::new(9500.0, 7000.0, 250, 86400.0),
            Err(SpectrumError::InvalidRange {
                e_min: 9500.0,
                e_max: 7000.0
            })
        );
    }

    #[test]
    fn new_spectrum_rejects_nonpositive_livetime() {
        assert!(matches!(
            EnergySpectrum::new(7000.0, 9500.0, 250, 0.0),
            Err(SpectrumError::InvalidLivetime { .. })
        ));
    }

    #[test]
    fn fill_lands_in_the_containing_bin() {
        let mut s = EnergySpectrum::new(7000.0, 9500.0, 250, 86400.0).unwrap();
        s.fill(8048.0);
        assert_eq!(s.counts()[104], 1.0); // [8040, 8050)
        assert_eq!(s.total_in_range(), 1.0);
    }

    #[test]
    fn fill_below_range_is_tallied_not_dropped() {
        let mut s = EnergySpectrum::new(7000.0, 9500.0, 250, 86400.0).unwrap();
        s.fill(6999.9);
        assert!(s.counts().iter().all(|&c| c == 0.0));
        assert_eq!(s.underflow() + s.overflow(), 1.0);
        assert_eq!(s.underflow(), 1.0);
        assert_eq!(s.grand_total(), 1.0);
    }

    #[test]
    fn repeated_fills_accumulate() {
        let mut s = EnergySpectrum::new(7000.0, 9500.0, 250, 86400.0).unwrap();
        for _ in 0..1000 {
            s.fill(8048.0);
        }
        assert_eq!(s.counts()[104], 1000.0);
        assert_eq!(s.total_in_range(), 1000.0);
    }

    #[test]
    fn fill_at_exact_edge_goes_to_upper_bin() {
        let mut s = EnergySpectrum::new(7000.0, 9500.0, 250, 86400.0).unwrap();
        s.fill(7010.0);
        assert_eq!(s.counts()[1], 1.0);
        s.fill(7000.0);
        assert_eq!(s.counts()[0], 1.0);
        s.fill(9500.0);
        assert_eq!(s.overflow(), 1.0);
    }

    #[test]
    fn convolution_conserves_a_delta_line_and_matches_quadrature() {
        let mut ideal = EnergySpectrum::new(7000.0, 9500.0, 250, 86400.0).unwrap();
        let total = 1e6;
        ideal.counts[104] = total; // bin center 8045 eV
        let response = default_response();
        let smeared = convolve_response(&ideal, &response);

        assert_relative_eq!(smeared.grand_total(), total, max_relative = 1e-9);

        // independent oracle: Simpson quadrature of the Gaussian density over
        // each bin, 64 panels per bin
        let mu = 8045.0;
        let sigma = response.sigma_at_ev(mu);
        let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        let density = |e: f64| norm * (-0.5 * ((e - mu) / sigma).powi(2)).exp();
        for i in 0..smeared.n_bins() {
            let (lo, hi) = (smeared.bin_low_ev(i), smeared.bin_low_ev(i + 1));
            let panels = 64;
            let h = (hi - lo) / panels as f64;
            let mut acc = density(lo) + density(hi);
            for k in 1..panels {
                let x = lo + k as f64 * h;
                acc += if k % 2 == 1 { 4.0 } else { 2.0 } * density(x);
            }
            let expected = total * acc * h / 3.0;
            assert_abs_diff_eq!(smeared.counts()[i], expected, epsilon = 1e-9 * total);
        }
    }

    #[test]
    fn convolution_of_zero_spectrum_is_zero() {
        let ideal = EnergySpectrum::new(7000.0, 9500.0, 250, 86400.0).unwrap();
        let smeared = convolve_response(&ideal, &default_response());
        assert!(smeared.is_empty());
    }

    #[test]
    fn convolution_is_linear() {
        let mut a = EnergySpectrum::new(7000.0, 9500.0, 250, 86400.0).unwrap();
        let mut b = a.clone();
        a.counts[30] = 1234.0;
        b.counts[200] = 567.0;
        let response = default_response();

        let mut sum = a.clone();
        sum.add_counts(&b).unwrap();
        let conv_sum = convolve_response(&sum, &response);

        let mut sum_of_conv = convolve_response(&a, &response);
        sum_of_conv.add_counts(&convolve_response(&b, &response)).unwrap();

        for i in 0..conv_sum.n_bins() {
            assert_relative_eq!(
                conv_sum.counts()[i],
                sum_of_conv.counts()[i],
                max_relative = 1e-12,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn expected_counts_flat_continuum_times_livetime() {
        let continuum = ContinuumModel::new(
            ContinuumShape::Flat { rate_density: 0.001 },
            7000.0,
            9500.0,
        )
        .unwrap();
        let n = expected_counts_in_window(
            &[],
            &continuum,
            &default_response(),
            (7500.0, 7830.0),
            1e5,
        )
        .unwrap();
        assert_relative_eq!(n, 33000.0, max_relative = 1e-12);
    }

    #[test]
    fn expected_counts_line_fully_inside_wide_window() {
        let continuum =
            ContinuumModel::new(ContinuumShape::Flat { rate_density: 0.0 }, 7000.0, 9500.0)
                .unwrap();
        let line = LineModel {
            centroid_ev: 8048.0,
            intensity: 420.0,
            kind: LineKind::Allowed,
        };
        let n = expected_counts_in_window(
            &[line],
            &continuum,
            &default_response(),
            (7000.0, 9500.0),
            1.0,
        )
        .unwrap();
        assert_relative_eq!(n, 420.0, max_relative = 1e-12);
    }

    #[test]
    fn expected_counts_line_on_window_edge_is_half() {
        let continuum =
            ContinuumModel::new(ContinuumShape::Flat { rate_density: 0.0 }, 7000.0, 9500.0)
                .unwrap();
        let line = LineModel {
            centroid_ev: 8000.0,
            intensity: 1.0,
            kind: LineKind::Allowed,
        };
        let n = expected_counts_in_window(
            &[line],
            &continuum,
            &default_response(),
            (8000.0, 9500.0),
            1.0,
        )
        .unwrap();
        assert_abs_diff_eq!(n, 0.5, epsilon = 1e-6);
    }

    #[test]
    fn expected_counts_rejects_window_outside_range() {
        let continuum =
            ContinuumModel::new(ContinuumShape::Flat { rate_density: 1.0 }, 7000.0, 9500.0)
                .unwrap();
        assert!(matches!(
            expected_counts_in_window(&[], &continuum, &default_response(), (6000.0, 8000.0), 1.0),
            Err(SpectrumError::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn compare_identical_spectra_is_zero() {
        let mut a = EnergySpectrum::new(7000.0, 9500.0, 250, 100.0).unwrap();
        a.fill(8000.0);
        assert_eq!(compare_spectra(&a, &a, (7000.0, 9500.0)).unwrap(), 0.0);
    }

    #[test]
    fn compare_rates_thirteen_to_ten() {
        // rates 1.3 vs 1.0 per unit livetime -> |1.3 - 1.0| / 1.3
        let mut a = EnergySpectrum::new(7000.0, 9500.0, 250, 100.0).unwrap();
        let mut b = a.clone();
        a.counts[50] = 130.0;
        b.counts[50] = 100.0;
        let d = compare_spectra(&a, &b, (7000.0, 9500.0)).unwrap();
        assert_relative_eq!(d, 0.3 / 1.3, max_relative = 1e-12);
        assert_abs_diff_eq!(d, 0.2308, epsilon = 1e-4);
    }

    #[test]
    fn compare_empty_vs_nonempty_is_one() {
        let a = EnergySpectrum::new(7000.0, 9500.0, 250, 100.0).unwrap();
        let mut b = a.clone();
        b.counts[10] = 5.0;
        assert_eq!(compare_spectra(&a, &b, (7000.0, 9500.0)).unwrap(), 1.0);
    }

    #[test]
    fn compare_rejects_binning_mismatch() {
        let a = EnergySpectrum::new(7000.0, 9500.0, 250, 100.0).unwrap();
        let b = EnergySpectrum::new(7000.0, 9500.0, 100, 100.0).unwrap();
        assert!(matches!(
            compare_spectra(&a, &b, (7000.0, 9500.0)),
            Err(SpectrumError::BinningMismatch(_))
        ));
    }

    #[test]
    fn text_round_trip_is_lossless() {
        let mut s = EnergySpectrum::new(7000.0, 9500.0, 250, 86400.0)
            .unwrap()
            .with_label("on run");
        s.fill(8048.0);
        s.fill(6999.0);
        s.fill(9750.3);
        let text = s.to_text();
        let back = EnergySpectrum::from_text(&text).unwrap();
        assert_eq!(s, back);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn from_text_rejects_mangled_header() {
        let err = EnergySpectrum::from_text("# lebal=x\n").unwrap_err();
        assert!(matches!(err, SpectrumError::Format { line: 1, .. }));
    }

    #[test]
    fn linear_continuum_integral_and_density() {
        let c = ContinuumModel::new(
            ContinuumShape::Linear {
                rate_density_min: 0.0,
                rate_density_max: 2.0,
            },
            0.0,
            100.0,
        )
        .unwrap();
        assert_relative_eq!(c.total_rate_cps(), 100.0, max_relative = 1e-12);
        assert_relative_eq!(c.rate_density_at(50.0), 1.0, max_relative = 1e-12);
        assert_relative_eq!(c.integral_cps(0.0, 50.0), 25.0, max_relative = 1e-12);
    }

    #[test]
    fn response_fano_scaling_grows_with_sqrt_energy() {
        let r = ResponseModel::new(180.0, 8048.0, true).unwrap();
        assert_relative_eq!(r.fwhm_at_ev(8048.0), 180.0, max_relative = 1e-12);
        assert_relative_eq!(
            r.fwhm_at_ev(4.0 * 8048.0),
            360.0,
            max_relative = 1e-12
        );
    }
}
