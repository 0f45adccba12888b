//! Minimum-phase rational filter recovery from a channel log-magnitude, and impulse response synthesis.

mod fit;
pub mod poly;

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::AudioBuffer;
use crate::channel::ChannelEstimate;
use crate::error::{Error, Result};

pub use fit::{
    fit_minimum_phase_filter, EquationError, FilterFitter, FitOutcome, FitWarnings, FitterRegistry, Prony,
    SteiglitzMcBride, DEFAULT_FITTER,
};

/// Zero-padding factor of the cepstral Hilbert transform.
pub const HILBERT_PAD: usize = 8;
/// Poles and zeros must lie strictly inside this radius.
pub const STABILITY_RADIUS: f64 = 1.0 - 1e-8;
pub const MIN_IR_SECONDS: f64 = 2.0;
pub const MAX_IR_SECONDS: f64 = 8.0;

/// One-sided frequency response on `n_bins` uniform points from DC to Nyquist.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexResponse {
    pub values: Vec<Complex64>,
    pub bin_hz: f64,
}

impl ComplexResponse {
    pub fn n_bins(&self) -> usize {
        self.values.len()
    }

    /// Angular frequency of bin `k` in radians per sample.
    pub fn omega(&self, k: usize) -> f64 {
        PI * k as f64 / (self.n_bins() - 1) as f64
    }

    /// The `2 (n_bins - 1)`-point two-sided grid implied by conjugate symmetry.
    pub fn full_grid(&self) -> Vec<Complex64> {
        let n = 2 * (self.n_bins() - 1);
        let mut out = Vec::with_capacity(n);
        out.extend_from_slice(&self.values);
        out.extend((1..self.n_bins() - 1).rev().map(|k| self.values[k].conj()));
        out
    }
}

/// `B(z) / A(z)` with `A(z) = 1 + a[0] z^-1 + ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalFilter {
    b: Vec<f64>,
    a: Vec<f64>,
}

impl DigitalFilter {
    /// Validates finiteness and pole placement.
    pub fn new(b: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        if b.is_empty() {
            return Err(Error::InvalidArgument("numerator needs at least one coefficient".into()));
        }
        if !b.iter().chain(&a).all(|v| v.is_finite()) {
            return Err(Error::DegenerateTarget("non-finite filter coefficients".into()));
        }
        let f = Self { b, a };
        if let Some(p) = f.poles().into_iter().find(|p| p.norm() >= STABILITY_RADIUS) {
            return Err(Error::InvalidArgument(format!("unstable pole at |z| = {}", p.norm())));
        }
        Ok(f)
    }

    pub fn identity() -> Self {
        Self {
            b: vec![1.0],
            a: Vec::new(),
        }
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Denominator coefficients after the implicit leading 1.
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn denominator(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.a.iter().copied()).collect()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        poly::roots(&self.denominator())
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        poly::roots(&self.b)
    }

    pub fn response_at(&self, omega: f64) -> Complex64 {
        poly::eval_unit_circle(&self.b, omega) / poly::eval_unit_circle(&self.denominator(), omega)
    }

    pub fn frequency_response(&self, n_bins: usize, bin_hz: f64) -> ComplexResponse {
        let values = (0..n_bins)
            .map(|k| self.response_at(PI * k as f64 / (n_bins - 1) as f64))
            .collect();
        ComplexResponse { values, bin_hz }
    }

    /// Samples until the slowest pole has decayed by 1e-9.
    pub fn decay_bound_samples(&self) -> usize {
        let r = self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max);
        if r <= 0.0 {
            return self.b.len().max(1);
        }
        ((1e-9f64).ln() / r.ln()).ceil() as usize + self.b.len()
    }

    /// Rows of `coefficient,index,value` for `b` then `a`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["coefficient", "index", "value"])?;
        for (name, coeffs, offset) in [("b", &self.b, 0), ("a", &self.a, 1)] {
            for (i, v) in coeffs.iter().enumerate() {
                w.write_record([name.to_string(), (i + offset).to_string(), v.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn linear_interp(values: &[f64], x: f64) -> f64 {
    let i = (x.floor() as usize).min(values.len() - 2);
    let t = x - i as f64;
    values[i] * (1.0 - t) + values[i + 1] * t
}

/// Minimum-phase response whose magnitude is `exp(log_magnitude)`.
///
/// The phase comes from the folded real cepstrum of the log-magnitude, linearly interpolated
/// onto a grid `HILBERT_PAD` times finer to limit cepstral aliasing.
pub fn minimum_phase_target(estimate: &ChannelEstimate) -> Result<ComplexResponse> {
    let logmag = &estimate.log_magnitude;
    let n_bins = logmag.len();
    if n_bins < 2 {
        return Err(Error::InvalidArgument("channel estimate needs at least two bins".into()));
    }
    if !logmag.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("channel estimate has non-finite values".into()));
    }
    let n_fine = (HILBERT_PAD * 2 * (n_bins - 1)).next_power_of_two();
    let half = n_fine / 2;
    let ratio = (n_bins - 1) as f64 / half as f64;

    let mut spec: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); n_fine];
    for k in 0..=half {
        let v = linear_interp(logmag, k as f64 * ratio);
        spec[k] = Complex64::new(v, 0.0);
        if k > 0 && k < half {
            spec[n_fine - k] = spec[k];
        }
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(n_fine).process(&mut spec);
    let scale = 1.0 / n_fine as f64;
    // Fold the real cepstrum onto positive quefrencies.
    for (n, c) in spec.iter_mut().enumerate() {
        let w = match n {
            0 => 1.0,
            n if n < half => 2.0,
            n if n == half => 1.0,
            _ => 0.0,
        };
        *c = Complex64::new(c.re * scale * w, 0.0);
    }
    planner.plan_fft_forward(n_fine).process(&mut spec);
    let fine_phase: Vec<f64> = spec[..=half].iter().map(|c| c.im).collect();

    let values = logmag
        .iter()
        .enumerate()
        .map(|(k, &lm)| {
            let phase = linear_interp(&fine_phase, k as f64 / ratio);
            Complex64::from_polar(lm.exp(), phase)
        })
        .collect();
    Ok(ComplexResponse {
        values,
        bin_hz: estimate.bin_hz,
    })
}

/// Response of the filter to a unit impulse, by direct-form recursion.
pub fn impulse_response(filter: &DigitalFilter, length_samples: usize, sample_rate_hz: u32) -> Result<AudioBuffer> {
    if length_samples == 0 {
        return Err(Error::InvalidArgument("impulse response length must be positive".into()));
    }
    let (b, a) = (filter.b(), filter.a());
    let mut y = vec![0.0; length_samples];
    for n in 0..length_samples {
        let mut acc = b.get(n).copied().unwrap_or(0.0);
        for (i, ai) in a.iter().enumerate() {
            if n > i {
                acc -= ai * y[n - i - 1];
            }
        }
        y[n] = acc;
    }
    AudioBuffer::new(y, sample_rate_hz)
}

/// `max(MIN_IR_SECONDS, pole decay bound)`, capped at `MAX_IR_SECONDS`.
pub fn default_ir_length(filter: &DigitalFilter, sample_rate_hz: u32) -> usize {
    let fs = sample_rate_hz as f64;
    let min = (MIN_IR_SECONDS * fs).round() as usize;
    let max = (MAX_IR_SECONDS * fs).round() as usize;
    filter.decay_bound_samples().clamp(min, max)
}
