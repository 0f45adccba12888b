//! Zero-phase Butterworth bandpass built from second-order sections.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Order of the lowpass prototype; the bandpass has twice as many poles.
pub const PROTOTYPE_ORDER: usize = 2;
/// Realized upper edges are kept below this fraction of Nyquist.
pub const MAX_EDGE_FRACTION: f64 = 0.95;

/// `g (1 - z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Section {
    gain: f64,
    a1: f64,
    a2: f64,
}

impl Section {
    fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        (1.0 - z2) * self.gain / (1.0 + z1 * self.a1 + z2 * self.a2)
    }

    fn pole_radius(&self) -> f64 {
        self.a2.abs().sqrt()
    }

    fn filter_in_place(&self, x: &mut [f64]) {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for v in x.iter_mut() {
            let y = self.gain * (*v - x2) - self.a1 * y1 - self.a2 * y2;
            x2 = x1;
            x1 = *v;
            y2 = y1;
            y1 = y;
            *v = y;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bandpass {
    sections: Vec<Section>,
    /// Edges actually realized, after the Nyquist guard.
    pub f_l: f64,
    pub f_u: f64,
}

impl Bandpass {
    pub fn design(f_l: f64, f_u: f64, sample_rate_hz: u32) -> Result<Self> {
        let fs = sample_rate_hz as f64;
        let nyquist = fs / 2.0;
        if !(f_l > 0.0 && f_l < f_u && f_u <= nyquist) {
            return Err(Error::InvalidArgument(format!(
                "bandpass edges [{f_l}, {f_u}] Hz invalid for Nyquist {nyquist} Hz"
            )));
        }
        let f_u = f_u.min(MAX_EDGE_FRACTION * nyquist);
        if f_l >= f_u {
            return Err(Error::BandUnresolvable {
                f_l,
                f_u,
                bin_hz: 0.0,
            });
        }
        let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
        let (wl, wu) = (warp(f_l), warp(f_u));
        let bw = wu - wl;
        let w0sq = wl * wu;
        let mut sections = Vec::with_capacity(PROTOTYPE_ORDER);
        for k in 0..PROTOTYPE_ORDER {
            let theta = PI / 2.0 + (2 * k + 1) as f64 * PI / (2 * PROTOTYPE_ORDER) as f64;
            let p = Complex64::from_polar(1.0, theta);
            if p.im < 0.0 {
                continue;
            }
            // s^2 - p bw s + w0^2 = 0 maps one prototype pole to two bandpass poles.
            let disc = (p * p * bw * bw - 4.0 * w0sq).sqrt();
            for s in [(p * bw + disc) / 2.0, (p * bw - disc) / 2.0] {
                let z = (1.0 + s / (2.0 * fs)) / (1.0 - s / (2.0 * fs));
                sections.push(Section {
                    gain: 1.0,
                    a1: -2.0 * z.re,
                    a2: z.norm_sqr(),
                });
            }
        }
        let centre = 2.0 * ((w0sq.sqrt()) / (2.0 * fs)).atan();
        for s in sections.iter_mut() {
            s.gain = 1.0 / s.response(centre).norm();
        }
        Ok(Self { sections, f_l, f_u })
    }

    /// Single-pass complex response at `omega` radians per sample.
    pub fn response(&self, omega: f64) -> Complex64 {
        self.sections.iter().map(|s| s.response(omega)).product()
    }

    /// Samples for the slowest section to ring down by 1e-12.
    fn ring_samples(&self) -> usize {
        let r = self.sections.iter().map(Section::pole_radius).fold(0.0, f64::max);
        ((1e-12f64).ln() / r.ln()).ceil() as usize
    }

    /// Forward-backward filtering with zero padding on both ends, trimmed to the input length.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let pad = self.ring_samples();
        let mut buf = vec![0.0; x.len() + 2 * pad];
        buf[pad..pad + x.len()].copy_from_slice(x);
        for s in &self.sections {
            s.filter_in_place(&mut buf);
        }
        buf.reverse();
        for s in &self.sections {
            s.filter_in_place(&mut buf);
        }
        buf.reverse();
        buf[pad..pad + x.len()].to_vec()
    }
}

/// Zero-phase bandpass of `signal` between `f_l` and `f_u`.
pub fn apply_bandpass(signal: &AudioBuffer, f_l: f64, f_u: f64) -> Result<AudioBuffer> {
    let bin_hz = signal.sample_rate_hz() as f64 / signal.len() as f64;
    if f_u - f_l < 2.0 * bin_hz {
        return Err(Error::BandUnresolvable { f_l, f_u, bin_hz });
    }
    let bp = Bandpass::design(f_l, f_u, signal.sample_rate_hz())?;
    AudioBuffer::new(bp.filtfilt(signal.samples()), signal.sample_rate_hz())
}
