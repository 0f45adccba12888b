//! Per-band reverberation times of an impulse response: the roomprint feature vector.

pub mod bandpass;
pub mod decay;
pub mod filterbank;

use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

pub use bandpass::{apply_bandpass, Bandpass};
pub use decay::{estimate_rt60, estimate_rt60_from, schroeder_decay, DecayCurve, FIT_START_DB};
pub use filterbank::{design_filterbank, design_filterbank_with, Band, BandSelection, Filterbank};

/// Interpolation factors tried, in order, after the requested one fails.
pub const ALPHA_LADDER: [f64; 2] = [2.0, 3.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roomprint {
    pub rt60_s: Vec<f64>,
    pub band_midbands_hz: Vec<f64>,
    pub band_indices: Vec<i32>,
    pub fraction: u32,
    pub alpha: f64,
    /// Whether `features()` returns natural logs of the RT60s.
    pub log_transformed: bool,
    /// Interpolation factor each band was finally estimated with; 0 for failed bands.
    pub alpha_used: Vec<f64>,
    /// Positions of bands with no usable decay even after the ladder; their values are
    /// interpolated from neighbouring bands.
    pub failed_bands: Vec<usize>,
}

impl Roomprint {
    pub fn len(&self) -> usize {
        self.rt60_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rt60_s.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.failed_bands.is_empty()
    }

    /// Filterbank indices of the failed bands.
    pub fn failed_band_indices(&self) -> Vec<i32> {
        self.failed_bands.iter().map(|&i| self.band_indices[i]).collect()
    }

    /// The classifier feature: RT60s, or their natural logs.
    pub fn features(&self) -> Vec<f64> {
        if self.log_transformed {
            self.rt60_s.iter().map(|v| v.ln()).collect()
        } else {
            self.rt60_s.clone()
        }
    }

    /// Header of midband frequencies, then one row of RT60 seconds.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.band_midbands_hz.iter().map(|f| f.to_string()))?;
        w.write_record(self.rt60_s.iter().map(|v| v.to_string()))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// RT60 from `curve`, walking up the alpha ladder on insufficient decay range.
/// Returns the estimate and the alpha that produced it.
pub fn rt60_with_ladder(curve: &DecayCurve, alpha: f64) -> Result<(f64, f64)> {
    let mut last_err = None;
    for a in std::iter::once(alpha).chain(ALPHA_LADDER.into_iter().filter(|&a| a > alpha)) {
        match estimate_rt60(curve, a) {
            Ok(rt) => return Ok((rt, a)),
            Err(e @ Error::InsufficientDecayRange { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("ladder is never empty"))
}

/// Bandpass, Schroeder integration and the laddered RT60 fit for one band.
pub fn band_rt60(rir: &AudioBuffer, band: &Band, alpha: f64) -> Result<(f64, f64)> {
    let filtered = apply_bandpass(rir, band.f_l, band.f_u)?;
    rt60_with_ladder(&schroeder_decay(&filtered)?, alpha)
}

/// Fills failed positions by interpolating linearly (over band position) between the nearest
/// successful neighbours, or copying the nearest one at the ends.
fn impute(values: &mut [f64], failed: &[usize]) {
    let ok: Vec<usize> = (0..values.len()).filter(|i| !failed.contains(i)).collect();
    for &i in failed {
        let below = ok.iter().rev().find(|&&j| j < i).copied();
        let above = ok.iter().find(|&&j| j > i).copied();
        values[i] = match (below, above) {
            (Some(l), Some(u)) => {
                let t = (i - l) as f64 / (u - l) as f64;
                values[l] * (1.0 - t) + values[u] * t
            }
            (Some(j), None) | (None, Some(j)) => values[j],
            (None, None) => unreachable!("at least one band succeeded"),
        };
    }
}

pub fn compute_roomprint(rir: &AudioBuffer, bank: &Filterbank, alpha: f64, log_transform: bool) -> Result<Roomprint> {
    if !(alpha >= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must be >= 1, got {alpha}")));
    }
    if rir.sample_rate_hz() != bank.sample_rate_hz {
        return Err(Error::ConfigMismatch(format!(
            "impulse response at {} Hz, filterbank designed for {} Hz",
            rir.sample_rate_hz(),
            bank.sample_rate_hz
        )));
    }
    let results: Vec<Result<(f64, f64)>> = bank.bands.par_iter().map(|b| band_rt60(rir, b, alpha)).collect();
    let mut rt60_s = Vec::with_capacity(bank.len());
    let mut alpha_used = Vec::with_capacity(bank.len());
    let mut failed_bands = Vec::new();
    let mut first_failure = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((rt, a)) => {
                rt60_s.push(rt);
                alpha_used.push(a);
            }
            Err(e @ (Error::InsufficientDecayRange { .. } | Error::ZeroEnergy)) => {
                warn!("band {} ({:.1} Hz): {e}", bank.bands[i].index, bank.bands[i].f_m);
                failed_bands.push(i);
                rt60_s.push(f64::NAN);
                alpha_used.push(0.0);
                first_failure.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    if failed_bands.len() == bank.len() {
        return Err(first_failure.expect("all bands failed"));
    }
    impute(&mut rt60_s, &failed_bands);
    Ok(Roomprint {
        rt60_s,
        band_midbands_hz: bank.midbands(),
        band_indices: bank.indices(),
        fraction: bank.fraction,
        alpha,
        log_transformed: log_transform,
        alpha_used,
        failed_bands,
    })
}
