//! Base-two fractional-octave filterbank with a 1 kHz reference band at index 30.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REFERENCE_HZ: f64 = 1000.0;
pub const REFERENCE_INDEX: i32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub index: i32,
    pub f_l: f64,
    pub f_m: f64,
    pub f_u: f64,
}

impl Band {
    /// Band `index` of a 1/`fraction`-octave bank.
    ///
    /// Every frequency is `1 kHz * 2^(k / (2 fraction))` for an integer `k`, evaluated in one
    /// step so that shared edges of neighbouring bands are bit-identical.
    pub fn new(fraction: u32, index: i32) -> Self {
        let two_b = 2.0 * fraction as f64;
        let at = |k: i32| REFERENCE_HZ * (k as f64 / two_b).exp2();
        let offset = index - REFERENCE_INDEX;
        let centre = if fraction % 2 == 1 { 2 * offset } else { 2 * offset + 1 };
        Self {
            index,
            f_l: at(centre - 1),
            f_m: at(centre),
            f_u: at(centre + 1),
        }
    }
}

/// Which bands a frequency range admits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BandSelection {
    /// Bands overlapping `(f_min, f_max)` whose upper edge does not exceed Nyquist.
    #[default]
    Overlapping,
    /// Bands lying entirely within `[f_min, min(f_max, 0.95 Nyquist)]`.
    Contained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filterbank {
    pub fraction: u32,
    pub bands: Vec<Band>,
    pub sample_rate_hz: u32,
}

impl Filterbank {
    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    pub fn midbands(&self) -> Vec<f64> {
        self.bands.iter().map(|b| b.f_m).collect()
    }

    pub fn indices(&self) -> Vec<i32> {
        self.bands.iter().map(|b| b.index).collect()
    }
}

pub fn design_filterbank(fraction: u32, f_min: f64, f_max: f64, sample_rate_hz: u32) -> Result<Filterbank> {
    design_filterbank_with(fraction, f_min, f_max, sample_rate_hz, BandSelection::default())
}

pub fn design_filterbank_with(
    fraction: u32,
    f_min: f64,
    f_max: f64,
    sample_rate_hz: u32,
    selection: BandSelection,
) -> Result<Filterbank> {
    let nyquist = sample_rate_hz as f64 / 2.0;
    if fraction == 0 {
        return Err(Error::InvalidArgument("octave fraction must be at least 1".into()));
    }
    if !(f_min > 0.0 && f_min < f_max && f_max <= nyquist) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < f_min < f_max <= {nyquist} Hz, got [{f_min}, {f_max}]"
        )));
    }
    // Index range wide enough for any band touching (0, Nyquist].
    let per_octave = fraction as f64;
    let lo = REFERENCE_INDEX + ((f_min / REFERENCE_HZ).log2() * per_octave).floor() as i32 - 2;
    let hi = REFERENCE_INDEX + ((f_max / REFERENCE_HZ).log2() * per_octave).ceil() as i32 + 2;
    let bands: Vec<Band> = (lo..=hi)
        .map(|b| Band::new(fraction, b))
        .filter(|band| match selection {
            BandSelection::Overlapping => band.f_u > f_min && band.f_l < f_max && band.f_u <= nyquist,
            BandSelection::Contained => band.f_l >= f_min && band.f_u <= f_max.min(0.95 * nyquist),
        })
        .collect();
    if bands.is_empty() {
        return Err(Error::NoBandsInRange { f_min, f_max });
    }
    Ok(Filterbank {
        fraction,
        bands,
        sample_rate_hz,
    })
}
