//! Schroeder energy decay curves and RT60 line fits.

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Default start of the fit window, in dB below the total energy.
pub const FIT_START_DB: f64 = -5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    pub times: Vec<f64>,
    pub edc_db: Vec<f64>,
}

impl DecayCurve {
    pub fn len(&self) -> usize {
        self.edc_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edc_db.is_empty()
    }

    pub fn floor_db(&self) -> f64 {
        self.edc_db.last().copied().unwrap_or(0.0)
    }
}

/// Backward-integrated energy in dB relative to the total, cut after the last nonzero sample.
pub fn schroeder_decay(band_signal: &AudioBuffer) -> Result<DecayCurve> {
    let x = band_signal.samples();
    let last = x.iter().rposition(|&v| v != 0.0).ok_or(Error::ZeroEnergy)?;
    let mut tail = vec![0.0; last + 1];
    let mut acc = 0.0;
    for t in (0..=last).rev() {
        acc += x[t] * x[t];
        tail[t] = acc;
    }
    if !(acc > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    let total = acc;
    let dt = 1.0 / band_signal.sample_rate_hz() as f64;
    let mut edc_db: Vec<f64> = tail.iter().map(|e| 10.0 * (e / total).log10()).collect();
    edc_db[0] = 0.0;
    // Rounding in the running sum must not break monotonicity.
    for i in 1..edc_db.len() {
        if edc_db[i] > edc_db[i - 1] {
            edc_db[i] = edc_db[i - 1];
        }
    }
    Ok(DecayCurve {
        times: (0..=last).map(|t| t as f64 * dt).collect(),
        edc_db,
    })
}

/// RT60 from a least-squares line through the EDC between `FIT_START_DB` and `FIT_START_DB - 60 / alpha`.
pub fn estimate_rt60(curve: &DecayCurve, alpha: f64) -> Result<f64> {
    estimate_rt60_from(curve, alpha, FIT_START_DB)
}

pub fn estimate_rt60_from(curve: &DecayCurve, alpha: f64, start_db: f64) -> Result<f64> {
    if !(alpha >= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must be >= 1, got {alpha}")));
    }
    let end_db = start_db - 60.0 / alpha;
    let insufficient = || Error::InsufficientDecayRange {
        reached_db: curve.floor_db(),
        required_db: end_db,
    };
    let i0 = curve.edc_db.iter().position(|&v| v <= start_db).ok_or_else(insufficient)?;
    let i1 = curve.edc_db[i0..]
        .iter()
        .position(|&v| v <= end_db)
        .map(|k| k + i0)
        .ok_or_else(insufficient)?;
    if i1 - i0 < 1 {
        return Err(insufficient());
    }
    let (t, y) = (&curve.times[i0..=i1], &curve.edc_db[i0..=i1]);
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (ti, yi) in t.iter().zip(y) {
        sxy += (ti - tm) * (yi - ym);
        sxx += (ti - tm) * (ti - tm);
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) || !slope.is_finite() {
        return Err(insufficient());
    }
    Ok(-60.0 / slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exp_envelope(tau: f64, seconds: f64) -> AudioBuffer {
        let n = (seconds * 16000.0) as usize;
        AudioBuffer::new((0..n).map(|t| (-(t as f64) / 16000.0 / tau).exp()).collect(), 16000).unwrap()
    }

    #[test]
    fn exponential_envelope_has_closed_form_slope() {
        let tau = 0.144765;
        let c = schroeder_decay(&exp_envelope(tau, 3.0)).unwrap();
        assert_eq!(c.edc_db[0], 0.0);
        // Oracle: d/dt 10 log10(e^{-2t/tau}) = -(20 / ln 10) / tau.
        let expected = -(20.0 / std::f64::consts::LN_10) / tau;
        let k = 8000;
        let slope = (c.edc_db[2 * k] - c.edc_db[k]) / (c.times[2 * k] - c.times[k]);
        assert!((slope - expected).abs() < 1e-3 * expected.abs());
        for alpha in [1.0, 1.2, 1.5, 2.0, 3.0] {
            let rt = estimate_rt60(&c, alpha).unwrap();
            assert!((rt - 1.0).abs() < 0.02, "alpha {alpha}: {rt}");
        }
    }

    #[test]
    fn linear_edc_gives_exact_rt() {
        let times: Vec<f64> = (0..2000).map(|i| i as f64 * 1e-3).collect();
        let edc_db: Vec<f64> = times.iter().map(|t| -60.0 * t).collect();
        let c = DecayCurve { times, edc_db };
        for alpha in [1.0, 1.2, 1.5, 2.0, 3.0, 4.5] {
            assert!((estimate_rt60(&c, alpha).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn shallow_curve_is_insufficient() {
        let c = schroeder_decay(&exp_envelope(0.5, 0.2)).unwrap();
        assert!(matches!(
            estimate_rt60(&c, 1.0),
            Err(Error::InsufficientDecayRange { .. })
        ));
        assert!(estimate_rt60(&c, 0.5).is_err());
    }

    #[test]
    fn zero_signal_has_no_energy() {
        let z = AudioBuffer::new(vec![0.0; 100], 16000).unwrap();
        assert!(matches!(schroeder_decay(&z), Err(Error::ZeroEnergy)));
    }

    proptest! {
        #[test]
        fn edc_is_monotone_and_scale_invariant(
            x in proptest::collection::vec(-1.0f64..1.0, 2..400),
            gain in 1e-3f64..1e3,
        ) {
            prop_assume!(x.iter().any(|&v| v != 0.0));
            let a = AudioBuffer::new(x.clone(), 16000).unwrap();
            let c = schroeder_decay(&a).unwrap();
            prop_assert_eq!(c.edc_db[0], 0.0);
            for w in c.edc_db.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
            let scaled = schroeder_decay(&a.scaled(gain)).unwrap();
            for (u, v) in c.edc_db.iter().zip(&scaled.edc_db) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }
}
