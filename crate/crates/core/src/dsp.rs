//! Analysis front end: framing, log-power spectra, mean normalization and RASTA-MFCCs.
//!
//! Spectra use natural-log power throughout. Cepstra are RASTA-filtered along time, which
//! discards the first [`RASTA_WARMUP`] frames; [`analyze`] drops the matching spectra rows so
//! both matrices stay row-aligned.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Floor added to every power bin, relative to the frame's peak bin power.
pub const SPECTRAL_FLOOR: f64 = 1e-12;
/// Number of triangular mel bands ahead of the DCT.
pub const MEL_BANDS: usize = 26;
/// Frames consumed by the RASTA filter before its first output.
pub const RASTA_WARMUP: usize = 4;
const RASTA_NUMERATOR: [f64; 5] = [0.2, 0.1, 0.0, -0.1, -0.2];
const RASTA_POLE: f64 = 0.98;

/// Framing and feature parameters shared by the speech model and the channel estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub frame_ms: f64,
    pub overlap: f64,
    /// FFT length; `None` means the frame length.
    pub n_fft: Option<usize>,
    pub n_mfcc: usize,
    pub sample_rate_hz: u32,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            frame_ms: 128.0,
            overlap: 0.5,
            n_fft: None,
            n_mfcc: 12,
            sample_rate_hz: 16000,
        }
    }
}

impl FrameConfig {
    pub fn frame_len(&self) -> usize {
        (self.frame_ms * 1e-3 * self.sample_rate_hz as f64).round() as usize
    }

    pub fn hop_len(&self) -> usize {
        let n = self.frame_len();
        ((n as f64 * (1.0 - self.overlap)).round() as usize).clamp(1, n.max(1))
    }

    pub fn fft_len(&self) -> usize {
        self.n_fft.unwrap_or_else(|| self.frame_len())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_len() / 2 + 1
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate_hz as f64 / self.fft_len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frame_ms > 0.0) {
            return Err(Error::InvalidArgument("frame length must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::InvalidArgument(format!(
                "overlap {} outside [0, 1)",
                self.overlap
            )));
        }
        if self.n_mfcc == 0 || self.n_mfcc > MEL_BANDS {
            return Err(Error::InvalidArgument(format!(
                "n_mfcc {} outside 1..={MEL_BANDS}",
                self.n_mfcc
            )));
        }
        let n = self.fft_len();
        if n < self.frame_len() || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "FFT length {n} must be a power of two and at least the frame length {}",
                self.frame_len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Window {
    /// Periodic Hann, which sums to one under 50% overlap-add.
    Hann,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..len)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos())
                .collect(),
        }
    }
}

/// Windowed analysis frames, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub frames: Matrix,
    pub hop_samples: usize,
    pub window: Window,
    pub sample_rate_hz: u32,
}

impl FrameSet {
    pub fn frame_len(&self) -> usize {
        self.frames.cols()
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }
}

/// Log-power spectra, one frame per row over bins `0..=n_fft/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectraMatrix {
    pub values: Matrix,
    pub bin_hz: f64,
    pub mean_normalized: bool,
}

impl SpectraMatrix {
    pub fn n_bins(&self) -> usize {
        self.values.cols()
    }
}

/// RASTA-filtered MFCCs, one frame per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CepstraMatrix {
    pub values: Matrix,
}

impl CepstraMatrix {
    pub fn n_mfcc(&self) -> usize {
        self.values.cols()
    }
}

/// Cuts `audio` into Hann-windowed frames of `frame_ms` with the given fractional overlap.
pub fn frame_and_window(audio: &AudioBuffer, frame_ms: f64, overlap_fraction: f64) -> Result<FrameSet> {
    let cfg = FrameConfig {
        frame_ms,
        overlap: overlap_fraction,
        sample_rate_hz: audio.sample_rate_hz(),
        ..FrameConfig::default()
    };
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::InvalidArgument(format!(
            "overlap {overlap_fraction} outside [0, 1)"
        )));
    }
    let n = cfg.frame_len();
    if n == 0 {
        return Err(Error::InvalidArgument("frame length rounds to zero samples".into()));
    }
    let hop = cfg.hop_len();
    let x = audio.samples();
    if x.len() < n {
        return Err(Error::SignalTooShort(format!(
            "{} samples, one frame needs {n}",
            x.len()
        )));
    }
    let count = (x.len() - n) / hop + 1;
    let window = Window::Hann.coefficients(n);
    let mut frames = Matrix::zeros(count, n);
    for l in 0..count {
        let src = &x[l * hop..l * hop + n];
        for ((d, s), w) in frames.row_mut(l).iter_mut().zip(src).zip(&window) {
            *d = s * w;
        }
    }
    Ok(FrameSet {
        frames,
        hop_samples: hop,
        window: Window::Hann,
        sample_rate_hz: audio.sample_rate_hz(),
    })
}

/// `|DFT|^2` of every frame over bins `0..=n_fft/2`.
pub(crate) fn power_spectra(frames: &FrameSet, n_fft: usize) -> Result<Matrix> {
    if n_fft < frames.frame_len() || !n_fft.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "FFT length {n_fft} must be a power of two and at least the frame length {}",
            frames.frame_len()
        )));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let n_bins = n_fft / 2 + 1;
    let mut out = Matrix::zeros(frames.len(), n_bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for (l, frame) in frames.frames.iter_rows().enumerate() {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (c, &v) in buf.iter_mut().zip(frame) {
            c.re = v;
        }
        fft.process(&mut buf);
        for (o, c) in out.row_mut(l).iter_mut().zip(&buf) {
            *o = c.norm_sqr();
        }
    }
    Ok(out)
}

fn floor_for(power_row: &[f64]) -> f64 {
    let peak = power_row.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        SPECTRAL_FLOOR * peak
    } else {
        SPECTRAL_FLOOR
    }
}

fn log_floored(power: &Matrix) -> Matrix {
    let mut out = power.clone();
    for l in 0..out.rows() {
        let row = out.row_mut(l);
        let floor = floor_for(row);
        row.iter_mut().for_each(|p| *p = (*p + floor).ln());
    }
    out
}

/// Natural-log power spectra with a spectral floor relative to each frame's peak.
pub fn log_power_spectra(frames: &FrameSet, n_fft: usize) -> Result<SpectraMatrix> {
    let power = power_spectra(frames, n_fft)?;
    Ok(SpectraMatrix {
        values: log_floored(&power),
        bin_hz: frames.sample_rate_hz as f64 / n_fft as f64,
        mean_normalized: false,
    })
}

/// Subtracts each row's own mean.
pub fn mean_normalize_rows(spectra: &SpectraMatrix) -> SpectraMatrix {
    let mut values = spectra.values.clone();
    for l in 0..values.rows() {
        let row = values.row_mut(l);
        let mean = row.iter().sum::<f64>() / row.len().max(1) as f64;
        row.iter_mut().for_each(|v| *v -= mean);
    }
    SpectraMatrix {
        values,
        bin_hz: spectra.bin_hz,
        mean_normalized: true,
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// HTK-scale triangular filterbank over `0..=nyquist`, `bands x n_bins`.
pub(crate) fn mel_filterbank(bands: usize, n_bins: usize, sample_rate_hz: f64) -> Matrix {
    let nyquist = sample_rate_hz / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..bands + 2)
        .map(|i| mel_to_hz(top * i as f64 / (bands + 1) as f64))
        .collect();
    let bin_hz = nyquist / (n_bins - 1) as f64;
    let mut fb = Matrix::zeros(bands, n_bins);
    for m in 0..bands {
        let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = ((f - lo) / (c - lo)).min((hi - f) / (hi - c));
            if w > 0.0 {
                fb.set(m, k, w);
            }
        }
    }
    fb
}

/// Orthonormal DCT-II basis, `n_out x n_in`.
fn dct_basis(n_out: usize, n_in: usize) -> Matrix {
    let mut basis = Matrix::zeros(n_out, n_in);
    for k in 0..n_out {
        let scale = if k == 0 {
            (1.0 / n_in as f64).sqrt()
        } else {
            (2.0 / n_in as f64).sqrt()
        };
        for m in 0..n_in {
            basis.set(k, m, scale * (PI * k as f64 * (m as f64 + 0.5) / n_in as f64).cos());
        }
    }
    basis
}

/// Static MFCCs (mel energies, log, DCT-II) from power spectra.
fn mfcc_from_power(power: &Matrix, sample_rate_hz: f64, n_mfcc: usize) -> Matrix {
    let fb = mel_filterbank(MEL_BANDS, power.cols(), sample_rate_hz);
    let dct = dct_basis(n_mfcc, MEL_BANDS);
    let mut out = Matrix::zeros(power.rows(), n_mfcc);
    let mut log_mel = vec![0.0; MEL_BANDS];
    for (l, p) in power.iter_rows().enumerate() {
        let floor = floor_for(p);
        for (m, lm) in log_mel.iter_mut().enumerate() {
            let e: f64 = fb.row(m).iter().zip(p).map(|(w, v)| w * v).sum();
            *lm = (e + floor).ln();
        }
        for (k, o) in out.row_mut(l).iter_mut().enumerate() {
            *o = dct.row(k).iter().zip(&log_mel).map(|(b, v)| b * v).sum();
        }
    }
    out
}

/// RASTA band-pass along time for every column.
///
/// The FIR history is primed with the first four frames and the recursion starts from
/// zero, so output row `j` corresponds to input frame `j + RASTA_WARMUP`.
fn rasta_filter(tracks: &Matrix) -> Result<Matrix> {
    let l = tracks.rows();
    if l <= RASTA_WARMUP {
        return Err(Error::InsufficientFrames {
            got: l,
            need: RASTA_WARMUP + 1,
        });
    }
    let mut out = Matrix::zeros(l - RASTA_WARMUP, tracks.cols());
    for c in 0..tracks.cols() {
        let mut y = 0.0;
        for n in RASTA_WARMUP..l {
            let fir: f64 = RASTA_NUMERATOR
                .iter()
                .enumerate()
                .map(|(k, b)| b * tracks.get(n - k, c))
                .sum();
            y = RASTA_POLE * y + fir;
            out.set(n - RASTA_WARMUP, c, y);
        }
    }
    Ok(out)
}

/// RASTA-filtered MFCCs. Row `j` of the result describes frame `j + RASTA_WARMUP`.
pub fn mfcc_rasta(frames: &FrameSet, n_mfcc: usize) -> Result<CepstraMatrix> {
    if n_mfcc == 0 || n_mfcc > MEL_BANDS {
        return Err(Error::InvalidArgument(format!(
            "n_mfcc {n_mfcc} outside 1..={MEL_BANDS}"
        )));
    }
    if frames.len() <= RASTA_WARMUP {
        return Err(Error::InsufficientFrames {
            got: frames.len(),
            need: RASTA_WARMUP + 1,
        });
    }
    let n_fft = frames.frame_len().next_power_of_two();
    let power = power_spectra(frames, n_fft)?;
    let mfcc = mfcc_from_power(&power, frames.sample_rate_hz as f64, n_mfcc);
    Ok(CepstraMatrix {
        values: rasta_filter(&mfcc)?,
    })
}

/// Row-aligned features of one recording.
#[derive(Debug, Clone)]
pub struct Analysis {
    /// Mean-normalized log-power spectra of frames `RASTA_WARMUP..`.
    pub spectra: SpectraMatrix,
    pub cepstra: CepstraMatrix,
}

/// Runs the full front end with one FFT pass per frame.
pub fn analyze(audio: &AudioBuffer, cfg: &FrameConfig) -> Result<Analysis> {
    cfg.validate()?;
    if audio.sample_rate_hz() != cfg.sample_rate_hz {
        return Err(Error::ConfigMismatch(format!(
            "audio at {} Hz, configuration expects {} Hz",
            audio.sample_rate_hz(),
            cfg.sample_rate_hz
        )));
    }
    let frames = frame_and_window(audio, cfg.frame_ms, cfg.overlap)?;
    if frames.len() <= RASTA_WARMUP {
        return Err(Error::SignalTooShort(format!(
            "{} frames, need more than {RASTA_WARMUP} for RASTA warm-up",
            frames.len()
        )));
    }
    let n_fft = cfg.fft_len();
    let power = power_spectra(&frames, n_fft)?;
    let mfcc = mfcc_from_power(&power, cfg.sample_rate_hz as f64, cfg.n_mfcc);
    let cepstra = CepstraMatrix {
        values: rasta_filter(&mfcc)?,
    };
    let spectra = mean_normalize_rows(&SpectraMatrix {
        values: log_floored(&power).skip_rows(RASTA_WARMUP),
        bin_hz: cfg.bin_hz(),
        mean_normalized: false,
    });
    Ok(Analysis { spectra, cepstra })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn buffer(samples: Vec<f64>) -> AudioBuffer {
        AudioBuffer::new(samples, 16000).unwrap()
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn default_frame_geometry() {
        let frames = frame_and_window(&buffer(vec![0.0; 4096]), 128.0, 0.5).unwrap();
        assert_eq!(frames.frame_len(), 2048);
        assert_eq!(frames.hop_samples, 1024);
        assert_eq!(frames.len(), 3);
        assert!(frames.frames.as_slice().iter().all(|&v| v == 0.0));

        let frames = frame_and_window(&buffer(vec![1.0; 3072]), 128.0, 0.5).unwrap();
        assert_eq!(frames.len(), 2);
    }

    #[test]
    fn short_signal_rejected() {
        let err = frame_and_window(&buffer(vec![0.0; 2047]), 128.0, 0.5).unwrap_err();
        assert!(matches!(err, Error::SignalTooShort(_)));
        assert!(frame_and_window(&buffer(vec![0.0; 4096]), 128.0, 1.0).is_err());
    }

    fn single_frame(frame: Vec<f64>) -> FrameSet {
        FrameSet {
            frames: Matrix::from_rows([frame]),
            hop_samples: 1024,
            window: Window::Hann,
            sample_rate_hz: 16000,
        }
    }

    #[test]
    fn impulse_spectrum_is_flat() {
        let mut f = vec![0.0; 2048];
        f[0] = 1.0;
        let s = log_power_spectra(&single_frame(f), 2048).unwrap();
        assert_eq!(s.n_bins(), 1025);
        let row = s.values.row(0);
        assert!(row.iter().all(|&v| (v - row[0]).abs() < 1e-12));
    }

    #[test]
    fn bin_centred_sinusoid_peaks_at_its_bin() {
        let k0 = 100;
        let f = (0..2048)
            .map(|i| (2.0 * PI * k0 as f64 * i as f64 / 2048.0).cos())
            .collect();
        let s = log_power_spectra(&single_frame(f), 2048).unwrap();
        let row = s.values.row(0);
        let argmax = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(argmax, k0);
    }

    #[test]
    fn zero_frame_hits_floor() {
        let s = log_power_spectra(&single_frame(vec![0.0; 2048]), 2048).unwrap();
        let floor = SPECTRAL_FLOOR.ln();
        assert!(s.values.row(0).iter().all(|&v| v == floor && v.is_finite()));
    }

    #[test]
    fn mean_normalization_examples() {
        let s = SpectraMatrix {
            values: Matrix::from_rows([[3.0, 3.0, 3.0], [0.0, 2.0, 1.0]]),
            bin_hz: 1.0,
            mean_normalized: false,
        };
        let n = mean_normalize_rows(&s);
        assert!(n.mean_normalized);
        assert_eq!(n.values.row(0), &[0.0, 0.0, 0.0]);
        assert_eq!(n.values.row(1), &[-1.0, 1.0, 0.0]);
        let pair = SpectraMatrix {
            values: Matrix::from_rows([[0.0, 2.0]]),
            ..s
        };
        assert_eq!(mean_normalize_rows(&pair).values.row(0), &[-1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn normalized_rows_sum_to_zero_and_idempotent(
            rows in proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 16), 1..6)
        ) {
            let s = SpectraMatrix { values: Matrix::from_rows(&rows), bin_hz: 1.0, mean_normalized: false };
            let once = mean_normalize_rows(&s);
            for r in once.values.iter_rows() {
                prop_assert!(r.iter().sum::<f64>().abs() < 1e-9 * r.len() as f64);
            }
            let twice = mean_normalize_rows(&once);
            for (a, b) in once.values.as_slice().iter().zip(twice.values.as_slice()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn parseval(seed in 0u64..1000, n_fft_pow in 11u32..13) {
            let frame = noise(2048, seed);
            let energy: f64 = frame.iter().map(|v| v * v).sum();
            let n_fft = 1usize << n_fft_pow;
            let p = power_spectra(&single_frame(frame), n_fft).unwrap();
            let row = p.row(0);
            let half = n_fft / 2;
            let total = row[0] + row[half] + 2.0 * row[1..half].iter().sum::<f64>();
            prop_assert!((total - n_fft as f64 * energy).abs() < 1e-6 * total);
        }
    }

    #[test]
    fn hann_overlap_add_reconstructs_interior() {
        let x = noise(16000, 5);
        let frames = frame_and_window(&buffer(x.clone()), 128.0, 0.5).unwrap();
        let mut y = vec![0.0; x.len()];
        for (l, f) in frames.frames.iter_rows().enumerate() {
            for (i, v) in f.iter().enumerate() {
                y[l * frames.hop_samples + i] += v;
            }
        }
        let covered = (frames.len() - 1) * frames.hop_samples + frames.frame_len();
        for i in 1024..covered - 1024 {
            assert!((y[i] - x[i]).abs() <= 1e-6 * x[i].abs().max(1e-3), "sample {i}");
        }
    }

    #[test]
    fn rasta_kills_constant_tracks() {
        let mut tracks = Matrix::zeros(40, 3);
        for l in 0..40 {
            tracks.row_mut(l).copy_from_slice(&[1.5, -7.0, 0.25]);
        }
        let out = rasta_filter(&tracks).unwrap();
        assert_eq!(out.rows(), 36);
        assert!(out.as_slice().iter().all(|v| v.abs() < 1e-12));
        assert!(matches!(
            rasta_filter(&Matrix::zeros(4, 3)),
            Err(Error::InsufficientFrames { got: 4, need: 5 })
        ));
    }

    #[test]
    fn rasta_impulse_response_matches_recursion() {
        // Direct evaluation of y[n] = 0.98 y[n-1] + 0.2 x[n] + 0.1 x[n-1] - 0.1 x[n-3] - 0.2 x[n-4].
        let mut tracks = Matrix::zeros(12, 1);
        tracks.set(6, 0, 1.0);
        let out = rasta_filter(&tracks).unwrap();
        let expect = [0.0, 0.0, 0.2, 0.296, 0.29008, 0.1842784, -0.01940717];
        for (j, e) in expect.iter().enumerate() {
            assert!((out.get(j, 0) - e).abs() < 1e-8, "row {j}: {}", out.get(j, 0));
        }
    }

    #[test]
    fn steady_tone_cepstra_vanish_after_warmup() {
        let x: Vec<f64> = (0..32000)
            .map(|i| (2.0 * PI * 1000.0 * i as f64 / 16000.0).sin())
            .collect();
        let frames = frame_and_window(&buffer(x), 128.0, 0.5).unwrap();
        let c = mfcc_rasta(&frames, 12).unwrap();
        assert_eq!(c.n_mfcc(), 12);
        assert_eq!(c.values.rows(), frames.len() - RASTA_WARMUP);
        assert!(c.values.as_slice().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn mfcc_needs_five_frames() {
        let frames = frame_and_window(&buffer(noise(2048 + 3 * 1024, 1)), 128.0, 0.5).unwrap();
        assert_eq!(frames.len(), 4);
        assert!(matches!(
            mfcc_rasta(&frames, 12),
            Err(Error::InsufficientFrames { .. })
        ));
    }

    #[test]
    fn mel_filters_cover_nyquist_band() {
        let fb = mel_filterbank(MEL_BANDS, 1025, 16000.0);
        for m in 0..MEL_BANDS {
            assert!(fb.row(m).iter().sum::<f64>() > 0.5, "empty band {m}");
        }
    }

    #[test]
    fn analysis_rows_align() {
        let a = analyze(&buffer(noise(16000, 9)), &FrameConfig::default()).unwrap();
        assert_eq!(a.spectra.values.rows(), a.cepstra.values.rows());
        assert_eq!(a.spectra.n_bins(), 1025);
        assert!(a.spectra.mean_normalized);
        let cfg = FrameConfig {
            sample_rate_hz: 8000,
            ..FrameConfig::default()
        };
        assert!(matches!(
            analyze(&buffer(noise(16000, 9)), &cfg),
            Err(Error::ConfigMismatch(_))
        ));
    }
}
