//! Mono audio buffers, WAV I/O, rational resampling and FFT convolution.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Mono PCM samples at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::SignalTooShort("audio buffer is empty".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    /// A buffer of `len` zeros with a one at index 0.
    pub fn unit_impulse(len: usize, sample_rate_hz: u32) -> Result<Self> {
        let mut samples = vec![0.0; len.max(1)];
        samples[0] = 1.0;
        Self::new(samples, sample_rate_hz)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    /// Multiplies every sample by `gain`.
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Rescales so the absolute peak equals `target`. Silent buffers are returned unchanged.
    pub fn peak_normalized(&self, target: f64) -> Self {
        let peak = self.peak();
        if peak > 0.0 {
            self.scaled(target / peak)
        } else {
            self.clone()
        }
    }
}

fn map_hound_error(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::Unsupported | hound::Error::InvalidSampleFormat | hound::Error::TooWide => {
            Error::UnsupportedFormat(format!("{}: {err}", path.display()))
        }
        hound::Error::IoError(ref io) if io.kind() == std::io::ErrorKind::NotFound => Error::io(
            path,
            std::io::Error::new(io.kind(), io.to_string()),
        ),
        other => Error::CorruptFile(format!("{}: {other}", path.display())),
    }
}

/// Reads a RIFF/WAV file (integer PCM or 32-bit float), downmixing to mono by averaging channels.
pub fn read_audio(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| map_hound_error(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;

    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => {
            if spec.bits_per_sample != 32 {
                return Err(Error::UnsupportedFormat(format!(
                    "{}: {}-bit float",
                    path.display(),
                    spec.bits_per_sample
                )));
            }
            reader
                .samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| map_hound_error(path, e))?
        }
        hound::SampleFormat::Int => {
            let bits = spec.bits_per_sample;
            if !(8..=32).contains(&bits) {
                return Err(Error::UnsupportedFormat(format!(
                    "{}: {bits}-bit integer PCM",
                    path.display()
                )));
            }
            let scale = 1.0 / f64::from(1u32 << (bits - 1));
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| map_hound_error(path, e))?
        }
    };

    if !interleaved.len().is_multiple_of(channels) {
        return Err(Error::CorruptFile(format!(
            "{}: partial frame at end of data",
            path.display()
        )));
    }
    let mono: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    if mono.is_empty() {
        return Err(Error::CorruptFile(format!("{}: no samples", path.display())));
    }
    AudioBuffer::new(mono, spec.sample_rate)
}

/// Writes a mono 32-bit float WAV.
pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate_hz(),
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound_error(path, e))?;
    for &s in audio.samples() {
        writer
            .write_sample(s as f32)
            .map_err(|e| map_hound_error(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound_error(path, e))
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64).powi(2);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

const RESAMPLE_TAPS_PER_PHASE: usize = 64;
const RESAMPLE_KAISER_BETA: f64 = 8.6;

/// Polyphase windowed-sinc resampling to `target_hz`.
///
/// The prototype low-pass runs at `L * fs_in` (with `L/M` the reduced rate ratio), cuts off
/// at the lower of the two Nyquist frequencies and spans `64 * max(L, M)` taps under a Kaiser
/// window, i.e. 64 taps per output phase for interpolation and 64 input-rate zero crossings
/// for decimation.
pub fn resample(audio: &AudioBuffer, target_hz: u32) -> Result<AudioBuffer> {
    if target_hz < 8000 {
        return Err(Error::InvalidArgument(format!(
            "resampling target {target_hz} Hz is below 8 kHz"
        )));
    }
    let source_hz = audio.sample_rate_hz();
    if source_hz == target_hz {
        return Ok(audio.clone());
    }
    let g = gcd(u64::from(source_hz), u64::from(target_hz));
    let up = (u64::from(target_hz) / g) as usize;
    let down = (u64::from(source_hz) / g) as usize;

    let half = RESAMPLE_TAPS_PER_PHASE / 2 * up.max(down);
    // Cutoff in cycles per upsampled sample.
    let cutoff = 0.5 / up.max(down) as f64;
    let taps: Vec<f64> = (0..=2 * half)
        .map(|j| {
            let m = j as f64 - half as f64;
            let sinc = if m == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * m).sin() / (PI * m)
            };
            let r = m / half as f64;
            let w = bessel_i0(RESAMPLE_KAISER_BETA * (1.0 - r * r).max(0.0).sqrt())
                / bessel_i0(RESAMPLE_KAISER_BETA);
            sinc * w * up as f64
        })
        .collect();

    let x = audio.samples();
    let out_len = (x.len() * up).div_ceil(down);
    let half_i = half as i64;
    let up_i = up as i64;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let center = (n * down) as i64;
        // Input samples k with |center - k*up| <= half.
        let k_lo = -(half_i - center).div_euclid(up_i);
        let k_hi = (center + half_i).div_euclid(up_i);
        let mut acc = 0.0;
        for k in k_lo.max(0)..=k_hi.min(x.len() as i64 - 1) {
            let j = center - k * up_i + half_i;
            if (0..taps.len() as i64).contains(&j) {
                acc += x[k as usize] * taps[j as usize];
            }
        }
        out.push(acc);
    }
    AudioBuffer::new(out, target_hz)
}

/// Full linear convolution of two real sequences via FFT overlap-add.
///
/// Output length is `a.len() + b.len() - 1`.
pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let out_len = long.len() + short.len() - 1;
    let n_fft = (2 * short.len()).next_power_of_two().max(64);
    let block = n_fft - short.len() + 1;

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n_fft);
    let inv = planner.plan_fft_inverse(n_fft);

    let mut kernel: Vec<Complex64> = short
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n_fft)
        .collect();
    fwd.process(&mut kernel);

    let mut out = vec![0.0; out_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    let scale = 1.0 / n_fft as f64;
    for (start, chunk) in (0..long.len()).step_by(block).zip(long.chunks(block)) {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (c, &v) in buf.iter_mut().zip(chunk) {
            c.re = v;
        }
        fwd.process(&mut buf);
        for (c, k) in buf.iter_mut().zip(&kernel) {
            *c *= k;
        }
        inv.process(&mut buf);
        let valid = (chunk.len() + short.len() - 1).min(out_len - start);
        for (o, c) in out[start..start + valid].iter_mut().zip(&buf) {
            *o += c.re * scale;
        }
    }
    out
}

/// Reverberates `speech` with `rir` and peak-normalizes the result to 0.9.
pub fn convolve_rir(speech: &AudioBuffer, rir: &AudioBuffer) -> Result<AudioBuffer> {
    if speech.sample_rate_hz() != rir.sample_rate_hz() {
        return Err(Error::ConfigMismatch(format!(
            "speech at {} Hz, RIR at {} Hz",
            speech.sample_rate_hz(),
            rir.sample_rate_hz()
        )));
    }
    let y = fft_convolve(speech.samples(), rir.samples());
    Ok(AudioBuffer::new(y, speech.sample_rate_hz())?.peak_normalized(0.9))
}
