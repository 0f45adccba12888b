//! Deterministic test signals: source-filter pseudo-speech and exponential-decay impulse responses.
//!
//! Both are addressable by spec strings so manifests can name them instead of files:
//! `synth:seed=3;len=4` for speech and `synth:250=0.4,1000=0.6,4000=0.3;seed=5;len=1.5` for an
//! impulse response whose RT60 is 0.4 s at 250 Hz, 0.6 s at 1 kHz and so on.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

pub const SPEC_PREFIX: &str = "synth:";

/// (F1, F2, F3) in Hz for a small vowel inventory.
const VOWELS: [[f64; 3]; 8] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [660.0, 1720.0, 2410.0],
    [490.0, 1350.0, 1690.0],
    [440.0, 1020.0, 2240.0],
];
const UPPER_FORMANTS: [f64; 2] = [3500.0, 4500.0];
const FORMANT_BANDWIDTHS: [f64; 5] = [80.0, 100.0, 140.0, 200.0, 250.0];
/// Parameter update interval of the time-varying resonators.
const BLOCK: usize = 80;

/// Two-pole resonator with unit gain at DC.
#[derive(Clone, Copy, Default)]
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn step(&mut self, x: f64, freq: f64, bw: f64, fs: f64) -> f64 {
        let r = (-PI * bw / fs).exp();
        let a1 = -2.0 * r * (2.0 * PI * freq / fs).cos();
        let a2 = r * r;
        let y = (1.0 + a1 + a2) * x - a1 * self.y1 - a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

#[derive(Clone, Copy)]
enum Segment {
    Vowel { formants: [f64; 3], amp: f64 },
    Fricative { centre: f64, amp: f64 },
    Nasal { amp: f64 },
}

/// Pseudo-speech: a jittered glottal pulse train and noise excitation driving a cascade of
/// time-varying formant resonators, in segments of 60 to 250 ms.
///
/// The seed fixes both the "speaker" (mean pitch, vocal tract scale) and the utterance.
pub fn synth_speech(seconds: f64, sample_rate_hz: u32, seed: u64) -> Result<AudioBuffer> {
    if !(seconds > 0.0) {
        return Err(Error::InvalidArgument(format!("speech length {seconds} s must be positive")));
    }
    let fs = sample_rate_hz as f64;
    let n = (seconds * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f0_base: f64 = rng.random_range(90.0..220.0);
    let tract_scale: f64 = rng.random_range(0.88..1.15);

    let mut segments: Vec<(usize, Segment)> = Vec::new();
    let mut t = 0;
    while t < n {
        let len = (rng.random_range(0.06..0.25) * fs) as usize;
        let u: f64 = rng.random();
        let seg = if u < 0.65 {
            let v = VOWELS[rng.random_range(0..VOWELS.len())];
            Segment::Vowel {
                formants: v.map(|f| f * tract_scale * rng.random_range(0.93..1.07)),
                amp: rng.random_range(0.4..1.0),
            }
        } else if u < 0.88 {
            Segment::Fricative {
                centre: rng.random_range(2500.0..6500.0_f64.min(0.4 * fs)),
                amp: rng.random_range(0.08..0.3),
            }
        } else {
            Segment::Nasal {
                amp: rng.random_range(0.2..0.5),
            }
        };
        segments.push((t, seg));
        t += len.max(1);
    }

    let mut out = vec![0.0; n];
    let mut formants = [500.0 * tract_scale, 1500.0 * tract_scale, 2500.0 * tract_scale];
    let mut tract = [Resonator::default(); 5];
    let mut fric = Resonator::default();
    let mut glottal = 0.0;
    let mut next_pulse = 0.0;
    let mut f0 = f0_base;
    let mut amp = 0.0;
    let (mut voicing, mut noise_level) = (0.0, 0.0);

    for (si, &(start, seg)) in segments.iter().enumerate() {
        let end = segments.get(si + 1).map_or(n, |s| s.0);
        let (target_formants, target_amp, target_voicing, target_noise, fric_centre) = match seg {
            Segment::Vowel { formants, amp } => (formants, amp, 1.0, 0.02, 4000.0),
            Segment::Fricative { centre, amp } => (formants, amp, 0.0, 1.0, centre),
            Segment::Nasal { amp } => ([250.0 * tract_scale, 1100.0 * tract_scale, 2300.0 * tract_scale], amp, 1.0, 0.01, 4000.0),
        };
        for block_start in (start..end).step_by(BLOCK) {
            // Glide toward the segment targets, about 20 ms time constant.
            let k = 1.0 - (-(BLOCK as f64) / (0.02 * fs)).exp();
            for (f, tf) in formants.iter_mut().zip(target_formants) {
                *f += k * (tf - *f);
            }
            amp += k * (target_amp - amp);
            voicing += k * (target_voicing - voicing);
            noise_level += k * (target_noise - noise_level);
            f0 += k * (f0_base * (1.0 + 0.1 * (2.0 * PI * 0.7 * block_start as f64 / fs).sin()) - f0);
            for i in block_start..(block_start + BLOCK).min(end) {
                let mut pulse = 0.0;
                if i as f64 >= next_pulse {
                    pulse = 1.0;
                    let jitter: f64 = rng.random_range(-0.02..0.02);
                    next_pulse += fs / (f0 * (1.0 + jitter));
                }
                // Roughly -12 dB per octave glottal roll-off with radiation lift, net about -6.
                glottal = 0.96 * glottal + pulse;
                let white: f64 = StandardNormal.sample(&mut rng);
                let mut x = voicing * glottal * 0.3 + 0.03 * white;
                for (r, (f, bw)) in tract
                    .iter_mut()
                    .zip(formants.iter().chain(&UPPER_FORMANTS).zip(FORMANT_BANDWIDTHS))
                {
                    x = r.step(x, f.min(0.45 * fs), bw, fs);
                }
                let hiss = fric.step(white, fric_centre, 2000.0, fs);
                out[i] = amp * (x + noise_level * hiss) + 1e-4 * white;
            }
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.9 / peak);
    }
    AudioBuffer::new(out, sample_rate_hz)
}

/// Frequency-dependent exponential decay described by RT60 anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct RirSpec {
    /// `(frequency Hz, RT60 s)`, sorted by frequency.
    pub anchors: Vec<(f64, f64)>,
    pub seed: u64,
    pub seconds: f64,
}

impl RirSpec {
    /// RT60 at `freq`: piecewise linear in log frequency, constant outside the anchors.
    pub fn rt60_at(&self, freq: f64) -> f64 {
        let a = &self.anchors;
        if freq <= a[0].0 {
            return a[0].1;
        }
        if freq >= a[a.len() - 1].0 {
            return a[a.len() - 1].1;
        }
        let i = a.windows(2).position(|w| freq < w[1].0).unwrap_or(a.len() - 2);
        let (f0, r0) = a[i];
        let (f1, r1) = a[i + 1];
        let t = (freq / f0).ln() / (f1 / f0).ln();
        r0 + t * (r1 - r0)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |why: &str| Error::InvalidArgument(format!("synthetic RIR spec {text:?}: {why}"));
        let body = text.strip_prefix(SPEC_PREFIX).ok_or_else(|| bad("missing synth: prefix"))?;
        let mut anchors = Vec::new();
        let mut seed = 0;
        let mut seconds = None;
        for (i, part) in body.split(';').map(str::trim).filter(|p| !p.is_empty()).enumerate() {
            if let Some(v) = part.strip_prefix("seed=") {
                seed = v.parse().map_err(|_| bad("bad seed"))?;
            } else if let Some(v) = part.strip_prefix("len=") {
                seconds = Some(v.parse::<f64>().map_err(|_| bad("bad len"))?);
            } else if i == 0 {
                for pair in part.split(',') {
                    let (f, rt) = pair.split_once('=').ok_or_else(|| bad("anchor must be freq=rt60"))?;
                    let f: f64 = f.trim().parse().map_err(|_| bad("bad anchor frequency"))?;
                    let rt: f64 = rt.trim().parse().map_err(|_| bad("bad anchor RT60"))?;
                    if !(f > 0.0 && rt > 0.0) {
                        return Err(bad("anchors must be positive"));
                    }
                    anchors.push((f, rt));
                }
            } else {
                return Err(bad(&format!("unknown field {part:?}")));
            }
        }
        if anchors.is_empty() {
            return Err(bad("no RT60 anchors"));
        }
        anchors.sort_by(|a, b| a.0.total_cmp(&b.0));
        if anchors.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(bad("duplicate anchor frequency"));
        }
        let longest = anchors.iter().map(|a| a.1).fold(0.0, f64::max);
        let seconds = seconds.unwrap_or(1.2 * longest);
        if !(seconds > 0.0) {
            return Err(bad("len must be positive"));
        }
        Ok(Self { anchors, seed, seconds })
    }

    /// Sum of noise bands, each decaying with its own RT60. The bands are raised-cosine
    /// windows on a half-octave log-frequency grid and sum to a flat spectrum.
    pub fn generate(&self, sample_rate_hz: u32) -> Result<AudioBuffer> {
        let fs = sample_rate_hz as f64;
        let n = (self.seconds * fs).round() as usize;
        if n < 2 {
            return Err(Error::InvalidArgument("synthetic RIR shorter than two samples".into()));
        }
        let n_fft = n.next_power_of_two();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut planner = FftPlanner::<f64>::new();
        let mut noise: Vec<Complex64> = (0..n_fft)
            .map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0))
            .collect();
        planner.plan_fft_forward(n_fft).process(&mut noise);

        let nyquist = fs / 2.0;
        let lowest = 62.5f64;
        let step = 0.5;
        let n_centres = ((nyquist / lowest).log2() / step).ceil() as usize + 1;
        let centres: Vec<f64> = (0..n_centres).map(|i| lowest.log2() + i as f64 * step).collect();
        let weight = |c: usize, f: f64| -> f64 {
            let x = f.max(1e-9).log2();
            let first = c == 0 && x <= centres[0];
            let last = c == n_centres - 1 && x >= centres[c];
            if first || last {
                return 1.0;
            }
            let d = (x - centres[c]) / step;
            if d.abs() >= 1.0 {
                0.0
            } else {
                0.5 + 0.5 * (PI * d).cos()
            }
        };
        let inv = planner.plan_fft_inverse(n_fft);
        let mut out = vec![0.0; n];
        let mut band = vec![Complex64::new(0.0, 0.0); n_fft];
        for (c, &centre) in centres.iter().enumerate() {
            for k in 0..n_fft {
                let kk = k.min(n_fft - k);
                let f = kk as f64 * fs / n_fft as f64;
                band[k] = noise[k] * weight(c, f);
            }
            inv.process(&mut band);
            let tau = self.rt60_at(centre.exp2()) / (3.0 * std::f64::consts::LN_10);
            for (i, o) in out.iter_mut().enumerate() {
                *o += band[i].re / n_fft as f64 * (-(i as f64) / fs / tau).exp();
            }
        }
        Ok(AudioBuffer::new(out, sample_rate_hz)?.peak_normalized(1.0))
    }
}

/// Speech spec `synth:seed=N;len=S` (seconds, default 4).
pub fn parse_speech_spec(text: &str) -> Result<(u64, f64)> {
    let bad = |why: &str| Error::InvalidArgument(format!("synthetic speech spec {text:?}: {why}"));
    let body = text.strip_prefix(SPEC_PREFIX).ok_or_else(|| bad("missing synth: prefix"))?;
    let mut seed = None;
    let mut seconds = 4.0;
    for part in body.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some(v) = part.strip_prefix("seed=") {
            seed = Some(v.parse().map_err(|_| bad("bad seed"))?);
        } else if let Some(v) = part.strip_prefix("len=") {
            seconds = v.parse().map_err(|_| bad("bad len"))?;
        } else {
            return Err(bad(&format!("unknown field {part:?}")));
        }
    }
    Ok((seed.ok_or_else(|| bad("seed is required"))?, seconds))
}

pub fn is_spec(text: &str) -> bool {
    text.starts_with(SPEC_PREFIX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roomprint::{band_rt60, design_filterbank};

    #[test]
    fn parses_rir_spec() {
        let s = RirSpec::parse("synth:1000=0.6,250=0.4,4000=0.3;seed=5;len=1.5").unwrap();
        assert_eq!(s.anchors, vec![(250.0, 0.4), (1000.0, 0.6), (4000.0, 0.3)]);
        assert_eq!(s.seed, 5);
        assert_eq!(s.seconds, 1.5);
        assert_eq!(s.rt60_at(100.0), 0.4);
        assert!((s.rt60_at(500.0) - 0.5).abs() < 1e-12);
        assert_eq!(s.rt60_at(8000.0), 0.3);
        assert_eq!(RirSpec::parse("synth:500=1").unwrap().seconds, 1.2);
        for bad in ["500=1", "synth:", "synth:500", "synth:500=-1", "synth:500=1;foo=2", "synth:500=1,500=2"] {
            assert!(RirSpec::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn generated_rir_follows_its_profile() {
        let spec = RirSpec::parse("synth:250=0.8,4000=0.3;seed=2;len=1.5").unwrap();
        let rir = spec.generate(16000).unwrap();
        assert_eq!(rir.len(), 24000);
        assert_eq!(rir, spec.generate(16000).unwrap());
        let bank = design_filterbank(1, 200.0, 5000.0, 16000).unwrap();
        for band in &bank.bands {
            let (rt, _) = band_rt60(&rir, band, 1.5).unwrap();
            let want = spec.rt60_at(band.f_m);
            assert!((rt / want - 1.0).abs() < 0.25, "{:.0} Hz: {rt} vs {want}", band.f_m);
        }
    }

    #[test]
    fn speech_is_deterministic_and_bounded() {
        let a = synth_speech(1.0, 16000, 7).unwrap();
        assert_eq!(a.len(), 16000);
        assert_eq!(a, synth_speech(1.0, 16000, 7).unwrap());
        assert_ne!(a, synth_speech(1.0, 16000, 8).unwrap());
        assert!((a.peak() - 0.9).abs() < 1e-12);
        assert!(a.samples().iter().all(|v| v.is_finite()));
        assert_eq!(parse_speech_spec("synth:seed=3;len=2.5").unwrap(), (3, 2.5));
        assert_eq!(parse_speech_spec("synth:seed=3").unwrap(), (3, 4.0));
        assert!(parse_speech_spec("synth:len=2").is_err());
    }
}
