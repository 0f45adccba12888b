//! Blind channel log-magnitude estimation from reverberant speech.

use std::path::Path;

use crate::audio::AudioBuffer;
use crate::dsp::analyze;
use crate::error::{Error, Result};
use crate::speech_model::{estimate_ideal_speech, SpeechModel};

/// Shortest recording accepted by [`estimate_channel`], in seconds.
pub const MIN_RECORDING_S: f64 = 1.0;

/// Mean-normalized natural-log channel magnitude on the one-sided FFT grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub log_magnitude: Vec<f64>,
    pub bin_hz: f64,
    pub n_frames_used: usize,
}

impl ChannelEstimate {
    pub fn n_bins(&self) -> usize {
        self.log_magnitude.len()
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_bins()).map(|k| k as f64 * self.bin_hz)
    }

    /// Three-bin moving average (edges use the two available bins). For display only.
    pub fn smoothed(&self) -> Vec<f64> {
        let v = &self.log_magnitude;
        (0..v.len())
            .map(|k| {
                let lo = k.saturating_sub(1);
                let hi = (k + 2).min(v.len());
                v[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
            })
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, smooth: bool) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["freq_hz", "log_magnitude"])?;
        let values = if smooth {
            self.smoothed()
        } else {
            self.log_magnitude.clone()
        };
        for (f, v) in self.frequencies().zip(values) {
            w.write_record([f.to_string(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a CSV written by [`ChannelEstimate::write_csv`]; `n_frames_used` is not stored and reads as 0.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["freq_hz", "log_magnitude"] {
            return Err(Error::UnsupportedFormat(format!(
                "{}: expected header freq_hz,log_magnitude",
                path.display()
            )));
        }
        let mut freqs = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::CorruptFile(format!("{}: bad number in row {:?}", path.display(), rec)))
            };
            freqs.push(parse(0)?);
            values.push(parse(1)?);
        }
        if values.len() < 2 {
            return Err(Error::CorruptFile(format!("{}: fewer than two bins", path.display())));
        }
        Ok(Self {
            log_magnitude: values,
            bin_hz: freqs[1] - freqs[0],
            n_frames_used: 0,
        })
    }
}

/// Averages the difference between the recording's normalized log-spectra and the model's
/// ideal-speech estimate, halved to turn log-power into log-magnitude.
pub fn estimate_channel(recording: &AudioBuffer, model: &SpeechModel) -> Result<ChannelEstimate> {
    let cfg = &model.frame_config;
    if recording.sample_rate_hz() != cfg.sample_rate_hz {
        return Err(Error::ConfigMismatch(format!(
            "recording at {} Hz, speech model trained at {} Hz",
            recording.sample_rate_hz(),
            cfg.sample_rate_hz
        )));
    }
    if recording.duration_s() < MIN_RECORDING_S {
        return Err(Error::SignalTooShort(format!(
            "{:.3} s recording, need at least {MIN_RECORDING_S} s",
            recording.duration_s()
        )));
    }
    let analysis = analyze(recording, cfg)?;
    if analysis.spectra.n_bins() != model.n_bins() {
        return Err(Error::ConfigMismatch(format!(
            "{} spectral bins, model has {}",
            analysis.spectra.n_bins(),
            model.n_bins()
        )));
    }
    let ideal = estimate_ideal_speech(model, &analysis.cepstra)?;
    let observed = &analysis.spectra.values;
    let l = observed.rows();
    if l == 0 {
        return Err(Error::SignalTooShort("no frames after RASTA warm-up".into()));
    }
    let mut acc = vec![0.0; observed.cols()];
    for (x, s) in observed.iter_rows().zip(ideal.values.iter_rows()) {
        for ((a, xv), sv) in acc.iter_mut().zip(x).zip(s) {
            *a += xv - sv;
        }
    }
    let scale = 0.5 / l as f64;
    Ok(ChannelEstimate {
        log_magnitude: acc.into_iter().map(|a| a * scale).collect(),
        bin_hz: analysis.spectra.bin_hz,
        n_frames_used: l,
    })
}
