//! End-to-end orchestration: recording to roomprint, corpus feature extraction with an
//! on-disk artifact cache, and train/test experiments.

use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::{read_audio, resample, AudioBuffer};
use crate::channel::{estimate_channel, ChannelEstimate};
use crate::classifier::{train_classifier, GridConfig, GridReport, Metrics, SvmModel};
use crate::dataset::{Condition, Dataset, DatasetEntry, FieldSelection, Split};
use crate::error::{Error, Result};
use crate::filter::{default_ir_length, impulse_response, minimum_phase_target, FitOutcome, FitterRegistry, DEFAULT_FITTER};
use crate::roomprint::{compute_roomprint, design_filterbank, Band, Roomprint};
use crate::dsp::{analyze, CepstraMatrix, FrameConfig, SpectraMatrix};
use crate::matrix::Matrix;
use crate::speech_model::{train_speech_model, SpeechModel, TrainOptions, TrainReport};

/// Files with more failed bands than this are excluded from experiments.
pub const MAX_FAILED_BANDS: usize = 2;

/// Everything downstream of the channel estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub fraction: u32,
    pub alpha: f64,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub n_b: usize,
    pub n_a: usize,
    pub fit_method: String,
    pub log_transform: bool,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            fraction: 4,
            alpha: 1.5,
            f_min_hz: 100.0,
            f_max_hz: 8000.0,
            n_b: 24,
            n_a: 24,
            fit_method: DEFAULT_FITTER.to_string(),
            log_transform: false,
        }
    }
}

impl StageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fraction < 1 {
            return Err(Error::InvalidArgument("octave fraction must be at least 1".into()));
        }
        if !(self.alpha >= 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must be >= 1, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Analyses each dry recording separately, so RASTA restarts per file, and trains on the
/// stacked frames. Recordings are resampled to the configured rate.
pub fn train_speech_model_on(
    recordings: &[AudioBuffer],
    frame_config: FrameConfig,
    opts: &TrainOptions,
) -> Result<(SpeechModel, TrainReport)> {
    if recordings.is_empty() {
        return Err(Error::InvalidArgument("no training recordings".into()));
    }
    let analyses = recordings
        .par_iter()
        .map(|a| analyze(&resample(a, frame_config.sample_rate_hz)?, &frame_config))
        .collect::<Result<Vec<_>>>()?;
    let stack = |rows: Vec<&Matrix>| Matrix::from_rows(rows.into_iter().flat_map(|m| m.iter_rows()));
    let cepstra = CepstraMatrix {
        values: stack(analyses.iter().map(|a| &a.cepstra.values).collect()),
    };
    let spectra = SpectraMatrix {
        values: stack(analyses.iter().map(|a| &a.spectra.values).collect()),
        bin_hz: frame_config.bin_hz(),
        mean_normalized: true,
    };
    train_speech_model(&cepstra, &spectra, frame_config, opts)
}

/// Intermediate results of one recording.
#[derive(Debug, Clone)]
pub struct FileArtifacts {
    pub channel: ChannelEstimate,
    pub fit: FitOutcome,
    pub impulse: AudioBuffer,
    pub roomprint: Roomprint,
}

/// Min-phase target, filter fit, synthetic impulse response and roomprint.
pub fn roomprint_from_channel(
    channel: &ChannelEstimate,
    sample_rate_hz: u32,
    cfg: &StageConfig,
    registry: &FitterRegistry,
) -> Result<(FitOutcome, AudioBuffer, Roomprint)> {
    cfg.validate()?;
    let target = minimum_phase_target(channel)?;
    let fit = registry.get(&cfg.fit_method)?.fit(&target, cfg.n_b, cfg.n_a)?;
    let impulse = impulse_response(&fit.filter, default_ir_length(&fit.filter, sample_rate_hz), sample_rate_hz)?;
    let bank = design_filterbank(cfg.fraction, cfg.f_min_hz, cfg.f_max_hz, sample_rate_hz)?;
    let roomprint = compute_roomprint(&impulse, &bank, cfg.alpha, cfg.log_transform)?;
    Ok((fit, impulse, roomprint))
}

/// The whole chain for one recording, resampled to the model's rate first.
pub fn process_recording(
    audio: &AudioBuffer,
    model: &SpeechModel,
    cfg: &StageConfig,
    registry: &FitterRegistry,
) -> Result<FileArtifacts> {
    let fs = model.frame_config.sample_rate_hz;
    let audio = resample(audio, fs)?;
    let channel = estimate_channel(&audio, model)?;
    let (fit, impulse, roomprint) = roomprint_from_channel(&channel, fs, cfg, registry)?;
    Ok(FileArtifacts {
        channel,
        fit,
        impulse,
        roomprint,
    })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Content-addressed store of channel estimates and roomprints.
///
/// Channel keys hash the recording bytes with the speech model; roomprint keys add the stage
/// configuration, so sweeps over filterbank or alpha reuse every channel estimate.
#[derive(Debug, Clone)]
pub struct ArtifactCache {
    dir: PathBuf,
}

impl ArtifactCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn channel_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("channel-{key}.csv"))
    }

    fn roomprint_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("roomprint-{key}.json"))
    }
}

pub fn model_digest(model: &SpeechModel) -> String {
    hex(&Sha256::digest(model.to_container().to_bytes()))
}

fn channel_key(recording: &Path, model_digest: &str) -> Result<String> {
    let bytes = std::fs::read(recording).map_err(|e| Error::io(recording, e))?;
    let mut h = Sha256::new();
    h.update(b"channel\0");
    h.update(model_digest.as_bytes());
    h.update(&bytes);
    Ok(hex(&h.finalize()))
}

fn roomprint_key(channel_key: &str, cfg: &StageConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(b"roomprint\0");
    h.update(channel_key.as_bytes());
    h.update(serde_json::to_vec(cfg)?);
    Ok(hex(&h.finalize()))
}

/// Computes (or loads from the cache) the roomprint of one recording file.
pub fn roomprint_for_file(
    path: &Path,
    model: &SpeechModel,
    model_digest: &str,
    cfg: &StageConfig,
    registry: &FitterRegistry,
    cache: Option<&ArtifactCache>,
) -> Result<Roomprint> {
    let fs = model.frame_config.sample_rate_hz;
    let Some(cache) = cache else {
        return process_recording(&read_audio(path)?, model, cfg, registry).map(|a| a.roomprint);
    };
    let ck = channel_key(path, model_digest)?;
    let rk = roomprint_key(&ck, cfg)?;
    let rp_path = cache.roomprint_path(&rk);
    if rp_path.exists() {
        return Roomprint::read_json(&rp_path);
    }
    let ch_path = cache.channel_path(&ck);
    let channel = if ch_path.exists() {
        ChannelEstimate::read_csv(&ch_path)?
    } else {
        let audio = resample(&read_audio(path)?, fs)?;
        let c = estimate_channel(&audio, model)?;
        c.write_csv(&ch_path, false)?;
        c
    };
    let (_, _, rp) = roomprint_from_channel(&channel, fs, cfg, registry)?;
    rp.write_json(&rp_path)?;
    Ok(rp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

/// A roomprint with the dataset row it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub path: PathBuf,
    pub room: String,
    pub condition: Condition,
    pub split: Split,
    pub roomprint: Roomprint,
}

/// Roomprints for `entries`, in order; failures and files over the failed-band limit go to the
/// skipped list instead.
pub fn extract_features(
    entries: &[&DatasetEntry],
    model: &SpeechModel,
    cfg: &StageConfig,
    registry: &FitterRegistry,
    cache: Option<&ArtifactCache>,
) -> Result<(Vec<FeatureRow>, Vec<SkippedFile>)> {
    cfg.validate()?;
    registry.get(&cfg.fit_method)?;
    let digest = model_digest(model);
    let results: Vec<Result<Roomprint>> = entries
        .par_iter()
        .map(|e| roomprint_for_file(&e.path, model, &digest, cfg, registry, cache))
        .collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (e, r) in entries.iter().zip(results) {
        let reason = match r {
            Ok(rp) if rp.failed_bands.len() <= MAX_FAILED_BANDS => {
                rows.push(FeatureRow {
                    path: e.path.clone(),
                    room: e.room.clone(),
                    condition: e.condition,
                    split: e.split,
                    roomprint: rp,
                });
                continue;
            }
            Ok(rp) => format!(
                "{} bands failed RT60 extraction (indices {:?})",
                rp.failed_bands.len(),
                rp.failed_band_indices()
            ),
            Err(err) => err.to_string(),
        };
        warn!("skipping {}: {reason}", e.path.display());
        skipped.push(SkippedFile {
            path: e.path.clone(),
            reason,
        });
    }
    Ok((rows, skipped))
}

const FEATURE_META: [&str; 8] = ["path", "room", "condition", "split", "fraction", "alpha", "log_transformed", "failed_bands"];

/// One row per recording: metadata, then RT60 seconds under `band_<index>` columns.
pub fn write_features_csv(path: impl AsRef<Path>, rows: &[FeatureRow]) -> Result<()> {
    let path = path.as_ref();
    let first = rows
        .first()
        .ok_or_else(|| Error::InvalidArgument("no feature rows to write".into()))?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = FEATURE_META.iter().map(|s| s.to_string()).collect();
    header.extend(first.roomprint.band_indices.iter().map(|i| format!("band_{i}")));
    w.write_record(&header)?;
    for r in rows {
        let rp = &r.roomprint;
        if rp.band_indices != first.roomprint.band_indices {
            return Err(Error::FeatureMismatch(format!("{}: different band layout", r.path.display())));
        }
        let failed: Vec<String> = rp.failed_band_indices().iter().map(i32::to_string).collect();
        let mut rec = vec![
            r.path.to_string_lossy().into_owned(),
            r.room.clone(),
            r.condition.to_string(),
            r.split.to_string(),
            rp.fraction.to_string(),
            rp.alpha.to_string(),
            rp.log_transformed.to_string(),
            failed.join(";"),
        ];
        rec.extend(rp.rt60_s.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a features CSV. `alpha_used` is not stored; it reads back as `alpha` for every
/// successful band.
pub fn read_features_csv(path: impl AsRef<Path>) -> Result<Vec<FeatureRow>> {
    let path = path.as_ref();
    let bad = |msg: String| Error::CorruptFile(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.len() <= FEATURE_META.len() || header.iter().take(FEATURE_META.len()).ne(FEATURE_META.iter().copied()) {
        return Err(bad(format!("header must start with {}", FEATURE_META.join(","))));
    }
    let indices: Vec<i32> = header
        .iter()
        .skip(FEATURE_META.len())
        .map(|h| h.strip_prefix("band_").and_then(|v| v.parse().ok()).ok_or_else(|| bad(format!("bad column {h:?}"))))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row_err = |what: &str| bad(format!("row {}: bad {what}", line + 1));
        let fraction: u32 = rec[4].parse().map_err(|_| row_err("fraction"))?;
        let alpha: f64 = rec[5].parse().map_err(|_| row_err("alpha"))?;
        let log_transformed: bool = rec[6].parse().map_err(|_| row_err("log_transformed"))?;
        let failed_idx: Vec<i32> = rec[7]
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| row_err("failed_bands")))
            .collect::<Result<_>>()?;
        let rt60_s: Vec<f64> = rec
            .iter()
            .skip(FEATURE_META.len())
            .map(|v| v.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| row_err("RT60")))
            .collect::<Result<_>>()?;
        let failed_bands: Vec<usize> = failed_idx
            .iter()
            .map(|i| indices.iter().position(|j| j == i).ok_or_else(|| row_err("failed_bands")))
            .collect::<Result<_>>()?;
        let alpha_used = (0..indices.len())
            .map(|i| if failed_bands.contains(&i) { 0.0 } else { alpha })
            .collect();
        rows.push(FeatureRow {
            path: PathBuf::from(&rec[0]),
            room: rec[1].to_string(),
            condition: rec[2].parse()?,
            split: rec[3].parse()?,
            roomprint: Roomprint {
                rt60_s,
                band_midbands_hz: indices.iter().map(|&i| Band::new(fraction, i).f_m).collect(),
                band_indices: indices.clone(),
                fraction,
                alpha,
                log_transformed,
                alpha_used,
                failed_bands,
            },
        });
    }
    Ok(rows)
}

/// Rows of `split` whose condition `field` admits.
pub fn select_rows(rows: &[FeatureRow], split: Split, field: FieldSelection) -> Vec<&FeatureRow> {
    rows.iter().filter(|r| r.split == split && field.admits(r.condition)).collect()
}

pub fn train_on_rows(rows: &[&FeatureRow], grid: &GridConfig) -> Result<(SvmModel, GridReport)> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no usable training recordings".into()));
    }
    let features: Vec<Roomprint> = rows.iter().map(|r| r.roomprint.clone()).collect();
    let labels: Vec<String> = rows.iter().map(|r| r.room.clone()).collect();
    train_classifier(&features, &labels, grid)
}

pub fn evaluate_rows(model: &SvmModel, rows: &[&FeatureRow]) -> Result<Metrics> {
    let features: Vec<Roomprint> = rows.iter().map(|r| r.roomprint.clone()).collect();
    let labels: Vec<String> = rows.iter().map(|r| r.room.clone()).collect();
    model.evaluate(&features, &labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub stage: StageConfig,
    pub grid: GridConfig,
    pub train_field: FieldSelection,
    pub test_field: FieldSelection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            stage: StageConfig::default(),
            grid: GridConfig::default(),
            train_field: FieldSelection::Near,
            test_field: FieldSelection::Near,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub metrics: Metrics,
    pub grid: GridReport,
    pub n_train: usize,
    pub n_test: usize,
    pub skipped: Vec<SkippedFile>,
}

impl ExperimentResult {
    pub fn is_degraded(&self) -> bool {
        !self.skipped.is_empty()
    }
}

/// Extracts roomprints for the selected train and test recordings, trains the classifier on
/// the train side and scores it on the test side.
pub fn run_experiment(
    config: &ExperimentConfig,
    dataset: &Dataset,
    model: &SpeechModel,
    registry: &FitterRegistry,
    cache: Option<&ArtifactCache>,
) -> Result<ExperimentResult> {
    let train = dataset.select(Split::Train, config.train_field);
    let test = dataset.select(Split::Test, config.test_field);
    if train.is_empty() || test.is_empty() {
        return Err(Error::ManifestInvalid(format!(
            "{} training and {} test recordings under the {}/{} selection",
            train.len(),
            test.len(),
            config.train_field,
            config.test_field
        )));
    }
    let all: Vec<&DatasetEntry> = train.iter().chain(&test).copied().collect();
    let (rows, skipped) = extract_features(&all, model, &config.stage, registry, cache)?;
    let train_rows = select_rows(&rows, Split::Train, config.train_field);
    let test_rows = select_rows(&rows, Split::Test, config.test_field);
    if test_rows.is_empty() {
        return Err(Error::InvalidArgument("every test recording was skipped".into()));
    }
    let (svm, grid) = train_on_rows(&train_rows, &config.grid)?;
    let metrics = evaluate_rows(&svm, &test_rows)?;
    info!(
        "B={} alpha={} {}/{}: accuracy {:.1}% ({} skipped)",
        config.stage.fraction,
        config.stage.alpha,
        config.train_field,
        config.test_field,
        metrics.accuracy,
        skipped.len()
    );
    Ok(ExperimentResult {
        config: config.clone(),
        metrics,
        grid,
        n_train: train_rows.len(),
        n_test: test_rows.len(),
        skipped,
    })
}
