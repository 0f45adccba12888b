use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use roomprint::audio::{read_audio, resample, write_wav};
use roomprint::channel::{estimate_channel, ChannelEstimate};
use roomprint::classifier::{GridConfig, SvmModel};
use roomprint::dataset::{load_speech, Dataset, DatasetEntry, DatasetManifest, FieldSelection, Split};
use roomprint::dsp::FrameConfig;
use roomprint::filter::FitterRegistry;
use roomprint::pipeline::{
    evaluate_rows, extract_features, process_recording, read_features_csv, roomprint_from_channel, run_experiment,
    select_rows, train_on_rows, train_speech_model_on, write_features_csv, ArtifactCache, ExperimentConfig,
    ExperimentResult, FeatureRow, SkippedFile, StageConfig,
};
use roomprint::roomprint::Roomprint;
use roomprint::speech_model::{AvgSpectrumMode, SpeechModel, TrainOptions};
use roomprint::synth::is_spec;
use roomprint::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_INVALID_INPUT: u8 = 2;
const EXIT_DEGRADED: u8 = 3;

#[derive(Parser)]
#[command(name = "roomprint", version, about = "Blind room fingerprinting from reverberant speech")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, global = true, default_value_t = 16000)]
    sample_rate: u32,
    #[arg(long, global = true, default_value_t = 128.0)]
    frame_ms: f64,
    #[arg(long, global = true, default_value_t = 0.5)]
    overlap: f64,
    #[arg(long, global = true, default_value_t = 1024)]
    mixtures: usize,
    #[arg(long, global = true, default_value_t = 12)]
    mfcc: usize,
    /// B in 1/B-octave bands.
    #[arg(long, global = true, default_value_t = 4)]
    octave_fraction: u32,
    #[arg(long, global = true, default_value_t = 1.5)]
    alpha: f64,
    /// Numerator and denominator orders, `n_b,n_a`.
    #[arg(long, global = true, default_value = "24,24", value_parser = parse_orders)]
    orders: (usize, usize),
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = roomprint::filter::DEFAULT_FITTER)]
    fit_method: String,
    /// Classify natural logs of the RT60s.
    #[arg(long, global = true)]
    log_rt: bool,
    #[arg(long, global = true, default_value_t = 100.0)]
    f_min: f64,
    #[arg(long, global = true, default_value_t = 8000.0)]
    f_max: f64,
    /// Directory for cached channel estimates and roomprints.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

impl Common {
    fn frame_config(&self) -> FrameConfig {
        FrameConfig {
            frame_ms: self.frame_ms,
            overlap: self.overlap,
            n_fft: None,
            n_mfcc: self.mfcc,
            sample_rate_hz: self.sample_rate,
        }
    }

    fn stage(&self) -> StageConfig {
        StageConfig {
            fraction: self.octave_fraction,
            alpha: self.alpha,
            f_min_hz: self.f_min,
            f_max_hz: self.f_max,
            n_b: self.orders.0,
            n_a: self.orders.1,
            fit_method: self.fit_method.clone(),
            log_transform: self.log_rt,
        }
    }

    fn cache(&self) -> anyhow::Result<Option<ArtifactCache>> {
        Ok(self.cache.as_ref().map(ArtifactCache::new).transpose()?)
    }
}

fn parse_orders(s: &str) -> Result<(usize, usize), String> {
    let (b, a) = s.split_once(',').ok_or("expected n_b,n_a")?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(b)?, parse(a)?))
}

/// `train:test` field pair such as `near:far`.
fn parse_pair(s: &str) -> Result<(FieldSelection, FieldSelection), String> {
    let (a, b) = s.split_once(':').ok_or("expected train:test, e.g. near:far")?;
    Ok((a.parse().map_err(|e: Error| e.to_string())?, b.parse().map_err(|e: Error| e.to_string())?))
}

#[derive(Subcommand)]
enum Command {
    /// Train the speech model (GMM plus average spectra) on dry speech.
    TrainGmm(TrainGmmArgs),
    /// Convolve a manifest's speech with its impulse responses.
    SynthDataset(SynthDatasetArgs),
    /// Estimate the channel log-magnitude of one recording.
    EstimateChannel(EstimateChannelArgs),
    /// Compute the roomprint of one recording, or a features table for a dataset.
    ExtractRoomprint(ExtractArgs),
    /// Train the room classifier.
    TrainClassifier(TrainClassifierArgs),
    /// Predict the room of one recording or roomprint.
    Classify(ClassifyArgs),
    /// Score a classifier on the test split.
    Evaluate(EvaluateArgs),
    /// Run train/test experiments over filterbank, alpha and field-condition settings.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct TrainGmmArgs {
    /// WAV files, directories of WAV files, or `synth:seed=N;len=S` speech specs.
    #[arg(required = true)]
    inputs: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    /// Keep average spectra in raw log-power rather than mean-normalized form.
    #[arg(long)]
    raw_average: bool,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Write the training log-likelihood trace as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SynthDatasetArgs {
    /// CSV with header speech_path,rir,room,condition,split.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateChannelArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Three-bin moving average of the written values.
    #[arg(long)]
    smooth: bool,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Reverberant recording.
    #[arg(long, conflicts_with_all = ["channel", "dataset"])]
    input: Option<PathBuf>,
    /// Channel estimate CSV written by estimate-channel.
    #[arg(long, conflicts_with = "dataset")]
    channel: Option<PathBuf>,
    /// dataset.csv written by synth-dataset; produces a features CSV.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Roomprint JSON, or the features CSV in dataset mode.
    #[arg(long)]
    out: PathBuf,
    /// Also write the roomprint CSV (midband header, one row of RT60s).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also write the fitted filter coefficients.
    #[arg(long)]
    filter_out: Option<PathBuf>,
    /// Also write the synthesized impulse response.
    #[arg(long)]
    ir_out: Option<PathBuf>,
    /// Write the skipped-file report (dataset mode).
    #[arg(long)]
    skipped_out: Option<PathBuf>,
}

#[derive(Args)]
struct FeatureSource {
    /// Features CSV written by extract-roomprint --dataset.
    #[arg(long, conflicts_with = "dataset")]
    features: Option<PathBuf>,
    /// dataset.csv; roomprints are computed with --model.
    #[arg(long, requires = "model")]
    dataset: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct TrainClassifierArgs {
    #[command(flatten)]
    source: FeatureSource,
    /// Recording conditions to train on.
    #[arg(long, default_value = "near")]
    condition: FieldSelection,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Two grid points per decade instead of one.
    #[arg(long)]
    fine_grid: bool,
    #[arg(long)]
    out: PathBuf,
    /// Write the cross-validation grid as JSON.
    #[arg(long)]
    grid_report: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    classifier: PathBuf,
    #[arg(long, conflicts_with = "input")]
    roomprint: Option<PathBuf>,
    #[arg(long, requires = "model")]
    input: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    classifier: PathBuf,
    #[command(flatten)]
    source: FeatureSource,
    /// Recording conditions to test on.
    #[arg(long, default_value = "near")]
    condition: FieldSelection,
    /// Metrics JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Filterbank fractions; defaults to --octave-fraction.
    #[arg(long, value_delimiter = ',')]
    fractions: Vec<u32>,
    /// Interpolation factors; defaults to --alpha.
    #[arg(long, value_delimiter = ',')]
    alphas: Vec<f64>,
    /// Comma-separated train:test field pairs.
    #[arg(long, default_value = "near:near", value_delimiter = ',', value_parser = parse_pair)]
    pairs: Vec<(FieldSelection, FieldSelection)>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Summary CSV, one row per experiment.
    #[arg(long)]
    out: PathBuf,
    /// Full results (metrics, grids, skipped files) as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

enum Outcome {
    Done,
    Degraded,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn load_model(path: &Option<PathBuf>) -> anyhow::Result<SpeechModel> {
    let path = path.as_ref().ok_or_else(|| Error::InvalidArgument("--model is required".into()))?;
    Ok(SpeechModel::load(path)?)
}

fn check_model_config(model: &SpeechModel, c: &Common) -> anyhow::Result<()> {
    let cfg = c.frame_config();
    if model.frame_config.sample_rate_hz != cfg.sample_rate_hz {
        return Err(Error::ConfigMismatch(format!(
            "speech model is for {} Hz, --sample-rate is {}",
            model.frame_config.sample_rate_hz, cfg.sample_rate_hz
        ))
        .into());
    }
    Ok(())
}

fn report_skipped(skipped: &[SkippedFile], out: Option<&Path>) -> anyhow::Result<()> {
    for s in skipped {
        warn!("skipped {}: {}", s.path.display(), s.reason);
    }
    if let Some(p) = out {
        write_json(p, &skipped)?;
    }
    Ok(())
}

fn expand_inputs(inputs: &[String]) -> anyhow::Result<Vec<String>> {
    let mut out = Vec::new();
    for i in inputs {
        let p = Path::new(i);
        if !is_spec(i) && p.is_dir() {
            let mut wavs: Vec<String> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
                .map(|p| p.to_string_lossy().into_owned())
                .collect();
            wavs.sort();
            out.extend(wavs);
        } else {
            out.push(i.clone());
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("no training inputs found".into()).into());
    }
    Ok(out)
}

fn train_gmm(c: &Common, a: &TrainGmmArgs) -> anyhow::Result<Outcome> {
    let inputs = expand_inputs(&a.inputs)?;
    let recordings = inputs
        .iter()
        .map(|i| load_speech(Path::new(""), i, c.sample_rate))
        .collect::<roomprint::Result<Vec<_>>>()?;
    let opts = TrainOptions {
        mixtures: c.mixtures,
        seed: c.seed,
        max_iterations: a.max_iterations,
        tolerance: a.tolerance,
        avg_mode: if a.raw_average {
            AvgSpectrumMode::Raw
        } else {
            AvgSpectrumMode::Normalized
        },
        ..TrainOptions::default()
    };
    let (model, report) = train_speech_model_on(&recordings, c.frame_config(), &opts)?;
    model.save(&a.out)?;
    if let Some(p) = &a.report {
        write_json(p, &report)?;
    }
    println!(
        "trained {} mixtures in {} iterations (converged: {}) -> {}",
        model.n_mixtures(),
        report.iterations,
        report.converged,
        a.out.display()
    );
    Ok(if report.variance_clamped {
        warn!("variance floor was applied to at least one component");
        Outcome::Degraded
    } else {
        Outcome::Done
    })
}

fn synth(c: &Common, a: &SynthDatasetArgs) -> anyhow::Result<Outcome> {
    let manifest = DatasetManifest::read_csv(&a.manifest, c.sample_rate)?;
    let (_, report) = roomprint::dataset::synth_dataset(&manifest, &a.out)?;
    println!(
        "{} recordings ({} train, {} test) -> {}",
        report.n_files,
        report.n_train,
        report.n_test,
        a.out.display()
    );
    Ok(Outcome::Done)
}

fn estimate(c: &Common, a: &EstimateChannelArgs) -> anyhow::Result<Outcome> {
    let model = SpeechModel::load(&a.model)?;
    check_model_config(&model, c)?;
    let audio = resample(&read_audio(&a.input)?, model.frame_config.sample_rate_hz)?;
    let est = estimate_channel(&audio, &model)?;
    est.write_csv(&a.out, a.smooth)?;
    println!("{} bins from {} frames -> {}", est.n_bins(), est.n_frames_used, a.out.display());
    Ok(Outcome::Done)
}

fn extract(c: &Common, a: &ExtractArgs) -> anyhow::Result<Outcome> {
    let stage = c.stage();
    let registry = FitterRegistry::with_defaults();
    if let Some(ds_path) = &a.dataset {
        let model = load_model(&a.model)?;
        check_model_config(&model, c)?;
        let ds = Dataset::read_csv(ds_path)?;
        let entries: Vec<&DatasetEntry> = ds.entries.iter().collect();
        let (rows, skipped) = extract_features(&entries, &model, &stage, &registry, c.cache()?.as_ref())?;
        if rows.is_empty() {
            bail!(Error::InvalidArgument("every recording was skipped".into()));
        }
        write_features_csv(&a.out, &rows)?;
        report_skipped(&skipped, a.skipped_out.as_deref())?;
        println!("{} roomprints, {} skipped -> {}", rows.len(), skipped.len(), a.out.display());
        return Ok(if skipped.is_empty() { Outcome::Done } else { Outcome::Degraded });
    }
    let (fit, impulse, rp) = if let Some(ch) = &a.channel {
        roomprint_from_channel(&ChannelEstimate::read_csv(ch)?, c.sample_rate, &stage, &registry)?
    } else if let Some(input) = &a.input {
        let model = load_model(&a.model)?;
        check_model_config(&model, c)?;
        let art = process_recording(&read_audio(input)?, &model, &stage, &registry)?;
        (art.fit, art.impulse, art.roomprint)
    } else {
        bail!(Error::InvalidArgument("one of --input, --channel or --dataset is required".into()));
    };
    if fit.warnings.any() {
        warn!(
            "reflected {} poles and {} zeros into the unit circle",
            fit.warnings.reflected_poles, fit.warnings.reflected_zeros
        );
    }
    rp.write_json(&a.out)?;
    if let Some(p) = &a.csv {
        rp.write_csv(p)?;
    }
    if let Some(p) = &a.filter_out {
        fit.filter.write_csv(p)?;
    }
    if let Some(p) = &a.ir_out {
        write_wav(p, &impulse)?;
    }
    println!("{} bands, {} failed -> {}", rp.len(), rp.failed_bands.len(), a.out.display());
    Ok(if rp.is_complete() {
        Outcome::Done
    } else {
        warn!("failed bands {:?} were interpolated", rp.failed_band_indices());
        Outcome::Degraded
    })
}

fn load_rows(c: &Common, src: &FeatureSource) -> anyhow::Result<(Vec<FeatureRow>, Vec<SkippedFile>)> {
    if let Some(f) = &src.features {
        return Ok((read_features_csv(f)?, Vec::new()));
    }
    let ds_path = src
        .dataset
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("one of --features or --dataset is required".into()))?;
    let model = load_model(&src.model)?;
    check_model_config(&model, c)?;
    let ds = Dataset::read_csv(ds_path)?;
    let entries: Vec<&DatasetEntry> = ds.entries.iter().collect();
    Ok(extract_features(
        &entries,
        &model,
        &c.stage(),
        &FitterRegistry::with_defaults(),
        c.cache()?.as_ref(),
    )?)
}

fn grid(c: &Common, folds: usize, fine: bool) -> GridConfig {
    let values = if fine {
        roomprint::classifier::half_decade_grid()
    } else {
        roomprint::classifier::decade_grid()
    };
    GridConfig {
        grid_c: values.clone(),
        grid_gamma: values,
        folds,
        seed: c.seed,
    }
}

fn train_classifier(c: &Common, a: &TrainClassifierArgs) -> anyhow::Result<Outcome> {
    let (rows, skipped) = load_rows(c, &a.source)?;
    report_skipped(&skipped, None)?;
    let train = select_rows(&rows, Split::Train, a.condition);
    let (svm, report) = train_on_rows(&train, &grid(c, a.folds, a.fine_grid))?;
    svm.save(&a.out)?;
    if let Some(p) = &a.grid_report {
        write_json(p, &report)?;
    }
    println!(
        "{} classes from {} roomprints: c={} gamma={} cross-validated {:.1}% -> {}",
        svm.n_classes(),
        train.len(),
        report.best_c,
        report.best_gamma,
        report.best_accuracy,
        a.out.display()
    );
    Ok(if skipped.is_empty() { Outcome::Done } else { Outcome::Degraded })
}

fn classify(c: &Common, a: &ClassifyArgs) -> anyhow::Result<Outcome> {
    let svm = SvmModel::load(&a.classifier)?;
    let rp = if let Some(p) = &a.roomprint {
        Roomprint::read_json(p)?
    } else if let Some(input) = &a.input {
        let model = load_model(&a.model)?;
        check_model_config(&model, c)?;
        process_recording(&read_audio(input)?, &model, &c.stage(), &FitterRegistry::with_defaults())?.roomprint
    } else {
        bail!(Error::InvalidArgument("one of --roomprint or --input is required".into()));
    };
    println!("{}", svm.predict(&rp)?);
    Ok(if rp.is_complete() { Outcome::Done } else { Outcome::Degraded })
}

fn evaluate(c: &Common, a: &EvaluateArgs) -> anyhow::Result<Outcome> {
    let svm = SvmModel::load(&a.classifier)?;
    let (rows, skipped) = load_rows(c, &a.source)?;
    report_skipped(&skipped, None)?;
    let test = select_rows(&rows, Split::Test, a.condition);
    if test.is_empty() {
        bail!(Error::InvalidArgument(format!("no {} test roomprints", a.condition)));
    }
    let metrics = evaluate_rows(&svm, &test)?;
    print!("{}", metrics.to_table());
    if let Some(p) = &a.out {
        write_json(p, &metrics)?;
    }
    Ok(if skipped.is_empty() { Outcome::Done } else { Outcome::Degraded })
}

fn sweep(c: &Common, a: &SweepArgs) -> anyhow::Result<Outcome> {
    let model = SpeechModel::load(&a.model)?;
    check_model_config(&model, c)?;
    let ds = Dataset::read_csv(&a.dataset)?;
    let cache = match c.cache()? {
        Some(cache) => cache,
        None => ArtifactCache::new(a.dataset.parent().unwrap_or(Path::new(".")).join("cache"))?,
    };
    info!("artifact cache at {}", cache.dir().display());
    let registry = FitterRegistry::with_defaults();
    let fractions = if a.fractions.is_empty() {
        vec![c.octave_fraction]
    } else {
        a.fractions.clone()
    };
    let alphas = if a.alphas.is_empty() { vec![c.alpha] } else { a.alphas.clone() };
    let mut results: Vec<ExperimentResult> = Vec::new();
    let mut w = csv::Writer::from_path(&a.out)?;
    w.write_record([
        "fraction", "alpha", "train", "test", "precision", "recall", "accuracy", "n_train", "n_test", "skipped",
    ])?;
    for &fraction in &fractions {
        for &alpha in &alphas {
            for &(train_field, test_field) in &a.pairs {
                let config = ExperimentConfig {
                    stage: StageConfig {
                        fraction,
                        alpha,
                        ..c.stage()
                    },
                    grid: grid(c, a.folds, false),
                    train_field,
                    test_field,
                };
                let r = run_experiment(&config, &ds, &model, &registry, Some(&cache))?;
                println!(
                    "B={fraction} alpha={alpha} {train_field}/{test_field}: P {:.1} R {:.1} A {:.1}",
                    r.metrics.precision, r.metrics.recall, r.metrics.accuracy
                );
                w.write_record([
                    fraction.to_string(),
                    alpha.to_string(),
                    train_field.to_string(),
                    test_field.to_string(),
                    format!("{:.1}", r.metrics.precision),
                    format!("{:.1}", r.metrics.recall),
                    format!("{:.1}", r.metrics.accuracy),
                    r.n_train.to_string(),
                    r.n_test.to_string(),
                    r.skipped.len().to_string(),
                ])?;
                results.push(r);
            }
        }
    }
    w.flush()?;
    if let Some(p) = &a.json {
        write_json(p, &results)?;
    }
    Ok(if results.iter().any(ExperimentResult::is_degraded) {
        Outcome::Degraded
    } else {
        Outcome::Done
    })
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let invalid = err.chain().any(|e| match e.downcast_ref::<Error>() {
        Some(Error::Io { source, .. }) => matches!(
            source.kind(),
            std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied
        ),
        Some(e) => e.is_invalid_input(),
        None => e.downcast_ref::<csv::Error>().is_some(),
    });
    if invalid {
        EXIT_INVALID_INPUT
    } else {
        EXIT_FAILURE
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let c = &cli.common;
    let result = match &cli.command {
        Command::TrainGmm(a) => train_gmm(c, a),
        Command::SynthDataset(a) => synth(c, a),
        Command::EstimateChannel(a) => estimate(c, a),
        Command::ExtractRoomprint(a) => extract(c, a),
        Command::TrainClassifier(a) => train_classifier(c, a),
        Command::Classify(a) => classify(c, a),
        Command::Evaluate(a) => evaluate(c, a),
        Command::Sweep(a) => sweep(c, a),
    };
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Degraded) => ExitCode::from(EXIT_DEGRADED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::anyhow;

    #[test]
    fn parses_flag_values() {
        assert_eq!(parse_orders("24,12"), Ok((24, 12)));
        assert!(parse_orders("24").is_err());
        assert_eq!(parse_pair("near:far"), Ok((FieldSelection::Near, FieldSelection::Far)));
        assert!(parse_pair("near").is_err());
    }

    #[test]
    fn invalid_input_maps_to_exit_two() {
        let e: anyhow::Error = Error::ManifestInvalid("x".into()).into();
        assert_eq!(exit_code(&e), EXIT_INVALID_INPUT);
        let io = Error::Io {
            path: "x".into(),
            source: std::io::Error::other("disk"),
        };
        assert_eq!(exit_code(&io.into()), EXIT_FAILURE);
        assert_eq!(exit_code(&anyhow!("other")), EXIT_FAILURE);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
