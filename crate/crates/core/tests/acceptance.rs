//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::f64::consts::{LN_10, PI};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use roomprint::audio::convolve_rir;
use roomprint::channel::{estimate_channel, ChannelEstimate};
use roomprint::classifier::{train_on_matrix, FeatureSpec, GridConfig, SvmModel};
use roomprint::dataset::{synth_dataset, Condition, DatasetManifest, ManifestEntry, Split};
use roomprint::dsp::{analyze, FrameConfig};
use roomprint::filter::poly::from_roots;
use roomprint::filter::{fit_minimum_phase_filter, minimum_phase_target, DigitalFilter};
use roomprint::pipeline::{run_experiment, train_speech_model_on, ExperimentConfig};
use roomprint::roomprint::{compute_roomprint, design_filterbank, schroeder_decay, Roomprint};
use roomprint::speech_model::{mixture_posteriors, SpeechModel, TrainOptions};
use roomprint::synth::synth_speech;
use roomprint::{AudioBuffer, Matrix};

const FS: u32 = 16000;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, started: Instant, detail: String) -> Outcome {
    let took = started.elapsed();
    check(took < limit, format!("{detail}; {took:.1?} (limit {limit:?})"))
}

fn filterbank_exactness() -> Outcome {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for b in [3u32, 4, 8] {
        let bank = design_filterbank(b, 20.0, 20000.0, 48000).map_err(|e| e.to_string())?;
        for band in &bank.bands {
            let x = (band.index - 30) as f64;
            let fm = if b % 2 == 1 {
                1000.0 * 2f64.powf(x / b as f64)
            } else {
                1000.0 * 2f64.powf((2.0 * x + 1.0) / (2.0 * b as f64))
            };
            let half = 2f64.powf(1.0 / (2.0 * b as f64));
            for (got, want) in [(band.f_m, fm), (band.f_l, fm / half), (band.f_u, fm * half)] {
                worst = worst.max((got / want - 1.0).abs());
            }
            worst = worst.max(((band.f_l * band.f_u).sqrt() / band.f_m - 1.0).abs());
        }
        if bank.bands.windows(2).any(|w| w[0].f_u != w[1].f_l || w[1].index != w[0].index + 1) {
            return Err(format!("B={b}: neighbouring bands do not share edges"));
        }
    }
    let n26 = design_filterbank(4, 100.0, 8000.0, FS).map_err(|e| e.to_string())?.len();
    if n26 != 26 {
        return Err(format!("B=4 over [100, 8000] Hz gave {n26} bands"));
    }
    if worst >= 1e-9 {
        return Err(format!("relative edge error {worst:.2e}"));
    }
    within(Duration::from_secs(1), t0, format!("max relative error {worst:.1e}, 26 bands at B=4"))
}

/// A decaying cosine at every band midband, so each band holds a deterministic exponential.
fn multitone_rir(midbands: &[f64], rt60: f64) -> AudioBuffer {
    let tau = rt60 / (3.0 * LN_10);
    let n = ((2.0 * rt60 + 0.2) * FS as f64) as usize;
    let x = (0..n)
        .map(|i| {
            let t = i as f64 / FS as f64;
            let carrier: f64 = midbands
                .iter()
                .enumerate()
                .map(|(k, f)| (2.0 * PI * f * t + 0.7 * (k * k) as f64).cos())
                .sum();
            carrier * (-t / tau).exp()
        })
        .collect();
    AudioBuffer::new(x, FS).unwrap()
}

fn rt60_oracle() -> Outcome {
    let t0 = Instant::now();
    let bank = design_filterbank(4, 100.0, 8000.0, FS).map_err(|e| e.to_string())?;
    let mut worst = (0.0, 0.0, 0.0, 0.0);
    for rt in [0.2, 0.34, 0.64, 1.0, 1.25, 1.5] {
        let rir = multitone_rir(&bank.midbands(), rt);
        for alpha in [1.0, 1.2, 1.5, 2.0, 3.0] {
            let rp = compute_roomprint(&rir, &bank, alpha, false).map_err(|e| e.to_string())?;
            for (f, est) in rp.band_midbands_hz.iter().zip(&rp.rt60_s) {
                let err = (est / rt - 1.0).abs();
                if *f >= 200.0 && err > worst.0 {
                    worst = (err, rt, alpha, *f);
                }
            }
        }
    }
    let (err, rt, alpha, f) = worst;
    let detail = format!(
        "worst error {:.2}% (RT {rt} s, alpha {alpha}, {f:.0} Hz)",
        100.0 * err
    );
    if err >= 0.05 {
        return Err(detail);
    }
    within(Duration::from_secs(30), t0, detail)
}

/// Conjugate pairs plus at most one real root, radii below `rmax`.
fn random_roots(rng: &mut ChaCha8Rng, order: usize, rmax: f64) -> Vec<Complex64> {
    let mut roots = Vec::with_capacity(order);
    for _ in 0..order / 2 {
        let z = Complex64::from_polar(rng.random_range(0.0..rmax), rng.random_range(0.05..PI - 0.05));
        roots.push(z);
        roots.push(z.conj());
    }
    if order % 2 == 1 {
        roots.push(Complex64::new(rng.random_range(-rmax..rmax), 0.0));
    }
    roots
}

fn log_mag_db(f: &DigitalFilter, n_bins: usize) -> Vec<f64> {
    f.frequency_response(n_bins, 1.0)
        .values
        .iter()
        .map(|h| 20.0 * h.norm().log10())
        .collect()
}

fn filter_round_trip() -> Outcome {
    let t0 = Instant::now();
    let n_bins = 1025;
    let bin_hz = FS as f64 / 2048.0;
    let lo = (100.0 / bin_hz).ceil() as usize;
    let hi = (7600.0 / bin_hz).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_mae: f64 = 0.0;
    let mut worst_radius: f64 = 0.0;
    for trial in 0..50 {
        let n_b = rng.random_range(1..=24);
        let n_a = rng.random_range(1..=24);
        let mut zeros = random_roots(&mut rng, n_b, 0.95);
        let mut poles = random_roots(&mut rng, n_a, 0.95);
        // Pull roots inwards until the magnitude spans at most 40 dB.
        let truth = loop {
            let a = from_roots(1.0, &poles)[1..].to_vec();
            let f = DigitalFilter::new(from_roots(1.0, &zeros), a).map_err(|e| e.to_string())?;
            let db = log_mag_db(&f, n_bins);
            let range = db.iter().cloned().fold(f64::MIN, f64::max) - db.iter().cloned().fold(f64::MAX, f64::min);
            if range <= 40.0 {
                break f;
            }
            zeros.iter_mut().chain(poles.iter_mut()).for_each(|r| *r *= 0.97);
        };
        let db = log_mag_db(&truth, n_bins);
        let estimate = ChannelEstimate {
            log_magnitude: db.iter().map(|v| v / 20.0 * LN_10).collect(),
            bin_hz,
            n_frames_used: 0,
        };
        let target = minimum_phase_target(&estimate).map_err(|e| e.to_string())?;
        let fit = fit_minimum_phase_filter(&target, 24, 24).map_err(|e| format!("trial {trial}: {e}"))?;
        let got = log_mag_db(&fit.filter, n_bins);
        let mae = (lo..=hi).map(|k| (got[k] - db[k]).abs()).sum::<f64>() / (hi - lo + 1) as f64;
        worst_mae = worst_mae.max(mae);
        let radius = fit
            .filter
            .poles()
            .iter()
            .chain(&fit.filter.zeros())
            .map(|r| r.norm())
            .fold(0.0, f64::max);
        worst_radius = worst_radius.max(radius);
    }
    let detail = format!("worst MAE {worst_mae:.3} dB, largest root radius {worst_radius:.6}");
    if worst_mae >= 1.0 || worst_radius >= 1.0 {
        return Err(detail);
    }
    within(Duration::from_secs(60), t0, detail)
}

/// Independent per-speaker utterances; seeds never overlap with evaluation speech.
fn dry_corpus(minutes: f64, first_seed: u64) -> Vec<AudioBuffer> {
    let per = 30.0;
    let n = (minutes * 60.0 / per).ceil() as u64;
    (0..n).map(|i| synth_speech(per, FS, first_seed + i).unwrap()).collect()
}

fn desk_model() -> (SpeechModel, Duration) {
    let t0 = Instant::now();
    let opts = TrainOptions {
        mixtures: 64,
        seed: 1,
        ..TrainOptions::default()
    };
    let (model, _) = train_speech_model_on(&dry_corpus(30.0, 1000), FrameConfig::default(), &opts).unwrap();
    (model, t0.elapsed())
}

fn iir(x: &[f64], b: &[f64], a: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for n in 0..x.len() {
        let mut acc: f64 = b.iter().enumerate().filter(|(i, _)| n >= *i).map(|(i, bi)| bi * x[n - i]).sum();
        acc -= a.iter().enumerate().filter(|(i, _)| n > *i).map(|(i, ai)| ai * y[n - i - 1]).sum::<f64>();
        y[n] = acc;
    }
    y
}

fn channel_recovery(model: &SpeechModel, training_time: Duration) -> Outcome {
    let t0 = Instant::now();
    let cfg = model.frame_config;
    // A mild resonance near 1.6 kHz over a gentle tilt.
    let colour = DigitalFilter::new(vec![1.0, -0.6, 0.3], vec![-1.2, 0.7]).unwrap();
    let truth: Vec<f64> = colour
        .frequency_response(cfg.n_bins(), cfg.bin_hz())
        .values
        .iter()
        .map(|h| h.norm().ln())
        .collect();
    let span = truth.iter().cloned().fold(f64::MIN, f64::max) - truth.iter().cloned().fold(f64::MAX, f64::min);
    let lo = (100.0 / cfg.bin_hz()).ceil() as usize;
    let hi = (7600.0 / cfg.bin_hz()).floor() as usize;
    let mut worst_mae: f64 = 0.0;
    let mut worst_gain: f64 = 0.0;
    for seed in [90_001u64, 90_002, 90_003] {
        let dry = synth_speech(60.0, FS, seed).unwrap();
        let wet = AudioBuffer::new(iir(dry.samples(), colour.b(), colour.a()), FS).unwrap();
        let est = estimate_channel(&wet, model).map_err(|e| e.to_string())?;
        // The channel is identifiable up to a gain, so compare after removing the mean offset.
        let diff: Vec<f64> = (lo..=hi).map(|k| est.log_magnitude[k] - truth[k]).collect();
        let offset = diff.iter().sum::<f64>() / diff.len() as f64;
        let mae = diff.iter().map(|d| (d - offset).abs()).sum::<f64>() / diff.len() as f64;
        worst_mae = worst_mae.max(mae);
        for g in [1e-3, 0.25, 8.0] {
            let scaled = estimate_channel(&wet.scaled(g), model).map_err(|e| e.to_string())?;
            let d = scaled
                .log_magnitude
                .iter()
                .zip(&est.log_magnitude)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst_gain = worst_gain.max(d);
        }
    }
    let detail = format!(
        "MAE {worst_mae:.3} nats over a {span:.2}-nat coloration, gain deviation {worst_gain:.1e}, model training {training_time:.1?}"
    );
    if worst_mae >= 0.35 || worst_gain > 1e-9 {
        return Err(detail);
    }
    within(Duration::from_secs(600).saturating_sub(training_time), t0, detail)
}

fn end_to_end(model: &SpeechModel, training_time: Duration) -> Outcome {
    let t0 = Instant::now();
    // Five RT60 levels, each at least 30% apart, permuted across three anchor bands.
    let levels = [0.3, 0.4, 0.52, 0.68, 0.9];
    let mut entries = Vec::new();
    for room in 0..5 {
        let rir = format!(
            "synth:250={},1000={},4000={};seed={};len=1.2",
            levels[room],
            levels[(room + 2) % 5],
            levels[(room + 4) % 5],
            10 + room
        );
        for i in 0..40 {
            entries.push(ManifestEntry {
                speech: format!("synth:seed={};len=15", 100 * room + i),
                rir: rir.clone(),
                room: format!("room{room}"),
                condition: Condition::Near,
                split: if i % 5 == 4 { Split::Test } else { Split::Train },
            });
        }
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = DatasetManifest::new(entries, FS, dir.path()).map_err(|e| e.to_string())?;
    let (dataset, _) = synth_dataset(&manifest, dir.path().join("corpus")).map_err(|e| e.to_string())?;
    let registry = roomprint::filter::FitterRegistry::with_defaults();
    let r = run_experiment(&ExperimentConfig::default(), &dataset, model, &registry, None).map_err(|e| e.to_string())?;
    let detail = format!(
        "accuracy {:.1}% on {} test recordings ({} skipped), cross-validated {:.1}%",
        r.metrics.accuracy,
        r.n_test,
        r.skipped.len(),
        r.grid.best_accuracy
    );
    if r.metrics.accuracy < 90.0 {
        return Err(detail);
    }
    within(Duration::from_secs(1200).saturating_sub(training_time), t0, detail)
}

fn invariants(model: &SpeechModel) -> Outcome {
    let mut violations = Vec::new();

    let opts = TrainOptions {
        mixtures: 16,
        seed: 7,
        ..TrainOptions::default()
    };
    let (small, report) = train_speech_model_on(&dry_corpus(2.0, 30_000), FrameConfig::default(), &opts).unwrap();
    let drops = report
        .log_likelihoods
        .windows(2)
        .filter(|w| w[1] < w[0] - 1e-9 * w[0].abs())
        .count();
    if drops > 0 {
        violations.push(format!("{drops} EM log-likelihood decreases"));
    }

    let cepstra = analyze(&synth_speech(20.0, FS, 31_337).unwrap(), &model.frame_config).unwrap().cepstra;
    let post = mixture_posteriors(model, &cepstra).unwrap();
    let bad_rows = post
        .values
        .iter_rows()
        .filter(|r| (r.iter().sum::<f64>() - 1.0).abs() > 1e-12 || r.iter().any(|p| *p < 0.0))
        .count();
    if bad_rows > 0 {
        violations.push(format!("{bad_rows} posterior rows not stochastic"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..20 {
        let n = rng.random_range(100..4000);
        let x: Vec<f64> = (0..n).map(|i| rng.random_range(-1.0..1.0) * (-(i as f64) / 500.0).exp()).collect();
        let a = AudioBuffer::new(x, FS).unwrap();
        let edc = schroeder_decay(&a).unwrap();
        if edc.edc_db.windows(2).any(|w| w[1] > w[0]) {
            violations.push(format!("EDC {trial} increases"));
        }
        let scaled = schroeder_decay(&a.scaled(rng.random_range(1e-3..1e3))).unwrap();
        if edc.edc_db.iter().zip(&scaled.edc_db).any(|(u, v)| (u - v).abs() > 1e-9) {
            violations.push(format!("EDC {trial} changes under scaling"));
        }
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = dir.path().join("m.rplgmm");
    small.save(&p).unwrap();
    if SpeechModel::load(&p).unwrap() != small {
        violations.push("speech model round trip".into());
    }
    let x = Matrix::from_rows((0..30).map(|i| [(i % 3) as f64 * 4.0 + (i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()]));
    let labels: Vec<String> = (0..30).map(|i| format!("c{}", i % 3)).collect();
    let spec = FeatureSpec {
        n_features: 2,
        fraction: 4,
        alpha: 1.5,
        log_transformed: false,
    };
    let (svm, _) = train_on_matrix(spec, &x, &labels, &GridConfig::default()).unwrap();
    let p = dir.path().join("c.rplsvm");
    svm.save(&p).unwrap();
    if SvmModel::load(&p).unwrap() != svm {
        violations.push("classifier round trip".into());
    }
    let bank = design_filterbank(4, 100.0, 8000.0, FS).unwrap();
    let rp = compute_roomprint(&multitone_rir(&bank.midbands(), 0.5), &bank, 1.5, true).unwrap();
    let p = dir.path().join("r.json");
    rp.write_json(&p).unwrap();
    if Roomprint::read_json(&p).unwrap() != rp {
        violations.push("roomprint round trip".into());
    }
    let est = estimate_channel(
        &convolve_rir(&synth_speech(3.0, FS, 4).unwrap(), &AudioBuffer::unit_impulse(1, FS).unwrap()).unwrap(),
        model,
    )
    .unwrap();
    let p = dir.path().join("h.csv");
    est.write_csv(&p, false).unwrap();
    if ChannelEstimate::read_csv(&p).unwrap().log_magnitude != est.log_magnitude {
        violations.push("channel estimate round trip".into());
    }

    check(
        violations.is_empty(),
        if violations.is_empty() {
            format!("{} EM iterations, {} posterior rows, 20 decay curves, 4 round trips", report.iterations, post.values.rows())
        } else {
            violations.join("; ")
        },
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("acceptance {n} {tag}: {name}: {detail}");
    };
    report(1, "filterbank exactness", filterbank_exactness());
    report(2, "RT60 oracle", rt60_oracle());
    report(3, "filter design round trip", filter_round_trip());
    let (model, training_time) = desk_model();
    report(4, "channel estimator recovery", channel_recovery(&model, training_time));
    report(5, "end-to-end classification", end_to_end(&model, training_time));
    report(6, "module invariants", invariants(&model));
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
