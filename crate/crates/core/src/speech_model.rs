//! Diagonal-covariance GMM over RASTA-MFCCs paired with a per-mixture average speech spectrum.
//!
//! The GMM is trained by EM from a seeded k-means++ start. After training, every mixture
//! gets a row of the average-speech-spectrum matrix: the responsibility-weighted mean of the
//! mean-normalized training log-spectra. Multiplying a recording's posterior matrix by that
//! matrix yields its estimated dry ("ideal") speech spectra.

use std::f64::consts::PI;
use std::path::Path;

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::dsp::{CepstraMatrix, FrameConfig, SpectraMatrix};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const GMM_MAGIC: &[u8; 7] = b"RPLGMM1";
pub const VARIANCE_FLOOR: f64 = 1e-6;
/// Minimum training frames per mixture.
pub const FRAMES_PER_MIXTURE: usize = 10;
const EM_CHUNK: usize = 2048;
// Posteriors below this are skipped when accumulating the average spectra.
const POSTERIOR_SKIP: f64 = 1e-12;

/// How mixture rows of the average speech spectrum are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AvgSpectrumMode {
    /// Rows are responsibility-weighted means of the training log-spectra.
    #[default]
    Normalized,
    /// Rows are the plain product `P^T X` without dividing by the responsibility mass.
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGmm {
    pub priors: Vec<f64>,
    pub means: Matrix,
    pub variances: Matrix,
}

impl DiagonalGmm {
    pub fn n_mixtures(&self) -> usize {
        self.priors.len()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    /// Per-mixture constant `ln(pi_i) - 0.5 * sum_d ln(2 pi var_id)`.
    fn log_norms(&self) -> Vec<f64> {
        (0..self.n_mixtures())
            .map(|i| {
                let log_det: f64 = self
                    .variances
                    .row(i)
                    .iter()
                    .map(|v| (2.0 * PI * v).ln())
                    .sum();
                self.priors[i].ln() - 0.5 * log_det
            })
            .collect()
    }

    /// Fills `out` with `ln(pi_i N(x; mu_i, Sigma_i))` for every mixture.
    fn joint_log_densities(&self, x: &[f64], log_norms: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let q: f64 = self
                .means
                .row(i)
                .iter()
                .zip(self.variances.row(i))
                .zip(x)
                .map(|((m, v), xi)| (xi - m) * (xi - m) / v)
                .sum();
            *o = log_norms[i] - 0.5 * q;
        }
    }
}

/// Replaces `log_joint` by normalized posteriors and returns the frame log-likelihood.
/// Returns `None` when every term is non-finite, leaving a uniform row.
fn normalize_log_row(log_joint: &mut [f64]) -> Option<f64> {
    let max = log_joint.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        let u = 1.0 / log_joint.len() as f64;
        log_joint.iter_mut().for_each(|p| *p = u);
        return None;
    }
    let mut sum = 0.0;
    for p in log_joint.iter_mut() {
        *p = (*p - max).exp();
        sum += *p;
    }
    log_joint.iter_mut().for_each(|p| *p /= sum);
    Some(max + sum.ln())
}

/// Row-stochastic matrix of relative mixture probabilities, frames x mixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    pub values: Matrix,
    /// Frames whose posteriors all underflowed and were replaced by a uniform row.
    pub underflow_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Data log-likelihood before every M-step.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub variance_clamped: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub mixtures: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Stop once the per-frame log-likelihood gain drops below this.
    pub tolerance: f64,
    pub kmeans_iterations: usize,
    pub avg_mode: AvgSpectrumMode,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            mixtures: 1024,
            seed: 0,
            max_iterations: 200,
            tolerance: 1e-4,
            kmeans_iterations: 10,
            avg_mode: AvgSpectrumMode::Normalized,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeechModel {
    pub gmm: DiagonalGmm,
    /// Average speech spectrum, mixtures x bins.
    pub avg_spectrum: Matrix,
    pub frame_config: FrameConfig,
    pub avg_mode: AvgSpectrumMode,
    pub variance_clamped: bool,
}

#[derive(Default)]
struct EmStats {
    counts: Vec<f64>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    log_likelihood: f64,
}

impl EmStats {
    fn new(m: usize, d: usize) -> Self {
        Self {
            counts: vec![0.0; m],
            sum: vec![0.0; m * d],
            sum_sq: vec![0.0; m * d],
            log_likelihood: 0.0,
        }
    }

    fn merge(&mut self, other: &EmStats) {
        self.log_likelihood += other.log_likelihood;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
    }
}

fn e_step(gmm: &DiagonalGmm, data: &Matrix) -> EmStats {
    let (m, d) = (gmm.n_mixtures(), gmm.dim());
    let log_norms = gmm.log_norms();
    let partials: Vec<EmStats> = data
        .as_slice()
        .par_chunks(EM_CHUNK * d)
        .map(|chunk| {
            let mut stats = EmStats::new(m, d);
            let mut post = vec![0.0; m];
            for x in chunk.chunks_exact(d) {
                gmm.joint_log_densities(x, &log_norms, &mut post);
                if let Some(ll) = normalize_log_row(&mut post) {
                    stats.log_likelihood += ll;
                }
                for (i, &r) in post.iter().enumerate() {
                    if r == 0.0 {
                        continue;
                    }
                    stats.counts[i] += r;
                    let s = &mut stats.sum[i * d..(i + 1) * d];
                    for (a, xi) in s.iter_mut().zip(x) {
                        *a += r * xi;
                    }
                    let s2 = &mut stats.sum_sq[i * d..(i + 1) * d];
                    for (a, xi) in s2.iter_mut().zip(x) {
                        *a += r * xi * xi;
                    }
                }
            }
            stats
        })
        .collect();
    // Fixed-order reduction keeps results independent of the thread count.
    let mut total = EmStats::new(m, d);
    for p in &partials {
        total.merge(p);
    }
    total
}

/// Returns whether any variance hit the floor.
fn m_step(gmm: &mut DiagonalGmm, stats: &EmStats, n_frames: usize) -> bool {
    let d = gmm.dim();
    let mut clamped = false;
    for i in 0..gmm.n_mixtures() {
        let n = stats.counts[i];
        gmm.priors[i] = n / n_frames as f64;
        if n < 1e-10 {
            continue;
        }
        for j in 0..d {
            let mean = stats.sum[i * d + j] / n;
            let var = stats.sum_sq[i * d + j] / n - mean * mean;
            gmm.means.set(i, j, mean);
            if var < VARIANCE_FLOOR {
                clamped = true;
            }
            gmm.variances.set(i, j, var.max(VARIANCE_FLOOR));
        }
    }
    clamped
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by a few Lloyd iterations; returns centers and assignments.
fn kmeans(data: &Matrix, k: usize, iterations: usize, rng: &mut ChaCha8Rng) -> (Matrix, Vec<usize>) {
    let n = data.rows();
    let mut centers = Matrix::zeros(k, data.cols());
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from_slice(data.row(first));
    let mut nearest: Vec<f64> = data.iter_rows().map(|x| sq_dist(x, data.row(first))).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(data.row(pick));
        for (i, x) in data.iter_rows().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(x, centers.row(c)));
        }
    }

    let assign = |centers: &Matrix| -> Vec<usize> {
        data.as_slice()
            .par_chunks(data.cols().max(1))
            .map(|x| {
                (0..k)
                    .map(|c| (c, sq_dist(x, centers.row(c))))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(c, _)| c)
                    .unwrap_or(0)
            })
            .collect()
    };
    let mut labels = assign(&centers);
    for _ in 0..iterations {
        let mut sums = Matrix::zeros(k, data.cols());
        let mut counts = vec![0usize; k];
        for (x, &c) in data.iter_rows().zip(&labels) {
            counts[c] += 1;
            for (s, v) in sums.row_mut(c).iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let row: Vec<f64> = sums.row(c).iter().map(|s| s / counts[c] as f64).collect();
                centers.row_mut(c).copy_from_slice(&row);
            }
        }
        let next = assign(&centers);
        if next == labels {
            break;
        }
        labels = next;
    }
    (centers, labels)
}

fn initial_gmm(data: &Matrix, k: usize, opts: &TrainOptions) -> DiagonalGmm {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (centers, labels) = kmeans(data, k, opts.kmeans_iterations, &mut rng);
    let d = data.cols();
    let global_mean = data.column_means();
    let global_var: Vec<f64> = {
        let mut v = vec![0.0; d];
        for x in data.iter_rows() {
            for j in 0..d {
                v[j] += (x[j] - global_mean[j]).powi(2);
            }
        }
        v.iter()
            .map(|s| (s / data.rows() as f64).max(VARIANCE_FLOOR))
            .collect()
    };
    let mut counts = vec![0usize; k];
    let mut sq = Matrix::zeros(k, d);
    for (x, &c) in data.iter_rows().zip(&labels) {
        counts[c] += 1;
        for j in 0..d {
            let diff = x[j] - centers.get(c, j);
            sq.set(c, j, sq.get(c, j) + diff * diff);
        }
    }
    let mut variances = Matrix::zeros(k, d);
    for c in 0..k {
        for j in 0..d {
            let v = if counts[c] > 1 {
                sq.get(c, j) / counts[c] as f64
            } else {
                global_var[j]
            };
            variances.set(c, j, v.max(VARIANCE_FLOOR));
        }
    }
    let total: usize = counts.iter().map(|&c| c.max(1)).sum();
    DiagonalGmm {
        priors: counts.iter().map(|&c| c.max(1) as f64 / total as f64).collect(),
        means: centers,
        variances,
    }
}

/// Fits a diagonal GMM by EM.
pub fn fit_gmm(data: &Matrix, opts: &TrainOptions) -> Result<(DiagonalGmm, TrainReport)> {
    let k = opts.mixtures;
    if k == 0 {
        return Err(Error::InvalidArgument("at least one mixture is required".into()));
    }
    let need = FRAMES_PER_MIXTURE * k;
    if data.rows() < need {
        return Err(Error::InsufficientTrainingData {
            frames: data.rows(),
            mixtures: k,
            need,
        });
    }
    if !data.all_finite() {
        return Err(Error::InvalidArgument("training features contain non-finite values".into()));
    }
    let mut gmm = initial_gmm(data, k, opts);
    let n = data.rows();
    let mut report = TrainReport {
        log_likelihoods: Vec::new(),
        iterations: 0,
        converged: false,
        variance_clamped: false,
    };
    for it in 0..opts.max_iterations {
        let stats = e_step(&gmm, data);
        let ll = stats.log_likelihood;
        if let Some(&prev) = report.log_likelihoods.last() {
            if (ll - prev) / (n as f64) < opts.tolerance {
                report.log_likelihoods.push(ll);
                report.converged = true;
                break;
            }
        }
        report.log_likelihoods.push(ll);
        report.variance_clamped |= m_step(&mut gmm, &stats, n);
        report.iterations = it + 1;
        debug!("EM iteration {}: mean log-likelihood {:.6}", it + 1, ll / n as f64);
    }
    if report.variance_clamped {
        warn!("GMM variances clamped to the floor {VARIANCE_FLOOR}");
    }
    Ok((gmm, report))
}

fn posteriors_for(gmm: &DiagonalGmm, cepstra: &Matrix) -> ProbMatrix {
    let m = gmm.n_mixtures();
    let log_norms = gmm.log_norms();
    let rows: Vec<(Vec<f64>, bool)> = cepstra
        .as_slice()
        .par_chunks(cepstra.cols().max(1))
        .map(|x| {
            let mut post = vec![0.0; m];
            gmm.joint_log_densities(x, &log_norms, &mut post);
            let ok = normalize_log_row(&mut post).is_some();
            (post, ok)
        })
        .collect();
    let underflow_frames = rows.iter().filter(|(_, ok)| !ok).count();
    if underflow_frames > 0 {
        warn!("{underflow_frames} frames had all mixture posteriors underflow");
    }
    ProbMatrix {
        values: Matrix::from_rows(rows.iter().map(|(r, _)| r)),
        underflow_frames,
    }
}

/// `P^T X`, optionally with each mixture row divided by its responsibility mass.
fn average_spectrum(post: &Matrix, spectra: &Matrix, mode: AvgSpectrumMode) -> Matrix {
    let (m, bins) = (post.cols(), spectra.cols());
    let mut acc = Matrix::zeros(m, bins);
    let mut mass = vec![0.0; m];
    for (p, x) in post.iter_rows().zip(spectra.iter_rows()) {
        for (i, &w) in p.iter().enumerate() {
            if w <= POSTERIOR_SKIP {
                continue;
            }
            mass[i] += w;
            for (a, v) in acc.row_mut(i).iter_mut().zip(x) {
                *a += w * v;
            }
        }
    }
    if mode == AvgSpectrumMode::Normalized {
        let fallback = spectra.column_means();
        for i in 0..m {
            if mass[i] > 0.0 {
                acc.row_mut(i).iter_mut().for_each(|a| *a /= mass[i]);
            } else {
                acc.row_mut(i).copy_from_slice(&fallback);
            }
        }
    }
    acc
}

/// Trains the GMM and the paired average speech spectrum from row-aligned features.
pub fn train_speech_model(
    corpus_cepstra: &CepstraMatrix,
    corpus_spectra: &SpectraMatrix,
    frame_config: FrameConfig,
    opts: &TrainOptions,
) -> Result<(SpeechModel, TrainReport)> {
    if corpus_cepstra.values.rows() != corpus_spectra.values.rows() {
        return Err(Error::InvalidArgument(format!(
            "cepstra ({} rows) and spectra ({} rows) are not row-aligned",
            corpus_cepstra.values.rows(),
            corpus_spectra.values.rows()
        )));
    }
    if !corpus_spectra.mean_normalized {
        return Err(Error::InvalidArgument("training spectra must be mean-normalized".into()));
    }
    if corpus_cepstra.n_mfcc() != frame_config.n_mfcc {
        return Err(Error::ConfigMismatch(format!(
            "cepstra have {} coefficients, configuration says {}",
            corpus_cepstra.n_mfcc(),
            frame_config.n_mfcc
        )));
    }
    let (gmm, report) = fit_gmm(&corpus_cepstra.values, opts)?;
    let post = posteriors_for(&gmm, &corpus_cepstra.values);
    let avg_spectrum = average_spectrum(&post.values, &corpus_spectra.values, opts.avg_mode);
    Ok((
        SpeechModel {
            gmm,
            avg_spectrum,
            frame_config,
            avg_mode: opts.avg_mode,
            variance_clamped: report.variance_clamped,
        },
        report,
    ))
}

impl SpeechModel {
    pub fn n_mixtures(&self) -> usize {
        self.gmm.n_mixtures()
    }

    pub fn n_bins(&self) -> usize {
        self.avg_spectrum.cols()
    }

    fn check_cepstra(&self, cepstra: &CepstraMatrix) -> Result<()> {
        if cepstra.n_mfcc() != self.gmm.dim() {
            return Err(Error::ConfigMismatch(format!(
                "cepstra have {} coefficients, model expects {}",
                cepstra.n_mfcc(),
                self.gmm.dim()
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(GMM_MAGIC, path)?)
    }

    pub fn to_container(&self) -> Container {
        let (m, d) = (self.n_mixtures(), self.gmm.dim());
        let cfg = &self.frame_config;
        let mut c = Container::new(GMM_MAGIC);
        c.put_array("priors", &[m], self.gmm.priors.clone());
        c.put_array("means", &[m, d], self.gmm.means.as_slice().to_vec());
        c.put_array("variances", &[m, d], self.gmm.variances.as_slice().to_vec());
        c.put_array(
            "avg_spectrum",
            &[m, self.n_bins()],
            self.avg_spectrum.as_slice().to_vec(),
        );
        c.put_scalar("frame_ms", cfg.frame_ms);
        c.put_scalar("overlap", cfg.overlap);
        c.put_scalar("n_fft", cfg.fft_len() as f64);
        c.put_scalar("n_mfcc", cfg.n_mfcc as f64);
        c.put_scalar("sample_rate_hz", f64::from(cfg.sample_rate_hz));
        c.put_strings(
            "avg_mode",
            vec![match self.avg_mode {
                AvgSpectrumMode::Normalized => "normalized".into(),
                AvgSpectrumMode::Raw => "raw".into(),
            }],
        );
        c.put_scalar("variance_clamped", f64::from(u8::from(self.variance_clamped)));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let (_, priors) = c.array("priors")?;
        let (m, d, means) = c.matrix("means")?;
        let (vm, vd, variances) = c.matrix("variances")?;
        let (am, bins, avg) = c.matrix("avg_spectrum")?;
        if priors.len() != m || (vm, vd) != (m, d) || am != m {
            return Err(Error::CorruptFile("inconsistent GMM array shapes".into()));
        }
        let mut frame_config = FrameConfig {
            frame_ms: c.scalar("frame_ms")?,
            overlap: c.scalar("overlap")?,
            n_fft: None,
            n_mfcc: c.scalar("n_mfcc")? as usize,
            sample_rate_hz: c.scalar("sample_rate_hz")? as u32,
        };
        let n_fft = c.scalar("n_fft")? as usize;
        if n_fft != frame_config.frame_len() {
            frame_config.n_fft = Some(n_fft);
        }
        if frame_config.n_mfcc != d || frame_config.n_bins() != bins {
            return Err(Error::CorruptFile("frame configuration disagrees with arrays".into()));
        }
        let avg_mode = match c.strings("avg_mode")?.first().map(String::as_str) {
            Some("normalized") => AvgSpectrumMode::Normalized,
            Some("raw") => AvgSpectrumMode::Raw,
            other => return Err(Error::CorruptFile(format!("unknown avg_mode {other:?}"))),
        };
        Ok(Self {
            gmm: DiagonalGmm {
                priors: priors.to_vec(),
                means: Matrix::from_vec(m, d, means.to_vec()),
                variances: Matrix::from_vec(m, d, variances.to_vec()),
            },
            avg_spectrum: Matrix::from_vec(m, bins, avg.to_vec()),
            frame_config,
            avg_mode,
            variance_clamped: c.scalar("variance_clamped")? != 0.0,
        })
    }
}

/// Relative mixture probabilities of every cepstral frame, computed in log space.
pub fn mixture_posteriors(model: &SpeechModel, cepstra: &CepstraMatrix) -> Result<ProbMatrix> {
    model.check_cepstra(cepstra)?;
    Ok(posteriors_for(&model.gmm, &cepstra.values))
}

/// Estimated mean-normalized dry-speech log-spectra: posteriors times the average spectrum.
pub fn estimate_ideal_speech(model: &SpeechModel, cepstra: &CepstraMatrix) -> Result<SpectraMatrix> {
    let post = mixture_posteriors(model, cepstra)?;
    Ok(SpectraMatrix {
        values: post.values.matmul(&model.avg_spectrum),
        bin_hz: model.frame_config.bin_hz(),
        mean_normalized: true,
    })
}
