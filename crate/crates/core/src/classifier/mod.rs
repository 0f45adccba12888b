//! Closed-set room classification with a one-vs-one RBF-kernel SVM.

mod metrics;
pub mod smo;

use std::collections::BTreeSet;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::roomprint::Roomprint;

pub use metrics::Metrics;

pub const SVM_MAGIC: &[u8; 7] = b"RPLSVM1";
pub const KKT_TOLERANCE: f64 = 1e-3;

/// One value per decade from 1e-4 to 1e3.
pub fn decade_grid() -> Vec<f64> {
    (-4..=3).map(|e| 10f64.powi(e)).collect()
}

/// Two values per decade over the same span.
pub fn half_decade_grid() -> Vec<f64> {
    (-8..=6).map(|e| 10f64.powf(e as f64 / 2.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub grid_c: Vec<f64>,
    pub grid_gamma: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            grid_c: decade_grid(),
            grid_gamma: decade_grid(),
            folds: 5,
            seed: 0,
        }
    }
}

/// Roomprint settings every sample fed to one model must share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub n_features: usize,
    pub fraction: u32,
    pub alpha: f64,
    pub log_transformed: bool,
}

impl FeatureSpec {
    pub fn of(rp: &Roomprint) -> Self {
        Self {
            n_features: rp.len(),
            fraction: rp.fraction,
            alpha: rp.alpha,
            log_transformed: rp.log_transformed,
        }
    }

    fn check(&self, rp: &Roomprint) -> Result<()> {
        let other = Self::of(rp);
        if &other != self {
            return Err(Error::FeatureMismatch(format!("expected {self:?}, got {other:?}")));
        }
        Ok(())
    }
}

/// Per-feature z-scoring fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &Matrix) -> Self {
        let mean = x.column_means();
        let n = x.rows() as f64;
        let std = (0..x.cols())
            .map(|j| {
                let var = x.iter_rows().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                // Constant features carry no information; unit scale keeps them harmless.
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn transform_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        Matrix::from_rows(x.iter_rows().map(|r| self.transform_row(r)))
    }
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d).exp()
}

/// Binary machine separating `positive` (decision > 0) from `negative`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMachine {
    pub positive: usize,
    pub negative: usize,
    /// Rows of the model's support vector matrix.
    pub support: Vec<usize>,
    /// `y_i alpha_i` for each support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub classes: Vec<String>,
    pub spec: FeatureSpec,
    pub scaler: Scaler,
    pub gamma: f64,
    pub c: f64,
    /// Standardized support vectors shared by all pair machines.
    pub support_vectors: Matrix,
    pub machines: Vec<PairMachine>,
    /// Largest KKT violation over the pairwise solves of the final fit.
    pub kkt_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub grid_c: Vec<f64>,
    pub grid_gamma: Vec<f64>,
    /// Cross-validated accuracy in percent, indexed `[c][gamma]`.
    pub cv_accuracy: Vec<Vec<f64>>,
    pub best_c: f64,
    pub best_gamma: f64,
    pub best_accuracy: f64,
    pub max_kkt_gap: f64,
}

/// Standardized training set with integer labels.
struct Problem {
    x: Matrix,
    y: Vec<usize>,
    n_classes: usize,
}

struct Fitted {
    support_vectors: Matrix,
    machines: Vec<PairMachine>,
    kkt_gap: f64,
}

fn fit_ovo(p: &Problem, rows: &[usize], c: f64, gamma: f64) -> Fitted {
    let mut used: Vec<Option<usize>> = vec![None; p.x.rows()];
    let mut sv_rows: Vec<usize> = Vec::new();
    let mut machines = Vec::new();
    let mut kkt_gap: f64 = 0.0;
    for a in 0..p.n_classes {
        for b in a + 1..p.n_classes {
            let idx: Vec<usize> = rows.iter().copied().filter(|&r| p.y[r] == a || p.y[r] == b).collect();
            let y: Vec<f64> = idx.iter().map(|&r| if p.y[r] == a { 1.0 } else { -1.0 }).collect();
            let n = idx.len();
            let mut kernel = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let v = rbf(p.x.row(idx[i]), p.x.row(idx[j]), gamma);
                    kernel[i * n + j] = v;
                    kernel[j * n + i] = v;
                }
            }
            let sol = smo::solve(&kernel, &y, c, KKT_TOLERANCE);
            kkt_gap = kkt_gap.max(sol.kkt_gap);
            let mut support = Vec::new();
            let mut coef = Vec::new();
            for (i, &al) in sol.alpha.iter().enumerate() {
                if al > 0.0 {
                    let r = idx[i];
                    let slot = *used[r].get_or_insert_with(|| {
                        sv_rows.push(r);
                        sv_rows.len() - 1
                    });
                    support.push(slot);
                    coef.push(y[i] * al);
                }
            }
            machines.push(PairMachine {
                positive: a,
                negative: b,
                support,
                coef,
                bias: -sol.rho,
            });
        }
    }
    Fitted {
        support_vectors: Matrix::from_rows(sv_rows.iter().map(|&r| p.x.row(r))),
        machines,
        kkt_gap,
    }
}

/// Votes, then aggregate margin, then lowest class index.
fn decide(support_vectors: &Matrix, machines: &[PairMachine], n_classes: usize, gamma: f64, x: &[f64]) -> usize {
    let kernel: Vec<f64> = support_vectors.iter_rows().map(|sv| rbf(sv, x, gamma)).collect();
    let mut votes = vec![0usize; n_classes];
    let mut margin = vec![0.0; n_classes];
    for m in machines {
        let f: f64 = m.support.iter().zip(&m.coef).map(|(&s, c)| c * kernel[s]).sum::<f64>() + m.bias;
        if f > 0.0 {
            votes[m.positive] += 1;
        } else {
            votes[m.negative] += 1;
        }
        margin[m.positive] += f;
        margin[m.negative] -= f;
    }
    (0..n_classes)
        .max_by(|&a, &b| {
            votes[a]
                .cmp(&votes[b])
                .then(margin[a].total_cmp(&margin[b]))
                .then(b.cmp(&a))
        })
        .unwrap_or(0)
}

/// Per-class shuffled round-robin fold assignment.
fn stratified_folds(y: &[usize], n_classes: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; y.len()];
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        members.shuffle(&mut rng);
        for (k, i) in members.into_iter().enumerate() {
            fold[i] = k % folds;
        }
    }
    fold
}

fn cross_validate(p: &Problem, fold: &[usize], folds: usize, c: f64, gamma: f64) -> (f64, f64) {
    let mut correct = 0;
    let mut gap: f64 = 0.0;
    for f in 0..folds {
        let train: Vec<usize> = (0..p.y.len()).filter(|&i| fold[i] != f).collect();
        let fitted = fit_ovo(p, &train, c, gamma);
        gap = gap.max(fitted.kkt_gap);
        correct += (0..p.y.len())
            .filter(|&i| fold[i] == f)
            .filter(|&i| decide(&fitted.support_vectors, &fitted.machines, p.n_classes, gamma, p.x.row(i)) == p.y[i])
            .count();
    }
    (100.0 * correct as f64 / p.y.len() as f64, gap)
}

/// Grid-searches `(c, gamma)` by stratified cross-validation and refits the best pair on all data.
pub fn train_classifier(features: &[Roomprint], labels: &[String], cfg: &GridConfig) -> Result<(SvmModel, GridReport)> {
    let first = features
        .first()
        .ok_or_else(|| Error::InvalidArgument("no training samples".into()))?;
    let spec = FeatureSpec::of(first);
    for rp in features {
        spec.check(rp)?;
    }
    let rows: Vec<Vec<f64>> = features.iter().map(Roomprint::features).collect();
    train_on_matrix(spec, &Matrix::from_rows(&rows), labels, cfg)
}

pub fn train_on_matrix(spec: FeatureSpec, x: &Matrix, labels: &[String], cfg: &GridConfig) -> Result<(SvmModel, GridReport)> {
    if x.rows() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} samples but {} labels",
            x.rows(),
            labels.len()
        )));
    }
    if x.cols() != spec.n_features {
        return Err(Error::FeatureMismatch(format!(
            "{} feature columns, spec says {}",
            x.cols(),
            spec.n_features
        )));
    }
    if !x.all_finite() {
        return Err(Error::InvalidArgument("non-finite training features".into()));
    }
    if cfg.folds < 2 {
        return Err(Error::InvalidArgument("at least two folds are required".into()));
    }
    if cfg.grid_c.is_empty() || cfg.grid_gamma.is_empty() || cfg.grid_c.iter().chain(&cfg.grid_gamma).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("grids must be non-empty and positive".into()));
    }
    let classes: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(Error::InvalidArgument("at least two classes are required".into()));
    }
    let y: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label is in class list"))
        .collect();
    for (ci, class) in classes.iter().enumerate() {
        let distinct: BTreeSet<Vec<u64>> = (0..x.rows())
            .filter(|&i| y[i] == ci)
            .map(|i| x.row(i).iter().map(|v| v.to_bits()).collect())
            .collect();
        if distinct.len() < cfg.folds {
            return Err(Error::InsufficientClassSupport {
                class: class.clone(),
                count: distinct.len(),
                need: cfg.folds,
            });
        }
    }
    let scaler = Scaler::fit(x);
    let problem = Problem {
        x: scaler.transform(x),
        y,
        n_classes: classes.len(),
    };
    let fold = stratified_folds(&problem.y, problem.n_classes, cfg.folds, cfg.seed);
    let cells: Vec<(usize, usize)> = (0..cfg.grid_c.len())
        .flat_map(|i| (0..cfg.grid_gamma.len()).map(move |j| (i, j)))
        .collect();
    let scores: Vec<(f64, f64)> = cells
        .par_iter()
        .map(|&(i, j)| cross_validate(&problem, &fold, cfg.folds, cfg.grid_c[i], cfg.grid_gamma[j]))
        .collect();
    let mut cv_accuracy = vec![vec![0.0; cfg.grid_gamma.len()]; cfg.grid_c.len()];
    let mut max_gap: f64 = 0.0;
    let mut best: Option<(usize, usize, f64)> = None;
    // Ties keep the earlier cell; sorting by value makes that the smaller c, then gamma.
    let mut order = cells.iter().zip(&scores).collect::<Vec<_>>();
    order.sort_by(|a, b| {
        let (ai, aj) = *a.0;
        let (bi, bj) = *b.0;
        cfg.grid_c[ai]
            .total_cmp(&cfg.grid_c[bi])
            .then(cfg.grid_gamma[aj].total_cmp(&cfg.grid_gamma[bj]))
    });
    for (&(i, j), &(acc, gap)) in order {
        cv_accuracy[i][j] = acc;
        max_gap = max_gap.max(gap);
        debug!("c={} gamma={}: {acc:.2}%", cfg.grid_c[i], cfg.grid_gamma[j]);
        if best.is_none_or(|(_, _, b)| acc > b) {
            best = Some((i, j, acc));
        }
    }
    let (bi, bj, best_accuracy) = best.expect("grid is non-empty");
    let (c, gamma) = (cfg.grid_c[bi], cfg.grid_gamma[bj]);
    info!("selected c={c} gamma={gamma} with {best_accuracy:.2}% cross-validated accuracy");
    let all: Vec<usize> = (0..problem.y.len()).collect();
    let fitted = fit_ovo(&problem, &all, c, gamma);
    max_gap = max_gap.max(fitted.kkt_gap);
    let model = SvmModel {
        classes,
        spec,
        scaler,
        gamma,
        c,
        support_vectors: fitted.support_vectors,
        machines: fitted.machines,
        kkt_gap: fitted.kkt_gap,
    };
    let report = GridReport {
        grid_c: cfg.grid_c.clone(),
        grid_gamma: cfg.grid_gamma.clone(),
        cv_accuracy,
        best_c: c,
        best_gamma: gamma,
        best_accuracy,
        max_kkt_gap: max_gap,
    };
    Ok((model, report))
}

impl SvmModel {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Class position for a raw (unstandardized) feature vector.
    pub fn predict_index(&self, features: &[f64]) -> Result<usize> {
        if features.len() != self.spec.n_features {
            return Err(Error::FeatureMismatch(format!(
                "{} features, model expects {}",
                features.len(),
                self.spec.n_features
            )));
        }
        let z = self.scaler.transform_row(features);
        Ok(decide(&self.support_vectors, &self.machines, self.n_classes(), self.gamma, &z))
    }

    /// Pairwise decision values in machine order.
    pub fn decision_values(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.spec.n_features {
            return Err(Error::FeatureMismatch(format!(
                "{} features, model expects {}",
                features.len(),
                self.spec.n_features
            )));
        }
        let z = self.scaler.transform_row(features);
        Ok(self
            .machines
            .iter()
            .map(|m| {
                m.support
                    .iter()
                    .zip(&m.coef)
                    .map(|(&s, c)| c * rbf(self.support_vectors.row(s), &z, self.gamma))
                    .sum::<f64>()
                    + m.bias
            })
            .collect())
    }

    pub fn predict_features(&self, features: &[f64]) -> Result<&str> {
        Ok(&self.classes[self.predict_index(features)?])
    }

    pub fn predict(&self, feature: &Roomprint) -> Result<&str> {
        self.spec.check(feature)?;
        self.predict_features(&feature.features())
    }

    pub fn evaluate(&self, features: &[Roomprint], labels: &[String]) -> Result<Metrics> {
        let rows: Vec<Vec<f64>> = features
            .iter()
            .map(|rp| self.spec.check(rp).map(|_| rp.features()))
            .collect::<Result<_>>()?;
        self.evaluate_matrix(&Matrix::from_rows(&rows), labels)
    }

    /// Labels unknown to the model count as misclassified rows of an extra class.
    pub fn evaluate_matrix(&self, x: &Matrix, labels: &[String]) -> Result<Metrics> {
        if x.rows() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} samples but {} labels",
                x.rows(),
                labels.len()
            )));
        }
        let mut classes = self.classes.clone();
        let mut truth = Vec::with_capacity(labels.len());
        for l in labels {
            let pos = match classes.iter().position(|c| c == l) {
                Some(p) => p,
                None => {
                    classes.push(l.clone());
                    classes.len() - 1
                }
            };
            truth.push(pos);
        }
        let predicted = x.iter_rows().map(|r| self.predict_index(r)).collect::<Result<Vec<_>>>()?;
        Metrics::from_predictions(&classes, &truth, &predicted)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(SVM_MAGIC);
        c.put_strings("classes", self.classes.clone());
        c.put_scalar("n_features", self.spec.n_features as f64);
        c.put_scalar("fraction", f64::from(self.spec.fraction));
        c.put_scalar("alpha", self.spec.alpha);
        c.put_scalar("log_transformed", f64::from(u8::from(self.spec.log_transformed)));
        c.put_array("scaler_mean", &[self.scaler.mean.len()], self.scaler.mean.clone());
        c.put_array("scaler_std", &[self.scaler.std.len()], self.scaler.std.clone());
        c.put_scalar("gamma", self.gamma);
        c.put_scalar("c", self.c);
        c.put_scalar("kkt_gap", self.kkt_gap);
        c.put_array(
            "support_vectors",
            &[self.support_vectors.rows(), self.support_vectors.cols()],
            self.support_vectors.as_slice().to_vec(),
        );
        let m = self.machines.len();
        let as_f64 = |f: &dyn Fn(&PairMachine) -> f64| self.machines.iter().map(f).collect::<Vec<_>>();
        c.put_array("pair_positive", &[m], as_f64(&|p| p.positive as f64));
        c.put_array("pair_negative", &[m], as_f64(&|p| p.negative as f64));
        c.put_array("pair_bias", &[m], as_f64(&|p| p.bias));
        c.put_array("pair_len", &[m], as_f64(&|p| p.support.len() as f64));
        let support: Vec<f64> = self.machines.iter().flat_map(|p| p.support.iter().map(|&s| s as f64)).collect();
        let coef: Vec<f64> = self.machines.iter().flat_map(|p| p.coef.iter().copied()).collect();
        c.put_array("pair_support", &[support.len()], support);
        c.put_array("pair_coef", &[coef.len()], coef);
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let corrupt = |what: &str| Error::CorruptFile(format!("RPLSVM1: {what}"));
        let classes = c.strings("classes")?.to_vec();
        let spec = FeatureSpec {
            n_features: c.scalar("n_features")? as usize,
            fraction: c.scalar("fraction")? as u32,
            alpha: c.scalar("alpha")?,
            log_transformed: c.scalar("log_transformed")? != 0.0,
        };
        let scaler = Scaler {
            mean: c.array("scaler_mean")?.1.to_vec(),
            std: c.array("scaler_std")?.1.to_vec(),
        };
        let (rows, cols, sv) = c.matrix("support_vectors")?;
        if scaler.mean.len() != spec.n_features || scaler.std.len() != spec.n_features || (rows > 0 && cols != spec.n_features) {
            return Err(corrupt("feature dimensions disagree"));
        }
        let positive = c.array("pair_positive")?.1;
        let negative = c.array("pair_negative")?.1;
        let bias = c.array("pair_bias")?.1;
        let lens = c.array("pair_len")?.1;
        let support = c.array("pair_support")?.1;
        let coef = c.array("pair_coef")?.1;
        let m = positive.len();
        if [negative.len(), bias.len(), lens.len()].iter().any(|&l| l != m) || support.len() != coef.len() {
            return Err(corrupt("pair arrays disagree"));
        }
        let mut machines = Vec::with_capacity(m);
        let mut offset = 0;
        for i in 0..m {
            let len = lens[i] as usize;
            if offset + len > support.len() {
                return Err(corrupt("pair support overruns"));
            }
            let sup: Vec<usize> = support[offset..offset + len].iter().map(|&s| s as usize).collect();
            if sup.iter().any(|&s| s >= rows) || positive[i] as usize >= classes.len() || negative[i] as usize >= classes.len() {
                return Err(corrupt("index out of range"));
            }
            machines.push(PairMachine {
                positive: positive[i] as usize,
                negative: negative[i] as usize,
                support: sup,
                coef: coef[offset..offset + len].to_vec(),
                bias: bias[i],
            });
            offset += len;
        }
        Ok(Self {
            classes,
            spec,
            scaler,
            gamma: c.scalar("gamma")?,
            c: c.scalar("c")?,
            support_vectors: Matrix::from_vec(rows, cols, sv.to_vec()),
            machines,
            kkt_gap: c.scalar("kkt_gap")?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(SVM_MAGIC, path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(centres: &[Vec<f64>], per_class: usize, sigma: f64, seed: u64) -> (Matrix, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (k, c) in centres.iter().enumerate() {
            for _ in 0..per_class {
                rows.push(c.iter().map(|v| v + noise.sample(&mut rng)).collect::<Vec<_>>());
                labels.push(format!("room{k}"));
            }
        }
        (Matrix::from_rows(&rows), labels)
    }

    fn spec(n: usize) -> FeatureSpec {
        FeatureSpec {
            n_features: n,
            fraction: 4,
            alpha: 1.5,
            log_transformed: false,
        }
    }

    fn small_grid() -> GridConfig {
        GridConfig {
            grid_c: vec![0.1, 1.0, 10.0],
            grid_gamma: vec![0.01, 0.1, 1.0],
            folds: 5,
            seed: 3,
        }
    }

    #[test]
    fn default_grid_has_sixty_four_cells() {
        let g = GridConfig::default();
        assert_eq!(g.grid_c.len() * g.grid_gamma.len(), 64);
        assert_eq!(g.grid_c[0], 1e-4);
        assert_eq!(g.grid_c[7], 1e3);
        assert_eq!(half_decade_grid().len(), 15);
    }

    #[test]
    fn separated_blobs_are_perfectly_cross_validated() {
        let (x, y) = blobs(&[vec![0.0, 0.0], vec![10.0, 0.0]], 30, 1.0, 1);
        let (model, report) = train_on_matrix(spec(2), &x, &y, &GridConfig::default()).unwrap();
        assert_eq!(report.best_accuracy, 100.0);
        assert!(report.max_kkt_gap < KKT_TOLERANCE);
        assert!(model.machines.iter().all(|m| m.coef.iter().all(|a| a.abs() <= model.c + 1e-12)));
        for (row, label) in x.iter_rows().zip(&y) {
            assert_eq!(model.predict_features(row).unwrap(), label);
        }
    }

    #[test]
    fn binary_prediction_follows_decision_sign() {
        let (x, y) = blobs(&[vec![0.0, 1.0], vec![2.0, -1.0]], 20, 1.0, 2);
        let (model, _) = train_on_matrix(spec(2), &x, &y, &small_grid()).unwrap();
        for probe in [[0.0, 0.0], [1.0, 0.0], [3.0, 3.0], [-2.0, 1.0]] {
            let f = model.decision_values(&probe).unwrap()[0];
            let expect = if f > 0.0 { "room0" } else { "room1" };
            assert_eq!(model.predict_features(&probe).unwrap(), expect);
        }
    }

    #[test]
    fn symmetric_midpoint_is_deterministic() {
        let (x, y) = blobs(&[vec![-5.0, 0.0], vec![5.0, 0.0], vec![0.0, 8.66]], 15, 0.5, 4);
        let (a, _) = train_on_matrix(spec(2), &x, &y, &small_grid()).unwrap();
        let (b, _) = train_on_matrix(spec(2), &x, &y, &small_grid()).unwrap();
        assert_eq!(a, b);
        let centre = [0.0, 2.887];
        let first = a.predict_features(&centre).unwrap().to_string();
        for _ in 0..5 {
            assert_eq!(b.predict_features(&centre).unwrap(), first);
        }
    }

    #[test]
    fn duplicated_samples_lack_support() {
        let x = Matrix::from_rows([[1.0, 2.0], [1.0, 2.0], [5.0, 5.0], [5.0, 5.0]]);
        let y: Vec<String> = ["a", "a", "b", "b"].iter().map(|s| s.to_string()).collect();
        let cfg = GridConfig {
            folds: 2,
            ..GridConfig::default()
        };
        assert!(matches!(
            train_on_matrix(spec(2), &x, &y, &cfg),
            Err(Error::InsufficientClassSupport { count: 1, need: 2, .. })
        ));
    }

    #[test]
    fn mismatched_features_are_rejected() {
        let (x, y) = blobs(&[vec![0.0, 0.0], vec![6.0, 6.0]], 10, 1.0, 5);
        let (model, _) = train_on_matrix(spec(2), &x, &y, &small_grid()).unwrap();
        assert!(matches!(model.predict_features(&[1.0]), Err(Error::FeatureMismatch(_))));
        let rp = Roomprint {
            rt60_s: vec![0.5, 0.6],
            band_midbands_hz: vec![1.0, 2.0],
            band_indices: vec![1, 2],
            fraction: 3,
            alpha: 1.5,
            log_transformed: false,
            alpha_used: vec![1.5, 1.5],
            failed_bands: vec![],
        };
        assert!(matches!(model.predict(&rp), Err(Error::FeatureMismatch(_))));
    }

    #[test]
    fn affine_feature_changes_do_not_alter_predictions() {
        let (x, y) = blobs(&[vec![0.0, 0.0, 1.0], vec![4.0, 1.0, 0.0], vec![1.0, 5.0, 2.0]], 20, 1.0, 6);
        let (probe, _) = blobs(&[vec![1.5, 2.0, 1.0]], 30, 3.0, 7);
        let scale = [3.0, 0.01, 250.0];
        let shift = [-7.0, 1e3, 0.5];
        let warp = |m: &Matrix| {
            Matrix::from_rows(m.iter_rows().map(|r| r.iter().enumerate().map(|(j, v)| v * scale[j] + shift[j]).collect::<Vec<_>>()))
        };
        let (a, _) = train_on_matrix(spec(3), &x, &y, &small_grid()).unwrap();
        let (b, _) = train_on_matrix(spec(3), &warp(&x), &y, &small_grid()).unwrap();
        for (p, q) in probe.iter_rows().zip(warp(&probe).iter_rows()) {
            assert_eq!(a.predict_features(p).unwrap(), b.predict_features(q).unwrap());
        }
    }

    #[test]
    fn persistence_preserves_predictions() {
        let (x, y) = blobs(&[vec![0.0, 0.0], vec![3.0, 0.0], vec![0.0, 3.0]], 15, 1.0, 8);
        let (model, _) = train_on_matrix(spec(2), &x, &y, &small_grid()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rplsvm");
        model.save(&path).unwrap();
        let back = SvmModel::load(&path).unwrap();
        assert_eq!(back, model);
        let (probe, _) = blobs(&[vec![1.0, 1.0]], 50, 2.0, 9);
        for r in probe.iter_rows() {
            assert_eq!(model.decision_values(r).unwrap(), back.decision_values(r).unwrap());
        }
    }

    #[test]
    fn evaluation_of_training_data() {
        let (x, y) = blobs(&[vec![0.0, 0.0], vec![10.0, 10.0]], 10, 0.5, 10);
        let (model, _) = train_on_matrix(spec(2), &x, &y, &small_grid()).unwrap();
        let m = model.evaluate_matrix(&x, &y).unwrap();
        assert_eq!(m.accuracy, 100.0);
        assert_eq!(m.confusion, vec![vec![10, 0], vec![0, 10]]);
    }
}
