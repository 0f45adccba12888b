use std::collections::BTreeMap;

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;

use super::poly;
use super::{ComplexResponse, DigitalFilter, STABILITY_RADIUS};
use crate::error::{Error, Result};

pub const DEFAULT_FITTER: &str = "steiglitz-mcbride";

/// Counts of roots moved inside the unit circle after fitting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FitWarnings {
    pub reflected_poles: usize,
    pub reflected_zeros: usize,
}

impl FitWarnings {
    pub fn any(&self) -> bool {
        self.reflected_poles + self.reflected_zeros > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub filter: DigitalFilter,
    pub warnings: FitWarnings,
}

/// A method that turns a target response into a stable minimum-phase `B/A` of given orders.
pub trait FilterFitter: Send + Sync {
    fn name(&self) -> &'static str;
    fn fit(&self, target: &ComplexResponse, n_b: usize, n_a: usize) -> Result<FitOutcome>;
}

/// Fitters addressable by name.
pub struct FitterRegistry {
    fitters: BTreeMap<&'static str, Box<dyn FilterFitter>>,
}

impl FitterRegistry {
    pub fn empty() -> Self {
        Self {
            fitters: BTreeMap::new(),
        }
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(SteiglitzMcBride));
        r.register(Box::new(EquationError));
        r.register(Box::new(Prony));
        r
    }

    /// Adds a fitter, replacing any previous one of the same name.
    pub fn register(&mut self, fitter: Box<dyn FilterFitter>) {
        self.fitters.insert(fitter.name(), fitter);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.fitters.keys().copied()
    }

    pub fn get(&self, name: &str) -> Result<&dyn FilterFitter> {
        self.fitters
            .get(name)
            .map(|f| f.as_ref())
            .ok_or_else(|| Error::UnknownStrategy {
                name: name.to_string(),
                available: self.names().collect::<Vec<_>>().join(", "),
            })
    }
}

impl Default for FitterRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

/// Fits with the default method: equation error followed by one Steiglitz-McBride pass.
pub fn fit_minimum_phase_filter(target: &ComplexResponse, n_b: usize, n_a: usize) -> Result<FitOutcome> {
    SteiglitzMcBride.fit(target, n_b, n_a)
}

fn check_orders(target: &ComplexResponse, n_b: usize, n_a: usize) -> Result<()> {
    if n_b == 0 || n_a == 0 {
        return Err(Error::InvalidArgument("filter orders must be at least 1".into()));
    }
    let need = 2 * (n_b + n_a + 1);
    if target.n_bins() < need {
        return Err(Error::InvalidArgument(format!(
            "{} frequency bins cannot determine orders ({n_b}, {n_a}); need {need}",
            target.n_bins()
        )));
    }
    if !target.values.iter().all(|h| h.re.is_finite() && h.im.is_finite() && h.norm() > 0.0) {
        return Err(Error::DegenerateTarget("target response must be finite and nonzero".into()));
    }
    Ok(())
}

/// Minimum-norm least squares through SVD with the conventional rank tolerance.
fn lstsq(m: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    let dim = m.nrows().max(m.ncols()) as f64;
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) || !smax.is_finite() {
        return Err(Error::DegenerateTarget("normal equations are singular".into()));
    }
    let x = svd
        .solve(&rhs, smax * dim * f64::EPSILON)
        .map_err(|e| Error::DegenerateTarget(e.to_string()))?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::DegenerateTarget("least-squares solution is not finite".into()));
    }
    Ok(x)
}

/// Weighted equation-error solve of `A H - B ~ 0` with `a_0 = 1`; returns `(b, a[1..])`.
fn equation_error(target: &ComplexResponse, n_b: usize, n_a: usize, weights: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = target.n_bins();
    let cols = n_b + 1 + n_a;
    let mut m = DMatrix::<f64>::zeros(2 * k, cols);
    let mut rhs = DVector::<f64>::zeros(2 * k);
    for (row, (h, &w)) in target.values.iter().zip(weights).enumerate() {
        let step = Complex64::from_polar(1.0, -target.omega(row));
        let mut e = Complex64::new(1.0, 0.0);
        for j in 0..=n_b.max(n_a) {
            if j <= n_b {
                m[(2 * row, j)] = w * e.re;
                m[(2 * row + 1, j)] = w * e.im;
            }
            if j >= 1 && j <= n_a {
                let v = -(h * e);
                m[(2 * row, n_b + j)] = w * v.re;
                m[(2 * row + 1, n_b + j)] = w * v.im;
            }
            e *= step;
        }
        rhs[2 * row] = w * h.re;
        rhs[2 * row + 1] = w * h.im;
    }
    let x = lstsq(m, rhs)?;
    Ok((x.as_slice()[..=n_b].to_vec(), x.as_slice()[n_b + 1..].to_vec()))
}

/// Moves roots on or outside the unit circle inside, preserving the magnitude response.
/// Returns the new polynomial and the number of moved roots.
fn reflect_inside(c: &[f64]) -> (Vec<f64>, usize) {
    let Some(first) = c.iter().position(|&v| v != 0.0) else {
        return (c.to_vec(), 0);
    };
    let rs = poly::roots(c);
    if rs.iter().all(|r| r.norm() < STABILITY_RADIUS) {
        return (c.to_vec(), 0);
    }
    let mut gain = c[first];
    let mut moved = 0;
    let inside: Vec<Complex64> = rs
        .iter()
        .map(|&r| {
            let mag = r.norm();
            if mag < STABILITY_RADIUS {
                return r;
            }
            moved += 1;
            if mag > 1.0 + 1e-8 {
                // |1 - r z^-1| = |r| |1 - z^-1 / conj(r)| on the unit circle.
                gain *= mag;
                1.0 / r.conj()
            } else {
                r * (STABILITY_RADIUS - 1e-8) / mag
            }
        })
        .collect();
    let mut out = vec![0.0; first];
    out.extend(poly::from_roots(gain, &inside));
    out.resize(c.len(), 0.0);
    (out, moved)
}

fn stabilize(b: Vec<f64>, a: Vec<f64>, name: &str) -> Result<FitOutcome> {
    let denom: Vec<f64> = std::iter::once(1.0).chain(a.iter().copied()).collect();
    let (denom, reflected_poles) = reflect_inside(&denom);
    let lead = denom[0];
    let (mut b, reflected_zeros) = reflect_inside(&b);
    b.iter_mut().for_each(|v| *v /= lead);
    let a: Vec<f64> = denom[1..].iter().map(|v| v / lead).collect();
    let warnings = FitWarnings {
        reflected_poles,
        reflected_zeros,
    };
    if warnings.any() {
        warn!("{name}: reflected {reflected_poles} poles and {reflected_zeros} zeros inside the unit circle");
    }
    let filter = DigitalFilter::new(b, a).map_err(|e| Error::DegenerateTarget(e.to_string()))?;
    Ok(FitOutcome { filter, warnings })
}

/// Plain frequency-domain equation error.
pub struct EquationError;

impl FilterFitter for EquationError {
    fn name(&self) -> &'static str {
        "equation-error"
    }

    fn fit(&self, target: &ComplexResponse, n_b: usize, n_a: usize) -> Result<FitOutcome> {
        check_orders(target, n_b, n_a)?;
        let (b, a) = equation_error(target, n_b, n_a, &vec![1.0; target.n_bins()])?;
        stabilize(b, a, self.name())
    }
}

/// Equation error, then one pass reweighted by `1 / |A_prev|`.
pub struct SteiglitzMcBride;

impl FilterFitter for SteiglitzMcBride {
    fn name(&self) -> &'static str {
        "steiglitz-mcbride"
    }

    fn fit(&self, target: &ComplexResponse, n_b: usize, n_a: usize) -> Result<FitOutcome> {
        check_orders(target, n_b, n_a)?;
        let (b0, a0) = equation_error(target, n_b, n_a, &vec![1.0; target.n_bins()])?;
        let denom: Vec<f64> = std::iter::once(1.0).chain(a0.iter().copied()).collect();
        let weights: Vec<f64> = (0..target.n_bins())
            .map(|k| 1.0 / poly::eval_unit_circle(&denom, target.omega(k)).norm())
            .collect();
        let (b, a) = if weights.iter().all(|w| w.is_finite()) {
            equation_error(target, n_b, n_a, &weights)?
        } else {
            (b0, a0)
        };
        stabilize(b, a, self.name())
    }
}

/// Time-domain Prony fit (covariance method) on the target's impulse response.
pub struct Prony;

impl FilterFitter for Prony {
    fn name(&self) -> &'static str {
        "prony"
    }

    fn fit(&self, target: &ComplexResponse, n_b: usize, n_a: usize) -> Result<FitOutcome> {
        check_orders(target, n_b, n_a)?;
        let mut full = target.full_grid();
        let n = full.len();
        FftPlanner::new().plan_fft_inverse(n).process(&mut full);
        let h: Vec<f64> = full.iter().map(|c| c.re / n as f64).collect();
        // Linear prediction h[t] + sum a_i h[t-i] = 0 for t > n_b.
        let rows = n - n_b - 1;
        let mut m = DMatrix::<f64>::zeros(rows, n_a);
        let mut rhs = DVector::<f64>::zeros(rows);
        for (r, t) in (n_b + 1..n).enumerate() {
            for i in 1..=n_a {
                if t >= i {
                    m[(r, i - 1)] = h[t - i];
                }
            }
            rhs[r] = -h[t];
        }
        let a = lstsq(m, rhs)?.as_slice().to_vec();
        let b = (0..=n_b)
            .map(|t| h[t] + (1..=n_a.min(t)).map(|i| a[i - 1] * h[t - i]).sum::<f64>())
            .collect();
        stabilize(b, a, self.name())
    }
}
