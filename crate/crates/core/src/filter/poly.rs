//! Polynomials in `z^-1` with real coefficients: `c[0] + c[1] z^-1 + ... + c[n] z^-n`.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Evaluates the polynomial at `z = e^{j omega}`.
pub fn eval_unit_circle(c: &[f64], omega: f64) -> Complex64 {
    let step = Complex64::from_polar(1.0, -omega);
    let mut zk = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for &ci in c {
        acc += zk * ci;
        zk *= step;
    }
    acc
}

fn eval_z(c: &[f64], z: Complex64) -> Complex64 {
    // c0 z^n + c1 z^(n-1) + ... + cn by Horner.
    c.iter().fold(Complex64::new(0.0, 0.0), |acc, &ci| acc * z + ci)
}

fn eval_z_derivative(c: &[f64], z: Complex64) -> Complex64 {
    let n = c.len() - 1;
    c.iter()
        .take(n)
        .enumerate()
        .fold(Complex64::new(0.0, 0.0), |acc, (i, &ci)| acc * z + ci * (n - i) as f64)
}

/// Roots in the z-plane. Trailing zero coefficients contribute roots at the origin; leading
/// zeros are pure delays and contribute none.
pub fn roots(c: &[f64]) -> Vec<Complex64> {
    let first = match c.iter().position(|&v| v != 0.0) {
        Some(i) => i,
        None => return Vec::new(),
    };
    let last = c.iter().rposition(|&v| v != 0.0).unwrap_or(first);
    let core = &c[first..=last];
    let mut out = vec![Complex64::new(0.0, 0.0); c.len() - 1 - last];
    let n = core.len() - 1;
    if n == 0 {
        return out;
    }
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        companion[(0, j)] = -core[j + 1] / core[0];
    }
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    for r in companion.complex_eigenvalues().iter() {
        out.push(polish(core, *r));
    }
    out
}

/// A few guarded Newton steps on the original coefficients.
fn polish(c: &[f64], mut z: Complex64) -> Complex64 {
    let mut res = eval_z(c, z).norm();
    for _ in 0..3 {
        let d = eval_z_derivative(c, z);
        if d.norm() == 0.0 {
            break;
        }
        let next = z - eval_z(c, z) / d;
        let next_res = eval_z(c, next).norm();
        if !(next_res < res) {
            break;
        }
        z = next;
        res = next_res;
    }
    z
}

/// `lead * prod (1 - r z^-1)`, keeping real parts.
pub fn from_roots(lead: f64, roots: &[Complex64]) -> Vec<f64> {
    let mut p = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); p.len() + 1];
        for (i, &v) in p.iter().enumerate() {
            next[i] += v;
            next[i + 1] -= v * r;
        }
        p = next;
    }
    p.into_iter().map(|v| v.re * lead).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut r: Vec<Complex64>) -> Vec<Complex64> {
        r.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        r
    }

    #[test]
    fn quadratic_and_origin_roots() {
        // (1 - 0.5 z^-1)(1 + 0.25 z^-1) z^-1-free, plus a trailing zero root.
        let r = sorted(roots(&[1.0, -0.25, -0.125, 0.0]));
        assert_eq!(r.len(), 3);
        assert!((r[0] - Complex64::new(-0.25, 0.0)).norm() < 1e-12);
        assert!(r[1].norm() < 1e-12);
        assert!((r[2] - Complex64::new(0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn from_roots_inverts_roots() {
        let rs = [
            Complex64::from_polar(0.9, 0.3),
            Complex64::from_polar(0.9, -0.3),
            Complex64::new(-0.7, 0.0),
        ];
        let c = from_roots(2.0, &rs);
        assert_eq!(c.len(), 4);
        assert!((c[0] - 2.0).abs() < 1e-15);
        let back = sorted(roots(&c));
        for (a, b) in back.iter().zip(sorted(rs.to_vec())) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn unit_circle_evaluation() {
        let c = [1.0, -0.5];
        let h = eval_unit_circle(&c, 0.0);
        assert!((h.re - 0.5).abs() < 1e-15 && h.im.abs() < 1e-15);
        let h = eval_unit_circle(&c, std::f64::consts::PI);
        assert!((h.re - 1.5).abs() < 1e-15);
    }
}
