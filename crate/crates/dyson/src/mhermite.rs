//! Multiple Hermite polynomials of type I and II and the biorthonormal
//! families built from the prefixes of a labeled configuration.

use crate::config::{ConfigError, Configuration};
use crate::quad::{self, QuadError};
use num_complex::Complex64 as C64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MhError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

const GH_NODES: usize = 64;

/// E[Π_k(y + iZ − x_k)] with Z standard normal; exact for the polynomial
/// integrand once the rule has more than deg/2 nodes.
pub fn type2_labels(xs: &[f64], y: C64) -> C64 {
    let mut n = GH_NODES;
    while 2 * n <= xs.len() + 1 {
        n *= 2;
    }
    quad::gaussian_expectation(n, |z| {
        let w = y + C64::new(0.0, z);
        xs.iter().fold(C64::new(1.0, 0.0), |acc, &x| acc * (w - x))
    })
}

/// Distinct positions with multiplicities of a nondecreasing label vector.
fn group(xs: &[f64]) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    for &x in xs {
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 += 1,
            _ => out.push((x, 1)),
        }
    }
    out
}

fn type1_integrand(xs: &[f64], y: f64, z: C64) -> C64 {
    let d = z - y;
    let den = xs.iter().fold(C64::new(1.0, 0.0), |acc, &x| acc * (z - x));
    (-d * d / 2.0).exp() / ((2.0 * PI).sqrt() * den)
}

/// Q for labels xs (nondecreasing, nonempty): explicit residues for simple
/// points, small circles around each pole otherwise.
pub fn type1_labels(xs: &[f64], y: f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let groups = group(&sorted);
    if groups.iter().all(|g| g.1 == 1) {
        let mut acc = 0.0;
        for (l, &(xl, _)) in groups.iter().enumerate() {
            let mut den = 1.0;
            for (m, &(xm, _)) in groups.iter().enumerate() {
                if m != l {
                    den *= xl - xm;
                }
            }
            acc += (-(y - xl) * (y - xl) / 2.0).exp() / ((2.0 * PI).sqrt() * den);
        }
        return acc;
    }
    let min_gap = groups.windows(2).map(|w| w[1].0 - w[0].0).fold(f64::INFINITY, f64::min);
    let radius = (0.45 * min_gap).min(1.0);
    let mut total = 0.0;
    for &(x, _) in &groups {
        let mut n = 64;
        let mut prev = quad::circle_trapezoid(C64::new(x, 0.0), radius, n, |z| type1_integrand(&sorted, y, z));
        loop {
            n *= 2;
            let cur = quad::circle_trapezoid(C64::new(x, 0.0), radius, n, |z| type1_integrand(&sorted, y, z));
            let done = (cur - prev).norm() <= 1e-15 * cur.norm().max(1e-300) || n >= 4096;
            prev = cur;
            if done {
                break;
            }
        }
        total += prev.re;
    }
    total
}

fn finite_labels(xi: &Configuration) -> Result<Vec<f64>, MhError> {
    Ok(xi.labeled()?)
}

/// Type-II multiple Hermite polynomial P_ξ(y), monic of degree ξ(ℝ).
pub fn type2_poly(xi: &Configuration, y: C64) -> Result<C64, MhError> {
    Ok(type2_labels(&finite_labels(xi)?, y))
}

/// Q_ξ(y) = (1/2πi)∮ dz e^{−(z−y)²/2}/√(2π) / Π_{x∈ξ}(z − x).
pub fn type1_fn(xi: &Configuration, y: f64) -> Result<f64, MhError> {
    let xs = finite_labels(xi)?;
    if xs.is_empty() {
        return Err(MhError::InvalidParameter("Q needs at least one point".into()));
    }
    Ok(type1_labels(&xs, y))
}

/// Q_ξ(y) on one circle around the whole support, radius spread/2 + 1,
/// trapezoid nodes doubled until two levels agree within `tol`.
pub fn type1_fn_big_circle(xi: &Configuration, y: f64, tol: f64) -> Result<(f64, f64), MhError> {
    let xs = finite_labels(xi)?;
    if xs.is_empty() {
        return Err(MhError::InvalidParameter("Q needs at least one point".into()));
    }
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let center = C64::new(0.5 * (lo + hi), 0.0);
    let radius = 0.5 * (hi - lo) + 1.0;
    let mut n = 256;
    let mut prev = quad::circle_trapezoid(center, radius, n, |z| type1_integrand(&xs, y, z));
    loop {
        n *= 2;
        let cur = quad::circle_trapezoid(center, radius, n, |z| type1_integrand(&xs, y, z));
        let err = (cur - prev).norm();
        prev = cur;
        if err <= tol || n >= 1 << 16 {
            return Ok((prev.re, err));
        }
    }
}

/// a_δ(x) = Π_{j<k}(x_j − x_k).
pub fn a_delta(xs: &[f64]) -> f64 {
    let mut p = 1.0;
    for j in 0..xs.len() {
        for k in (j + 1)..xs.len() {
            p *= xs[j] - xs[k];
        }
    }
    p
}

/// The nested prefixes ξ^N_j of a finite configuration.
#[derive(Debug, Clone)]
pub struct MultiHermiteBasis {
    base: Configuration,
    labels: Vec<f64>,
}

impl MultiHermiteBasis {
    pub fn new(xi: &Configuration) -> Result<Self, MhError> {
        let labels = finite_labels(xi)?;
        if labels.is_empty() {
            return Err(MhError::InvalidParameter("basis needs N ≥ 1".into()));
        }
        Ok(MultiHermiteBasis { base: xi.clone(), labels })
    }

    pub fn base(&self) -> &Configuration {
        &self.base
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// ξ^N_j.
    pub fn prefix(&self, j: usize) -> Result<Configuration, MhError> {
        if j > self.n() {
            return Err(MhError::InvalidParameter(format!("prefix index {j} > N = {}", self.n())));
        }
        let pts: Vec<(f64, u32)> = self.labels[..j].iter().map(|&x| (x, 1)).collect();
        Ok(Configuration::finite(&pts)?)
    }

    fn check_index(&self, j: usize) -> Result<(), MhError> {
        if j >= self.n() {
            return Err(MhError::InvalidParameter(format!("index {j} outside 0..{}", self.n())));
        }
        Ok(())
    }

    /// H^(−)_j(y) = P_{ξ_j}(y).
    pub fn h_minus(&self, j: usize, y: f64) -> Result<f64, MhError> {
        self.check_index(j)?;
        Ok(type2_labels(&self.labels[..j], C64::new(y, 0.0)).re)
    }

    /// H^(+)_j(y) = Q_{ξ_{j+1}}(y).
    pub fn h_plus(&self, j: usize, y: f64) -> Result<f64, MhError> {
        self.check_index(j)?;
        Ok(type1_labels(&self.labels[..=j], y))
    }

    /// ∫ H^(−)_j H^(+)_k dy by adaptive quadrature.
    pub fn biorth_pair(&self, j: usize, k: usize) -> Result<f64, MhError> {
        self.check_index(j)?;
        self.check_index(k)?;
        let lo = self.labels[0] - 12.0;
        let hi = self.labels[self.n() - 1] + 12.0;
        let pm = &self.labels[..j];
        let pp = &self.labels[..=k];
        let (v, _) = quad::adaptive_re(
            |y| type2_labels(pm, C64::new(y, 0.0)).re * type1_labels(pp, y),
            lo,
            hi,
            16,
            1e-13,
            1e-12,
        )?;
        Ok(v)
    }

    fn check_t(t: f64) -> Result<(), MhError> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(MhError::InvalidParameter(format!("t must be positive, got {t}")));
        }
        Ok(())
    }

    /// φ^(−)_j(t, x) = t^{j/2} H^(−)_j(x/√t; (1/√t)∘ξ).
    pub fn phi_minus(&self, t: f64, x: f64, j: usize) -> Result<f64, MhError> {
        Self::check_t(t)?;
        self.check_index(j)?;
        let r = t.sqrt();
        let scaled: Vec<f64> = self.labels[..j].iter().map(|&v| v / r).collect();
        Ok(t.powf(j as f64 / 2.0) * type2_labels(&scaled, C64::new(x / r, 0.0)).re)
    }

    /// φ^(+)_j(t, x) = t^{−(j+1)/2} H^(+)_j(x/√t; (1/√t)∘ξ).
    pub fn phi_plus(&self, t: f64, x: f64, j: usize) -> Result<f64, MhError> {
        Self::check_t(t)?;
        self.check_index(j)?;
        let r = t.sqrt();
        let scaled: Vec<f64> = self.labels[..=j].iter().map(|&v| v / r).collect();
        Ok(t.powf(-(j as f64 + 1.0) / 2.0) * type1_labels(&scaled, x / r))
    }

    fn mu(&self, xs: &[f64], f: impl Fn(f64, usize) -> Result<f64, MhError>) -> Result<f64, MhError> {
        let n = self.n();
        if xs.len() != n {
            return Err(MhError::InvalidParameter(format!("need {n} positions, got {}", xs.len())));
        }
        let mut m = vec![0.0; n * n];
        for j in 0..n {
            for (k, &x) in xs.iter().enumerate() {
                m[j * n + k] = f(x, j)?;
            }
        }
        Ok(crate::specfun::small_det(&mut m, n))
    }

    /// μ^(−)(t, x) = det[φ^(−)_{j−1}(t, x_k)].
    pub fn mu_minus(&self, t: f64, xs: &[f64]) -> Result<f64, MhError> {
        self.mu(xs, |x, j| self.phi_minus(t, x, j))
    }

    /// μ^(+)(t, x) = det[φ^(+)_{j−1}(t, x_k)].
    pub fn mu_plus(&self, t: f64, xs: &[f64]) -> Result<f64, MhError> {
        self.mu(xs, |x, j| self.phi_plus(t, x, j))
    }

    /// Both sides of det[e^{−(y_k−x_j)²/2}]/a_δ(x) = (−1)^{N(N−1)/2}(2π)^{N/2} det[H^(+)_{j−1}(y_k)].
    ///
    /// Coincident x_j are split by ±ε and the quotient extrapolated to ε = 0.
    pub fn det_identity_check(&self, ys: &[f64]) -> Result<(f64, f64), MhError> {
        let n = self.n();
        if ys.len() != n || ys.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(MhError::InvalidParameter("y must be strictly increasing with N entries".into()));
        }
        let sign = if (n * (n - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
        let mut m = vec![0.0; n * n];
        for j in 0..n {
            for (k, &y) in ys.iter().enumerate() {
                m[j * n + k] = self.h_plus(j, y)?;
            }
        }
        let rhs = sign * (2.0 * PI).powf(n as f64 / 2.0) * crate::specfun::small_det(&mut m, n);
        let groups = group(&self.labels);
        let lhs = if groups.len() == n {
            gauss_quotient(&self.labels, ys)
        } else {
            let spread = |eps: f64| -> Vec<f64> {
                let mut out = Vec::with_capacity(n);
                for &(x, c) in &groups {
                    for i in 0..c {
                        out.push(x + eps * (i as f64 - (c as f64 - 1.0) / 2.0));
                    }
                }
                out
            };
            let e = 0.02;
            let l1 = gauss_quotient(&spread(e), ys);
            let l2 = gauss_quotient(&spread(e / 2.0), ys);
            let l3 = gauss_quotient(&spread(e / 4.0), ys);
            let r1 = (4.0 * l2 - l1) / 3.0;
            let r2 = (4.0 * l3 - l2) / 3.0;
            (16.0 * r2 - r1) / 15.0
        };
        Ok((lhs, rhs))
    }
}

fn gauss_quotient(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    let mut m = vec![0.0; n * n];
    for (j, &x) in xs.iter().enumerate() {
        for (k, &y) in ys.iter().enumerate() {
            m[j * n + k] = (-(y - x) * (y - x) / 2.0).exp();
        }
    }
    crate::specfun::small_det(&mut m, n) / a_delta(xs)
}
