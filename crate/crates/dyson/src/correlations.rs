//! Multitime correlation functions, the biorthogonal kernel S^{m,n},
//! Karlin-McGregor determinants, multitime densities, truncated Fredholm
//! expansions of generating functions and the Φ-moderate distance.

use crate::config::Configuration;
use crate::kernels::{KernelError, KernelSpec, PhiExpansion, SpaceTimePoint};
use crate::mhermite::{MhError, MultiHermiteBasis};
use crate::quad;
use crate::specfun::heat_kernel_re;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrelationError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Hermite(#[from] MhError),
}

type Result<T> = std::result::Result<T, CorrelationError>;

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(CorrelationError::InvalidParameter("need at least one time".into()));
    }
    if !times.iter().all(|t| *t > 0.0 && t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CorrelationError::InvalidParameter(format!("times must be positive and strictly increasing: {times:?}")));
    }
    Ok(())
}

/// Determinant with a diagnostic: ratio of the smallest to the largest pivot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Determinant {
    pub value: f64,
    pub pivot_ratio: f64,
}

/// LU determinant with partial pivoting; an empty matrix has determinant 1.
pub fn lu_det(m: DMatrix<f64>) -> Determinant {
    if m.nrows() == 0 {
        return Determinant { value: 1.0, pivot_ratio: 1.0 };
    }
    let lu = m.lu();
    let u = lu.u();
    let diag: Vec<f64> = u.diagonal().iter().map(|v| v.abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    Determinant { value: lu.determinant(), pivot_ratio: if max > 0.0 { min / max } else { 0.0 } }
}

#[derive(Debug, Clone)]
pub struct CorrelationRequest {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub kernel: KernelSpec,
}

/// det[K(t_m, x_j^{(m)}; t_n, x_k^{(n)})] with its pivot diagnostic.
pub fn correlation_det_diag(req: &CorrelationRequest) -> Result<Determinant> {
    check_times(&req.times)?;
    if req.points.len() != req.times.len() {
        return Err(CorrelationError::InvalidParameter("one point list per time is required".into()));
    }
    let slots: Vec<SpaceTimePoint> = req
        .times
        .iter()
        .zip(&req.points)
        .flat_map(|(&t, xs)| xs.iter().map(move |&x| SpaceTimePoint::new(t, x)))
        .collect();
    let n = slots.len();
    let entries: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|idx| req.kernel.evaluate(slots[idx / n], slots[idx % n]).map(|v| v.value))
        .collect::<std::result::Result<_, _>>()?;
    Ok(lu_det(DMatrix::from_row_slice(n, n, &entries)))
}

pub fn correlation_det(req: &CorrelationRequest) -> Result<f64> {
    Ok(correlation_det_diag(req)?.value)
}

/// det[p(t, y_j | x_k)].
pub fn km_determinant(t: f64, y: &[f64], x: &[f64]) -> Result<f64> {
    if !(t > 0.0) || y.len() != x.len() {
        return Err(CorrelationError::InvalidParameter("need t > 0 and vectors of equal length".into()));
    }
    let n = y.len();
    let m = DMatrix::from_fn(n, n, |j, k| heat_kernel_re(t, y[j], x[k]));
    Ok(lu_det(m).value)
}

fn check_chamber(xs: &[f64], n: usize) -> Result<()> {
    if xs.len() != n || xs.windows(2).any(|w| w[1] <= w[0]) || !xs.iter().all(|v| v.is_finite()) {
        return Err(CorrelationError::InvalidParameter(format!("expected {n} strictly increasing positions, got {xs:?}")));
    }
    Ok(())
}

/// Density of (X(t_1), …, X(t_M)) on the product of Weyl chambers:
/// μ^(−)(t_M, x^{(M)}) Π_m f_N(t_{m+1} − t_m, x^{(m+1)} | x^{(m)}) μ^(+)(t_1, x^{(1)}).
pub fn multitime_density(xi: &Configuration, times: &[f64], configs: &[Vec<f64>]) -> Result<f64> {
    check_times(times)?;
    if configs.len() != times.len() {
        return Err(CorrelationError::InvalidParameter("one configuration per time is required".into()));
    }
    let basis = MultiHermiteBasis::new(xi)?;
    let n = basis.n();
    for c in configs {
        check_chamber(c, n)?;
    }
    let m = times.len();
    let mut v = basis.mu_minus(times[m - 1], &configs[m - 1])? * basis.mu_plus(times[0], &configs[0])?;
    for k in 0..m - 1 {
        v *= km_determinant(times[k + 1] - times[k], &configs[k + 1], &configs[k])?;
    }
    Ok(v)
}

/// S^{m,n}(x, y) = Σ_j φ^(+)_j(t_m, x) φ^(−)_j(t_n, y).
pub fn smn_kernel(basis: &MultiHermiteBasis, t_m: f64, x: f64, t_n: f64, y: f64) -> Result<f64> {
    let mut acc = 0.0;
    for j in 0..basis.n() {
        acc += basis.phi_plus(t_m, x, j)? * basis.phi_minus(t_n, y, j)?;
    }
    Ok(acc)
}

/// S̃^{m,n}(x, y) = S^{m,n}(x, y) − 1(t_m > t_n) p(t_m − t_n, x | y).
pub fn smn_tilde(basis: &MultiHermiteBasis, t_m: f64, x: f64, t_n: f64, y: f64) -> Result<f64> {
    let s = smn_kernel(basis, t_m, x, t_n, y)?;
    Ok(if t_m > t_n { s - heat_kernel_re(t_m - t_n, x, y) } else { s })
}

/// A compactly supported function tabulated on a uniform grid over [lo, hi],
/// linearly interpolated and zero outside.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tabulated {
    pub lo: f64,
    pub hi: f64,
    pub values: Vec<f64>,
}

impl Tabulated {
    pub fn new(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        if !(lo < hi) || values.len() < 2 || !values.iter().all(|v| v.is_finite()) {
            return Err(CorrelationError::InvalidParameter("tabulation needs lo < hi and at least two finite values".into()));
        }
        Ok(Tabulated { lo, hi, values })
    }

    pub fn from_fn(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let n = n.max(2);
        let h = (hi - lo) / (n - 1) as f64;
        Self::new(lo, hi, (0..n).map(|i| f(lo + h * i as f64)).collect())
    }

    pub fn constant(lo: f64, hi: f64, c: f64) -> Result<Self> {
        Self::new(lo, hi, vec![c, c])
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        let n = self.values.len();
        let u = (x - self.lo) / (self.hi - self.lo) * (n - 1) as f64;
        let i = (u.floor() as usize).min(n - 2);
        let f = u - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }
}

#[derive(Debug, Clone)]
pub struct GeneratingFnRequest {
    pub times: Vec<f64>,
    /// χ_m = e^{θ_m f_m} − 1, one per time.
    pub chis: Vec<Tabulated>,
    /// Maximal total number of points N_1 + … + N_M.
    pub order: usize,
    /// Gauss-Legendre nodes per coordinate.
    pub nodes: usize,
    pub kernel: KernelSpec,
}

/// Σ over (N_1, …, N_M) with Σ N_m ≤ order of
/// (1/Π N_m!) ∫ Π χ_m(x_j^{(m)}) det[S̃] by tensor Gauss-Legendre quadrature.
pub fn generating_fn_truncated(req: &GeneratingFnRequest) -> Result<f64> {
    check_times(&req.times)?;
    if req.chis.len() != req.times.len() {
        return Err(CorrelationError::InvalidParameter("one χ per time is required".into()));
    }
    if req.order > 6 || req.nodes == 0 {
        return Err(CorrelationError::InvalidParameter("order must be ≤ 6 and nodes ≥ 1".into()));
    }
    let cap = req.kernel.config.total().map(|n| n as usize).unwrap_or(usize::MAX);
    let rule = quad::gauss_legendre(req.nodes);
    // quadrature slots (time index, position, weight·χ)
    let mut slots: Vec<(usize, f64, f64)> = Vec::new();
    let mut offsets = vec![0usize];
    for (m, chi) in req.chis.iter().enumerate() {
        let half = (chi.hi - chi.lo) / 2.0;
        let mid = (chi.hi + chi.lo) / 2.0;
        for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
            let x = mid + half * u;
            slots.push((m, x, w * half * chi.eval(x)));
        }
        offsets.push(slots.len());
    }
    let ns = slots.len();
    let kmat: Vec<f64> = (0..ns * ns)
        .into_par_iter()
        .map(|idx| {
            let (a, b) = (slots[idx / ns], slots[idx % ns]);
            req.kernel
                .evaluate(SpaceTimePoint::new(req.times[a.0], a.1), SpaceTimePoint::new(req.times[b.0], b.1))
                .map(|v| v.value)
        })
        .collect::<std::result::Result<_, _>>()?;

    let mm = req.times.len();
    let mut total = 0.0;
    let mut counts = vec![0usize; mm];
    loop {
        let n_tot: usize = counts.iter().sum();
        if n_tot <= req.order && counts.iter().all(|&c| c <= cap) {
            let fact: f64 = counts.iter().map(|&c| (1..=c).product::<usize>() as f64).product();
            total += term(&counts, &offsets, &slots, &kmat, ns) / fact;
        }
        // next multi-index
        let mut i = 0;
        loop {
            if i == mm {
                return Ok(total);
            }
            counts[i] += 1;
            if counts[i] <= req.order {
                break;
            }
            counts[i] = 0;
            i += 1;
        }
    }
}

/// ∫ Π χ det[S̃] for fixed (N_1, …, N_M) as a sum over node tuples.
fn term(counts: &[usize], offsets: &[usize], slots: &[(usize, f64, f64)], kmat: &[f64], ns: usize) -> f64 {
    let ranges: Vec<(usize, usize)> =
        counts.iter().enumerate().flat_map(|(m, &c)| std::iter::repeat_n((offsets[m], offsets[m + 1]), c)).collect();
    let k = ranges.len();
    if k == 0 {
        return 1.0;
    }
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    let mut acc = 0.0;
    let mut mat = vec![0.0; k * k];
    loop {
        let w: f64 = idx.iter().map(|&i| slots[i].2).product();
        if w != 0.0 {
            for a in 0..k {
                for b in 0..k {
                    mat[a * k + b] = kmat[idx[a] * ns + idx[b]];
                }
            }
            acc += w * crate::specfun::small_det(&mut mat, k);
        }
        let mut p = 0;
        loop {
            if p == k {
                return acc;
            }
            idx[p] += 1;
            if idx[p] < ranges[p].1 {
                break;
            }
            idx[p] = ranges[p].0;
            p += 1;
        }
    }
}

/// Sample box in the complex plane for the Φ-moderate distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexBox {
    pub re: (f64, f64),
    pub im: (f64, f64),
    pub n: usize,
}

impl ComplexBox {
    pub fn points(&self) -> Vec<C64> {
        let n = self.n.max(2);
        let step = |(lo, hi): (f64, f64), i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
        (0..n).flat_map(|i| (0..n).map(move |j| C64::new(step(self.re, i), step(self.im, j)))).collect()
    }
}

/// sup over the box grid of |Φ(ξ_a, i, z) − Φ(ξ_b, i, z)|.
pub fn phi_moderate_distance(xi_a: &Configuration, xi_b: &Configuration, bx: &ComplexBox) -> Result<f64> {
    let center = C64::new(0.0, 1.0);
    let pts = bx.points();
    let d_max = pts.iter().map(|z| (z - center).norm()).fold(0.0, f64::max);
    let ea = PhiExpansion::new(xi_a, center, d_max)?;
    let eb = PhiExpansion::new(xi_b, center, d_max)?;
    let mut best = 0.0f64;
    for z in pts {
        let (va, _) = ea.eval(z)?;
        let (vb, _) = eb.eval(z)?;
        best = best.max((va - vb).norm());
    }
    Ok(best)
}
