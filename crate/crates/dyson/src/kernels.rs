//! Correlation kernels: finite configurations (contour and residue forms),
//! the entire function Φ and the infinite-configuration limit, the lattice
//! closed form, the (extended) sine kernel and the cluster-expansion kernel.

use crate::config::{decompose_clusters_with, g_kappa_inv, Cluster, ClusterDecomposition, ConfigError, Configuration, SlotChoice, TailRule};
use crate::quad::{self, QuadError};
use crate::specfun::{self, heat_kernel_re, hermite_scaled, schur_hook_from_h, theta3, SpecError};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub use crate::specfun::{extended_sine, sine_kernel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("contour passes within {distance:e} of a pole")]
    ContourPlacement { distance: f64 },
    #[error("truncation failed: achieved error {achieved:e}, tolerance {tol:e}")]
    Truncation { achieved: f64, tol: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Special(#[from] SpecError),
}

type Result<T> = std::result::Result<T, KernelError>;


#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpaceTimePoint {
    pub t: f64,
    pub x: f64,
}

impl SpaceTimePoint {
    pub fn new(t: f64, x: f64) -> Self {
        SpaceTimePoint { t, x }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KernelFamily {
    FiniteContour,
    FiniteResidue,
    InfiniteLimit,
    LatticeTheta,
    Sine,
    ExtendedSine,
    Cluster,
}

impl FromStr for KernelFamily {
    type Err = KernelError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "finite_contour" => KernelFamily::FiniteContour,
            "finite_residue" => KernelFamily::FiniteResidue,
            "infinite_limit" => KernelFamily::InfiniteLimit,
            "lattice_theta" => KernelFamily::LatticeTheta,
            "sine" => KernelFamily::Sine,
            "extended_sine" => KernelFamily::ExtendedSine,
            "cluster" => KernelFamily::Cluster,
            other => return Err(KernelError::InvalidParameter(format!("unknown kernel family {other:?}"))),
        })
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KernelFamily::FiniteContour => "finite_contour",
            KernelFamily::FiniteResidue => "finite_residue",
            KernelFamily::InfiniteLimit => "infinite_limit",
            KernelFamily::LatticeTheta => "lattice_theta",
            KernelFamily::Sine => "sine",
            KernelFamily::ExtendedSine => "extended_sine",
            KernelFamily::Cluster => "cluster",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub quad_tol: f64,
    pub series_tol: f64,
    pub product_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { quad_tol: 1e-11, series_tol: 1e-13, product_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Truncation {
    /// Half-width of the x′ window; chosen from the Gaussian factor when None.
    pub l_window: Option<f64>,
    pub q_max: usize,
    pub ell_max: usize,
    pub k_cluster_range: Option<(i64, i64)>,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation { l_window: None, q_max: 200, ell_max: 200, k_cluster_range: None }
    }
}

/// Integration contour for the finite contour form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ContourChoice {
    /// One small circle around each distinct point.
    PerPoint,
    Circle { center: f64, radius: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    #[serde(serialize_with = "ser_display")]
    pub config: Configuration,
    pub tol: Tolerances,
    pub trunc: Truncation,
    pub contour: ContourChoice,
    /// κ used for the cluster decomposition.
    pub cluster_kappa: f64,
    pub slot_choice: SlotChoice,
}

fn ser_display<S: serde::Serializer, T: fmt::Display>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelValue {
    pub value: f64,
    pub imag_residual: f64,
    pub est_error: f64,
}

impl KernelValue {
    fn from_complex(v: C64, est_error: f64) -> Self {
        KernelValue { value: v.re, imag_residual: v.im.abs(), est_error }
    }
}

impl KernelSpec {
    pub fn new(family: KernelFamily, config: Configuration) -> Self {
        KernelSpec {
            family,
            config,
            tol: Tolerances::default(),
            trunc: Truncation::default(),
            contour: ContourChoice::PerPoint,
            cluster_kappa: 0.9,
            slot_choice: SlotChoice::First,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tol;
        if !(t.quad_tol > 0.0 && t.series_tol > 0.0 && t.product_tol > 0.0) {
            return Err(KernelError::InvalidParameter("tolerances must be positive".into()));
        }
        if self.trunc.q_max == 0 || self.trunc.ell_max == 0 || self.trunc.l_window.is_some_and(|l| !(l > 0.0)) {
            return Err(KernelError::InvalidParameter("truncation parameters must be positive".into()));
        }
        if !(self.cluster_kappa > 0.5 && self.cluster_kappa <= 1.0) {
            return Err(KernelError::InvalidParameter(format!("cluster κ must lie in (1/2, 1], got {}", self.cluster_kappa)));
        }
        Ok(())
    }

    pub fn evaluate(&self, p1: SpaceTimePoint, p2: SpaceTimePoint) -> Result<KernelValue> {
        self.validate()?;
        match self.family {
            KernelFamily::FiniteContour => kernel_finite_contour(self, p1, p2),
            KernelFamily::FiniteResidue => kernel_finite_residue(self, p1, p2),
            KernelFamily::InfiniteLimit => kernel_infinite(self, p1, p2),
            KernelFamily::LatticeTheta => kernel_lattice_theta(p1, p2, self.tol.quad_tol),
            KernelFamily::Sine => Ok(KernelValue { value: sine_kernel(p2.x - p1.x), imag_residual: 0.0, est_error: 0.0 }),
            KernelFamily::ExtendedSine => {
                Ok(KernelValue { value: extended_sine(p2.t - p1.t, p2.x - p1.x), imag_residual: 0.0, est_error: 1e-14 })
            }
            KernelFamily::Cluster => kernel_cluster(self, p1, p2),
        }
    }
}

/// One row of a kernel grid evaluation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridRow {
    pub s: f64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub value: f64,
    pub imag_residual: f64,
    pub est_error: f64,
}

/// Evaluate on the product grid, rows in lexicographic (s, t, x, y) order.
pub fn evaluate_grid(spec: &KernelSpec, ss: &[f64], ts: &[f64], xs: &[f64], ys: &[f64]) -> Result<Vec<GridRow>> {
    let sorted = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (ss, ts, xs, ys) = (sorted(ss), sorted(ts), sorted(xs), sorted(ys));
    let mut tuples = Vec::with_capacity(ss.len() * ts.len() * xs.len() * ys.len());
    for &s in &ss {
        for &t in &ts {
            for &x in &xs {
                for &y in &ys {
                    tuples.push((s, t, x, y));
                }
            }
        }
    }
    tuples
        .par_iter()
        .map(|&(s, t, x, y)| {
            let v = spec.evaluate(SpaceTimePoint::new(s, x), SpaceTimePoint::new(t, y))?;
            Ok(GridRow { s, t, x, y, value: v.value, imag_residual: v.imag_residual, est_error: v.est_error })
        })
        .collect()
}

fn check_times(p1: SpaceTimePoint, p2: SpaceTimePoint) -> Result<()> {
    for (name, p) in [("s", p1), ("t", p2)] {
        if !(p.t > 0.0) || !p.t.is_finite() {
            return Err(KernelError::InvalidParameter(format!("{name} must be positive, got {}", p.t)));
        }
        if !p.x.is_finite() {
            return Err(KernelError::InvalidParameter(format!("non-finite position {}", p.x)));
        }
    }
    Ok(())
}

fn backward_term(p1: SpaceTimePoint, p2: SpaceTimePoint) -> f64 {
    if p1.t > p2.t {
        heat_kernel_re(p1.t - p2.t, p1.x, p2.x)
    } else {
        0.0
    }
}

fn gh_max_node(n: usize) -> f64 {
    *quad::gauss_hermite(n).nodes.last().expect("nonempty rule")
}

/// E[f(Z)] by Gauss-Hermite, node count doubled from n0 until two levels
/// agree within tol (relative to max(1, |value|)) or nmax is reached.
/// `f` returns a value and its own error; the result is
/// (value, quadrature error, weighted sum of the pointwise errors).
fn gh_expect<F: FnMut(f64) -> Result<(C64, f64)>>(n0: usize, nmax: usize, tol: f64, mut f: F) -> Result<(C64, f64, f64)> {
    let mut eval = |n: usize| -> Result<(C64, f64)> {
        let rule = quad::gauss_hermite(n);
        let mut acc = C64::new(0.0, 0.0);
        let mut perr = 0.0;
        for (&z, &w) in rule.nodes.iter().zip(&rule.weights) {
            let (v, e) = f(z)?;
            acc += w * v;
            perr += w * e;
        }
        Ok((acc, perr))
    };
    let mut n = n0;
    let (mut prev, _) = eval(n)?;
    loop {
        n *= 2;
        let (cur, perr) = eval(n)?;
        let err = (cur - prev).norm();
        if err <= tol * cur.norm().max(1.0) || n >= nmax {
            return Ok((cur, err, perr));
        }
        prev = cur;
    }
}

/// Factorized evaluation of Φ(ξ, a, ·) on the disc |z − a| ≤ d_max:
/// a direct product over points near a times exp(−Σ_j (z−a)^j S_j / j),
/// S_j = Σ_{far} (x − a)^{−j}.
#[derive(Debug, Clone)]
pub struct PhiExpansion {
    a: C64,
    near: Vec<(C64, u32)>,
    far: Vec<C64>,
    d_max: f64,
    trunc_err: f64,
    half: Option<Vec<(C64, u32)>>,
}

fn binom_series(p: f64, nmax: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(nmax + 1);
    let mut b = 1.0;
    out.push(b);
    for n in 1..=nmax {
        b *= (p - (n as f64 - 1.0)) / n as f64;
        out.push(b);
    }
    out
}

impl PhiExpansion {
    pub fn new(xi: &Configuration, a: C64, d_max: f64) -> Result<Self> {
        Self::build(xi, a, d_max, None)
    }

    /// Expansion of Φ(ξ − ξ|_{[lo,hi]}, a, ·).
    pub fn excluding(xi: &Configuration, a: C64, d_max: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::build(xi, a, d_max, Some((lo, hi)))
    }

    fn build(xi: &Configuration, a: C64, d_max: f64, exclude: Option<(f64, f64)>) -> Result<Self> {
        if !(d_max >= 0.0) || !d_max.is_finite() || !a.re.is_finite() || !a.im.is_finite() {
            return Err(KernelError::InvalidParameter(format!("bad expansion centre {a} or radius {d_max}")));
        }
        let ar = a.re;
        let keep = |x: f64| exclude.is_none_or(|(lo, hi)| x < lo || x > hi) && C64::new(x, 0.0) != a;
        let shift = |pts: Vec<(f64, u32)>| -> Vec<(C64, u32)> {
            pts.into_iter().filter(|p| keep(p.0)).map(|(x, m)| (C64::new(x, 0.0) - a, m)).collect()
        };
        match *xi.tail() {
            TailRule::None => {
                Ok(PhiExpansion { a, near: shift(xi.core().to_vec()), far: Vec::new(), d_max, trunc_err: 0.0, half: None })
            }
            TailRule::Window { lo, hi } => {
                let l = (ar - lo).min(hi - ar);
                if !(l > 2.0 * d_max) {
                    return Err(KernelError::Truncation { achieved: f64::INFINITY, tol: 0.0 });
                }
                let near = shift(xi.points_in(ar - l, ar + l)?);
                let half = shift(xi.points_in(ar - l / 2.0, ar + l / 2.0)?);
                Ok(PhiExpansion { a, near, far: Vec::new(), d_max, trunc_err: 0.0, half: Some(half) })
            }
            TailRule::Lattice(tl) => {
                let v1 = (3.0 * d_max).max(32.0);
                let near = shift(xi.points_in(ar - v1, ar + v1)?);
                let ratio = (d_max / v1).max(1e-300);
                let jmax = (((18.0 * 10f64.ln()) + v1.ln()) / (1.0 / ratio).ln()).ceil().clamp(2.0, 64.0) as usize;
                let b = a - tl.offset;
                let core_extent = xi.core().iter().fold(0.0f64, |acc, p| acc.max((p.0 - ar).abs()));
                let v2 = 500f64.max(8.0 * v1).max(4.0 * b.norm() + 50.0).max(core_extent + 10.0);
                let mut far = vec![C64::new(0.0, 0.0); jmax + 1];
                for (x, m) in xi.points_in(ar - v2, ar + v2)? {
                    if (x - ar).abs() <= v1 || !keep(x) {
                        continue;
                    }
                    let inv = 1.0 / (C64::new(x, 0.0) - a);
                    let mut pw = inv;
                    for sj in far.iter_mut().skip(1) {
                        *sj += m as f64 * pw;
                        pw *= inv;
                    }
                }
                // Euler-Maclaurin remainder beyond the explicit window
                let (i0, i1) = tl
                    .index_span(ar - v2, ar + v2)
                    .ok_or_else(|| KernelError::InvalidParameter("empty explicit window".into()))?;
                let n_r = i1 + 1;
                let m_l = 1 - i0;
                if n_r < tl.first_index as i64 || m_l < tl.first_index as i64 || n_r < 1 || m_l < 1 {
                    return Err(KernelError::InvalidParameter("explicit window does not reach the lattice tail".into()));
                }
                let (c, p) = tl.density_params();
                let x_r = tl.position(n_r);
                let x_l = tl.position(-m_l);
                let d_r = C64::new(x_r, 0.0) - a;
                let d_l = a - x_l;
                let sig_r = tl.scale * tl.kappa * (n_r as f64).powf(tl.kappa - 1.0);
                let sig_l = tl.scale * tl.kappa * (m_l as f64).powf(tl.kappa - 1.0);
                let nb = 200;
                let bin = binom_series(p, nb);
                let lnr = d_r.ln();
                let lnl = d_l.ln();
                let cpow = |lnz: C64, e: f64| (lnz * e).exp();
                for (j, sj) in far.iter_mut().enumerate().skip(1) {
                    let jf = j as f64;
                    // boundary terms F/2 − F′/12 on both sides
                    let f_r = cpow(lnr, -jf);
                    let fp_r = -jf * cpow(lnr, -jf - 1.0) * sig_r;
                    let xl_a = -d_l;
                    let g_l = (xl_a.ln() * -jf).exp();
                    let gp_l = -jf * (xl_a.ln() * (-jf - 1.0)).exp() * (-sig_l);
                    let mut rem = f_r / 2.0 - fp_r / 12.0 + g_l / 2.0 - gp_l / 12.0;
                    // integral of the density
                    let mut integ = C64::new(0.0, 0.0);
                    let mut bpow = C64::new(1.0, 0.0);
                    let mut mbpow = C64::new(1.0, 0.0);
                    let sign_l = if j % 2 == 0 { 1.0 } else { -1.0 };
                    for (n, &bn) in bin.iter().enumerate() {
                        let nf = n as f64;
                        if j == 1 && n == 0 {
                            integ += if p == 0.0 { lnl - lnr } else { (cpow(lnl, p) - cpow(lnr, p)) / p };
                        } else if bn != 0.0 {
                            let den = nf + jf - 1.0 - p;
                            let e = p - nf - jf + 1.0;
                            let term = bn * (bpow * cpow(lnr, e) + sign_l * mbpow * cpow(lnl, e)) / den;
                            integ += term;
                            if term.norm() < 1e-20 * integ.norm().max(1e-300) {
                                break;
                            }
                        }
                        bpow *= b;
                        mbpow *= -b;
                        if bn == 0.0 && n > 0 {
                            break;
                        }
                    }
                    rem += c * integ;
                    *sj += rem;
                }
                let dist = d_r.norm().min(d_l.norm());
                let em_next = d_max * 6.0 * sig_r.max(sig_l).powi(3) / (720.0 * dist.powi(4));
                let series_next = ratio.powi(jmax as i32 + 1) * v1;
                Ok(PhiExpansion { a, near, far, d_max, trunc_err: em_next + series_next, half: None })
            }
        }
    }

    pub fn center(&self) -> C64 {
        self.a
    }

    /// Φ(z) and an error estimate.
    pub fn eval(&self, z: C64) -> Result<(C64, f64)> {
        let d = z - self.a;
        if d.norm() > self.d_max * (1.0 + 1e-9) + 1e-12 && (!self.far.is_empty() || self.half.is_some()) {
            return Err(KernelError::InvalidParameter(format!("|z − a| = {} exceeds the expansion radius {}", d.norm(), self.d_max)));
        }
        let prod = |pts: &[(C64, u32)]| {
            let mut acc = C64::new(1.0, 0.0);
            for &(u, m) in pts {
                let f = 1.0 - d / u;
                acc *= if m == 1 { f } else { f.powu(m) };
            }
            acc
        };
        let mut value = prod(&self.near);
        if let Some(h) = &self.half {
            let err = (value - prod(h)).norm();
            return Ok((value, err));
        }
        if self.far.len() > 1 {
            let mut s = C64::new(0.0, 0.0);
            for j in (1..self.far.len()).rev() {
                s = (s + self.far[j] / j as f64) * d;
            }
            value *= (-s).exp();
        }
        Ok((value, self.trunc_err * value.norm()))
    }

    /// p_r = Σ (x − a)^{−r} over the configuration (without excluded points), r = 0..=rmax.
    pub fn power_sums(&self, rmax: usize) -> Vec<C64> {
        let mut p = vec![C64::new(0.0, 0.0); rmax + 1];
        for &(u, m) in &self.near {
            let inv = 1.0 / u;
            let mut pw = inv;
            for pr in p.iter_mut().skip(1) {
                *pr += m as f64 * pw;
                pw *= inv;
            }
        }
        for (r, pr) in p.iter_mut().enumerate().skip(1) {
            if let Some(s) = self.far.get(r) {
                *pr += s;
            }
        }
        p
    }
}

/// Φ(ξ, a, z) = Π_{x∈ξ, x≠a}(1 − (z−a)/(x−a)), with its estimated error.
pub fn phi_entire(xi: &Configuration, a: f64, z: C64, tol: f64) -> Result<(C64, f64)> {
    let e = PhiExpansion::new(xi, C64::new(a, 0.0), (z - a).norm())?;
    let (v, err) = e.eval(z)?;
    if err > tol {
        return Err(KernelError::Truncation { achieved: err, tol });
    }
    Ok((v, err))
}

fn finite_labels(spec: &KernelSpec) -> Result<Vec<f64>> {
    if !spec.config.is_finite() {
        return Err(KernelError::Precondition("finite kernel needs a finite configuration".into()));
    }
    let xs = spec.config.labeled()?;
    if xs.is_empty() {
        return Err(KernelError::Precondition("empty configuration".into()));
    }
    Ok(xs)
}

/// Contour form with the integrand written as
/// Σ_k Π_{ℓ≤k}(w − x_ℓ)/Π_{ℓ≤k+1}(z − x_ℓ), which equals
/// {Π(w−x)/Π(z−x) − 1}/(w − z) and has no pole at z = w.
pub fn kernel_finite_contour(spec: &KernelSpec, p1: SpaceTimePoint, p2: SpaceTimePoint) -> Result<KernelValue> {
    check_times(p1, p2)?;
    let xs = finite_labels(spec)?;
    let n = xs.len();
    let (s, x, t, y) = (p1.t, p1.x, p2.t, p2.x);
    // E_w[Π_{ℓ≤k}(w − x_ℓ)], w = y + i√t Z; polynomial, so Gauss-Hermite is exact
    let rt = t.sqrt();
    let a_coef = |m: usize| -> Vec<C64> {
        let rule = quad::gauss_hermite(m);
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (&z, &wt) in rule.nodes.iter().zip(&rule.weights) {
            let w = C64::new(y, rt * z);
            let mut pr = C64::new(1.0, 0.0);
            for (k, o) in out.iter_mut().enumerate() {
                *o += wt * pr;
                pr *= w - xs[k];
            }
        }
        out
    };
    let m0 = (n / 2 + 4).max(8);
    let coef = a_coef(2 * m0);
    let gh_err = coef.iter().zip(a_coef(m0)).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);

    let integrand = |z: C64| -> C64 {
        let d = C64::new(x, 0.0) - z;
        let p = (-d * d / (2.0 * s)).exp() / (2.0 * PI * s).sqrt();
        let mut den = C64::new(1.0, 0.0);
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..n {
            den *= z - xs[k];
            acc += coef[k] / den;
        }
        p * acc
    };
    let circles: Vec<(f64, f64)> = match spec.contour {
        ContourChoice::PerPoint => {
            let mut distinct = xs.clone();
            distinct.dedup();
            let gap = distinct.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
            let r = (0.45 * gap).min(s.sqrt()).min(1.0);
            if gap.is_finite() && gap - r < 1e-6 {
                return Err(KernelError::ContourPlacement { distance: gap - r });
            }
            distinct.into_iter().map(|c| (c, r)).collect()
        }
        ContourChoice::Circle { center, radius } => {
            let dist = xs.iter().map(|&v| radius - (v - center).abs()).fold(f64::INFINITY, f64::min);
            if dist.abs() < 1e-6 {
                return Err(KernelError::ContourPlacement { distance: dist.abs() });
            }
            if dist < 0.0 {
                return Err(KernelError::Precondition("contour circle does not enclose every point".into()));
            }
            vec![(center, radius)]
        }
    };
    let mut total = C64::new(0.0, 0.0);
    let mut err = gh_err * n as f64;
    for (c, r) in circles {
        let mut m = 64;
        let mut prev = quad::circle_trapezoid(C64::new(c, 0.0), r, m, integrand);
        loop {
            m *= 2;
            let cur = quad::circle_trapezoid(C64::new(c, 0.0), r, m, integrand);
            let e = (cur - prev).norm();
            prev = cur;
            if e <= 1e-3 * spec.tol.quad_tol || m >= 1 << 15 {
                err += e;
                break;
            }
        }
        total += prev;
    }
    total -= backward_term(p1, p2);
    Ok(KernelValue::from_complex(total, err))
}

/// Residue form Σ_{x′} p(s,x|x′) E[Φ(ξ, x′, y + i√t Z)] − 1(s>t)p(s−t,x|y); simple ξ only.
pub fn kernel_finite_residue(spec: &KernelSpec, p1: SpaceTimePoint, p2: SpaceTimePoint) -> Result<KernelValue> {
    check_times(p1, p2)?;
    let xs = finite_labels(spec)?;
    if !spec.config.is_simple() {
        return Err(KernelError::Unsupported("residue form needs a simple configuration; use the contour form".into()));
    }
    let n = xs.len();
    let (s, x, t, y) = (p1.t, p1.x, p2.t, p2.x);
    let rt = t.sqrt();
    let m0 = (n / 2 + 4).max(8);
    let mut total = C64::new(0.0, 0.0);
    let mut err = 0.0;
    for (i, &a) in xs.iter().enumerate() {
        let phi = |w: C64| {
            let d = w - a;
            let mut acc = C64::new(1.0, 0.0);
            for (j, &v) in xs.iter().enumerate() {
                if j != i {
                    acc *= 1.0 - d / (v - a);
                }
            }
            acc
        };
        let (e, ee, _) = gh_expect(m0, 2 * m0, 0.0, |z| Ok((phi(C64::new(y, rt * z)), 0.0)))?;
        let w = heat_kernel_re(s, x, a);
        total += w * e;
        err += w * ee;
    }
    total -= backward_term(p1, p2);
    Ok(KernelValue::from_complex(total, err))
}

fn gaussian_window(s: f64, tol: f64) -> f64 {
    (2.0 * s * (1.0 / tol.min(1e-3)).ln()).sqrt() + 0.5
}

/// Infinite-configuration kernel: the residue sum over x′ in a window
/// where p(s,x|x′) is not negligible, Φ from [`PhiExpansion`].
pub fn kernel_infinite(spec: &KernelSpec, p1: SpaceTimePoint, p2: SpaceTimePoint) -> Result<KernelValue> {
    check_times(p1, p2)?;
    let xi = &spec.config;
    if !xi.is_simple() {
        return Err(KernelError::Precondition("infinite-limit kernel needs a simple configuration".into()));
    }
    let (s, x, t, y) = (p1.t, p1.x, p2.t, p2.x);
    let mut l = gaussian_window(s, spec.tol.series_tol * 1e-2);
    if let Some(lw) = spec.trunc.l_window {
        l = l.min(lw);
    }
    if let TailRule::Window { lo, hi } = *xi.tail() {
        if x - l < lo || x + l > hi {
            return Err(KernelError::Truncation { achieved: heat_kernel_re(s, 0.0, (x - lo).min(hi - x)), tol: spec.tol.series_tol });
        }
    }
    let rt = t.sqrt();
    let (n0, nmax) = (32, 128);
    let zmax = gh_max_node(nmax);
    let sources = xi.points_in(x - l, x + l)?;
    let mut total = C64::new(0.0, 0.0);
    let mut err = heat_kernel_re(s, l, 0.0) * 2.0;
    let mut prod_err = 0.0;
    for (a, _) in sources {
        let w = heat_kernel_re(s, x, a);
        let exp = PhiExpansion::new(xi, C64::new(a, 0.0), (y - a).abs() + rt * zmax)?;
        let (e, ee, perr) = gh_expect(n0, nmax, spec.tol.quad_tol, |z| exp.eval(C64::new(y, rt * z)))?;
        total += w * e;
        err += w * ee;
        prod_err += w * perr;
    }
    if prod_err > spec.tol.product_tol {
        return Err(KernelError::Truncation { achieved: prod_err, tol: spec.tol.product_tol });
    }
    err += prod_err;
    total -= backward_term(p1, p2);
    Ok(KernelValue::from_complex(total, err))
}

/// ϑ₃(x − iks, 2πis) − 1.
fn theta_minus_one(x: f64, k: f64, s: f64, tol: f64) -> Result<C64> {
    if s >= 0.25 {
        let nmax = 3 + ((50.0 * 10f64.ln()) / (2.0 * PI * PI * s)).sqrt().ceil() as i64;
        let mut acc = C64::new(0.0, 0.0);
        for n in 1..=nmax {
            let nf = n as f64;
            let g = -2.0 * PI * PI * s * nf * nf;
            acc += C64::new(g + 2.0 * PI * nf * k * s, 2.0 * PI * nf * x).exp();
            acc += C64::new(g - 2.0 * PI * nf * k * s, -2.0 * PI * nf * x).exp();
        }
        Ok(acc)
    } else {
        Ok(theta3(C64::new(x, -k * s), C64::new(0.0, 2.0 * PI * s), tol)? - 1.0)
    }
}

/// (1/2π)∫_{|k|≤π} e^{k²(t−s)/2 + ik(y−x)}{ϑ₃(x − iks, 2πis) − 1} dk.
fn lattice_correction(s: f64, x: f64, t: f64, y: f64, tol: f64) -> Result<(C64, f64)> {
    let dt = t - s;
    let d = y - x;
    let mut fail = None;
    let f = |k: f64| {
        let e = C64::new(k * k * dt / 2.0, k * d).exp();
        match theta_minus_one(x, k, s, 1e-17) {
            Ok(th) => e * th,
            Err(err) => {
                fail = Some(err);
                C64::new(0.0, 0.0)
            }
        }
    };
    let pieces = 8 + (d.abs() + 2.0 * PI * s) as usize;
    let r = quad::adaptive(f, -PI, PI, pieces.min(400), tol, 1e-13)?;
    if let Some(e) = fail {
        return Err(e.into());
    }
    Ok((r.value / (2.0 * PI), r.error / (2.0 * PI)))
}

/// Lattice kernel by the theta closed form; s > 0 (s = 0 is not extrapolated).
pub fn kernel_lattice_theta(p1: SpaceTimePoint, p2: SpaceTimePoint, tol: f64) -> Result<KernelValue> {
    if !(p1.t > 0.0) || !(p2.t >= 0.0) || !p1.t.is_finite() || !p2.t.is_finite() {
        return Err(KernelError::InvalidParameter(format!("lattice kernel needs s > 0 and t ≥ 0, got s={} t={}", p1.t, p2.t)));
    }
    let (c, e) = lattice_correction(p1.t, p1.x, p2.t, p2.x, tol)?;
    let base = extended_sine(p2.t - p1.t, p2.x - p1.x);
    Ok(KernelValue { value: base + c.re, imag_residual: c.im.abs(), est_error: e + 1e-14 })
}

/// Lattice kernel by the ℓ-sum: 𝐊_sin + Σ_{ℓ≠0} e^{2πixℓ−2π²sℓ²}∫₀¹ e^{π²u²(t−s)/2} cos[πu{(y−x) − 2πisℓ}] du.
pub fn kernel_lattice_ell_sum(p1: SpaceTimePoint, p2: SpaceTimePoint, ell_max: usize, tol: f64) -> Result<KernelValue> {
    let (s, x, t, y) = (p1.t, p1.x, p2.t, p2.x);
    if !(s > 0.0) || !(t >= 0.0) {
        return Err(KernelError::InvalidParameter("ℓ-sum needs s > 0 and t ≥ 0".into()));
    }
    let dt = t - s;
    let d = y - x;
    let mut total = C64::new(0.0, 0.0);
    let mut err = 0.0;
    for l in 1..=ell_max as i64 {
        let mut shell = C64::new(0.0, 0.0);
        for sl in [l, -l] {
            let lf = sl as f64;
            let arg = C64::new(d, -2.0 * PI * s * lf);
            let r = quad::adaptive(
                |u| (PI * PI * u * u * dt / 2.0).exp() * (PI * u * arg).cos(),
                0.0,
                1.0,
                4 + (d.abs() + 2.0 * PI * s * lf.abs()) as usize,
                1e-3 * tol,
                1e-14,
            )?;
            let pre = C64::new(-2.0 * PI * PI * s * lf * lf, 2.0 * PI * x * lf).exp();
            shell += pre * r.value;
            err += (pre * r.error).norm();
        }
        total += shell;
        let lf = l as f64 + 1.0;
        let bound = 2.0 * (-2.0 * PI * PI * s * (lf * lf - lf)).exp() * (PI * PI * dt.max(0.0) / 2.0).exp();
        if bound < 1e-3 * tol {
            break;
        }
        if l == ell_max as i64 {
            return Err(KernelError::Truncation { achieved: bound, tol });
        }
    }
    let v = extended_sine(dt, d) + total.re;
    Ok(KernelValue { value: v, imag_residual: total.im.abs(), est_error: err })
}

fn csinc(w: C64) -> C64 {
    if w.norm() < 1e-8 {
        return C64::new(1.0, 0.0) - (PI * w) * (PI * w) / 6.0;
    }
    (PI * w).sin() / (PI * w)
}

/// Equal-time lattice kernel Σ_ℓ e^{2πixℓ−2π²tℓ²} sin[π((y−x) − 2πitℓ)]/(π((y−x) − 2πitℓ)).
pub fn lattice_equal_time(t: f64, x: f64, y: f64) -> Result<C64> {
    if !(t > 0.0) {
        return Err(KernelError::InvalidParameter("equal-time form needs t > 0".into()));
    }
    let d = y - x;
    let mut acc = csinc(C64::new(d, 0.0));
    for l in 1..10000i64 {
        let mut shell = C64::new(0.0, 0.0);
        for sl in [l, -l] {
            let lf = sl as f64;
            let pre = C64::new(-2.0 * PI * PI * t * lf * lf, 2.0 * PI * x * lf).exp();
            shell += pre * csinc(C64::new(d, -2.0 * PI * t * lf));
        }
        acc += shell;
        if shell.norm() < 1e-18 * acc.norm().max(1e-300) && l > 2 {
            break;
        }
    }
    Ok(acc)
}

/// sup over the (x, y) grid of |K^{ξ^Z}(u+s, x; u+t, y) − 𝐊_sin(t−s, y−x)|.
pub fn relaxation_gap(u: f64, s: f64, t: f64, grid: &[(f64, f64)], tol: f64) -> Result<f64> {
    if !(u > 0.0) || !(s >= 0.0) || !(t >= 0.0) {
        return Err(KernelError::InvalidParameter(format!("relaxation gap needs u > 0, s, t ≥ 0 (u={u}, s={s}, t={t})")));
    }
    let vals: Vec<Result<f64>> = grid
        .par_iter()
        .map(|&(x, y)| {
            let k = kernel_lattice_theta(SpaceTimePoint::new(u + s, x), SpaceTimePoint::new(u + t, y), tol)?;
            Ok((k.value - extended_sine(t - s, y - x)).abs())
        })
        .collect();
    let mut best = 0.0f64;
    for v in vals {
        best = best.max(v?);
    }
    Ok(best)
}

/// (e^{π²(t−s)/2} ∨ 1){(1 − e^{−4π²(u+s)})/(2π²(u+s)) + 2e^{−4π²(u+s)}/(1 − e^{−2π²(u+s)})}.
pub fn relaxation_bound(u: f64, s: f64, t: f64) -> f64 {
    let us = u + s;
    let pre = (PI * PI * (t - s) / 2.0).exp().max(1.0);
    let e4 = (-4.0 * PI * PI * us).exp();
    let e2 = (-2.0 * PI * PI * us).exp();
    pre * ((1.0 - e4) / (2.0 * PI * PI * us) + 2.0 * e4 / (1.0 - e2))
}

/// h_0..=h_rmax of real variables, one variable at a time.
fn complete_real(vars: &[f64], rmax: usize) -> Vec<f64> {
    let mut h = vec![0.0; rmax + 1];
    h[0] = 1.0;
    for &v in vars {
        for r in 1..=rmax {
            h[r] += v * h[r - 1];
        }
    }
    h
}

/// Data of one cluster needed to evaluate Ψ_k: the expansion of Φ(ξ − 𝔠_k, c_k, ·),
/// the complete symmetric functions of {1/(x − c_k)} outside the cluster and
/// the Schur values s_{(q−n | n−1−ℓ)}(v − c_k).
#[derive(Debug, Clone)]
pub struct ClusterTerm {
    pub k: i64,
    pub center: f64,
    pub size: usize,
    expansion: PhiExpansion,
    h_out: Vec<f64>,
    h_in: Vec<f64>,
    q_max: usize,
}

impl ClusterTerm {
    pub fn new(xi: &Configuration, cluster: &Cluster, d_max: f64, q_max: usize) -> Result<Self> {
        let c = cluster.center;
        let expansion = PhiExpansion::excluding(xi, C64::new(c, 0.0), d_max, cluster.lo, cluster.hi)?;
        let p = expansion.power_sums(q_max);
        let h_out: Vec<f64> = specfun::complete_from_power_sums(&p, q_max).iter().map(|v| v.re).collect();
        let v: Vec<f64> = cluster.labeled().iter().map(|&u| u - c).collect();
        let n = v.len();
        let h_in = complete_real(&v, q_max + 1);
        Ok(ClusterTerm { k: cluster.k, center: c, size: n, expansion, h_out, h_in, q_max })
    }

    /// Θ_{k,q}(t, ξ, x) for q = 0..=q_max.
    pub fn theta(&self, t: f64, x: f64) -> Vec<f64> {
        let sc = (2.0 * t).sqrt();
        let e = hermite_scaled((self.center - x) / sc, -1.0 / sc, self.q_max);
        (0..=self.q_max).map(|q| (0..=q).map(|r| e[q - r] * self.h_out[r]).sum()).collect()
    }

    /// Coefficients C_ℓ with Ψ_k(z) = Φ(ξ−𝔠_k, c_k, z)·Σ_ℓ C_ℓ (z − c_k)^ℓ.
    pub fn coefficients(&self, t: f64, x: f64, tol: f64) -> Result<Vec<f64>> {
        let n = self.size;
        if n == 0 {
            return Ok(Vec::new());
        }
        let th = self.theta(t, x);
        let mut c: Vec<f64> = th[..n].to_vec();
        let mut quiet = 0;
        let mut last = f64::INFINITY;
        for q in n..=self.q_max {
            let mut biggest = 0.0f64;
            for (l, cl) in c.iter_mut().enumerate() {
                let sgn = if (n - 1 - l) % 2 == 0 { 1.0 } else { -1.0 };
                let sv = schur_hook_from_h(q - n, n - 1 - l, &self.h_in, n);
                let term = sgn * th[q] * sv;
                *cl += term;
                biggest = biggest.max(term.abs());
            }
            let scale = c.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-300);
            last = biggest / scale;
            if last < tol {
                quiet += 1;
                if quiet >= 3 {
                    return Ok(c);
                }
            } else {
                quiet = 0;
            }
        }
        Err(KernelError::Truncation { achieved: last, tol })
    }

    /// Ψ_k(t, ξ, z, x).
    pub fn psi(&self, t: f64, z: C64, x: f64, tol: f64) -> Result<C64> {
        let c = self.coefficients(t, x, tol)?;
        self.psi_with(&c, z)
    }

    fn psi_with(&self, coef: &[f64], z: C64) -> Result<C64> {
        if coef.is_empty() {
            return Ok(C64::new(0.0, 0.0));
        }
        let (phi, _) = self.expansion.eval(z)?;
        let d = z - self.center;
        let mut poly = C64::new(0.0, 0.0);
        for &cl in coef.iter().rev() {
            poly = poly * d + cl;
        }
        Ok(phi * poly)
    }
}

/// Ψ_k(t, ξ, z, x) for the cluster k of `dec`.
pub fn psi_cluster(t: f64, xi: &Configuration, z: C64, x: f64, k: i64, dec: &ClusterDecomposition, tol: f64) -> Result<C64> {
    if !(t > 0.0) {
        return Err(KernelError::InvalidParameter(format!("t must be positive, got {t}")));
    }
    let cl = dec.cluster(k).ok_or_else(|| KernelError::InvalidParameter(format!("cluster {k} not in the decomposition")))?;
    if cl.size == 0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let term = ClusterTerm::new(xi, cl, (z - cl.center).norm(), 200)?;
    term.psi(t, z, x, tol)
}

/// Θ_{k,q}(t, ξ, x) = Σ_{r≤q} H_{q−r}((c_k−x)/√(2t))(−1/√(2t))^{q−r}/(q−r)! · h_r.
pub fn theta_coeff(t: f64, xi: &Configuration, x: f64, k: i64, q: usize, dec: &ClusterDecomposition) -> Result<f64> {
    if !(t > 0.0) {
        return Err(KernelError::InvalidParameter(format!("t must be positive, got {t}")));
    }
    let cl = dec.cluster(k).ok_or_else(|| KernelError::InvalidParameter(format!("cluster {k} not in the decomposition")))?;
    let term = ClusterTerm::new(xi, cl, 0.0, q.max(1))?;
    Ok(term.theta(t, x)[q])
}

/// Kernel in cluster form: Σ_k p(s,x|c_k) E[Ψ_k(s, ξ, y + i√t Z, x)] − 1(s>t)p(s−t,x|y).
pub fn kernel_cluster(spec: &KernelSpec, p1: SpaceTimePoint, p2: SpaceTimePoint) -> Result<KernelValue> {
    check_times(p1, p2)?;
    let xi = &spec.config;
    let (s, x, t, y) = (p1.t, p1.x, p2.t, p2.x);
    let kappa = spec.cluster_kappa;
    let (k_lo, k_hi) = match spec.trunc.k_cluster_range {
        Some(r) => r,
        None => {
            let mut l = gaussian_window(s, spec.tol.series_tol * 1e-2) + 2.0;
            if let Some(lw) = spec.trunc.l_window {
                l = l.min(lw);
            }
            let mut lo = x - l;
            let mut hi = x + l;
            if xi.is_finite() {
                let pts = xi.core();
                if let (Some(f), Some(b)) = (pts.first(), pts.last()) {
                    lo = lo.max(f.0 - 1.0);
                    hi = hi.min(b.0 + 1.0);
                }
            }
            if lo > hi {
                return Ok(KernelValue { value: -backward_term(p1, p2), imag_residual: 0.0, est_error: 0.0 });
            }
            (g_kappa_inv(kappa, lo).floor() as i64 - 1, g_kappa_inv(kappa, hi).ceil() as i64 + 1)
        }
    };
    let dec = decompose_clusters_with(xi, kappa, k_lo, k_hi, spec.slot_choice)?;
    let rt = t.sqrt();
    let (n0, nmax) = (32, 128);
    let zmax = gh_max_node(nmax);
    let mut total = C64::new(0.0, 0.0);
    let mut err = 0.0;
    for cl in dec.clusters() {
        if cl.size == 0 {
            continue;
        }
        let w = heat_kernel_re(s, x, cl.center);
        if w == 0.0 {
            continue;
        }
        let term = ClusterTerm::new(xi, cl, (y - cl.center).abs() + rt * zmax, spec.trunc.q_max)?;
        let coef = term.coefficients(s, x, spec.tol.series_tol)?;
        let (e, ee, _) = gh_expect(n0, nmax, spec.tol.quad_tol, |z| Ok((term.psi_with(&coef, C64::new(y, rt * z))?, 0.0)))?;
        total += w * e;
        err += w * ee;
    }
    total -= backward_term(p1, p2);
    Ok(KernelValue::from_complex(total, err))
}
