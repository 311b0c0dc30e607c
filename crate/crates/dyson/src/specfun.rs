//! Heat kernel, Hermite polynomials, complete symmetric and hook Schur
//! functions, the theta function ϑ₃ and the (extended) sine kernel.

use crate::quad;
use num_complex::Complex64 as C64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("overflow: {0}")]
    Overflow(String),
}

/// p(t, y|x) = e^{−(y−x)²/2t}/√(2πt), also for complex y and x.
pub fn heat_kernel(t: f64, y: C64, x: C64) -> Result<C64, SpecError> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(SpecError::InvalidParameter(format!("heat kernel needs t > 0, got {t}")));
    }
    let d = y - x;
    let e = -d * d / (2.0 * t);
    if e.re > 700.0 {
        return Err(SpecError::Overflow(format!("heat kernel exponent {}", e.re)));
    }
    Ok(e.exp() / (2.0 * PI * t).sqrt())
}

/// Real heat kernel without parameter checks; t must be positive.
#[inline]
pub fn heat_kernel_re(t: f64, y: f64, x: f64) -> f64 {
    let d = y - x;
    (-d * d / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// Physicists' Hermite polynomial H_j(x).
///
/// Explicit series up to degree 20, three-term recurrence beyond.
pub fn hermite(j: usize, x: f64) -> f64 {
    if j <= 20 {
        let mut fact = [1.0f64; 21];
        for i in 1..=20 {
            fact[i] = fact[i - 1] * i as f64;
        }
        let mut s = 0.0;
        for k in 0..=j / 2 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * (2.0 * x).powi((j - 2 * k) as i32) / (fact[k] * fact[j - 2 * k]);
        }
        return fact[j] * s;
    }
    let (mut h0, mut h1) = (1.0, 2.0 * x);
    for n in 1..j {
        let h2 = 2.0 * x * h1 - 2.0 * n as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// The sequence H_j(x)·c^j/j! for j = 0..=n, by the scaled recurrence
/// (no factorial overflow for large j).
pub fn hermite_scaled(x: f64, c: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n == 0 {
        return out;
    }
    out.push(2.0 * x * c);
    for j in 1..n {
        let next = (2.0 * x * c * out[j] - 2.0 * c * c * out[j - 1]) / (j + 1) as f64;
        out.push(next);
    }
    out
}

/// Variables of a (truncated) symmetric function together with the
/// summability diagnostics Σx and Σx².
#[derive(Debug, Clone)]
pub struct SymmetricFnInput {
    pub variables: Vec<C64>,
    pub sum: C64,
    pub sum_sq: C64,
}

impl SymmetricFnInput {
    pub fn new(variables: Vec<C64>) -> Self {
        let sum = variables.iter().sum();
        let sum_sq = variables.iter().map(|x| x * x).sum();
        SymmetricFnInput { variables, sum, sum_sq }
    }

    pub fn from_real(vars: &[f64]) -> Self {
        Self::new(vars.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn truncation_length(&self) -> usize {
        self.variables.len()
    }
}

/// Power sums p_1..=p_kmax.
pub fn power_sums(vars: &[C64], kmax: usize) -> Vec<C64> {
    let mut p = vec![C64::new(0.0, 0.0); kmax + 1];
    for &x in vars {
        let mut xp = x;
        for pk in p.iter_mut().skip(1) {
            *pk += xp;
            xp *= x;
        }
    }
    p
}

/// h_0..=h_rmax from power sums p (p[0] ignored) via r·h_r = Σ p_i h_{r−i}.
pub fn complete_from_power_sums(p: &[C64], rmax: usize) -> Vec<C64> {
    let mut h = vec![C64::new(0.0, 0.0); rmax + 1];
    h[0] = C64::new(1.0, 0.0);
    for r in 1..=rmax {
        let mut acc = C64::new(0.0, 0.0);
        for i in 1..=r.min(p.len().saturating_sub(1)) {
            acc += p[i] * h[r - i];
        }
        h[r] = acc / r as f64;
    }
    h
}

/// h_0..=h_rmax of the input variables.
pub fn complete_symmetric_all(vars: &SymmetricFnInput, rmax: usize) -> Vec<C64> {
    let p = power_sums(&vars.variables, rmax);
    complete_from_power_sums(&p, rmax)
}

/// The r-th complete symmetric function h_r.
pub fn complete_symmetric(r: usize, vars: &SymmetricFnInput) -> C64 {
    complete_symmetric_all(vars, r)[r]
}

/// Upper bound exp{|Σx|z + Σ x²z²/(1−|xz|)} for Σ_r |h_r| z^r, as a diagnostic.
pub fn complete_series_bound(vars: &SymmetricFnInput, z: f64) -> Option<f64> {
    let mut quad_term = 0.0;
    for x in &vars.variables {
        let q = x.norm() * z;
        if q >= 1.0 {
            return None;
        }
        quad_term += x.norm_sqr() * z * z / (1.0 - q);
    }
    Some((vars.sum.norm() * z + quad_term).exp())
}

/// Hook Schur function s_{(k|l)} (partition (k+1, 1^l)) from complete
/// symmetric values h (h[0] = 1), via the Jacobi-Trudi determinant.
pub fn schur_hook_from_h(k: usize, l: usize, h: &[f64], nvars: usize) -> f64 {
    if l + 1 > nvars {
        return 0.0;
    }
    let n = l + 1;
    let lambda = |i: usize| if i == 0 { k + 1 } else { 1 };
    let hv = |idx: i64| -> f64 {
        if idx < 0 {
            0.0
        } else {
            h.get(idx as usize).copied().unwrap_or(f64::NAN)
        }
    };
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = hv(lambda(i) as i64 - i as i64 + j as i64);
        }
    }
    small_det(&mut m, n)
}

/// s_{(k|l)}(vars), with no singularity for coincident variables.
/// Zero when the partition length l + 1 exceeds the number of variables.
pub fn schur_frobenius(k: usize, l: usize, vars: &[f64]) -> f64 {
    if l + 1 > vars.len() {
        return 0.0;
    }
    let input = SymmetricFnInput::from_real(vars);
    let h: Vec<f64> = complete_symmetric_all(&input, k + l + 1).iter().map(|c| c.re).collect();
    schur_hook_from_h(k, l, &h, vars.len())
}

/// Exact s_{(k|l)} for integer variables.
pub fn schur_frobenius_int(k: usize, l: usize, vars: &[i64]) -> i128 {
    if l + 1 > vars.len() {
        return 0;
    }
    let rmax = k + l + 1;
    // h_r by adding one variable at a time: h_r(x, y) = h_r(x) + y·h_{r−1}(x, y)
    let mut h = vec![0i128; rmax + 1];
    h[0] = 1;
    for &v in vars {
        for r in 1..=rmax {
            h[r] += v as i128 * h[r - 1];
        }
    }
    let n = l + 1;
    let lambda = |i: usize| if i == 0 { k + 1 } else { 1 };
    let mut m = vec![0i128; n * n];
    for i in 0..n {
        for j in 0..n {
            let idx = lambda(i) as i64 - i as i64 + j as i64;
            m[i * n + j] = if idx < 0 { 0 } else { h[idx as usize] };
        }
    }
    bareiss_det(&mut m, n)
}

fn bareiss_det(m: &mut [i128], n: usize) -> i128 {
    let mut sign = 1i128;
    let mut prev = 1i128;
    for p in 0..n {
        if m[p * n + p] == 0 {
            let Some(r) = (p + 1..n).find(|&r| m[r * n + p] != 0) else {
                return 0;
            };
            for c in 0..n {
                m.swap(p * n + c, r * n + c);
            }
            sign = -sign;
        }
        for i in p + 1..n {
            for j in p + 1..n {
                m[i * n + j] = (m[i * n + j] * m[p * n + p] - m[i * n + p] * m[p * n + j]) / prev;
            }
        }
        prev = m[p * n + p];
    }
    sign * m[(n - 1) * n + (n - 1)]
}

/// Determinant of a small dense row-major matrix by partial pivoting.
pub fn small_det(m: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0;
    for p in 0..n {
        let (piv, _) = (p..n)
            .map(|r| (r, m[r * n + p].abs()))
            .fold((p, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        if m[piv * n + p] == 0.0 {
            return 0.0;
        }
        if piv != p {
            for c in 0..n {
                m.swap(p * n + c, piv * n + c);
            }
            det = -det;
        }
        let d = m[p * n + p];
        det *= d;
        for r in p + 1..n {
            let f = m[r * n + p] / d;
            if f != 0.0 {
                for c in p..n {
                    m[r * n + c] -= f * m[p * n + c];
                }
            }
        }
    }
    det
}

/// ϑ₃(v, τ) = Σ_ℓ e^{2πivℓ + πiτℓ²}, relative truncation tolerance `tol`.
pub fn theta3(v: C64, tau: C64, tol: f64) -> Result<C64, SpecError> {
    if !(tau.im > 0.0) || !tau.re.is_finite() || !v.re.is_finite() || !v.im.is_finite() {
        return Err(SpecError::InvalidParameter(format!("theta3 needs Im τ > 0, got τ = {tau}")));
    }
    let tol = tol.clamp(1e-300, 0.5);
    // ϑ₃ has period 2 in τ
    let tau = C64::new(tau.re - 2.0 * ((tau.re + 1.0) / 2.0).floor(), tau.im);
    let (sum, log_scale) = if tau.im < 1.0 && tau.norm() < 1.0 {
        let tp = -1.0 / tau;
        let vp = v / tau;
        let (s, sc) = theta3_direct(vp, tp, tol)?;
        let i = C64::new(0.0, 1.0);
        let pre = -i * PI * v * v / tau;
        (s * (i / tau).sqrt() * C64::new(0.0, pre.im).exp(), sc + pre.re)
    } else {
        theta3_direct(v, tau, tol)?
    };
    if log_scale > 700.0 {
        return Err(SpecError::Overflow(format!("theta3 magnitude e^{log_scale}")));
    }
    Ok(sum * log_scale.exp())
}

/// Plain truncated lattice sum; returns (sum·e^{−scale}, scale).
pub fn theta3_direct(v: C64, tau: C64, tol: f64) -> Result<(C64, f64), SpecError> {
    if !(tau.im > 0.0) {
        return Err(SpecError::InvalidParameter(format!("theta3 needs Im τ > 0, got τ = {tau}")));
    }
    let v = C64::new(v.re - v.re.floor(), v.im);
    let center = (-v.im / tau.im).round() as i64;
    let lmax = ((1.0 / tol).ln() / (PI * tau.im)).sqrt().ceil() as i64 + 2;
    let i = C64::new(0.0, 1.0);
    let expo = |l: i64| {
        let lf = l as f64;
        2.0 * PI * i * v * lf + PI * i * tau * lf * lf
    };
    let scale = expo(center).re;
    let mut s = C64::new(0.0, 0.0);
    for l in (center - lmax)..=(center + lmax) {
        s += (expo(l) - scale).exp();
    }
    Ok((s, scale))
}

/// K_sin(r) = sin(πr)/(πr).
pub fn sine_kernel(r: f64) -> f64 {
    let x = PI * r;
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Extended sine kernel 𝐊_sin(t−s, y−x) by its three-branch formula.
pub fn extended_sine(dt: f64, dr: f64) -> f64 {
    if dt == 0.0 {
        return sine_kernel(dr);
    }
    let f = |u: f64| (PI * PI * u * u * dt / 2.0).exp() * (PI * u * dr).cos();
    let pieces = 1 + (dr.abs() / 2.0).ceil() as usize;
    if dt > 0.0 {
        match quad::adaptive_re(f, 0.0, 1.0, pieces, 1e-15, 1e-14) {
            Ok((v, _)) => v,
            Err(quad::QuadError::NotConverged { value, .. }) => value,
            Err(_) => f64::NAN,
        }
    } else {
        // integrand below 1e-18 beyond u_max
        let u_max = (2.0 * 41.5 / (PI * PI * dt.abs())).sqrt();
        if u_max <= 1.0 {
            return 0.0;
        }
        let pieces = 1 + ((u_max - 1.0) * (1.0 + dr.abs()) / 2.0).ceil() as usize;
        let v = match quad::adaptive_re(f, 1.0, u_max, pieces.min(2000), 1e-16, 1e-14) {
            Ok((v, _)) => v,
            Err(quad::QuadError::NotConverged { value, .. }) => value,
            Err(_) => f64::NAN,
        };
        -v
    }
}
