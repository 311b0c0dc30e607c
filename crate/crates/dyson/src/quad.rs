//! Quadrature rules: Gauss-Legendre, probabilists' Gauss-Hermite,
//! adaptive Gauss-Kronrod and the trapezoid rule on circles.

use num_complex::Complex64 as C64;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("quadrature did not converge: value {value}, error estimate {error:e} after {evals} evaluations")]
    NotConverged { value: f64, error: f64, evals: usize },
    #[error("invalid quadrature parameter: {0}")]
    InvalidParameter(String),
}

/// Nodes and weights of a fixed rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

type Cache = Mutex<HashMap<usize, Arc<Rule>>>;

fn cached(cache: &'static OnceLock<Cache>, n: usize, build: fn(usize) -> Rule) -> Arc<Rule> {
    let map = cache.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = map.lock().expect("rule cache poisoned").get(&n) {
        return r.clone();
    }
    let rule = Arc::new(build(n));
    map.lock()
        .expect("rule cache poisoned")
        .entry(n)
        .or_insert(rule)
        .clone()
}

/// Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Arc<Rule> {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    cached(&CACHE, n.max(1), build_legendre)
}

fn build_legendre(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            x = 0.0;
            dp = 1.0;
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n == 1 {
        weights[0] = 2.0;
    }
    Rule { nodes, weights }
}

/// Gauss-Hermite rule for E[f(Z)], Z ~ N(0,1): weights sum to one.
pub fn gauss_hermite(n: usize) -> Arc<Rule> {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    cached(&CACHE, n.max(1), build_hermite)
}

fn build_hermite(n: usize) -> Rule {
    // Newton iteration on orthonormal Hermite functions, weight e^{-x^2}.
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let mut x_phys = vec![0.0; n];
    let mut w_phys = vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x_phys[0],
            3 => 1.91 * z - 0.91 * x_phys[1],
            _ => 2.0 * z - x_phys[i - 2],
        };
        let mut pp = 1.0;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x_phys[i] = z;
        w_phys[i] = 2.0 / (pp * pp);
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..m {
        let x = x_phys[i] * std::f64::consts::SQRT_2;
        let w = w_phys[i] / PI.sqrt();
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[m - 1] = 0.0;
    }
    nodes.reverse();
    weights.reverse();
    Rule { nodes, weights }
}

/// E[f(Z)] for Z ~ N(0,1) with an n-point rule.
pub fn gaussian_expectation<F: FnMut(f64) -> C64>(n: usize, mut f: F) -> C64 {
    let r = gauss_hermite(n);
    r.nodes
        .iter()
        .zip(&r.weights)
        .map(|(&z, &w)| f(z) * w)
        .sum()
}

/// Fixed Gauss-Legendre integral over [a, b] split into `panels` equal pieces.
pub fn legendre_panels<F: FnMut(f64) -> C64>(a: f64, b: f64, panels: usize, n: usize, mut f: F) -> C64 {
    let r = gauss_legendre(n);
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut acc = C64::new(0.0, 0.0);
    for p in 0..panels {
        let lo = a + h * p as f64;
        let mid = lo + 0.5 * h;
        for (&x, &w) in r.nodes.iter().zip(&r.weights) {
            acc += f(mid + 0.5 * h * x) * (0.5 * h * w);
        }
    }
    acc
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> C64>(f: &mut F, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += s * WGK[j];
        if j % 2 == 1 {
            gauss += s * WG[j / 2];
        }
    }
    let err = ((kron - gauss) * h).norm();
    (kron * h, err)
}

struct Piece {
    a: f64,
    b: f64,
    val: C64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: C64,
    pub error: f64,
    pub evals: usize,
}

/// Globally adaptive Gauss-Kronrod (7/15) integration of a complex integrand.
///
/// `initial` equal pieces are refined by bisection of the worst piece until
/// the summed error estimate is below max(abs_tol, rel_tol·|I|).
pub fn adaptive<F: FnMut(f64) -> C64>(
    mut f: F,
    a: f64,
    b: f64,
    initial: usize,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral, QuadError> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(QuadError::InvalidParameter("infinite integration limit".into()));
    }
    if a == b {
        return Ok(Integral { value: C64::new(0.0, 0.0), error: 0.0, evals: 0 });
    }
    let initial = initial.max(1);
    let mut heap = BinaryHeap::new();
    let h = (b - a) / initial as f64;
    let mut total = C64::new(0.0, 0.0);
    let mut err = 0.0;
    let mut evals = 0;
    for i in 0..initial {
        let lo = a + h * i as f64;
        let hi = if i + 1 == initial { b } else { lo + h };
        let (v, e) = gk15(&mut f, lo, hi);
        evals += 15;
        total += v;
        err += e;
        heap.push(Piece { a: lo, b: hi, val: v, err: e });
    }
    let max_pieces = 4000;
    while err > abs_tol.max(rel_tol * total.norm()) {
        if heap.len() >= max_pieces {
            return Err(QuadError::NotConverged { value: total.re, error: err, evals });
        }
        let p = heap.pop().expect("nonempty heap");
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            // cannot split further; accept what we have
            heap.push(p);
            break;
        }
        let (v1, e1) = gk15(&mut f, p.a, m);
        let (v2, e2) = gk15(&mut f, m, p.b);
        evals += 30;
        total += v1 + v2 - p.val;
        err += e1 + e2 - p.err;
        heap.push(Piece { a: p.a, b: m, val: v1, err: e1 });
        heap.push(Piece { a: m, b: p.b, val: v2, err: e2 });
    }
    // recompute the sums to shed accumulated cancellation
    let value = heap.iter().map(|p| p.val).sum();
    let error = heap.iter().map(|p| p.err).sum();
    Ok(Integral { value, error, evals })
}

/// Real-valued convenience wrapper around [`adaptive`].
pub fn adaptive_re<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    initial: usize,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<(f64, f64), QuadError> {
    let r = adaptive(|x| C64::new(f(x), 0.0), a, b, initial, abs_tol, rel_tol)?;
    Ok((r.value.re, r.error))
}

/// (1/2πi)∮ f(z) dz over the circle |z − center| = radius by the n-point trapezoid rule.
pub fn circle_trapezoid<F: FnMut(C64) -> C64>(center: C64, radius: f64, n: usize, mut f: F) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..n {
        let th = 2.0 * PI * (k as f64 + 0.5) / n as f64;
        let dz = C64::from_polar(radius, th);
        acc += f(center + dz) * dz;
    }
    acc / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        for n in [1usize, 2, 5, 16, 33] {
            let r = gauss_legendre(n);
            let s: f64 = r.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-14, "n={n}");
            // exact for degree 2n-1
            let d = 2 * n - 1;
            let v: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(d as i32 - 1)).sum();
            let exact = if (d - 1) % 2 == 0 { 2.0 / d as f64 } else { 0.0 };
            assert!((v - exact).abs() < 1e-13, "n={n} v={v} exact={exact}");
        }
    }

    #[test]
    fn hermite_moments() {
        for n in [1usize, 4, 20, 64, 150] {
            let r = gauss_hermite(n);
            let s: f64 = r.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-13, "n={n} sum={s}");
            if n >= 3 {
                let m4: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(4)).sum();
                assert!((m4 - 3.0).abs() < 1e-12, "n={n} m4={m4}");
            }
        }
        // E[cos(aZ)] = e^{-a²/2}
        let v = gaussian_expectation(64, |z| C64::new((3.0 * z).cos(), 0.0));
        assert!((v.re - (-4.5f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn adaptive_gaussian_peak() {
        let r = adaptive_re(|x| (-(x - 0.3) * (x - 0.3) / 2e-4).exp(), -5.0, 5.0, 4, 1e-14, 1e-13).unwrap();
        let exact = (2.0 * PI * 1e-4).sqrt();
        assert!((r.0 - exact).abs() < 1e-12, "{} vs {exact}", r.0);
    }

    #[test]
    fn circle_residue() {
        let v = circle_trapezoid(C64::new(0.0, 0.0), 1.0, 32, |z| z.exp() / (z - 0.2));
        assert!((v - C64::new(0.2f64.exp(), 0.0)).norm() < 1e-14);
    }
}
