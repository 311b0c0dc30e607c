//! Named property suites run by `dyson verify`.

use crate::config::{check_conditions, decompose_clusters, m_alpha, m_signed, Configuration, SlotChoice};
use crate::kernels::{
    kernel_lattice_ell_sum, kernel_lattice_theta, phi_entire, psi_cluster, KernelFamily, KernelSpec, SpaceTimePoint,
};
use crate::mcsim::{estimate_density, estimate_two_point, simulate, uniform_edges, SimPlan};
use crate::mhermite::MultiHermiteBasis;
use crate::quad;
use crate::specfun::{heat_kernel_re, theta3};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;

pub const SUITES: [&str; 8] = ["biorth", "det-lemma", "intertwine", "forms-agree", "theta", "cluster", "mc-n2", "conditions"];

/// One assertion: `passed` iff `value` is below `threshold` (or the stated relation holds).
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    fn below(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), passed: value.is_finite() && value < threshold, value, threshold }
    }

    fn holds(name: impl Into<String>, ok: bool, value: f64) -> Self {
        Check { name: name.into(), passed: ok, value, threshold: f64::NAN }
    }

    fn failed(name: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Check { name: format!("{} ({err})", name.into()), passed: false, value: f64::NAN, threshold: f64::NAN }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Options for the Monte Carlo suite.
#[derive(Debug, Clone, Copy)]
pub struct McOptions {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions { n_paths: 20_000, dt: 1e-3, seed: 2024 }
    }
}

pub fn run_suite(name: &str, mc: McOptions) -> Option<SuiteReport> {
    let checks = match name {
        "biorth" => biorth(),
        "det-lemma" => det_lemma(),
        "intertwine" => intertwine(),
        "forms-agree" => forms_agree(),
        "theta" => theta(),
        "cluster" => cluster(),
        "mc-n2" => mc_n2(mc),
        "conditions" => conditions(),
        _ => return None,
    };
    Some(SuiteReport { suite: name.to_string(), checks })
}

/// Random simple configuration of n points in [lo, hi] with gaps ≥ 0.1.
pub fn random_simple(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    loop {
        let mut xs: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
        xs.sort_by(f64::total_cmp);
        if xs.windows(2).all(|w| w[1] - w[0] >= 0.1) {
            return xs;
        }
    }
}

fn biorth() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut configs: Vec<Configuration> =
        (0..3).map(|_| Configuration::from_positions(&random_simple(&mut rng, 4, -2.0, 2.0)).unwrap()).collect();
    configs.push(Configuration::parse("points:0^2,1").unwrap());
    let mut out = Vec::new();
    for xi in configs {
        let name = format!("biorthonormality {xi}");
        let res = MultiHermiteBasis::new(&xi).and_then(|b| {
            let mut worst = 0.0f64;
            for j in 0..b.n() {
                for k in 0..b.n() {
                    let d = if j == k { 1.0 } else { 0.0 };
                    worst = worst.max((b.biorth_pair(j, k)? - d).abs());
                }
            }
            Ok(worst)
        });
        out.push(match res {
            Ok(w) => Check::below(name, w, 1e-8),
            Err(e) => Check::failed(name, e),
        });
    }
    out
}

fn det_lemma() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for draw in 0..20 {
        let n = 1 + draw % 4;
        let xi = Configuration::from_positions(&random_simple(&mut rng, n, -2.0, 2.0)).unwrap();
        let ys = random_simple(&mut rng, n, -2.5, 2.5);
        match MultiHermiteBasis::new(&xi).and_then(|b| b.det_identity_check(&ys)) {
            Ok((l, r)) => worst = worst.max((l - r).abs() / l.abs().max(1e-300)),
            Err(e) => return vec![Check::failed("determinant lemma", e)],
        }
    }
    let mut out = vec![Check::below("determinant lemma, 20 simple draws (relative)", worst, 1e-8)];
    let xi = Configuration::parse("points:-0.4^2,0.7").unwrap();
    let conf = MultiHermiteBasis::new(&xi).and_then(|b| b.det_identity_check(&[-1.0, 0.1, 1.2]));
    out.push(match conf {
        Ok((l, r)) => Check::below("determinant lemma, double point (relative)", (l - r).abs() / l.abs(), 1e-6),
        Err(e) => Check::failed("determinant lemma, double point", e),
    });
    out
}

fn intertwine() -> Vec<Check> {
    let (t1, t2) = (0.3, 0.9);
    let dt = t2 - t1;
    let mut out = Vec::new();
    for lit in ["points:-0.8,0.3,1.1,1.9", "points:0^2,1", "points:-0.5,0.5"] {
        let xi = Configuration::parse(lit).unwrap();
        let b = match MultiHermiteBasis::new(&xi) {
            Ok(b) => b,
            Err(e) => {
                out.push(Check::failed(lit, e));
                continue;
            }
        };
        let res: Result<(f64, f64, f64), crate::mhermite::MhError> = (|| {
            let (mut r1, mut r2, mut r3) = (0.0f64, 0.0f64, 0.0f64);
            let n = b.n();
            for j in 0..n {
                for &x in &[-0.7, 0.4] {
                    let (v, _) = quad::adaptive_re(
                        |x2| b.phi_minus(t2, x2, j).unwrap_or(f64::NAN) * heat_kernel_re(dt, x2, x),
                        x - 12.0,
                        x + 12.0,
                        8,
                        1e-12,
                        1e-12,
                    )?;
                    r1 = r1.max((v - b.phi_minus(t1, x, j)?).abs());
                    let (v, _) = quad::adaptive_re(
                        |x1| heat_kernel_re(dt, x, x1) * b.phi_plus(t1, x1, j).unwrap_or(f64::NAN),
                        -12.0,
                        12.0,
                        16,
                        1e-12,
                        1e-12,
                    )?;
                    r2 = r2.max((v - b.phi_plus(t2, x, j)?).abs());
                }
                for k in 0..n {
                    // inner x2 integral by Gauss-Hermite (polynomial times Gaussian)
                    let (v, _) = quad::adaptive_re(
                        |x1| {
                            let inner = quad::gaussian_expectation(32, |z| {
                                C64::new(b.phi_minus(t2, x1 + dt.sqrt() * z, j).unwrap_or(f64::NAN), 0.0)
                            });
                            inner.re * b.phi_plus(t1, x1, k).unwrap_or(f64::NAN)
                        },
                        -12.0,
                        12.0,
                        16,
                        1e-12,
                        1e-12,
                    )?;
                    let d = if j == k { 1.0 } else { 0.0 };
                    r3 = r3.max((v - d).abs());
                }
            }
            Ok((r1, r2, r3))
        })();
        match res {
            Ok((r1, r2, r3)) => {
                out.push(Check::below(format!("φ⁻ intertwining {lit}"), r1, 1e-7));
                out.push(Check::below(format!("φ⁺ intertwining {lit}"), r2, 1e-7));
                out.push(Check::below(format!("two-time biorthonormality {lit}"), r3, 1e-7));
            }
            Err(e) => out.push(Check::failed(lit, e)),
        }
    }
    out
}

/// The 25 (s, x, t, y) tuples used for the contour/residue comparison.
pub fn form_grid() -> Vec<(f64, f64, f64, f64)> {
    let st = [(0.25, 0.25), (0.5, 1.0), (1.0, 0.5), (0.1, 0.7), (0.8, 0.8)];
    let xy = [(-1.0, 0.5), (0.0, 0.0), (0.6, -0.9), (1.4, 1.1), (-0.3, 2.0)];
    st.iter().flat_map(|&(s, t)| xy.iter().map(move |&(x, y)| (s, x, t, y))).collect()
}

fn forms_agree() -> Vec<Check> {
    let mut out = Vec::new();
    for lit in ["points:0", "points:-0.5,0.5", "points:-1,0.2,1.3", "points:-1.5,-0.4,0.6,1.2"] {
        let c = KernelSpec::new(KernelFamily::FiniteContour, Configuration::parse(lit).unwrap());
        let r = KernelSpec::new(KernelFamily::FiniteResidue, Configuration::parse(lit).unwrap());
        let mut worst = 0.0f64;
        let mut err = None;
        for (s, x, t, y) in form_grid() {
            let (p1, p2) = (SpaceTimePoint::new(s, x), SpaceTimePoint::new(t, y));
            match (c.evaluate(p1, p2), r.evaluate(p1, p2)) {
                (Ok(a), Ok(b)) => worst = worst.max((a.value - b.value).abs()),
                (Err(e), _) | (_, Err(e)) => err = Some(e),
            }
        }
        out.push(match err {
            Some(e) => Check::failed(format!("contour vs residue {lit}"), e),
            None => Check::below(format!("contour vs residue {lit}"), worst, 1e-8),
        });
    }
    out
}

/// Σ_ℓ p(s,x|ℓ) I(t,y,ℓ) − 1(s>t)p(s−t,x|y), I = ∫₀¹ e^{π²u²t/2} cos(πu(y−ℓ)) du.
pub fn lattice_direct_sum(s: f64, x: f64, t: f64, y: f64) -> f64 {
    let w = (2.0 * s * 80.0).sqrt();
    let mut acc = 0.0;
    for l in (x - w).floor() as i64..=(x + w).ceil() as i64 {
        let lf = l as f64;
        let (i, _) = quad::adaptive_re(
            |u| (PI * PI * u * u * t / 2.0).exp() * (PI * u * (y - lf)).cos(),
            0.0,
            1.0,
            2 + (y - lf).abs() as usize,
            1e-15,
            1e-15,
        )
        .unwrap_or((f64::NAN, 0.0));
        acc += heat_kernel_re(s, x, lf) * i;
    }
    if s > t {
        acc -= heat_kernel_re(s - t, x, y);
    }
    acc
}

fn theta() -> Vec<Check> {
    let mut out = Vec::new();
    // modular transformation ϑ₃(v,τ) = (−iτ)^{−1/2} e^{−πiv²/τ} ϑ₃(v/τ, −1/τ)
    let mut worst = 0.0f64;
    for (v, tau) in [(C64::new(0.3, 0.1), C64::new(0.2, 0.7)), (C64::new(-0.6, 0.4), C64::new(0.0, 1.9))] {
        let i = C64::new(0.0, 1.0);
        let a = theta3(v, tau, 1e-16);
        let b = theta3(v / tau, -1.0 / tau, 1e-16);
        if let (Ok(a), Ok(b)) = (a, b) {
            let rhs = (-i * tau).powf(-0.5) * (-i * PI * v * v / tau).exp() * b;
            worst = worst.max((a - rhs).norm() / a.norm());
        } else {
            worst = f64::NAN;
        }
    }
    out.push(Check::below("theta3 modular transformation", worst, 1e-12));
    let mut per = 0.0f64;
    let mut direct = 0.0f64;
    let mut ell = 0.0f64;
    for &s in &[0.1, 0.5, 1.0] {
        for &t in &[0.1, 0.5, 1.0] {
            for &(x, y) in &[(-1.5, 0.5), (0.3, -1.2), (1.9, 1.0)] {
                let k = |a: f64, b: f64| kernel_lattice_theta(SpaceTimePoint::new(s, a), SpaceTimePoint::new(t, b), 1e-12).map(|v| v.value);
                match (k(x, y), k(x + 3.0, y + 3.0)) {
                    (Ok(a), Ok(b)) => {
                        per = per.max((a - b).abs());
                        direct = direct.max((a - lattice_direct_sum(s, x, t, y)).abs());
                        if let Ok(e) = kernel_lattice_ell_sum(SpaceTimePoint::new(s, x), SpaceTimePoint::new(t, y), 200, 1e-12) {
                            ell = ell.max((a - e.value).abs());
                        } else {
                            ell = f64::NAN;
                        }
                    }
                    _ => per = f64::NAN,
                }
            }
        }
    }
    out.push(Check::below("lattice periodicity", per, 1e-10));
    out.push(Check::below("closed form vs direct lattice sum", direct, 1e-8));
    out.push(Check::below("closed form vs ℓ-sum", ell, 1e-8));
    out
}

fn cluster() -> Vec<Check> {
    let mut out = Vec::new();
    let xi = Configuration::lattice().restrict(-20.0, 20.0).unwrap();
    let ident = (|| -> Result<f64, crate::kernels::KernelError> {
        let dec = decompose_clusters(&xi, 0.9, -4, 4)?;
        let mut worst = 0.0f64;
        for k in -3..=3 {
            let cl = dec.cluster(k).expect("cluster in range");
            for (t, x, z) in [(0.5, 0.3, C64::new(0.4, 0.3)), (1.0, -0.8, C64::new(-1.2, -0.8))] {
                let mut lhs = C64::new(0.0, 0.0);
                for &(xp, m) in &cl.members {
                    lhs += m as f64 * (-(xp - x) * (xp - x) / (2.0 * t)).exp() * phi_entire(&xi, xp, z, 1.0)?.0;
                }
                let rhs = (-(cl.center - x).powi(2) / (2.0 * t)).exp() * psi_cluster(t, &xi, z, x, k, &dec, 1e-15)?;
                worst = worst.max((lhs - rhs).norm());
            }
        }
        Ok(worst)
    })();
    out.push(match ident {
        Ok(w) => Check::below("cluster identity on a lattice window", w, 1e-8),
        Err(e) => Check::failed("cluster identity", e),
    });
    let mut c1 = KernelSpec::new(KernelFamily::Cluster, Configuration::lattice());
    let phi = KernelSpec::new(KernelFamily::InfiniteLimit, Configuration::lattice());
    let mut c2 = c1.clone();
    c2.cluster_kappa = 0.75;
    c2.slot_choice = SlotChoice::Last;
    c1.cluster_kappa = 0.9;
    let (mut d_phi, mut d_dec) = (0.0f64, 0.0f64);
    let mut err = None;
    for (s, x, t, y) in [(0.5, 0.2, 0.5, -0.1), (0.3, -0.6, 0.8, 0.5), (1.0, 0.9, 0.4, 0.0)] {
        let (p1, p2) = (SpaceTimePoint::new(s, x), SpaceTimePoint::new(t, y));
        match (c1.evaluate(p1, p2), c2.evaluate(p1, p2), phi.evaluate(p1, p2)) {
            (Ok(a), Ok(b), Ok(c)) => {
                d_phi = d_phi.max((a.value - c.value).abs());
                d_dec = d_dec.max((a.value - b.value).abs());
            }
            (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => err = Some(e),
        }
    }
    match err {
        Some(e) => out.push(Check::failed("cluster kernel", e)),
        None => {
            out.push(Check::below("cluster kernel vs Φ-form kernel", d_phi, 1e-7));
            out.push(Check::below("two admissible decompositions", d_dec, 1e-7));
        }
    }
    out
}

/// Fraction of bins where |estimate − oracle| ≤ 3 SE.
pub fn within_3se(est: &[f64], se: &[f64], oracle: &[f64]) -> f64 {
    let ok = est.iter().zip(se).zip(oracle).filter(|((e, s), o)| (*e - *o).abs() <= 3.0 * *s).count();
    ok as f64 / est.len() as f64
}

/// Bin average of f over [a, b] × [c, d] by a tensor Gauss-Legendre rule.
pub fn bin_average_2d(f: impl Fn(f64, f64) -> f64, a: f64, b: f64, c: f64, d: f64, n: usize) -> f64 {
    let rule = quad::gauss_legendre(n);
    let mut acc = 0.0;
    for (&u, &wu) in rule.nodes.iter().zip(&rule.weights) {
        for (&v, &wv) in rule.nodes.iter().zip(&rule.weights) {
            let x = (a + b) / 2.0 + (b - a) / 2.0 * u;
            let y = (c + d) / 2.0 + (d - c) / 2.0 * v;
            acc += wu * wv * f(x, y);
        }
    }
    acc / 4.0
}

pub fn bin_average(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let rule = quad::gauss_legendre(n);
    rule.nodes.iter().zip(&rule.weights).map(|(&u, &w)| w * f((a + b) / 2.0 + (b - a) / 2.0 * u)).sum::<f64>() / 2.0
}

fn mc_n2(mc: McOptions) -> Vec<Check> {
    let xi = Configuration::parse("points:-0.5,0.5").unwrap();
    let t = 0.5;
    let plan = SimPlan { dt: mc.dt, ..SimPlan::new(xi.clone(), vec![t], mc.n_paths, mc.seed) };
    let snaps = match simulate(&plan) {
        Ok(s) => s,
        Err(e) => return vec![Check::failed("simulation", e)],
    };
    let spec = KernelSpec::new(KernelFamily::FiniteContour, xi);
    let k = |x: f64, y: f64| spec.evaluate(SpaceTimePoint::new(t, x), SpaceTimePoint::new(t, y)).map(|v| v.value).unwrap_or(f64::NAN);
    let edges = uniform_edges(-2.5, 2.5, 20);
    let mut out = Vec::new();
    match estimate_density(&snaps, t, &edges) {
        Ok(f) => {
            let oracle: Vec<f64> = (0..f.bins()).map(|b| bin_average(|x| k(x, x), edges[b], edges[b + 1], 6)).collect();
            let frac = within_3se(&f.density, &f.std_error, &oracle);
            out.push(Check::holds("ρ₁ within 3 SE in ≥ 95% of bins", frac >= 0.95, frac));
        }
        Err(e) => out.push(Check::failed("ρ₁", e)),
    }
    let e2 = uniform_edges(-2.0, 2.0, 8);
    match estimate_two_point(&snaps, t, &e2, &e2) {
        Ok(f) => {
            let mut oracle = Vec::new();
            for u in 0..8 {
                for v in 0..8 {
                    oracle.push(bin_average_2d(|x, y| k(x, x) * k(y, y) - k(x, y) * k(y, x), e2[u], e2[u + 1], e2[v], e2[v + 1], 6));
                }
            }
            let frac = within_3se(&f.density, &f.std_error, &oracle);
            out.push(Check::holds("ρ₂ within 3 SE in ≥ 95% of cells", frac >= 0.95, frac));
        }
        Err(e) => out.push(Check::failed("ρ₂", e)),
    }
    out
}

fn conditions() -> Vec<Check> {
    let mut out = Vec::new();
    let eta = Configuration::eta(0.8).unwrap();
    let mut worst = 0.0f64;
    for l in [1.0, 7.5, 100.0, 1e3, 1e4] {
        worst = worst.max(m_signed(&eta, l).map(f64::abs).unwrap_or(f64::NAN));
    }
    out.push(Check::holds("M(η^κ, L) = 0", worst == 0.0, worst));
    let vals: Vec<f64> = [1e2, 1e3, 1e4, 1e5].iter().map(|&l| m_alpha(&eta, l, 1.5).unwrap_or(f64::NAN)).collect();
    let inc: Vec<f64> = vals.windows(2).map(|w| w[1] - w[0]).collect();
    let bounded = inc.windows(2).all(|w| w[1] < w[0]) && vals.iter().all(|v| v.is_finite());
    out.push(Check::holds("M_α(η^κ, L) bounded in L (κ=0.8, α=1.5)", bounded, *vals.last().unwrap_or(&f64::NAN)));
    match check_conditions(&eta, 1e4, 1.5, 0.8) {
        Ok(r) => out.push(Check::holds("η^κ satisfies the checked conditions", r.c1_holds() && r.c2i_holds() && r.c3_holds(), 0.0)),
        Err(e) => out.push(Check::failed("condition report", e)),
    }
    out
}
