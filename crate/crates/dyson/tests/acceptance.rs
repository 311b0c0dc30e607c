//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! A criterion that is red for a documented mathematical reason prints FAIL
//! together with the measured evidence; the run only aborts when a criterion
//! fails and that evidence does not hold either.

use std::f64::consts::PI;
use std::time::Instant;

use dyson::config::{check_conditions, decompose_clusters, m_alpha, m_signed, Configuration, SlotChoice};
use dyson::correlations::{generating_fn_truncated, GeneratingFnRequest, Tabulated};
use dyson::kernels::{
    kernel_lattice_theta, psi_cluster, relaxation_gap, KernelFamily, KernelSpec, SpaceTimePoint,
};
use dyson::mcsim::{estimate_density, estimate_two_point, estimate_two_time, simulate, uniform_edges, SimPlan, Snapshots};
use dyson::mhermite::MultiHermiteBasis;
use dyson::specfun::{complete_symmetric_all, hermite, schur_frobenius_int, SymmetricFnInput};
use dyson::verify::{bin_average, bin_average_2d, random_simple};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Res<T> = Result<T, Box<dyn std::error::Error>>;

/// Outcome of one criterion. `explained` is set for a red criterion whose
/// failure is reproduced by an independent computation.
struct Outcome {
    pass: bool,
    detail: String,
    explained: Option<bool>,
}

impl Outcome {
    fn green(pass: bool, detail: String) -> Self {
        Outcome { pass, detail, explained: None }
    }
}

// ---------- independent numerics ----------

fn det(mut m: Vec<f64>, n: usize) -> f64 {
    let mut d = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| m[a * n + c].abs().total_cmp(&m[b * n + c].abs())).unwrap();
        if m[p * n + c] == 0.0 {
            return 0.0;
        }
        if p != c {
            for j in 0..n {
                m.swap(p * n + j, c * n + j);
            }
            d = -d;
        }
        d *= m[c * n + c];
        for r in c + 1..n {
            let f = m[r * n + c] / m[c * n + c];
            for j in c..n {
                m[r * n + j] -= f * m[c * n + j];
            }
        }
    }
    d
}

fn heat(t: f64, y: f64, x: f64) -> f64 {
    (-(y - x) * (y - x) / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// Trapezoid rule on a uniform grid; spectrally accurate for Gaussian-decaying integrands.
fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..n {
        s += f(a + i as f64 * h);
    }
    s * h
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn kval(spec: &KernelSpec, s: f64, x: f64, t: f64, y: f64) -> f64 {
    spec.evaluate(SpaceTimePoint::new(s, x), SpaceTimePoint::new(t, y)).map(|v| v.value).unwrap_or(f64::NAN)
}

fn binom(n: i64, k: i64) -> i128 {
    if k < 0 || k > n || n < 0 {
        return 0;
    }
    let mut r: i128 = 1;
    for i in 0..k as i128 {
        r = r * (n as i128 - i) / (i + 1);
    }
    r
}

// ---------- criteria ----------

fn c1_biorth() -> Res<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let xs = random_simple(&mut rng, 4, -2.0, 2.0);
    let b = MultiHermiteBasis::new(&Configuration::from_positions(&xs)?)?;
    let (mut lib, mut trap) = (0.0f64, 0.0f64);
    for j in 0..4 {
        for k in 0..4 {
            let d = if j == k { 1.0 } else { 0.0 };
            lib = lib.max((b.biorth_pair(j, k)? - d).abs());
            let v = trapezoid(|y| b.h_minus(j, y).unwrap() * b.h_plus(k, y).unwrap(), -16.0, 16.0, 3200);
            trap = trap.max((v - d).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(Outcome::green(
        lib < 1e-8 && trap < 1e-8 && secs < 5.0,
        format!("max dev {lib:.2e} (adaptive), {trap:.2e} (trapezoid oracle), {secs:.2} s"),
    ))
}

fn c2_det_lemma() -> Res<Outcome> {
    let rhs = |b: &MultiHermiteBasis, ys: &[f64]| -> f64 {
        let n = b.n();
        let m: Vec<f64> = (0..n * n).map(|i| b.h_plus(i / n, ys[i % n]).unwrap()).collect();
        let sign = if (n * (n - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
        sign * (2.0 * PI).powf(n as f64 / 2.0) * det(m, n)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for draw in 0..20 {
        let n = 1 + draw % 4;
        let xs = random_simple(&mut rng, n, -2.0, 2.0);
        let ys = random_simple(&mut rng, n, -2.5, 2.5);
        let b = MultiHermiteBasis::new(&Configuration::from_positions(&xs)?)?;
        let g: Vec<f64> = (0..n * n).map(|i| (-(ys[i % n] - xs[i / n]).powi(2) / 2.0).exp()).collect();
        let mut ad = 1.0;
        for j in 0..n {
            for k in j + 1..n {
                ad *= xs[j] - xs[k];
            }
        }
        let lhs = det(g, n) / ad;
        worst = worst.max((lhs - rhs(&b, &ys)).abs() / lhs.abs());
    }
    // labels (a, a, b): the quotient tends to det[∂ₓf(a,·); f(a,·); f(b,·)] / (a − b)²
    let (a, bb) = (-0.4, 0.7);
    let ys = [-1.0, 0.1, 1.2];
    let basis = MultiHermiteBasis::new(&Configuration::parse("points:-0.4^2,0.7")?)?;
    assert_eq!(basis.labels(), &[a, a, bb]);
    let f = |x: f64, y: f64| (-(y - x) * (y - x) / 2.0).exp();
    let mut m = Vec::new();
    m.extend(ys.iter().map(|&y| (y - a) * f(a, y)));
    m.extend(ys.iter().map(|&y| f(a, y)));
    m.extend(ys.iter().map(|&y| f(bb, y)));
    let lhs = det(m, 3) / ((a - bb) * (a - bb));
    let conf = (lhs - rhs(&basis, &ys)).abs() / lhs.abs();
    let (l2, r2) = basis.det_identity_check(&ys)?;
    let conf_lib = (l2 - lhs).abs() / lhs.abs() + (r2 - lhs).abs() / lhs.abs();
    Ok(Outcome::green(
        worst < 1e-8 && conf < 1e-6 && conf_lib < 1e-6,
        format!("20 draws rel {worst:.2e}; double point rel {conf:.2e} (library check {conf_lib:.2e})"),
    ))
}

fn c3_intertwining() -> Res<Outcome> {
    let (t1, t2) = (0.3, 0.9);
    let dt = t2 - t1;
    let (lo, hi, n) = (-10.0, 10.0, 1000);
    let h = (hi - lo) / n as f64;
    let grid: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).collect();
    let w: Vec<f64> = (0..=n).map(|i| if i == 0 || i == n { h / 2.0 } else { h }).collect();
    let mut worst = [0.0f64; 3];
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut lits: Vec<Configuration> = vec![Configuration::parse("points:-0.8,0.3,1.1,1.9")?, Configuration::parse("points:0^2,1")?];
    lits.push(Configuration::from_positions(&random_simple(&mut rng, 3, -1.5, 1.5))?);
    for xi in lits {
        let b = MultiHermiteBasis::new(&xi)?;
        let nn = b.n();
        let pm: Vec<Vec<f64>> = (0..nn).map(|j| grid.iter().map(|&x| b.phi_minus(t2, x, j).unwrap()).collect()).collect();
        let pp: Vec<Vec<f64>> = (0..nn).map(|j| grid.iter().map(|&x| b.phi_plus(t1, x, j).unwrap()).collect()).collect();
        // (P φ⁻)(x1) = ∫ φ⁻(t2, x2) p(dt, x2 | x1) dx2 on the grid
        let pphi: Vec<Vec<f64>> = pm
            .iter()
            .map(|v| grid.iter().map(|&x1| (0..=n).map(|i| w[i] * v[i] * heat(dt, grid[i], x1)).sum()).collect())
            .collect();
        for j in 0..nn {
            for &x in &[-0.7, 0.4, 1.3] {
                let v = trapezoid(|x2| b.phi_minus(t2, x2, j).unwrap() * heat(dt, x2, x), x - 12.0, x + 12.0, 2400);
                worst[0] = worst[0].max((v - b.phi_minus(t1, x, j)?).abs());
                let v = trapezoid(|x1| heat(dt, x, x1) * b.phi_plus(t1, x1, j).unwrap(), lo, hi, 2000);
                worst[1] = worst[1].max((v - b.phi_plus(t2, x, j)?).abs());
            }
            for k in 0..nn {
                let v: f64 = (0..=n).map(|i| w[i] * pphi[j][i] * pp[k][i]).sum();
                worst[2] = worst[2].max((v - if j == k { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    Ok(Outcome::green(
        worst.iter().all(|&v| v < 1e-7),
        format!("φ⁻ {:.2e}, φ⁺ {:.2e}, two-time biorthonormality {:.2e}", worst[0], worst[1], worst[2]),
    ))
}

fn c4_forms() -> Res<Outcome> {
    let start = Instant::now();
    let st = [(0.25, 0.25), (0.5, 1.0), (1.0, 0.5), (0.1, 0.7), (0.8, 0.8)];
    let xy = [(-1.0, 0.5), (0.0, 0.0), (0.6, -0.9), (1.4, 1.1), (-0.3, 2.0)];
    let mut worst = 0.0f64;
    for lit in ["points:0", "points:-0.5,0.5", "points:-1,0.2,1.3", "points:-1.5,-0.4,0.6,1.2", "points:0^2,1"] {
        let c = KernelSpec::new(KernelFamily::FiniteContour, Configuration::parse(lit)?);
        let r = KernelSpec::new(KernelFamily::FiniteResidue, Configuration::parse(lit)?);
        for &(s, t) in &st {
            for &(x, y) in &xy {
                worst = worst.max((kval(&c, s, x, t, y) - kval(&r, s, x, t, y)).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(Outcome::green(worst < 1e-8 && secs < 30.0, format!("max |contour − residue| {worst:.2e} over 25 tuples × 5 configs, {secs:.1} s")))
}

fn c5_trace() -> Res<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let lits = [
        Configuration::parse("points:0.3")?,
        Configuration::parse("points:-0.5,0.5")?,
        Configuration::parse("points:0^2,1")?,
        Configuration::from_positions(&random_simple(&mut rng, 4, -2.0, 2.0))?,
    ];
    let mut worst = 0.0f64;
    for xi in lits {
        let n = xi.total().unwrap() as f64;
        let spec = KernelSpec::new(KernelFamily::FiniteContour, xi);
        for t in [0.25, 1.0] {
            let tr = trapezoid(|x| kval(&spec, t, x, t, x), -12.0, 12.0, 1200);
            worst = worst.max((tr - n).abs());
        }
    }
    Ok(Outcome::green(worst < 1e-6, format!("max |∫K(t,x;t,x)dx − N| {worst:.2e}")))
}

fn c6_monte_carlo(snaps: &Snapshots) -> Res<Outcome> {
    let xi = Configuration::parse("points:-0.5,0.5")?;
    let spec = KernelSpec::new(KernelFamily::FiniteContour, xi);
    let (t1, t) = (0.25, 0.5);
    let frac = |est: &[f64], se: &[f64], or: &[f64]| {
        est.iter().zip(se).zip(or).filter(|((e, s), o)| (*e - *o).abs() <= 3.0 * *s).count() as f64 / est.len() as f64
    };
    let edges = uniform_edges(-2.5, 2.5, 20);
    let f1 = estimate_density(snaps, t, &edges)?;
    let or1: Vec<f64> = (0..20).map(|b| bin_average(|x| kval(&spec, t, x, t, x), edges[b], edges[b + 1], 6)).collect();
    let r1 = frac(&f1.density, &f1.std_error, &or1);
    let e2 = uniform_edges(-2.0, 2.0, 8);
    let f2 = estimate_two_point(snaps, t, &e2, &e2)?;
    let mut or2 = Vec::new();
    let mut or3 = Vec::new();
    for u in 0..8 {
        for v in 0..8 {
            let k = |s: f64, x: f64, tt: f64, y: f64| kval(&spec, s, x, tt, y);
            or2.push(bin_average_2d(|x, y| k(t, x, t, x) * k(t, y, t, y) - k(t, x, t, y) * k(t, y, t, x), e2[u], e2[u + 1], e2[v], e2[v + 1], 5));
            or3.push(bin_average_2d(
                |x, y| k(t1, x, t1, x) * k(t, y, t, y) - k(t1, x, t, y) * k(t, y, t1, x),
                e2[u],
                e2[u + 1],
                e2[v],
                e2[v + 1],
                5,
            ));
        }
    }
    let r2 = frac(&f2.density, &f2.std_error, &or2);
    let f3 = estimate_two_time(snaps, t1, t, &e2, &e2)?;
    let r3 = frac(&f3.density, &f3.std_error, &or3);
    Ok(Outcome::green(
        r1 >= 0.95 && r2 >= 0.95 && r3 >= 0.95,
        format!("within 3 SE: ρ₁ {:.0}% of bins, ρ₂ {:.0}% of cells, two-time {:.0}% of cells", 100.0 * r1, 100.0 * r2, 100.0 * r3),
    ))
}

/// Σ_ℓ p(s,x|ℓ) ∫₀¹ e^{π²u²t/2} cos(πu(y−ℓ)) du − 1(s>t) p(s−t,x|y).
fn lattice_oracle(s: f64, x: f64, t: f64, y: f64) -> f64 {
    let w = (2.0 * s * 45.0).sqrt();
    let mut acc = 0.0;
    for l in (x - w).floor() as i64..=(x + w).ceil() as i64 {
        let lf = l as f64;
        let i = simpson(|u| (PI * PI * u * u * t / 2.0).exp() * (PI * u * (y - lf)).cos(), 0.0, 1.0, 4000);
        acc += heat(s, x, lf) * i;
    }
    if s > t {
        acc -= heat(s - t, x, y);
    }
    acc
}

fn equal_time_oracle(t: f64, x: f64, y: f64) -> f64 {
    let sinc = |w: C64| if w.norm() < 1e-12 { C64::new(1.0, 0.0) } else { (PI * w).sin() / (PI * w) };
    let mut acc = C64::new(0.0, 0.0);
    for l in -40i64..=40 {
        let lf = l as f64;
        acc += C64::new(-2.0 * PI * PI * t * lf * lf, 2.0 * PI * x * lf).exp() * sinc(C64::new(y - x, -2.0 * PI * t * lf));
    }
    acc.re
}

fn c7_theta() -> Res<Outcome> {
    let k = |s: f64, x: f64, t: f64, y: f64| -> Res<f64> {
        Ok(kernel_lattice_theta(SpaceTimePoint::new(s, x), SpaceTimePoint::new(t, y), 1e-12)?.value)
    };
    let pts: Vec<f64> = (0..9).map(|i| -2.0 + 0.5 * i as f64).collect();
    let (mut direct, mut per, mut eq) = (0.0f64, 0.0f64, 0.0f64);
    for &s in &[0.1, 0.5, 1.0] {
        for &t in &[0.1, 0.5, 1.0] {
            for &x in &pts {
                for &y in &pts {
                    let v = k(s, x, t, y)?;
                    direct = direct.max((v - lattice_oracle(s, x, t, y)).abs());
                    if (x * 2.0).rem_euclid(2.0) == 0.0 {
                        per = per.max((v - k(s, x + 1.0, t, y + 1.0)?).abs()).max((v - k(s, x - 3.0, t, y - 3.0)?).abs());
                    }
                    if s == t {
                        eq = eq.max((v - equal_time_oracle(t, x, y)).abs());
                    }
                }
            }
        }
    }
    let asym = (k(0.1, 0.2, 0.1, 0.7)? - k(0.1, 0.7, 0.1, 0.2)?).abs();
    Ok(Outcome::green(
        direct < 1e-8 && per < 1e-10 && eq < 1e-9 && asym > 1e-4,
        format!("vs direct sum {direct:.2e}, periodicity {per:.2e}, equal-time formula {eq:.2e}, asymmetry witness {asym:.3e}"),
    ))
}

fn bound(u: f64, s: f64, t: f64) -> f64 {
    let us = u + s;
    let e4 = (-4.0 * PI * PI * us).exp();
    let e2 = (-2.0 * PI * PI * us).exp();
    (PI * PI * (t - s) / 2.0).exp().max(1.0) * ((1.0 - e4) / (2.0 * PI * PI * us) + 2.0 * e4 / (1.0 - e2))
}

fn c8_relaxation() -> Res<Outcome> {
    let s = 0.5;
    let vals: Vec<f64> = (0..9).map(|i| -1.0 + 0.25 * i as f64).collect();
    let grid: Vec<(f64, f64)> = vals.iter().flat_map(|&x| vals.iter().map(move |&y| (x, y))).collect();
    let us = [1.0, 2.0, 4.0, 8.0];
    let gaps: Vec<f64> = us.iter().map(|&u| relaxation_gap(u, s, s, &grid, 1e-12)).collect::<Result<_, _>>()?;
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    let ratio_ok = (0..3).all(|i| {
        let rg = gaps[i + 1] / gaps[i];
        let rb = bound(us[i + 1], s, s) / bound(us[i], s, s);
        (rg / rb - 1.0).abs() <= 0.2
    });
    let terminal = gaps[3] < 1e-3;
    let pass = decreasing && ratio_ok && terminal;
    // the sup sits on the diagonal, where the gap equals the bound itself
    let diag = (kernel_lattice_theta(SpaceTimePoint::new(8.0 + s, 0.0), SpaceTimePoint::new(8.0 + s, 0.0), 1e-12)?.value - 1.0).abs();
    let attained = (gaps[3] - bound(8.0, s, s)).abs() / bound(8.0, s, s) < 1e-6 && (diag - gaps[3]).abs() < 1e-12;
    let late = relaxation_gap(64.0, s, s, &grid, 1e-12)?;
    let detail = format!(
        "gaps {:.3e} {:.3e} {:.3e} {:.3e}; decreasing {decreasing}; ratio test {ratio_ok}; gap(8) = bound(8) = {:.3e} (attained {attained}); gap(64) {late:.2e}",
        gaps[0],
        gaps[1],
        gaps[2],
        gaps[3],
        bound(8.0, s, s)
    );
    Ok(Outcome { pass, detail, explained: (!pass).then_some(decreasing && ratio_ok && attained && late < 1e-3) })
}

fn c9_window() -> Res<Outcome> {
    let (s, t) = (0.5, 0.5);
    let pts = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let theta = |x: f64, y: f64| -> Res<f64> { Ok(kernel_lattice_theta(SpaceTimePoint::new(s, x), SpaceTimePoint::new(t, y), 1e-13)?.value) };
    let ls = [10.0, 20.0, 40.0];
    let mut errs = Vec::new();
    for l in ls {
        let spec = KernelSpec::new(KernelFamily::FiniteResidue, Configuration::lattice().restrict(-l, l)?);
        let mut worst = 0.0f64;
        for &x in &pts {
            for &y in &pts {
                worst = worst.max((kval(&spec, s, x, t, y) - theta(x, y)?).abs());
            }
        }
        errs.push(worst);
    }
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let pass = decreasing && errs[2] < 1e-5;
    // A truncated window feels a net outward drift ≈ 2x/L near the origin, so the
    // density falls by ≈ 2t/L. Monte Carlo of the 21-particle window tells the two
    // kernels apart.
    let rate_ok = ls.iter().zip(&errs).all(|(l, e)| (e * l / (2.0 * t) - 1.0).abs() < 0.05);
    let window = Configuration::lattice().restrict(-10.0, 10.0)?;
    let spec = KernelSpec::new(KernelFamily::FiniteResidue, window.clone());
    let snaps = simulate(&SimPlan::new(window, vec![t], 10_000, 7))?;
    let edges = uniform_edges(-1.25, 1.25, 10);
    let f = estimate_density(&snaps, t, &edges)?;
    let (mut near_window, mut near_theta) = (0usize, 0usize);
    for b in 0..10 {
        let kw = bin_average(|x| kval(&spec, s, x, t, x), edges[b], edges[b + 1], 6);
        let kt = bin_average(|x| theta(x, x).unwrap_or(f64::NAN), edges[b], edges[b + 1], 6);
        near_window += ((f.density[b] - kw).abs() <= 3.0 * f.std_error[b]) as usize;
        near_theta += ((f.density[b] - kt).abs() <= 3.0 * f.std_error[b]) as usize;
    }
    let detail = format!(
        "L=10 {:.3e}, L=20 {:.3e}, L=40 {:.3e}; decreasing {decreasing}; L·err/(2t) within 5% of 1 {rate_ok}; \
         MC of the L=10 window within 3 SE of the window kernel in {near_window}/10 bins, of the lattice kernel in {near_theta}/10",
        errs[0], errs[1], errs[2]
    );
    Ok(Outcome { pass, detail, explained: (!pass).then_some(decreasing && rate_ok && near_window >= 9 && near_theta <= 3) })
}

fn c10_cluster() -> Res<Outcome> {
    let xi = Configuration::lattice().restrict(-20.0, 20.0)?;
    let members: Vec<f64> = (-20..=20).map(|v| v as f64).collect();
    let phi = |a: f64, z: C64| -> C64 {
        members.iter().filter(|&&x| x != a).fold(C64::new(1.0, 0.0), |p, &x| p * (1.0 - (z - a) / (x - a)))
    };
    let dec = decompose_clusters(&xi, 0.9, -4, 4)?;
    let mut ident = 0.0f64;
    for k in -3..=3 {
        let cl = dec.cluster(k).ok_or("cluster outside range")?;
        for (t, x, z) in [(0.5, 0.3, C64::new(0.4, 0.3)), (1.0, -0.8, C64::new(-1.2, -0.8)), (0.7, 1.5, C64::new(2.1, 0.1))] {
            let mut lhs = C64::new(0.0, 0.0);
            for &(xp, m) in &cl.members {
                lhs += m as f64 * (-(xp - x) * (xp - x) / (2.0 * t)).exp() * phi(xp, z);
            }
            let rhs = (-(cl.center - x).powi(2) / (2.0 * t)).exp() * psi_cluster(t, &xi, z, x, k, &dec, 1e-15)?;
            ident = ident.max((lhs - rhs).norm());
        }
    }
    let mut c1 = KernelSpec::new(KernelFamily::Cluster, Configuration::lattice());
    c1.cluster_kappa = 0.9;
    let mut c2 = c1.clone();
    c2.cluster_kappa = 0.75;
    c2.slot_choice = SlotChoice::Last;
    let inf = KernelSpec::new(KernelFamily::InfiniteLimit, Configuration::lattice());
    let (mut d_phi, mut d_dec, mut d_theta) = (0.0f64, 0.0f64, 0.0f64);
    for (s, x, t, y) in [(0.5, 0.2, 0.5, -0.1), (0.3, -0.6, 0.8, 0.5), (1.0, 0.9, 0.4, 0.0)] {
        let a = kval(&c1, s, x, t, y);
        d_phi = d_phi.max((a - kval(&inf, s, x, t, y)).abs());
        d_dec = d_dec.max((a - kval(&c2, s, x, t, y)).abs());
        d_theta = d_theta.max((a - lattice_oracle(s, x, t, y)).abs());
    }
    Ok(Outcome::green(
        ident < 1e-8 && d_phi < 1e-7 && d_dec < 1e-7 && d_theta < 1e-7,
        format!("identity {ident:.2e}; cluster vs Φ-form {d_phi:.2e}; two decompositions {d_dec:.2e}; vs direct lattice sum {d_theta:.2e}"),
    ))
}

/// Number of semistandard tableaux of hook shape (k+1, 1^l) with entries in 1..=n,
/// by enumerating every filling.
fn ssyt_hook(k: usize, l: usize, n: usize) -> i128 {
    let cells = k + l + 1;
    let mut fill = vec![1usize; cells];
    let mut count = 0i128;
    loop {
        // fill[0] is the corner, fill[1..=k] the arm, fill[k+1..] the leg
        let arm_ok = (0..k).all(|i| fill[i] <= fill[i + 1]);
        let leg_ok = (0..l).all(|i| {
            let above = if i == 0 { fill[0] } else { fill[k + i] };
            above < fill[k + 1 + i]
        });
        if arm_ok && leg_ok {
            count += 1;
        }
        let mut p = 0;
        loop {
            if p == cells {
                return count;
            }
            fill[p] += 1;
            if fill[p] <= n {
                break;
            }
            fill[p] = 1;
            p += 1;
        }
    }
}

fn c11_symmetric() -> Res<Outcome> {
    let (mut literal_ok, mut lib_vs_brute, mut corrected_ok, mut k0_ok) = (true, true, true, true);
    let mut first_bad = None;
    for n in 1..=6usize {
        let ones = vec![1i64; n];
        for k in 0..n {
            for l in 0..n - k {
                let lib = schur_frobenius_int(k, l, &ones);
                let brute = ssyt_hook(k, l, n);
                let literal = binom((k + l) as i64, l as i64) * binom(n as i64, (k + l + 1) as i64);
                let corrected = binom((k + l) as i64, l as i64) * binom((n + k) as i64, (k + l + 1) as i64);
                lib_vs_brute &= lib == brute;
                corrected_ok &= brute == corrected;
                if lib != literal {
                    literal_ok = false;
                    first_bad.get_or_insert((n, k, l, lib, literal));
                    if k == 0 {
                        k0_ok = false;
                    }
                }
            }
        }
    }
    let (z, x) = (0.3, 0.7);
    let mut sum = 0.0;
    let mut zj = 1.0;
    let mut fact = 1.0;
    for j in 0..40 {
        if j > 0 {
            zj *= z;
            fact *= j as f64;
        }
        sum += zj * hermite(j, x) / fact;
    }
    let herm = (sum - (2.0 * z * x - z * z).exp()).abs();
    let vars = [0.3, -0.5, 0.7, 0.2];
    let zz: f64 = 0.8;
    let h = complete_symmetric_all(&SymmetricFnInput::from_real(&vars), 150);
    let series: C64 = h.iter().enumerate().map(|(r, &v)| v * zz.powi(r as i32)).sum();
    let prod: f64 = vars.iter().map(|&v| 1.0 / (1.0 - v * zz)).product();
    let hgen = (series - prod).norm();
    let ident_ok = herm < 1e-10 && hgen < 1e-10;
    let pass = literal_ok && ident_ok;
    let mut detail = format!("Hermite generating fn {herm:.2e}, h_r generating fn {hgen:.2e}; hook values equal SSYT counts {lib_vs_brute}");
    if let Some((n, k, l, got, want)) = first_bad {
        detail += &format!(
            "; C(k+l,l)C(n,k+l+1) fails first at n={n} k={k} l={l} ({got} vs {want}); holds for k=0 {k0_ok}; C(k+l,l)C(n+k,k+l+1) holds {corrected_ok}"
        );
    }
    Ok(Outcome { pass, detail, explained: (!pass).then_some(ident_ok && lib_vs_brute && corrected_ok && k0_ok) })
}

/// ζ(σ) by direct sum plus an Euler–Maclaurin tail.
fn zeta(sig: f64) -> f64 {
    let n = 1000.0f64;
    let head: f64 = (1..1000).map(|k| (k as f64).powf(-sig)).sum();
    head + n.powf(1.0 - sig) / (sig - 1.0) + 0.5 * n.powf(-sig) + sig * n.powf(-sig - 1.0) / 12.0
}

fn c12_conditions() -> Res<Outcome> {
    let mut exact = true;
    for kappa in [0.6, 0.8, 1.0] {
        let eta = Configuration::eta(kappa)?;
        for l in [0.5, 1.0, 2.0, 3.7, 10.0, 55.5, 100.0, 1e3, 1e4] {
            exact &= m_signed(&eta, l)? == 0.0;
        }
    }
    let (kappa, alpha) = (0.8, 1.5);
    let eta = Configuration::eta(kappa)?;
    let limit = (2.0 * zeta(alpha * kappa)).powf(1.0 / alpha);
    let mut vals = Vec::new();
    let mut own_ok = true;
    for e in 1..=5 {
        let l = 1.3 * 10f64.powi(e);
        let v = m_alpha(&eta, l, alpha)?;
        let lmax = (l.powf(1.0 / kappa) * (1.0 + 1e-12)).floor() as i64;
        let own: f64 = 2.0 * (1..=lmax).map(|j| (j as f64).powf(-alpha * kappa)).sum::<f64>();
        own_ok &= (v - own.powf(1.0 / alpha)).abs() < 1e-9 * v;
        vals.push(v);
    }
    let monotone = vals.windows(2).all(|w| w[1] >= w[0]);
    let bounded = vals.iter().all(|&v| v < limit);
    let incs: Vec<f64> = vals.windows(2).map(|w| w[1] - w[0]).collect();
    let shrinking = incs.windows(2).all(|w| w[1] < w[0]);
    let report = check_conditions(&eta, 1e4, alpha, kappa)?;
    let pass = exact && own_ok && monotone && bounded && shrinking && report.c1_holds() && report.c2i_holds();
    Ok(Outcome::green(
        pass,
        format!(
            "M = 0 exactly {exact}; M_α at L=1.3·10^(1..5): {}; matches direct sum {own_ok}; limit (2ζ(1.2))^(2/3) = {limit:.4}; increments shrinking {shrinking}; C.1 {:?}, C.2(i) {:?}",
            vals.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" "),
            report.c1,
            report.c2i
        ),
    ))
}

fn c13_fredholm(snaps: &Snapshots) -> Res<Outcome> {
    let xi = Configuration::parse("points:-0.5,0.5")?;
    let t = 0.5;
    let f = |x: f64| if x.abs() < 1.0 { (1.0 - x * x).powi(2) } else { 0.0 };
    let spec = KernelSpec::new(KernelFamily::FiniteContour, xi);
    let gen = |theta: f64| -> Res<f64> {
        let chi = Tabulated::from_fn(-1.0, 1.0, 4001, |x| (theta * f(x)).exp() - 1.0)?;
        Ok(generating_fn_truncated(&GeneratingFnRequest { times: vec![t], chis: vec![chi], order: 2, nodes: 40, kernel: spec.clone() })?)
    };
    let theta = 0.3;
    let g = gen(theta)?;
    let ti = snaps.time_index(t)?;
    let samples: Vec<f64> = (0..snaps.n_paths).map(|p| (theta * snaps.positions(p, ti).iter().map(|&x| f(x)).sum::<f64>()).exp()).collect();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let se = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    let mc_ok = (g - mean).abs() <= 3.0 * se;
    let h = 1e-3;
    let first = (gen(h)? - gen(-h)?) / (2.0 * h);
    let direct = simpson(|x| f(x) * kval(&spec, t, x, t, x), -1.0, 1.0, 2000);
    let d1 = (first - direct).abs();
    Ok(Outcome::green(
        mc_ok && d1 < 1e-5,
        format!("G = {g:.6} vs MC {mean:.6} ± {se:.1e}; first-order coefficient {first:.8} vs ∫fρ₁ {direct:.8} ({d1:.1e})"),
    ))
}

fn main() {
    let mc_start = Instant::now();
    let plan = SimPlan { dt: 1e-3, ..SimPlan::new(Configuration::parse("points:-0.5,0.5").unwrap(), vec![0.25, 0.5], 100_000, 2024) };
    let snaps = simulate(&plan).expect("simulation");
    let mc_secs = mc_start.elapsed().as_secs_f64();

    type Crit<'a> = (u8, &'static str, Box<dyn Fn() -> Res<Outcome> + 'a>);
    let criteria: Vec<Crit> = vec![
        (1, "biorthonormality", Box::new(c1_biorth)),
        (2, "determinant lemma", Box::new(c2_det_lemma)),
        (3, "intertwining", Box::new(c3_intertwining)),
        (4, "form equivalence", Box::new(c4_forms)),
        (5, "projection trace", Box::new(c5_trace)),
        (6, "Monte Carlo cross-check", Box::new(|| c6_monte_carlo(&snaps))),
        (7, "theta closed form", Box::new(c7_theta)),
        (8, "relaxation", Box::new(c8_relaxation)),
        (9, "L-convergence", Box::new(c9_window)),
        (10, "cluster machinery", Box::new(c10_cluster)),
        (11, "symmetric functions", Box::new(c11_symmetric)),
        (12, "condition checks", Box::new(c12_conditions)),
        (13, "Fredholm consistency", Box::new(|| c13_fredholm(&snaps))),
    ];
    let mut unexplained = Vec::new();
    for (id, name, run) in &criteria {
        let start = Instant::now();
        let out = run().unwrap_or_else(|e| Outcome { pass: false, detail: format!("error: {e}"), explained: Some(false) });
        let mut secs = start.elapsed().as_secs_f64();
        if *id == 6 {
            secs += mc_secs;
        }
        let tag = if out.pass { "PASS" } else { "FAIL" };
        let note = match out.explained {
            Some(true) => " [red, reproduced by independent check]",
            Some(false) => " [unexplained]",
            None => "",
        };
        println!("criterion {id:>2} {tag} {name}: {} ({secs:.1} s){note}", out.detail);
        if !out.pass && out.explained != Some(true) {
            unexplained.push(*id);
        }
    }
    if !unexplained.is_empty() {
        eprintln!("unexplained failures: {unexplained:?}");
        std::process::exit(1);
    }
}
