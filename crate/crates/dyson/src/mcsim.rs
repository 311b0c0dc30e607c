//! Monte Carlo oracle: Euler-Maruyama paths of the β = 2 Dyson SDE for a
//! finite initial configuration and histogram estimators of one-point,
//! two-point and two-time correlation functions.

use crate::config::{ConfigError, Configuration};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Generator name recorded in run manifests.
pub const PRNG_NAME: &str = "ChaCha8 (rand_chacha), stream = path index";

const MAX_HALVINGS: u32 = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("step failed on path {path} at time {time}: minimum gap {gap:e} after {halvings} halvings")]
    StepFailure { path: usize, time: f64, gap: f64, halvings: u32 },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Serialize)]
pub struct SimPlan {
    #[serde(serialize_with = "ser_display")]
    pub initial: Configuration,
    pub dt: f64,
    pub t_snapshots: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub g_min: f64,
}

fn ser_display<S: serde::Serializer, T: std::fmt::Display>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

impl SimPlan {
    pub fn new(initial: Configuration, t_snapshots: Vec<f64>, n_paths: usize, seed: u64) -> Self {
        SimPlan { initial, dt: 1e-3, t_snapshots, n_paths, seed, g_min: 1e-4 }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.initial.is_finite() || self.initial.total() == Some(0) {
            return Err(SimError::InvalidParameter("initial configuration must be finite and nonempty".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) || !(self.g_min > 0.0) {
            return Err(SimError::InvalidParameter("dt and g_min must be positive".into()));
        }
        if self.n_paths == 0 {
            return Err(SimError::InvalidParameter("n_paths must be at least 1".into()));
        }
        if self.t_snapshots.is_empty()
            || !self.t_snapshots.iter().all(|t| *t > 0.0 && t.is_finite())
            || self.t_snapshots.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(SimError::InvalidParameter("snapshot times must be positive and strictly increasing".into()));
        }
        Ok(())
    }

    /// Starting positions; a point of multiplicity m is split into
    /// x + (j − (m−1)/2)·2ε, j < m, with ε = g_min/10.
    pub fn start(&self) -> Result<Vec<f64>> {
        let eps = self.g_min / 10.0;
        let mut out = Vec::new();
        for &(x, m) in self.initial.core() {
            for j in 0..m {
                out.push(x + (j as f64 - (m as f64 - 1.0) / 2.0) * 2.0 * eps);
            }
        }
        Ok(out)
    }
}

/// Positions at the snapshot times, laid out as [path][time][particle].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshots {
    pub times: Vec<f64>,
    pub n_particles: usize,
    pub n_paths: usize,
    pub data: Vec<f64>,
    /// Smallest gap between neighbours over all accepted steps and paths.
    pub min_gap: f64,
    /// Total number of step halvings performed.
    pub halvings: u64,
}

impl Snapshots {
    pub fn positions(&self, path: usize, time_idx: usize) -> &[f64] {
        let n = self.n_particles;
        let base = (path * self.times.len() + time_idx) * n;
        &self.data[base..base + n]
    }

    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
            .ok_or_else(|| SimError::InvalidParameter(format!("{t} is not a snapshot time")))
    }

    /// CSV with columns path, time, x1..xN.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> std::io::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["path".to_string(), "time".to_string()];
        header.extend((1..=self.n_particles).map(|j| format!("x{j}")));
        wr.write_record(&header)?;
        for p in 0..self.n_paths {
            for (ti, t) in self.times.iter().enumerate() {
                let mut rec = vec![p.to_string(), format!("{t}")];
                rec.extend(self.positions(p, ti).iter().map(|v| format!("{v:.17e}")));
                wr.write_record(&rec)?;
            }
        }
        wr.flush()
    }
}

/// Worker count from DYSON_THREADS, or the rayon default.
pub fn thread_count() -> usize {
    std::env::var("DYSON_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

fn drift(x: &[f64], out: &mut [f64]) {
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, &xk) in x.iter().enumerate() {
            if k != j {
                acc += 1.0 / (x[j] - xk);
            }
        }
        *o = acc;
    }
}

fn min_gap(x: &[f64]) -> f64 {
    x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

struct PathState<'a> {
    rng: ChaCha8Rng,
    g_min: f64,
    min_gap: f64,
    halvings: u64,
    path: usize,
    t: f64,
    scratch: &'a mut Vec<f64>,
}

impl PathState<'_> {
    /// Advance x by h with Brownian increment db; on a guard violation the
    /// step is split in two halves by a Brownian bridge.
    fn step(&mut self, x: &mut [f64], h: f64, db: &[f64], depth: u32) -> Result<()> {
        let n = x.len();
        self.scratch.resize(n, 0.0);
        drift(x, self.scratch);
        let trial: Vec<f64> = (0..n).map(|j| x[j] + db[j] + self.scratch[j] * h).collect();
        let old = min_gap(x);
        let new = min_gap(&trial);
        if new > 0.0 && new >= self.g_min.min(0.5 * old) {
            x.copy_from_slice(&trial);
            self.min_gap = self.min_gap.min(new);
            self.t += h;
            return Ok(());
        }
        if depth >= MAX_HALVINGS {
            return Err(SimError::StepFailure { path: self.path, time: self.t, gap: new, halvings: depth });
        }
        self.halvings += 1;
        let sd = (h / 4.0).sqrt();
        let first: Vec<f64> = db
            .iter()
            .map(|&d| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                d / 2.0 + sd * z
            })
            .collect();
        let second: Vec<f64> = db.iter().zip(&first).map(|(d, f)| d - f).collect();
        self.step(x, h / 2.0, &first, depth + 1)?;
        self.step(x, h / 2.0, &second, depth + 1)
    }
}

struct PathResult {
    snaps: Vec<f64>,
    min_gap: f64,
    halvings: u64,
}

fn run_path(plan: &SimPlan, start: &[f64], path: usize) -> Result<PathResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    rng.set_stream(path as u64);
    let mut scratch = Vec::new();
    let mut st = PathState { rng, g_min: plan.g_min, min_gap: f64::INFINITY, halvings: 0, path, t: 0.0, scratch: &mut scratch };
    let mut x = start.to_vec();
    let n = x.len();
    let mut snaps = Vec::with_capacity(n * plan.t_snapshots.len());
    let mut db = vec![0.0; n];
    let mut t = 0.0;
    for &ts in &plan.t_snapshots {
        let steps = ((ts - t) / plan.dt - 1e-9).ceil().max(1.0) as usize;
        let h = (ts - t) / steps as f64;
        let sd = h.sqrt();
        for _ in 0..steps {
            for d in db.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut st.rng);
                *d = sd * z;
            }
            st.step(&mut x, h, &db, 0)?;
        }
        t = ts;
        st.t = ts;
        snaps.extend_from_slice(&x);
    }
    Ok(PathResult { snaps, min_gap: st.min_gap, halvings: st.halvings })
}

/// Simulate all paths; output depends only on the plan, not on the worker count.
pub fn simulate(plan: &SimPlan) -> Result<Snapshots> {
    plan.validate()?;
    let start = plan.start()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| SimError::InvalidParameter(format!("thread pool: {e}")))?;
    let results: Vec<PathResult> =
        pool.install(|| (0..plan.n_paths).into_par_iter().map(|p| run_path(plan, &start, p)).collect::<Result<_>>())?;
    let mut data = Vec::with_capacity(plan.n_paths * plan.t_snapshots.len() * start.len());
    let mut gap = min_gap(&start);
    let mut halvings = 0;
    for r in results {
        data.extend_from_slice(&r.snaps);
        gap = gap.min(r.min_gap);
        halvings += r.halvings;
    }
    Ok(Snapshots { times: plan.t_snapshots.clone(), n_particles: start.len(), n_paths: plan.n_paths, data, min_gap: gap, halvings })
}

/// Histogram estimate on a 1-d or product grid of bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalField {
    pub edges: Vec<f64>,
    /// Second-axis edges for two-point and two-time fields.
    pub edges_y: Option<Vec<f64>>,
    pub counts: Vec<u64>,
    pub n_paths: usize,
    pub density: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Particles (or pairs) falling outside the bins.
    pub outside: u64,
}

impl EmpiricalField {
    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// Row-major index for the two-axis fields.
    pub fn index(&self, i: usize, j: usize) -> usize {
        let ny = self.edges_y.as_ref().map(|e| e.len() - 1).unwrap_or(1);
        i * ny + j
    }
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[1] <= w[0]) || !edges.iter().all(|e| e.is_finite()) {
        return Err(SimError::InvalidParameter("bin edges must be finite and strictly increasing".into()));
    }
    Ok(())
}

fn bin_of(edges: &[f64], x: f64) -> Option<usize> {
    if x < edges[0] || x >= edges[edges.len() - 1] {
        return None;
    }
    Some(edges.partition_point(|&e| e <= x) - 1)
}

/// Mean and standard error of per-path counts; the error is floored at the
/// value one count would give, so empty bins never claim zero uncertainty.
fn mean_se(sum: f64, sum_sq: f64, n: usize, scale: f64) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 { ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
    let se = (var / nf).sqrt().max(1.0 / nf);
    (mean / scale, se / scale)
}

/// Accumulate per-path counts over the cells of a field.
fn accumulate(n_paths: usize, cells: usize, per_path: impl Fn(usize, &mut [u64]) -> u64 + Sync) -> (Vec<u64>, Vec<f64>, u64) {
    let parts: Vec<(Vec<u64>, Vec<f64>, u64)> = (0..n_paths)
        .into_par_iter()
        .fold(
            || (vec![0u64; cells], vec![0f64; cells], 0u64),
            |mut acc, p| {
                let mut local = vec![0u64; cells];
                acc.2 += per_path(p, &mut local);
                for (c, &v) in local.iter().enumerate() {
                    acc.0[c] += v;
                    acc.1[c] += (v * v) as f64;
                }
                acc
            },
        )
        .collect();
    let mut counts = vec![0u64; cells];
    let mut sq = vec![0f64; cells];
    let mut outside = 0;
    for (c, s, o) in parts {
        for i in 0..cells {
            counts[i] += c[i];
            sq[i] += s[i];
        }
        outside += o;
    }
    (counts, sq, outside)
}

/// One-point density ρ₁(t, x) by histogram.
pub fn estimate_density(snaps: &Snapshots, t: f64, edges: &[f64]) -> Result<EmpiricalField> {
    check_edges(edges)?;
    let ti = snaps.time_index(t)?;
    let nb = edges.len() - 1;
    let (counts, sq, outside) = accumulate(snaps.n_paths, nb, |p, local| {
        let mut out = 0;
        for &x in snaps.positions(p, ti) {
            match bin_of(edges, x) {
                Some(b) => local[b] += 1,
                None => out += 1,
            }
        }
        out
    });
    let mut density = Vec::with_capacity(nb);
    let mut se = Vec::with_capacity(nb);
    for b in 0..nb {
        let (m, s) = mean_se(counts[b] as f64, sq[b], snaps.n_paths, edges[b + 1] - edges[b]);
        density.push(m);
        se.push(s);
    }
    Ok(EmpiricalField { edges: edges.to_vec(), edges_y: None, counts, n_paths: snaps.n_paths, density, std_error: se, outside })
}

fn pair_field(snaps: &Snapshots, t1: f64, t2: f64, ex: &[f64], ey: &[f64], exclude_same: bool) -> Result<EmpiricalField> {
    check_edges(ex)?;
    check_edges(ey)?;
    let (i1, i2) = (snaps.time_index(t1)?, snaps.time_index(t2)?);
    let (nx, ny) = (ex.len() - 1, ey.len() - 1);
    let (counts, sq, outside) = accumulate(snaps.n_paths, nx * ny, |p, local| {
        let a = snaps.positions(p, i1);
        let b = snaps.positions(p, i2);
        let mut out = 0;
        for (j, &xa) in a.iter().enumerate() {
            for (k, &xb) in b.iter().enumerate() {
                if exclude_same && j == k {
                    continue;
                }
                match (bin_of(ex, xa), bin_of(ey, xb)) {
                    (Some(u), Some(v)) => local[u * ny + v] += 1,
                    _ => out += 1,
                }
            }
        }
        out
    });
    let mut density = Vec::with_capacity(nx * ny);
    let mut se = Vec::with_capacity(nx * ny);
    for u in 0..nx {
        for v in 0..ny {
            let c = u * ny + v;
            let area = (ex[u + 1] - ex[u]) * (ey[v + 1] - ey[v]);
            let (m, s) = mean_se(counts[c] as f64, sq[c], snaps.n_paths, area);
            density.push(m);
            se.push(s);
        }
    }
    Ok(EmpiricalField { edges: ex.to_vec(), edges_y: Some(ey.to_vec()), counts, n_paths: snaps.n_paths, density, std_error: se, outside })
}

/// Equal-time two-point function ρ₂(t, x, y) from ordered pairs of distinct particles.
pub fn estimate_two_point(snaps: &Snapshots, t: f64, ex: &[f64], ey: &[f64]) -> Result<EmpiricalField> {
    pair_field(snaps, t, t, ex, ey, true)
}

/// Two-time function ρ(t₁, x; t₂, y): some particle in the x bin at t₁ and
/// some particle (possibly the same) in the y bin at t₂. At t₁ = t₂ the
/// same-particle pairs are excluded and this is the two-point function.
pub fn estimate_two_time(snaps: &Snapshots, t1: f64, t2: f64, ex: &[f64], ey: &[f64]) -> Result<EmpiricalField> {
    let same = (t1 - t2).abs() <= 1e-12 * t1.abs().max(1.0);
    pair_field(snaps, t1, t2, ex, ey, same)
}

/// Sample mean and standard error of Σ_j X_j(t) − Σ_j X_j(0).
pub fn center_of_mass_drift(snaps: &Snapshots, start: &[f64], t: f64) -> Result<(f64, f64)> {
    let ti = snaps.time_index(t)?;
    let s0: f64 = start.iter().sum();
    let vals: Vec<f64> = (0..snaps.n_paths).map(|p| snaps.positions(p, ti).iter().sum::<f64>() - s0).collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Uniform bin edges over [lo, hi].
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::heat_kernel_re;
    use proptest::prelude::*;

    fn plan(lit: &str, times: &[f64], n: usize, seed: u64) -> SimPlan {
        SimPlan::new(Configuration::parse(lit).unwrap(), times.to_vec(), n, seed)
    }

    #[test]
    fn single_brownian_variance() {
        let p = SimPlan { dt: 0.05, ..plan("points:0", &[1.0], 20000, 7) };
        let s = simulate(&p).unwrap();
        let xs: Vec<f64> = (0..s.n_paths).map(|i| s.positions(i, 0)[0]).collect();
        let n = xs.len() as f64;
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n;
        // Var of the sample second moment is 2/n for a unit Gaussian
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n).sqrt(), "{var}");
    }

    #[test]
    fn single_density_matches_heat_kernel() {
        let p = SimPlan { dt: 0.05, ..plan("points:0", &[1.0], 40000, 3) };
        let s = simulate(&p).unwrap();
        let edges = uniform_edges(-3.0, 3.0, 12);
        let f = estimate_density(&s, 1.0, &edges).unwrap();
        let mut bad = 0;
        for b in 0..f.bins() {
            let (v, _) = crate::quad::adaptive_re(|x| heat_kernel_re(1.0, x, 0.0), edges[b], edges[b + 1], 1, 1e-12, 1e-12).unwrap();
            let want = v / (edges[b + 1] - edges[b]);
            if (f.density[b] - want).abs() > 3.0 * f.std_error[b] {
                bad += 1;
            }
        }
        assert!(bad <= 1, "{bad} bins outside 3 SE");
        let total: u64 = f.counts.iter().sum::<u64>() + f.outside;
        assert_eq!(total, s.n_paths as u64);
    }

    #[test]
    fn noncolliding_and_deterministic() {
        let p = SimPlan { dt: 2e-3, ..plan("points:-0.5,0.5", &[0.1, 0.5], 2000, 11) };
        let a = simulate(&p).unwrap();
        assert!(a.min_gap > 0.0);
        for i in 0..a.n_paths {
            for ti in 0..2 {
                let x = a.positions(i, ti);
                assert!(x[1] > x[0]);
            }
        }
        let b = simulate(&p).unwrap();
        assert_eq!(a, b);
        let mut c1 = Vec::new();
        let mut c2 = Vec::new();
        a.write_csv(&mut c1).unwrap();
        b.write_csv(&mut c2).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn double_start_split() {
        let p = plan("points:0^2,1", &[0.2], 200, 5);
        let st = p.start().unwrap();
        assert_eq!(st.len(), 3);
        assert!((st[1] - st[0] - 2e-5).abs() < 1e-15);
        let s = simulate(&SimPlan { dt: 2e-3, ..p }).unwrap();
        assert!(s.min_gap > 0.0);
    }

    #[test]
    fn center_of_mass_martingale() {
        let p = SimPlan { dt: 2e-3, ..plan("points:-1,0,1.5", &[0.5], 4000, 9) };
        let s = simulate(&p).unwrap();
        let (m, se) = center_of_mass_drift(&s, &p.start().unwrap(), 0.5).unwrap();
        assert!(m.abs() < 3.0 * se, "{m} {se}");
    }

    #[test]
    fn two_time_equal_times_is_two_point() {
        let p = SimPlan { dt: 5e-3, ..plan("points:-0.5,0.5", &[0.5], 500, 2) };
        let s = simulate(&p).unwrap();
        let e = uniform_edges(-2.0, 2.0, 4);
        assert_eq!(estimate_two_time(&s, 0.5, 0.5, &e, &e).unwrap(), estimate_two_point(&s, 0.5, &e, &e).unwrap());
    }

    #[test]
    fn rejects_bad_plans() {
        assert!(simulate(&SimPlan { dt: 0.0, ..plan("points:0", &[1.0], 1, 0) }).is_err());
        assert!(simulate(&plan("points:0", &[1.0, 0.5], 1, 0)).is_err());
        assert!(simulate(&plan("points:0", &[1.0], 0, 0)).is_err());
        let z = SimPlan::new(Configuration::lattice(), vec![1.0], 1, 0);
        assert!(simulate(&z).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn paths_stay_ordered(gaps in proptest::collection::vec(0.05f64..1.0, 1..4), seed in 0u64..1000) {
            let mut xs = vec![0.0];
            for g in gaps {
                xs.push(xs[xs.len() - 1] + g);
            }
            let p = SimPlan { dt: 2e-3, ..SimPlan::new(Configuration::from_positions(&xs).unwrap(), vec![0.05, 0.2], 50, seed) };
            let a = simulate(&p).unwrap();
            prop_assert!(a.min_gap > 0.0);
            for i in 0..a.n_paths {
                for ti in 0..2 {
                    prop_assert!(a.positions(i, ti).windows(2).all(|w| w[1] > w[0]));
                }
            }
            prop_assert_eq!(&a, &simulate(&p).unwrap());
            let f = estimate_density(&a, 0.2, &uniform_edges(-1.0, 4.0, 10)).unwrap();
            prop_assert_eq!(f.counts.iter().sum::<u64>() + f.outside, (xs.len() * a.n_paths) as u64);
        }
    }
}
