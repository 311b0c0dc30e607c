//! Python bindings for kernel evaluation, relaxation diagnostics, Monte Carlo
//! density estimates and the verification suites.

use dyson::config::Configuration;
use dyson::kernels::{self, KernelFamily, KernelSpec, SpaceTimePoint};
use dyson::mcsim::{estimate_density, simulate, uniform_edges, SimPlan};
use dyson::verify::{self, McOptions};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn spec(family: &str, config: &str) -> PyResult<KernelSpec> {
    let family: KernelFamily = family.parse().map_err(err)?;
    let config = Configuration::parse(config).map_err(err)?;
    let spec = KernelSpec::new(family, config);
    spec.validate().map_err(err)?;
    Ok(spec)
}

/// K_sin(r) = sin(πr)/(πr).
#[pyfunction]
fn sine_kernel(r: f64) -> f64 {
    kernels::sine_kernel(r)
}

/// Extended sine kernel at time difference dt and space difference dr.
#[pyfunction]
fn extended_sine(dt: f64, dr: f64) -> f64 {
    kernels::extended_sine(dt, dr)
}

/// K(s, x; t, y) for a kernel family and configuration literal.
#[pyfunction]
#[pyo3(signature = (family, config, s, x, t, y))]
fn kernel(family: &str, config: &str, s: f64, x: f64, t: f64, y: f64) -> PyResult<f64> {
    let k = spec(family, config)?;
    Ok(k.evaluate(SpaceTimePoint::new(s, x), SpaceTimePoint::new(t, y)).map_err(err)?.value)
}

/// Diagonal K(t, x; t, x) over a list of x.
#[pyfunction]
fn density(family: &str, config: &str, t: f64, xs: Vec<f64>) -> PyResult<Vec<f64>> {
    let k = spec(family, config)?;
    xs.iter()
        .map(|&x| Ok(k.evaluate(SpaceTimePoint::new(t, x), SpaceTimePoint::new(t, x)).map_err(err)?.value))
        .collect()
}

/// Sup-norm distance of the lattice kernel at times (u+s, u+t) from the extended sine kernel.
#[pyfunction]
fn relaxation_gap(u: f64, s: f64, t: f64, grid: Vec<(f64, f64)>) -> PyResult<f64> {
    kernels::relaxation_gap(u, s, t, &grid, 1e-12).map_err(err)
}

/// Histogram density at time t as (bin centers, density, standard error).
#[pyfunction]
#[pyo3(signature = (config, t, n_paths, seed, lo=-3.0, hi=3.0, bins=24, dt=1e-3))]
#[allow(clippy::too_many_arguments)]
fn simulate_density(
    config: &str,
    t: f64,
    n_paths: usize,
    seed: u64,
    lo: f64,
    hi: f64,
    bins: usize,
    dt: f64,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let xi = Configuration::parse(config).map_err(err)?;
    let plan = SimPlan { dt, ..SimPlan::new(xi, vec![t], n_paths, seed) };
    let snaps = simulate(&plan).map_err(err)?;
    let edges = uniform_edges(lo, hi, bins);
    let f = estimate_density(&snaps, t, &edges).map_err(err)?;
    let centers = edges.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    Ok((centers, f.density, f.std_error))
}

/// Runs a named verification suite and returns (check name, passed, value) triples.
#[pyfunction]
#[pyo3(signature = (name, n_paths=20000))]
fn run_suite(name: &str, n_paths: usize) -> PyResult<Vec<(String, bool, f64)>> {
    let mc = McOptions { n_paths, ..McOptions::default() };
    let report = verify::run_suite(name, mc).ok_or_else(|| PyValueError::new_err(format!("unknown suite {name}")))?;
    Ok(report.checks.into_iter().map(|c| (c.name, c.passed, c.value)).collect())
}

#[pyfunction]
fn suites() -> Vec<&'static str> {
    verify::SUITES.to_vec()
}

#[pymodule]
fn pydyson(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(sine_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(extended_sine, m)?)?;
    m.add_function(wrap_pyfunction!(kernel, m)?)?;
    m.add_function(wrap_pyfunction!(density, m)?)?;
    m.add_function(wrap_pyfunction!(relaxation_gap, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_density, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    m.add_function(wrap_pyfunction!(suites, m)?)?;
    Ok(())
}
