//! Space-time correlation kernels of Dyson's Brownian motion model with β = 2,
//! for finite and infinite initial configurations, with a Monte Carlo oracle.

pub mod cli;
pub mod config;
pub mod correlations;
pub mod kernels;
pub mod mcsim;
pub mod mhermite;
pub mod quad;
pub mod specfun;
pub mod verify;
