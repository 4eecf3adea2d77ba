//! Shared helpers for the acceptance suite in `tests/acceptance.rs`.

use std::io::Write;

use iasched::rate_model::{svd_rate, symmetric_rate, uniform_zeta};
use iasched::region_geometry::optimal_load;
use iasched::{RateMode, Result, SystemConfig};

/// Reference scenario resized to `n` pairs with enough antennas for IA.
pub fn network(n: usize, cross: f64, bits: u32) -> SystemConfig {
    let mut cfg = SystemConfig::reference(cross, bits);
    let m = (n + 1).max(7);
    cfg.n = n;
    cfg.nt = m;
    cfg.nr = m;
    cfg.zeta = uniform_zeta(n, 1.0, cross);
    cfg
}

/// Per-pair uniform arrival rate on the edge of the imperfect IA region,
/// `max_L L r(L) / N`.
pub fn ia_boundary(cfg: &SystemConfig) -> Result<f64> {
    let li = optimal_load(cfg, RateMode::Imperfect)?.l_int;
    Ok(symmetric_rate(cfg, li, RateMode::Imperfect, true)? / cfg.n as f64)
}

/// Per-pair uniform arrival rate on the edge of the TDMA-SVD region.
pub fn svd_boundary(cfg: &SystemConfig) -> Result<f64> {
    Ok(svd_rate(cfg)? / cfg.n as f64)
}

/// Prints `criterion N: PASS|FAIL  detail` straight to stdout so the line
/// shows up even when the test harness captures output.
pub fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {criterion}: {verdict}  {detail}");
    let _ = out.flush();
}
