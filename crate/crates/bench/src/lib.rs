//! Shared fixtures for the benchmarks.

use iasched::rate_model::uniform_zeta;
use iasched::SystemConfig;

/// Reference scenario with `n` pairs and just enough antennas for IA.
pub fn network(n: usize, cross: f64, bits: u32) -> SystemConfig {
    let mut cfg = SystemConfig::reference(cross, bits);
    let m = (n + 1).max(7);
    cfg.n = n;
    cfg.nt = m;
    cfg.nr = m;
    cfg.zeta = uniform_zeta(n, 1.0, cross);
    cfg
}

/// Deterministic pseudo-random queue backlogs in `[0, 1000)`.
pub fn queues(n: usize, salt: u64) -> Vec<f64> {
    (0..n as u64)
        .map(|k| {
            let x = (k + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt.wrapping_mul(0xBF58_476D_1CE4_E5B9);
            (x >> 11) as f64 / (1u64 << 53) as f64 * 1000.0
        })
        .collect()
}
