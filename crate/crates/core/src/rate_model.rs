//! Average-rate and success-probability formulas: exact imperfect-CSI rates,
//! the perfect-CSI reference, TDMA-SVD, and the `g`-factor approximations.

use serde::{Deserialize, Serialize};

use crate::error::{guard, Error, Result};
use crate::numerics::{gauss_2f1, laguerre_coeffs, ln_fact, upper_inc_gamma_regularized};

/// Physical and protocol parameters of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Number of transmitter/receiver pairs.
    pub n: usize,
    pub nt: usize,
    pub nr: usize,
    /// Streams per pair.
    pub d: usize,
    /// Total transmit power per transmitter, split equally across streams.
    pub power: f64,
    pub sigma2: f64,
    /// Slot fraction spent probing one user.
    pub theta: f64,
    /// Quantization bits per cross-link feedback.
    pub bits: u32,
    /// SINR decoding threshold.
    pub tau: f64,
    /// Bits delivered per stream per slot on success.
    pub rate: f64,
    /// Path-loss matrix; `zeta[k][i]` is the gain from transmitter `i` to receiver `k`.
    pub zeta: Vec<Vec<f64>>,
}

/// Quantities derived from antenna counts, streams and bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub q: u32,
    pub a_breve: f64,
    pub b_breve: f64,
    pub delta: f64,
}

/// `n × n` matrix with `direct` on the diagonal and `cross` elsewhere.
pub fn uniform_zeta(n: usize, direct: f64, cross: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|k| (0..n).map(|i| if i == k { direct } else { cross }).collect())
        .collect()
}

impl SystemConfig {
    /// The evaluation scenario: 7×7 antennas, two streams, P = 10, σ² = 1,
    /// θ = 0.01, six pairs, R = 1000, τ = 1, unit direct links.
    pub fn reference(cross: f64, bits: u32) -> Self {
        SystemConfig {
            n: 6,
            nt: 7,
            nr: 7,
            d: 2,
            power: 10.0,
            sigma2: 1.0,
            theta: 0.01,
            bits,
            tau: 1.0,
            rate: 1000.0,
            zeta: uniform_zeta(6, 1.0, cross),
        }
    }

    pub fn with_bits(mut self, bits: u32) -> Self {
        self.bits = bits;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_uniform_zeta(mut self, direct: f64, cross: f64) -> Self {
        self.zeta = uniform_zeta(self.n, direct, cross);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("N must be at least 1"));
        }
        if self.nt == 0 || self.nr == 0 || self.d == 0 {
            return Err(Error::config("Nt, Nr and d must be at least 1"));
        }
        if self.d > self.nt.min(self.nr) {
            return Err(Error::config(format!(
                "d = {} exceeds min(Nt, Nr) = {}",
                self.d,
                self.nt.min(self.nr)
            )));
        }
        if self.nt * self.nr < 2 {
            return Err(Error::config("Nt·Nr must be at least 2 so that Q >= 1"));
        }
        let positive = |x: f64| x.is_finite() && x > 0.0;
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !positive(self.power) {
            return Err(Error::config("P must be positive"));
        }
        if !nonneg(self.sigma2) {
            return Err(Error::config("sigma2 must be non-negative"));
        }
        if !nonneg(self.tau) {
            return Err(Error::config("tau must be non-negative"));
        }
        if !positive(self.rate) {
            return Err(Error::config("R must be positive"));
        }
        if !nonneg(self.theta) || self.n as f64 * self.theta >= 1.0 {
            return Err(Error::config(format!(
                "N·theta must be < 1 (N = {}, theta = {})",
                self.n, self.theta
            )));
        }
        if self.zeta.len() != self.n || self.zeta.iter().any(|row| row.len() != self.n) {
            return Err(Error::config(format!("zeta must be {0}×{0}", self.n)));
        }
        if self.zeta.iter().flatten().any(|&z| !positive(z)) {
            return Err(Error::config("all path-loss coefficients must be positive"));
        }
        Ok(())
    }

    /// IA feasibility `Nt + Nr >= (N+1) d`.
    pub fn ia_feasible(&self) -> bool {
        self.nt + self.nr >= (self.n + 1) * self.d
    }

    pub fn derived(&self) -> DerivedParams {
        let q = (self.nt * self.nr - 1) as u32;
        let qf = q as f64;
        let a_breve = (((q + 1) as usize * self.d) as f64 - 1.0) / qf;
        DerivedParams {
            q,
            a_breve,
            b_breve: (qf - 1.0) * a_breve,
            delta: 2f64.powf(self.bits as f64 / qf),
        }
    }

    /// Received power fraction `P ζ_ki / d` per stream.
    pub fn alpha(&self, k: usize, i: usize) -> f64 {
        self.power * self.zeta[k][i] / self.d as f64
    }

    /// `(direct, cross)` if the diagonal and off-diagonal of ζ are each constant.
    pub fn uniform_links(&self) -> Option<(f64, f64)> {
        let direct = self.zeta[0][0];
        let cross = if self.n > 1 { self.zeta[0][1] } else { direct };
        for k in 0..self.n {
            for i in 0..self.n {
                let expect = if i == k { direct } else { cross };
                if self.zeta[k][i] != expect {
                    return None;
                }
            }
        }
        Some((direct, cross))
    }

    /// Validates and returns `(direct, cross)` for the symmetric analyses.
    pub fn require_symmetric(&self) -> Result<(f64, f64)> {
        self.validate()?;
        let links = self
            .uniform_links()
            .ok_or_else(|| Error::arg("operation requires constant direct and cross path loss"))?;
        if !self.ia_feasible() {
            return Err(Error::config(format!(
                "IA infeasible: Nt + Nr = {} < (N+1)d = {}",
                self.nt + self.nr,
                (self.n + 1) * self.d
            )));
        }
        Ok(links)
    }

    fn check_pair(&self, k: usize) -> Result<()> {
        if k >= self.n {
            Err(Error::arg(format!("pair index {k} out of range for N = {}", self.n)))
        } else {
            Ok(())
        }
    }
}

/// Binary activation vector over the `N` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecisionVector {
    bits: Vec<bool>,
}

impl DecisionVector {
    pub fn empty(n: usize) -> Self {
        DecisionVector { bits: vec![false; n] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        DecisionVector { bits }
    }

    pub fn from_active(n: usize, active: &[usize]) -> Result<Self> {
        let mut bits = vec![false; n];
        for &k in active {
            if k >= n {
                return Err(Error::arg(format!("pair index {k} out of range for N = {n}")));
            }
            bits[k] = true;
        }
        Ok(DecisionVector { bits })
    }

    /// Bit `k` of `mask` activates pair `k`.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        DecisionVector {
            bits: (0..n).map(|k| mask >> k & 1 == 1).collect(),
        }
    }

    pub fn mask(&self) -> u64 {
        self.bits
            .iter()
            .enumerate()
            .fold(0, |m, (k, &b)| if b { m | 1 << k } else { m })
    }

    pub fn n(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn active(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&k| self.bits[k]).collect()
    }

    pub fn cardinality(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.bits.get(k).copied().unwrap_or(false)
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Tie-break order: compare the sorted active index lists
    /// lexicographically, so lower pair indices and shorter prefixes win.
    pub fn precedes(&self, other: &DecisionVector) -> bool {
        self.active() < other.active()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    Imperfect,
    Perfect,
    Svd,
    Phi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproxOrder {
    First,
    Second,
}

/// `g_ki = (ζ_kk δ / (ζ_ki τ d) + 1)^{-1}`.
pub fn g_factor(cfg: &SystemConfig, k: usize, i: usize) -> Result<f64> {
    cfg.validate()?;
    cfg.check_pair(k)?;
    cfg.check_pair(i)?;
    if k == i {
        return Err(Error::arg("g_factor needs distinct pairs"));
    }
    Ok(g_raw(cfg, cfg.derived().delta, k, i))
}

fn g_raw(cfg: &SystemConfig, delta: f64, k: usize, i: usize) -> f64 {
    let c = cfg.zeta[k][i] * cfg.tau * cfg.d as f64 / cfg.zeta[k][k];
    c / (delta + c)
}

/// MGF factor contributed by one interferer:
/// `(1-g)^Q 2F1(b̆, Q; ă+b̆; g)`.
fn interference_factor(dp: &DerivedParams, g: f64) -> Result<f64> {
    if g == 0.0 {
        return Ok(1.0);
    }
    let q = dp.q as f64;
    let h = gauss_2f1(dp.b_breve, q, dp.a_breve + dp.b_breve, g)?;
    let v = (q * (1.0 - g).ln()).exp() * h;
    if !v.is_finite() {
        return Err(Error::Numeric(format!("interference factor not finite at g = {g}")));
    }
    Ok(v)
}

fn check_active(cfg: &SystemConfig, active: &DecisionVector, k: usize) -> Result<()> {
    if active.n() != cfg.n {
        return Err(Error::arg(format!(
            "decision has {} entries, config has N = {}",
            active.n(),
            cfg.n
        )));
    }
    cfg.check_pair(k)?;
    if !active.contains(k) {
        return Err(Error::arg(format!("pair {k} is not active")));
    }
    Ok(())
}

/// Precomputed per-link quantities reused across decisions.
#[derive(Debug, Clone)]
pub struct LinkFactors {
    n: usize,
    /// `e^{-σ²τ/α_kk}`.
    pub perfect: Vec<f64>,
    /// `g[k][i]`, zero on the diagonal.
    pub g: Vec<Vec<f64>>,
    /// Per-interferer MGF factor, one on the diagonal.
    pub mgf: Vec<Vec<f64>>,
    pub gbar: Vec<f64>,
    pub derived: DerivedParams,
}

impl LinkFactors {
    pub fn new(cfg: &SystemConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n;
        let dp = cfg.derived();
        let perfect = (0..n)
            .map(|k| (-cfg.sigma2 * cfg.tau / cfg.alpha(k, k)).exp())
            .collect();
        let mut g = vec![vec![0.0; n]; n];
        let mut mgf = vec![vec![1.0; n]; n];
        for k in 0..n {
            for i in 0..n {
                if i != k {
                    g[k][i] = g_raw(cfg, dp.delta, k, i);
                    mgf[k][i] = interference_factor(&dp, g[k][i])?;
                }
            }
        }
        let gbar = (0..n)
            .map(|k| {
                if n < 2 {
                    0.0
                } else {
                    g[k].iter().sum::<f64>() / (n - 1) as f64
                }
            })
            .collect();
        Ok(LinkFactors {
            n,
            perfect,
            g,
            mgf,
            gbar,
            derived: dp,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Imperfect success probability of pair `k` under the active set.
    pub fn success_imperfect(&self, active: &[usize], k: usize) -> f64 {
        active
            .iter()
            .filter(|&&i| i != k)
            .fold(self.perfect[k], |p, &i| p * self.mgf[k][i])
    }

    pub fn phi_factor(&self, k: usize, l: usize) -> f64 {
        self.perfect[k] * (1.0 - self.gbar[k]).powi(l as i32 - 1)
    }
}

/// MGF of the residual interference at `-τ/α_kk`; exactly one for a singleton.
pub fn mgf_residual(cfg: &SystemConfig, active: &DecisionVector, k: usize) -> Result<f64> {
    cfg.validate()?;
    check_active(cfg, active, k)?;
    let dp = cfg.derived();
    let mut acc = 1.0;
    for i in active.active() {
        if i != k {
            acc *= interference_factor(&dp, g_raw(cfg, dp.delta, k, i))?;
        }
    }
    Ok(acc)
}

/// Per-stream probability that the SINR of pair `k` reaches τ.
pub fn success_prob(
    cfg: &SystemConfig,
    active: &DecisionVector,
    k: usize,
    mode: RateMode,
) -> Result<f64> {
    cfg.validate()?;
    check_active(cfg, active, k)?;
    let perfect = (-cfg.sigma2 * cfg.tau / cfg.alpha(k, k)).exp();
    match mode {
        RateMode::Perfect => Ok(perfect),
        RateMode::Imperfect => Ok(perfect * mgf_residual(cfg, active, k)?),
        other => Err(Error::arg(format!("success_prob does not support {other:?}"))),
    }
}

fn overhead(cfg: &SystemConfig, l: usize) -> Result<f64> {
    let f = 1.0 - l as f64 * cfg.theta;
    if f <= 0.0 {
        return Err(Error::config(format!("|L|·theta = {} >= 1", l as f64 * cfg.theta)));
    }
    Ok(f)
}

/// `(1 - |L|θ) d R p_k` in bits per slot.
pub fn avg_rate_user(
    cfg: &SystemConfig,
    active: &DecisionVector,
    k: usize,
    mode: RateMode,
) -> Result<f64> {
    let p = success_prob(cfg, active, k, mode)?;
    Ok(overhead(cfg, active.cardinality())? * cfg.d as f64 * cfg.rate * p)
}

/// Common interference factor `F` of a symmetric network.
pub fn symmetric_f(cfg: &SystemConfig) -> Result<f64> {
    let (direct, cross) = cfg.require_symmetric()?;
    let dp = cfg.derived();
    let c = cross * cfg.tau * cfg.d as f64 / direct;
    interference_factor(&dp, c / (dp.delta + c))
}

pub(crate) fn symmetric_base(cfg: &SystemConfig) -> f64 {
    cfg.d as f64 * cfg.rate * (-cfg.sigma2 * cfg.tau / cfg.alpha(0, 0)).exp()
}

/// Total symmetric rate at a real-valued load, `L (1-Lθ) d R e^{-σ²τ/α} F^{L-1}`.
pub(crate) fn total_rate_real(base: f64, theta: f64, f: f64, l: f64) -> f64 {
    l * (1.0 - l * theta) * base * f.powf(l - 1.0)
}

/// Per-user `r(L)` / `μ(L)`, or the totals `L·r(L)` / `L·μ(L)` when `total`.
pub fn symmetric_rate(cfg: &SystemConfig, l: usize, mode: RateMode, total: bool) -> Result<f64> {
    cfg.require_symmetric()?;
    if l == 0 || l > cfg.n {
        return Err(Error::arg(format!("L = {l} outside 1..={}", cfg.n)));
    }
    let f = match mode {
        RateMode::Imperfect => symmetric_f(cfg)?,
        RateMode::Perfect => 1.0,
        other => return Err(Error::arg(format!("symmetric_rate does not support {other:?}"))),
    };
    let per_user = overhead(cfg, l)? * symmetric_base(cfg) * f.powi(l as i32 - 1);
    Ok(if total { l as f64 * per_user } else { per_user })
}

/// Per-user symmetric rates for `L = 1..=N`.
pub fn symmetric_profile(cfg: &SystemConfig, mode: RateMode) -> Result<Vec<f64>> {
    (1..=cfg.n)
        .map(|l| symmetric_rate(cfg, l, mode, false))
        .collect()
}

/// Per-stream success probability of TDMA-SVD for direct gain `zeta`.
pub fn svd_success(cfg: &SystemConfig, zeta: f64) -> f64 {
    let mi = cfg.nt.min(cfg.nr) as u32;
    let ma = cfg.nt.max(cfg.nr) as u32;
    let shift = ma - mi;
    let x = cfg.nt as f64 * cfg.sigma2 * cfg.tau / (zeta * cfg.power);
    let mut total = 0.0;
    for n in 0..mi {
        let w = laguerre_coeffs(n, shift);
        let omega = (ln_fact(n as u64) - ln_fact((n + shift) as u64)).exp() / mi as f64;
        let mut inner = 0.0;
        for j in 0..=(2 * n as usize) {
            let kappa: f64 = (0..=j).map(|i| w.get(i) * w.get(j - i)).sum();
            if kappa == 0.0 {
                continue;
            }
            let s = j as u32 + shift + 1;
            // Γ(s, x) = (s-1)! Q(s, x)
            inner += kappa * ln_fact((s - 1) as u64).exp() * upper_inc_gamma_regularized(s, x);
        }
        total += omega * inner;
    }
    total.clamp(0.0, 1.0)
}

/// TDMA-SVD average rate of pair `k`.
pub fn svd_rate_pair(cfg: &SystemConfig, k: usize) -> Result<f64> {
    cfg.validate()?;
    cfg.check_pair(k)?;
    Ok(overhead(cfg, 1)? * cfg.d as f64 * cfg.rate * svd_success(cfg, cfg.zeta[k][k]))
}

/// TDMA-SVD average rate evaluated at the direct gain of pair 0 (the common
/// value in a symmetric network).
pub fn svd_rate(cfg: &SystemConfig) -> Result<f64> {
    svd_rate_pair(cfg, 0)
}

/// Mean of `g_ki` over `i ≠ k`.
pub fn gbar(cfg: &SystemConfig, k: usize) -> Result<f64> {
    cfg.validate()?;
    cfg.check_pair(k)?;
    if cfg.n < 2 {
        return Err(Error::arg("gbar needs N >= 2"));
    }
    let delta = cfg.derived().delta;
    let sum: f64 = (0..cfg.n).filter(|&i| i != k).map(|i| g_raw(cfg, delta, k, i)).sum();
    Ok(sum / (cfg.n - 1) as f64)
}

/// Averaged-interference rate `φ_k(L)` used by the approximate policy.
pub fn phi(cfg: &SystemConfig, k: usize, l: usize) -> Result<f64> {
    cfg.validate()?;
    cfg.check_pair(k)?;
    if l == 0 || l > cfg.n {
        return Err(Error::arg(format!("L = {l} outside 1..={}", cfg.n)));
    }
    let perfect = (-cfg.sigma2 * cfg.tau / cfg.alpha(k, k)).exp();
    let shrink = if l == 1 { 1.0 } else { (1.0 - gbar(cfg, k)?).powi(l as i32 - 1) };
    Ok(overhead(cfg, l)? * cfg.d as f64 * cfg.rate * perfect * shrink)
}

/// `φ_k(L)` for every pair and cardinality: `table[k][l-1]`.
pub fn phi_table(cfg: &SystemConfig) -> Result<Vec<Vec<f64>>> {
    (0..cfg.n)
        .map(|k| (1..=cfg.n).map(|l| phi(cfg, k, l)).collect())
        .collect()
}

/// First-order (product of `1 - g_ki`) or second-order (expansion about
/// `ḡ_k`) approximation of the imperfect rate.
pub fn approx_rate(
    cfg: &SystemConfig,
    active: &DecisionVector,
    k: usize,
    order: ApproxOrder,
) -> Result<f64> {
    cfg.validate()?;
    check_active(cfg, active, k)?;
    let delta = cfg.derived().delta;
    let l = active.cardinality();
    let others: Vec<f64> = active
        .active()
        .into_iter()
        .filter(|&i| i != k)
        .map(|i| g_raw(cfg, delta, k, i))
        .collect();
    let shrink = match order {
        ApproxOrder::First => others.iter().map(|g| 1.0 - g).product(),
        ApproxOrder::Second => {
            if others.is_empty() {
                1.0
            } else {
                let gb = gbar(cfg, k)?;
                let dev: f64 = others.iter().map(|g| g - gb).sum();
                (1.0 - gb).powi(l as i32 - 1) - (1.0 - gb).powi(l as i32 - 2) * dev
            }
        }
    };
    let perfect = (-cfg.sigma2 * cfg.tau / cfg.alpha(k, k)).exp();
    Ok(overhead(cfg, l)? * cfg.d as f64 * cfg.rate * perfect * shrink)
}

/// Average rate of every pair under every decision, indexed by bit mask.
#[derive(Debug, Clone)]
pub struct RateTable {
    n: usize,
    mode: RateMode,
    rates: Vec<f64>,
}

impl RateTable {
    /// Builds all `2^N` rows. `Svd` fills only singleton decisions; every
    /// other row is zero.
    pub fn build(cfg: &SystemConfig, mode: RateMode) -> Result<Self> {
        cfg.validate()?;
        guard(cfg.n)?;
        let n = cfg.n;
        let links = LinkFactors::new(cfg)?;
        let scale = cfg.d as f64 * cfg.rate;
        let svd: Vec<f64> = match mode {
            RateMode::Svd => (0..n).map(|k| svd_rate_pair(cfg, k)).collect::<Result<_>>()?,
            _ => Vec::new(),
        };
        let mut rates = vec![0.0; (1usize << n) * n];
        for mask in 1u64..(1 << n) {
            let dv = DecisionVector::from_mask(n, mask);
            let act = dv.active();
            let l = act.len();
            let oh = 1.0 - l as f64 * cfg.theta;
            let row = &mut rates[mask as usize * n..(mask as usize + 1) * n];
            for &k in &act {
                row[k] = match mode {
                    RateMode::Perfect => oh * scale * links.perfect[k],
                    RateMode::Imperfect => oh * scale * links.success_imperfect(&act, k),
                    RateMode::Phi => oh * scale * links.phi_factor(k, l),
                    RateMode::Svd if l == 1 => svd[k],
                    RateMode::Svd => 0.0,
                };
            }
        }
        Ok(RateTable { n, mode, rates })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> RateMode {
        self.mode
    }

    pub fn row(&self, mask: u64) -> &[f64] {
        let m = mask as usize;
        &self.rates[m * self.n..(m + 1) * self.n]
    }

    pub fn rate(&self, mask: u64, k: usize) -> f64 {
        self.row(mask)[k]
    }

    pub fn weighted(&self, mask: u64, q: &[f64]) -> f64 {
        self.row(mask).iter().zip(q).map(|(r, q)| r * q).sum()
    }
}
