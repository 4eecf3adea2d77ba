//! Stability-region geometry: optimal symmetric loads, vertex sets,
//! NNLS-based hull membership, technique selection and achievable fractions.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{guard, Error, Result};
use crate::policies::Technique;
use crate::rate_model::{
    svd_rate, svd_rate_pair, symmetric_base, symmetric_f, symmetric_rate, total_rate_real,
    DecisionVector, LinkFactors, RateMode, SystemConfig,
};

/// Default relative tolerance of the NNLS optimality test.
pub const NNLS_TOL: f64 = 1e-9;
/// Default membership slack, scaled by `1 + ‖a₁‖`.
pub const MEMBERSHIP_TOL: f64 = 1e-7;
/// Largest bit budget scanned by [`bits_for_fraction`].
pub const MAX_BITS: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalLoad {
    /// Stationary point of the continuous total-rate curve.
    pub l0_real: f64,
    /// Best neighbouring integer, clamped to `[1, N]`.
    pub l_int: usize,
    /// Best neighbouring integer before clamping to `N`.
    pub l_unclamped: usize,
    pub clamped: bool,
    pub mode: RateMode,
}

/// Which stability region to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionTechnique {
    IaImperfect,
    IaPerfect,
    Svd,
    Switching,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexLabel {
    /// Generating set, e.g. `I3`, `P2`, `J1`.
    pub set: String,
    pub technique: Technique,
    /// Activation mask of the decision behind the point.
    pub mask: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionVertexSet {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<VertexLabel>,
}

impl RegionVertexSet {
    fn new(dim: usize) -> Self {
        RegionVertexSet {
            dim,
            points: Vec::new(),
            labels: Vec::new(),
        }
    }

    fn extend(&mut self, other: RegionVertexSet) {
        self.points.extend(other.points);
        self.labels.extend(other.labels);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnlsResult {
    pub delta: Vec<f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Stationary load of the symmetric total rate and its best integer neighbour.
pub fn optimal_load(cfg: &SystemConfig, mode: RateMode) -> Result<OptimalLoad> {
    cfg.validate()?;
    if cfg.theta <= 0.0 {
        return Err(Error::arg("optimal load needs theta > 0"));
    }
    let theta = cfg.theta;
    let f = match mode {
        RateMode::Imperfect => symmetric_f(cfg)?,
        RateMode::Perfect => 1.0,
        other => return Err(Error::arg(format!("optimal_load does not support {other:?}"))),
    };
    let ln_f = f.ln();
    let l0_real = if ln_f < 0.0 {
        let a = 1.0 / theta - 2.0 / ln_f;
        let disc = (2.0 / ln_f - 1.0 / theta).powi(2) + 4.0 / (theta * ln_f);
        (a - disc.max(0.0).sqrt()) / 2.0
    } else {
        1.0 / (2.0 * theta)
    };
    let lo = l0_real.floor();
    let hi = l0_real.ceil();
    let value = |l: f64| if l <= 0.0 { 0.0 } else { total_rate_real(1.0, theta, f, l) };
    let pick = if value(hi) >= value(lo) { hi } else { lo };
    let l_unclamped = (pick as usize).max(1);
    Ok(OptimalLoad {
        l0_real,
        l_int: l_unclamped.min(cfg.n),
        l_unclamped,
        clamped: l_unclamped > cfg.n,
        mode,
    })
}

/// Points `rate(L)·s` for every `s` with exactly `l` active pairs.
pub fn level_vertices(cfg: &SystemConfig, mode: RateMode, l: usize) -> Result<RegionVertexSet> {
    guard(cfg.n)?;
    let r = symmetric_rate(cfg, l, mode, false)?;
    let prefix = if mode == RateMode::Perfect { "P" } else { "I" };
    let mut set = RegionVertexSet::new(cfg.n);
    for mask in 1u64..(1 << cfg.n) {
        if mask.count_ones() as usize != l {
            continue;
        }
        let dv = DecisionVector::from_mask(cfg.n, mask);
        set.points
            .push(dv.bits().iter().map(|&b| if b { r } else { 0.0 }).collect());
        set.labels.push(VertexLabel {
            set: format!("{prefix}{l}"),
            technique: Technique::Ia,
            mask,
        });
    }
    Ok(set)
}

/// Generating points of a stability region; the hull also contains the origin.
pub fn region_vertices(cfg: &SystemConfig, technique: RegionTechnique) -> Result<RegionVertexSet> {
    cfg.validate()?;
    guard(cfg.n)?;
    match technique {
        RegionTechnique::IaImperfect | RegionTechnique::IaPerfect => {
            let mode = if technique == RegionTechnique::IaPerfect {
                RateMode::Perfect
            } else {
                RateMode::Imperfect
            };
            cfg.require_symmetric()?;
            let top = optimal_load(cfg, mode)?.l_int;
            let mut set = RegionVertexSet::new(cfg.n);
            for l in 1..=top {
                set.extend(level_vertices(cfg, mode, l)?);
            }
            Ok(set)
        }
        RegionTechnique::Svd => {
            let mut set = RegionVertexSet::new(cfg.n);
            for k in 0..cfg.n {
                let mut p = vec![0.0; cfg.n];
                p[k] = svd_rate_pair(cfg, k)?;
                set.points.push(p);
                set.labels.push(VertexLabel {
                    set: "J1".into(),
                    technique: Technique::TdmaSvd,
                    mask: 1 << k,
                });
            }
            Ok(set)
        }
        RegionTechnique::Switching => {
            let mut set = region_vertices(cfg, RegionTechnique::IaImperfect)?;
            set.extend(region_vertices(cfg, RegionTechnique::Svd)?);
            Ok(set)
        }
    }
}

/// `L_I r(L_I) / (L_P μ(L_P))`.
pub fn gap_fraction_perfect(cfg: &SystemConfig) -> Result<f64> {
    let li = optimal_load(cfg, RateMode::Imperfect)?.l_int;
    let lp = optimal_load(cfg, RateMode::Perfect)?.l_int;
    Ok(symmetric_rate(cfg, li, RateMode::Imperfect, true)?
        / symmetric_rate(cfg, lp, RateMode::Perfect, true)?)
}

/// Smallest `L <= L_I` (or `L_P`) whose total IA rate beats `r_svd`.
pub fn ia_vs_svd(cfg: &SystemConfig, mode: RateMode) -> Result<Option<usize>> {
    ia_witness_against(cfg, mode, svd_rate(cfg)?)
}

/// [`ia_vs_svd`] against an explicit TDMA-SVD rate.
pub fn ia_witness_against(cfg: &SystemConfig, mode: RateMode, r_svd: f64) -> Result<Option<usize>> {
    cfg.require_symmetric()?;
    let top = optimal_load(cfg, mode)?.l_int;
    for l in 1..=top {
        if symmetric_rate(cfg, l, mode, true)? > r_svd {
            return Ok(Some(l));
        }
    }
    Ok(None)
}

/// Non-negative least squares `min ‖Aδ − b‖, δ >= 0` by the Lawson–Hanson
/// active-set method.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Result<NnlsResult> {
    let (m, n) = a.shape();
    if n == 0 || m == 0 {
        return Err(Error::arg("nnls needs a non-empty matrix"));
    }
    if b.len() != m {
        return Err(Error::arg(format!("nnls: b has {} rows, A has {m}", b.len())));
    }
    if !(tol > 0.0) {
        return Err(Error::arg("nnls tolerance must be positive"));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("nnls input contains non-finite values".into()));
    }
    let cap = 10 * n;
    let col_norm: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let bnorm = b.norm();
    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    // Columns whose entry failed to stay positive; cleared once x moves.
    let mut blocked = vec![false; n];
    let mut iterations = 0;

    loop {
        let w = a.tr_mul(&(b - a * &x));
        let next = (0..n)
            .filter(|&j| !passive[j] && !blocked[j] && w[j] > tol * col_norm[j] * bnorm)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = next else { break };
        passive[j] = true;

        let mut first = true;
        loop {
            iterations += 1;
            if iterations > cap {
                return Err(Error::NonConvergence {
                    what: "nnls",
                    partial: (a * &x - b).norm(),
                    iterations,
                });
            }
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let z = passive_solve(a, b, &idx)?;
            if idx.iter().zip(z.iter()).all(|(_, &v)| v > 0.0) {
                for (&i, &v) in idx.iter().zip(z.iter()) {
                    x[i] = v;
                }
                blocked.iter_mut().for_each(|f| *f = false);
                break;
            }
            if first {
                let pos = idx.iter().position(|&i| i == j).unwrap();
                if z[pos] <= 0.0 {
                    // The new column cannot enter; keep x and try another.
                    passive[j] = false;
                    blocked[j] = true;
                    break;
                }
            }
            first = false;
            let mut alpha = f64::INFINITY;
            for (&i, &v) in idx.iter().zip(z.iter()) {
                if v <= 0.0 {
                    let gap = x[i] - v;
                    alpha = alpha.min(if gap > 0.0 { x[i] / gap } else { 0.0 });
                }
            }
            for (&i, &v) in idx.iter().zip(z.iter()) {
                x[i] += alpha * (v - x[i]);
            }
            for &i in &idx {
                if x[i] <= f64::EPSILON * (1.0 + x.amax()) {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            blocked.iter_mut().for_each(|f| *f = false);
        }
    }
    Ok(NnlsResult {
        residual_norm: (a * &x - b).norm(),
        delta: x.iter().copied().collect(),
        converged: true,
        iterations,
    })
}

fn passive_solve(a: &DMatrix<f64>, b: &DVector<f64>, idx: &[usize]) -> Result<DVector<f64>> {
    let sub = a.select_columns(idx);
    let svd = sub.svd(true, true);
    let eps = 1e-13 * svd.singular_values.max();
    svd.solve(b, eps)
        .map_err(|e| Error::Numeric(format!("least-squares solve failed: {e}")))
}

/// NNLS fit of `a` by a convex combination of `points` and the origin,
/// with the all-ones row enforcing that the weights sum to one.
pub fn hull_fit(points: &[Vec<f64>], a: &[f64], tol: f64) -> Result<NnlsResult> {
    let dim = a.len();
    let cols = points.len() + 1;
    let mut mat = DMatrix::<f64>::zeros(dim + 1, cols);
    for (j, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::arg("vertex dimension mismatch"));
        }
        for (r, &v) in p.iter().enumerate() {
            mat[(r, j)] = v;
        }
        mat[(dim, j)] = 1.0;
    }
    mat[(dim, cols - 1)] = 1.0;
    let mut rhs = DVector::<f64>::zeros(dim + 1);
    for (r, &v) in a.iter().enumerate() {
        rhs[r] = v;
    }
    rhs[dim] = 1.0;
    nnls(&mat, &rhs, tol)
}

/// Whether the arrival vector lies in the chosen stability region.
///
/// TDMA-SVD uses the strict hyperplane test `Σ a_k / r_svd,k < 1`. IA regions
/// use the NNLS hull fit and accept residuals up to `tol·(1 + ‖a₁‖)`.
pub fn membership(cfg: &SystemConfig, a: &[f64], technique: RegionTechnique, tol: f64) -> Result<bool> {
    cfg.validate()?;
    if a.len() != cfg.n {
        return Err(Error::arg(format!("arrival vector has {} entries, N = {}", a.len(), cfg.n)));
    }
    if a.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
        return Err(Error::arg("arrival rates must be finite and non-negative"));
    }
    if a.iter().all(|&v| v == 0.0) {
        return Ok(true);
    }
    if technique == RegionTechnique::Svd {
        let mut load = 0.0;
        for (k, &v) in a.iter().enumerate() {
            load += v / svd_rate_pair(cfg, k)?;
        }
        return Ok(load < 1.0);
    }
    let verts = region_vertices(cfg, technique)?;
    let fit = hull_fit(&verts.points, a, NNLS_TOL)?;
    let a1 = (a.iter().map(|v| v * v).sum::<f64>() + 1.0).sqrt();
    Ok(fit.residual_norm <= tol * (1.0 + a1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rationale {
    /// IA never beats TDMA-SVD, so its region is covered.
    SvdCoversIa,
    OnlyIa,
    OnlySvd,
    /// Both work; TDMA-SVD needs no backhaul.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub technique: Technique,
    pub rationale: Rationale,
}

/// Chooses between IA (imperfect CSI) and TDMA-SVD for a known arrival vector.
pub fn select_technique(cfg: &SystemConfig, a: &[f64]) -> Result<Selection> {
    let in_svd = membership(cfg, a, RegionTechnique::Svd, MEMBERSHIP_TOL)?;
    if ia_vs_svd(cfg, RateMode::Imperfect)?.is_none() {
        return if in_svd {
            Ok(Selection {
                technique: Technique::TdmaSvd,
                rationale: Rationale::SvdCoversIa,
            })
        } else {
            Err(Error::InfeasibleArrival)
        };
    }
    let in_ia = membership(cfg, a, RegionTechnique::IaImperfect, MEMBERSHIP_TOL)?;
    let (technique, rationale) = match (in_ia, in_svd) {
        (true, false) => (Technique::Ia, Rationale::OnlyIa),
        (false, true) => (Technique::TdmaSvd, Rationale::OnlySvd),
        (true, true) => (Technique::TdmaSvd, Rationale::Both),
        (false, false) => return Err(Error::InfeasibleArrival),
    };
    Ok(Selection { technique, rationale })
}

/// Worst-case rate fraction kept when feedback shrinks from `B` to `b_prime`
/// bits: `(F(B') / F(B))^{N-1}`.
pub fn bits_fraction(cfg: &SystemConfig, b_prime: u32) -> Result<f64> {
    cfg.require_symmetric()?;
    if b_prime > cfg.bits {
        return Err(Error::arg(format!("B' = {b_prime} exceeds B = {}", cfg.bits)));
    }
    if b_prime == cfg.bits {
        return Ok(1.0);
    }
    let f_full = symmetric_f(cfg)?;
    let f_less = symmetric_f(&cfg.clone().with_bits(b_prime))?;
    Ok((f_less / f_full).powi(cfg.n as i32 - 1))
}

/// Fraction of the total rate kept when at most `n_prime` pairs may be active.
pub fn pairs_fraction(cfg: &SystemConfig, n_prime: usize) -> Result<f64> {
    cfg.require_symmetric()?;
    if n_prime == 0 || n_prime > cfg.n {
        return Err(Error::arg(format!("N' = {n_prime} outside 1..={}", cfg.n)));
    }
    let li = optimal_load(cfg, RateMode::Imperfect)?.l_unclamped;
    if li <= n_prime {
        return Ok(1.0);
    }
    let f = symmetric_f(cfg)?;
    let total = |l: usize| total_rate_real(symmetric_base(cfg), cfg.theta, f, l as f64);
    let reference = if cfg.n <= li { cfg.n } else { li };
    Ok(total(n_prime) / total(reference))
}

fn for_each_mask<T>(n: usize, init: T, fold: impl Fn(T, u64) -> T + Sync, merge: impl Fn(T, T) -> T + Sync) -> T
where
    T: Clone + Send + Sync,
{
    let total = 1u64 << n;
    if n < 12 {
        return (1..total).fold(init, &fold);
    }
    let chunk = 1u64 << 10;
    (0..total.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let lo = (c * chunk).max(1);
            let hi = ((c + 1) * chunk).min(total);
            (lo..hi).fold(init.clone(), &fold)
        })
        .reduce(|| init.clone(), &merge)
}

/// Guaranteed fraction of the approximate (averaged-interference) policy.
pub fn beta_a(cfg: &SystemConfig) -> Result<f64> {
    cfg.validate()?;
    guard(cfg.n)?;
    if cfg.n < 2 {
        return Ok(1.0);
    }
    let links = LinkFactors::new(cfg)?;
    let n = cfg.n;
    let dev: Vec<Vec<f64>> = (0..n)
        .map(|k| (0..n).map(|i| if i == k { 0.0 } else { links.g[k][i] - links.gbar[k] }).collect())
        .collect();
    let (lo, hi) = for_each_mask(
        n,
        (0.0f64, 0.0f64),
        |(lo, hi), mask| {
            let (mut lo, mut hi) = (lo, hi);
            for k in 0..n {
                if mask >> k & 1 == 0 {
                    continue;
                }
                let s: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| dev[k][i]).sum();
                let v = -s / (1.0 - links.gbar[k]);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (lo, hi)
        },
        |a, b| (a.0.min(b.0), a.1.max(b.1)),
    );
    Ok((1.0 + lo) / (1.0 + hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaP {
    pub value: f64,
    /// Minimising decision and pair.
    pub subset: DecisionVector,
    pub pair: usize,
    /// `min_i ζ_ki τ d / ζ_kk` over the minimising decision.
    pub c: f64,
}

/// Guaranteed fraction of the imperfect-CSI region relative to perfect CSI.
pub fn beta_p(cfg: &SystemConfig) -> Result<BetaP> {
    cfg.validate()?;
    guard(cfg.n)?;
    let n = cfg.n;
    let links = LinkFactors::new(cfg)?;
    // (value, mask, pair); ties keep the smaller mask then the smaller pair.
    let better = |a: (f64, u64, usize), b: (f64, u64, usize)| {
        if b.0 < a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
            b
        } else {
            a
        }
    };
    let best = for_each_mask(
        n,
        (1.0f64, 1u64, 0usize),
        |acc, mask| {
            let mut acc = acc;
            for k in 0..n {
                if mask >> k & 1 == 0 {
                    continue;
                }
                let v: f64 = (0..n)
                    .filter(|&i| i != k && mask >> i & 1 == 1)
                    .map(|i| 1.0 - links.g[k][i])
                    .product();
                acc = better(acc, (v, mask, k));
            }
            acc
        },
        better,
    );
    let (value, mask, pair) = best;
    let c = (0..n)
        .filter(|&i| i != pair && mask >> i & 1 == 1)
        .map(|i| cfg.zeta[pair][i] * cfg.tau * cfg.d as f64 / cfg.zeta[pair][pair])
        .fold(f64::INFINITY, f64::min);
    Ok(BetaP {
        value,
        subset: DecisionVector::from_mask(n, mask),
        pair,
        c,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitBudget {
    /// Closed-form bound `Q log2(c / (target^{-1/(L-1)} - 1))`.
    pub b_bound: f64,
    /// Smallest integer `B` whose `β_P` reaches the target.
    pub b_exact: u32,
}

/// Bits needed for `β_P >= target`: the closed-form bound and the scanned value.
pub fn bits_for_fraction(cfg: &SystemConfig, target: f64) -> Result<BitBudget> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::arg(format!("target fraction must lie in (0,1), got {target}")));
    }
    let bp = beta_p(cfg)?;
    let l = bp.subset.cardinality();
    if l < 2 {
        return Err(Error::arg("bit bound needs an interfering pair (N >= 2)"));
    }
    let q = cfg.derived().q as f64;
    let b_bound = q * (bp.c / (target.powf(-1.0 / (l as f64 - 1.0)) - 1.0)).log2();
    let mut probe = cfg.clone();
    for b in 0..=MAX_BITS {
        probe.bits = b;
        if beta_p(&probe)?.value >= target {
            return Ok(BitBudget { b_bound, b_exact: b });
        }
    }
    Err(Error::SearchBound {
        target,
        bound: MAX_BITS,
    })
}
