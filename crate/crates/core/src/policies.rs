//! Per-slot scheduling: brute-force Max-Weight, the sorted-queue algorithm
//! for symmetric networks, the averaged-interference approximation,
//! largest-queue TDMA-SVD and IA/SVD switching.

use serde::{Deserialize, Serialize};

use crate::error::{guard, Error, Result};
use crate::rate_model::{
    phi_table, svd_rate, symmetric_profile, DecisionVector, RateMode, RateTable, SystemConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technique {
    Ia,
    TdmaSvd,
}

/// Queue backlog per pair, in bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    q: Vec<f64>,
}

impl QueueState {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        check_queues(&q)?;
        Ok(QueueState { q })
    }

    pub fn zeros(n: usize) -> Self {
        QueueState { q: vec![0.0; n] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }
}

fn check_queues(q: &[f64]) -> Result<()> {
    if q.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
        return Err(Error::arg("queue lengths must be finite and non-negative"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleOutcome {
    pub decision: DecisionVector,
    pub technique: Technique,
    /// Rate-weighted queue sum of the decision under the policy's rates.
    pub objective: f64,
}

impl ScheduleOutcome {
    fn idle(n: usize, technique: Technique) -> Self {
        ScheduleOutcome {
            decision: DecisionVector::empty(n),
            technique,
            objective: 0.0,
        }
    }
}

fn check_len(n: usize, q: &[f64]) -> Result<()> {
    if q.len() != n {
        return Err(Error::arg(format!("queue vector has {} entries, expected {n}", q.len())));
    }
    check_queues(q)
}

/// Exhaustive Max-Weight over all `2^N` decisions of a rate table.
pub fn maxweight_brute(rates: &RateTable, q: &[f64]) -> Result<ScheduleOutcome> {
    let n = rates.n();
    guard(n)?;
    check_len(n, q)?;
    let mut best_mask = 0u64;
    let mut best = 0.0;
    for mask in 1u64..(1 << n) {
        let v = rates.weighted(mask, q);
        if v > best || (v == best && mask_precedes(n, mask, best_mask)) {
            best = v;
            best_mask = mask;
        }
    }
    let technique = if rates.mode() == RateMode::Svd {
        Technique::TdmaSvd
    } else {
        Technique::Ia
    };
    Ok(ScheduleOutcome {
        decision: DecisionVector::from_mask(n, best_mask),
        technique,
        objective: best,
    })
}

pub(crate) fn mask_precedes(n: usize, a: u64, b: u64) -> bool {
    DecisionVector::from_mask(n, a).precedes(&DecisionVector::from_mask(n, b))
}

fn descending(q: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..q.len()).collect();
    order.sort_by(|&i, &j| q[j].total_cmp(&q[i]));
    order
}

/// Sorted-queue Max-Weight for symmetric networks. `per_user[l-1]` is the
/// per-user rate when `l` pairs are active.
pub fn sorted_maxweight(per_user: &[f64], q: &[f64]) -> Result<ScheduleOutcome> {
    let n = per_user.len();
    check_len(n, q)?;
    let order = descending(q);
    let mut prefix = 0.0;
    let mut best = 0.0;
    let mut chosen = 0;
    for l in 1..=n {
        prefix += q[order[l - 1]];
        let v = per_user[l - 1] * prefix;
        if v > best {
            best = v;
            chosen = l;
        }
    }
    Ok(ScheduleOutcome {
        decision: DecisionVector::from_active(n, &order[..chosen])?,
        technique: Technique::Ia,
        objective: best,
    })
}

/// Max-Weight for a symmetric network under imperfect CSI, in `O(N log N)`
/// after the rate profile.
pub fn maxweight_symmetric(cfg: &SystemConfig, q: &[f64]) -> Result<ScheduleOutcome> {
    sorted_maxweight(&symmetric_profile(cfg, RateMode::Imperfect)?, q)
}

/// Averaged-interference schedule over a `φ` table (`phi[k][l-1]`). The
/// objective is `φ`-weighted.
pub fn approx_schedule_with(phi: &[Vec<f64>], q: &[f64]) -> Result<ScheduleOutcome> {
    let n = phi.len();
    check_len(n, q)?;
    let mut best = 0.0;
    let mut chosen: Vec<usize> = Vec::new();
    let mut pro = vec![0.0; n];
    for l in 1..=n {
        for k in 0..n {
            pro[k] = phi[k][l - 1] * q[k];
        }
        let order = descending(&pro);
        let ws: f64 = order[..l].iter().map(|&k| pro[k]).sum();
        if ws > best {
            best = ws;
            chosen = order[..l].to_vec();
        }
    }
    Ok(ScheduleOutcome {
        decision: DecisionVector::from_active(n, &chosen)?,
        technique: Technique::Ia,
        objective: best,
    })
}

pub fn approx_schedule(cfg: &SystemConfig, q: &[f64]) -> Result<ScheduleOutcome> {
    approx_schedule_with(&phi_table(cfg)?, q)
}

/// Serve the single longest queue; ties go to the lowest index.
pub fn svd_schedule(q: &[f64], r_svd: f64) -> Result<ScheduleOutcome> {
    check_queues(q)?;
    let n = q.len();
    let mut best: Option<usize> = None;
    for k in 0..n {
        if q[k] > 0.0 && best.map_or(true, |b| q[k] > q[b]) {
            best = Some(k);
        }
    }
    Ok(match best {
        None => ScheduleOutcome::idle(n, Technique::TdmaSvd),
        Some(k) => ScheduleOutcome {
            decision: DecisionVector::from_active(n, &[k])?,
            technique: Technique::TdmaSvd,
            objective: r_svd * q[k],
        },
    })
}

/// Larger of the IA and TDMA-SVD Max-Weight values; IA wins exact ties.
pub fn switching_with(per_user: &[f64], r_svd: f64, q: &[f64]) -> Result<ScheduleOutcome> {
    let ia = sorted_maxweight(per_user, q)?;
    let svd = svd_schedule(q, r_svd)?;
    Ok(if svd.objective > ia.objective { svd } else { ia })
}

pub fn switching_schedule(cfg: &SystemConfig, q: &[f64], mode: RateMode) -> Result<ScheduleOutcome> {
    let profile = match mode {
        RateMode::Imperfect | RateMode::Perfect => symmetric_profile(cfg, mode)?,
        other => return Err(Error::arg(format!("switching does not support {other:?}"))),
    };
    switching_with(&profile, svd_rate(cfg)?, q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Exhaustive Max-Weight over a rate table.
    MaxWeightBrute,
    /// Sorted-queue Max-Weight (symmetric networks).
    MaxWeight,
    /// Averaged-interference approximation.
    Approximate,
    Svd,
    Switching,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::MaxWeightBrute => "max_weight_brute",
            PolicyKind::MaxWeight => "max_weight",
            PolicyKind::Approximate => "approximate",
            PolicyKind::Svd => "svd",
            PolicyKind::Switching => "switching",
        }
    }
}

/// Policy plus the CSI model (imperfect or perfect) its IA decisions assume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub csi: RateMode,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        PolicySpec {
            kind,
            csi: RateMode::Imperfect,
        }
    }
}

/// A policy with its rate tables precomputed once per configuration.
#[derive(Debug, Clone)]
pub struct Scheduler {
    spec: PolicySpec,
    n: usize,
    profile: Vec<f64>,
    table: Option<RateTable>,
    phi: Vec<Vec<f64>>,
    r_svd: f64,
}

impl Scheduler {
    pub fn new(cfg: &SystemConfig, spec: PolicySpec) -> Result<Self> {
        cfg.validate()?;
        if !matches!(spec.csi, RateMode::Imperfect | RateMode::Perfect) {
            return Err(Error::arg("policy CSI model must be imperfect or perfect"));
        }
        let mut s = Scheduler {
            spec,
            n: cfg.n,
            profile: Vec::new(),
            table: None,
            phi: Vec::new(),
            r_svd: 0.0,
        };
        match spec.kind {
            PolicyKind::MaxWeightBrute => s.table = Some(RateTable::build(cfg, spec.csi)?),
            PolicyKind::MaxWeight => s.profile = symmetric_profile(cfg, spec.csi)?,
            PolicyKind::Approximate => s.phi = phi_table(cfg)?,
            PolicyKind::Svd => s.r_svd = svd_rate(cfg)?,
            PolicyKind::Switching => {
                s.profile = symmetric_profile(cfg, spec.csi)?;
                s.r_svd = svd_rate(cfg)?;
            }
        }
        Ok(s)
    }

    pub fn spec(&self) -> PolicySpec {
        self.spec
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn schedule(&self, q: &[f64]) -> Result<ScheduleOutcome> {
        match self.spec.kind {
            PolicyKind::MaxWeightBrute => maxweight_brute(self.table.as_ref().unwrap(), q),
            PolicyKind::MaxWeight => sorted_maxweight(&self.profile, q),
            PolicyKind::Approximate => approx_schedule_with(&self.phi, q),
            PolicyKind::Svd => {
                check_len(self.n, q)?;
                svd_schedule(q, self.r_svd)
            }
            PolicyKind::Switching => switching_with(&self.profile, self.r_svd, q),
        }
    }
}
