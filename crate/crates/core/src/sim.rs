//! Monte Carlo estimators for the closed forms and the slot-level queue
//! simulator behind the stability sweeps.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp1, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policies::{PolicySpec, Scheduler, Technique};
use crate::rate_model::{svd_success, DecisionVector, LinkFactors, RateMode, SystemConfig};

/// Fraction of the mean total arrival used as the divergence slope threshold.
pub const DIVERGENCE_SLOPE_FRACTION: f64 = 0.01;
/// Poisson samples are truncated at this multiple of the largest mean.
pub const ARRIVAL_CAP_FACTOR: f64 = 50.0;

/// Reproducible random stream identified by `(seed, stream)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream);
        r
    }

    /// Deterministic sub-stream for the `index`-th task under this one.
    pub fn child(&self, index: u64) -> RngStream {
        RngStream {
            seed: self.seed,
            stream: splitmix(self.stream ^ splitmix(index.wrapping_add(1))),
        }
    }
}

/// Shared samplers for the quantized-CSI interference model.
#[derive(Debug, Clone)]
struct InterferenceLaws {
    gamma: Gamma<f64>,
    beta: Option<Beta<f64>>,
}

impl InterferenceLaws {
    fn new(cfg: &SystemConfig) -> Result<Self> {
        let dp = cfg.derived();
        let gamma = Gamma::new(dp.q as f64, 1.0 / dp.delta)
            .map_err(|e| Error::Numeric(format!("gamma law: {e}")))?;
        let beta = if dp.b_breve > 0.0 {
            Some(
                Beta::new(dp.a_breve, dp.b_breve)
                    .map_err(|e| Error::Numeric(format!("beta law: {e}")))?,
            )
        } else {
            None
        };
        Ok(InterferenceLaws { gamma, beta })
    }

    fn sinr<R: Rng + ?Sized>(&self, cfg: &SystemConfig, active: &[usize], k: usize, perfect: bool, rng: &mut R) -> f64 {
        let g: f64 = Exp1.sample(rng);
        let mut ri = 0.0;
        if !perfect {
            for &i in active {
                if i != k {
                    let x = self.gamma.sample(rng);
                    let y = self.beta.as_ref().map_or(1.0, |b| b.sample(rng));
                    ri += cfg.alpha(k, i) * cfg.d as f64 * x * y;
                }
            }
        }
        cfg.alpha(k, k) * g / (cfg.sigma2 + ri)
    }
}

fn perfect_flag(mode: RateMode) -> Result<bool> {
    match mode {
        RateMode::Imperfect => Ok(false),
        RateMode::Perfect => Ok(true),
        other => Err(Error::arg(format!("SINR sampling does not support {other:?}"))),
    }
}

fn check_active(cfg: &SystemConfig, active: &DecisionVector, k: usize) -> Result<()> {
    cfg.validate()?;
    if active.n() != cfg.n || k >= cfg.n || !active.contains(k) {
        return Err(Error::arg(format!("pair {k} is not active in the decision")));
    }
    Ok(())
}

/// One SINR draw per stream of pair `k`.
pub fn sample_stream_sinr<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    active: &DecisionVector,
    k: usize,
    mode: RateMode,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_active(cfg, active, k)?;
    let perfect = perfect_flag(mode)?;
    let laws = InterferenceLaws::new(cfg)?;
    let act = active.active();
    Ok((0..cfg.d).map(|_| laws.sinr(cfg, &act, k, perfect, rng)).collect())
}

/// Fraction of `n·d` sampled streams with SINR at least τ, and its binomial
/// standard error.
pub fn empirical_success<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    active: &DecisionVector,
    k: usize,
    mode: RateMode,
    n: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    check_active(cfg, active, k)?;
    if n < 1000 {
        return Err(Error::arg("empirical_success needs at least 1000 samples"));
    }
    let perfect = perfect_flag(mode)?;
    let laws = InterferenceLaws::new(cfg)?;
    let act = active.active();
    let draws = n * cfg.d;
    let hits = (0..draws)
        .filter(|_| laws.sinr(cfg, &act, k, perfect, rng) >= cfg.tau)
        .count();
    Ok(binomial(hits, draws))
}

fn binomial(hits: usize, n: usize) -> (f64, f64) {
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

/// Eigenvalues of `HHᴴ` (or `HᴴH`, whichever is `min(Nt,Nr)` square) for a
/// fresh complex Gaussian channel.
pub fn sample_channel_eigenvalues<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<Vec<f64>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for _ in 0..3 {
        let h = DMatrix::<Complex64>::from_fn(cfg.nr, cfg.nt, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * s, im * s)
        });
        let w = if cfg.nr <= cfg.nt {
            &h * h.adjoint()
        } else {
            h.adjoint() * &h
        };
        let eig = w.symmetric_eigenvalues();
        if eig.iter().all(|v| v.is_finite()) {
            return Ok(eig.iter().map(|v| v.max(0.0)).collect());
        }
    }
    Err(Error::Numeric("eigen-decomposition failed three times".into()))
}

/// SNR of a uniformly chosen eigenmode: `ζ P λ / (Nt σ²)` using the direct
/// gain of pair 0.
pub fn sample_svd_gain<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<f64> {
    sample_svd_gain_pair(cfg, 0, rng)
}

pub fn sample_svd_gain_pair<R: Rng + ?Sized>(cfg: &SystemConfig, k: usize, rng: &mut R) -> Result<f64> {
    cfg.validate()?;
    if k >= cfg.n {
        return Err(Error::arg(format!("pair index {k} out of range")));
    }
    let eig = sample_channel_eigenvalues(cfg, rng)?;
    let lambda = eig[rng.gen_range(0..eig.len())];
    Ok(cfg.zeta[k][k] * cfg.power * lambda / (cfg.nt as f64 * cfg.sigma2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalDistribution {
    Poisson,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalSpec {
    pub distribution: ArrivalDistribution,
    /// Mean bits per slot per pair.
    pub means: Vec<f64>,
    /// Per-slot truncation level.
    pub cap: f64,
}

impl ArrivalSpec {
    /// Poisson arrivals with the default cap of 50× the largest mean.
    pub fn poisson(means: Vec<f64>) -> Self {
        let top = means.iter().copied().fold(0.0, f64::max);
        ArrivalSpec {
            distribution: ArrivalDistribution::Poisson,
            means,
            cap: ARRIVAL_CAP_FACTOR * top,
        }
    }

    pub fn uniform_poisson(n: usize, a: f64) -> Self {
        Self::poisson(vec![a; n])
    }

    pub fn deterministic(means: Vec<f64>) -> Self {
        let top = means.iter().copied().fold(0.0, f64::max);
        ArrivalSpec {
            distribution: ArrivalDistribution::Deterministic,
            means,
            cap: top,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.means.len() != n {
            return Err(Error::arg(format!("arrival means have {} entries, N = {n}", self.means.len())));
        }
        if self.means.iter().any(|&a| !(a.is_finite() && a >= 0.0)) {
            return Err(Error::arg("arrival means must be finite and non-negative"));
        }
        if self.means.iter().any(|&a| a > self.cap) {
            return Err(Error::arg("arrival cap below a mean"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct ArrivalSampler {
    laws: Vec<Option<Poisson<f64>>>,
    means: Vec<f64>,
    cap: f64,
}

impl ArrivalSampler {
    fn new(spec: &ArrivalSpec) -> Result<Self> {
        let laws = spec
            .means
            .iter()
            .map(|&a| match spec.distribution {
                ArrivalDistribution::Poisson if a > 0.0 => Poisson::new(a)
                    .map(Some)
                    .map_err(|e| Error::Numeric(format!("poisson law: {e}"))),
                _ => Ok(None),
            })
            .collect::<Result<_>>()?;
        Ok(ArrivalSampler {
            laws,
            means: spec.means.clone(),
            cap: spec.cap,
        })
    }

    fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> f64 {
        match &self.laws[k] {
            Some(p) => p.sample(rng).min(self.cap),
            None => self.means[k],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceModel {
    /// Each stream succeeds independently with its closed-form probability.
    AnalyticBernoulli,
    /// Streams succeed when a sampled SINR clears τ.
    Distributional,
}

/// Draws the bits served to each active pair in one slot.
#[derive(Debug, Clone)]
pub struct ServiceSampler {
    cfg: SystemConfig,
    links: LinkFactors,
    svd_p: Vec<f64>,
    csi: RateMode,
    model: ServiceModel,
    laws: InterferenceLaws,
}

impl ServiceSampler {
    pub fn new(cfg: &SystemConfig, csi: RateMode, model: ServiceModel) -> Result<Self> {
        perfect_flag(csi)?;
        Ok(ServiceSampler {
            cfg: cfg.clone(),
            links: LinkFactors::new(cfg)?,
            svd_p: (0..cfg.n).map(|k| svd_success(cfg, cfg.zeta[k][k])).collect(),
            csi,
            model,
            laws: InterferenceLaws::new(cfg)?,
        })
    }

    /// Bits served to each pair (zero for inactive ones).
    pub fn serve<R: Rng + ?Sized>(
        &self,
        active: &[usize],
        technique: Technique,
        rng: &mut R,
        out: &mut [f64],
    ) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        let cfg = &self.cfg;
        let share = (1.0 - active.len() as f64 * cfg.theta) * cfg.rate;
        let perfect = self.csi == RateMode::Perfect;
        for &k in active {
            let mut ok = 0usize;
            for _ in 0..cfg.d {
                let success = match (self.model, technique) {
                    (ServiceModel::AnalyticBernoulli, Technique::Ia) => {
                        let p = if perfect {
                            self.links.perfect[k]
                        } else {
                            self.links.success_imperfect(active, k)
                        };
                        rng.gen::<f64>() < p
                    }
                    (ServiceModel::AnalyticBernoulli, Technique::TdmaSvd) => rng.gen::<f64>() < self.svd_p[k],
                    (ServiceModel::Distributional, Technique::Ia) => {
                        self.laws.sinr(cfg, active, k, perfect, rng) >= cfg.tau
                    }
                    (ServiceModel::Distributional, Technique::TdmaSvd) => {
                        sample_svd_gain_pair(cfg, k, rng)? >= cfg.tau
                    }
                };
                ok += success as usize;
            }
            out[k] = share * ok as f64;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueTrajectory {
    pub horizon: usize,
    /// Total backlog at the start of each slot.
    pub total: Vec<f64>,
    /// Time-average backlog per pair.
    pub pair_avg: Vec<f64>,
    /// `(1/M) Σ_t Σ_k q_k(t)`.
    pub total_avg: f64,
    /// Least-squares slope of the total backlog over the second half.
    pub slope: f64,
    pub divergent: bool,
    /// Share of non-idle slots that used IA.
    pub ia_share: f64,
}

/// Least-squares slope of `y` against its index.
pub fn ls_slope(y: &[f64]) -> f64 {
    let n = y.len();
    if n < 2 {
        return 0.0;
    }
    let tm = (n - 1) as f64 / 2.0;
    let ym = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, &v) in y.iter().enumerate() {
        let dt = t as f64 - tm;
        sxy += dt * (v - ym);
        sxx += dt * dt;
    }
    sxy / sxx
}

/// Runs the queue recursion `q(t+1) = max(q(t) - B(t), 0) + A(t)`.
pub fn run_queue_sim(
    cfg: &SystemConfig,
    policy: PolicySpec,
    arrivals: &ArrivalSpec,
    horizon: usize,
    service_model: ServiceModel,
    rng: &RngStream,
) -> Result<QueueTrajectory> {
    let scheduler = Scheduler::new(cfg, policy)?;
    simulate_with(cfg, &scheduler, arrivals, horizon, service_model, rng)
}

fn simulate_with(
    cfg: &SystemConfig,
    scheduler: &Scheduler,
    arrivals: &ArrivalSpec,
    horizon: usize,
    service_model: ServiceModel,
    stream: &RngStream,
) -> Result<QueueTrajectory> {
    if horizon == 0 {
        return Err(Error::arg("horizon must be at least one slot"));
    }
    let n = cfg.n;
    arrivals.validate(n)?;
    let service = ServiceSampler::new(cfg, scheduler.spec().csi, service_model)?;
    let arrive = ArrivalSampler::new(arrivals)?;
    let mut rng = stream.rng();

    let mut q = vec![0.0; n];
    let mut served = vec![0.0; n];
    let mut pair_sum = vec![0.0; n];
    let mut total = Vec::with_capacity(horizon);
    let (mut busy, mut ia_slots) = (0usize, 0usize);
    for _ in 0..horizon {
        total.push(q.iter().sum());
        for (s, &v) in pair_sum.iter_mut().zip(&q) {
            *s += v;
        }
        let out = scheduler.schedule(&q)?;
        let active = out.decision.active();
        if !active.is_empty() {
            busy += 1;
            ia_slots += (out.technique == Technique::Ia) as usize;
        }
        service.serve(&active, out.technique, &mut rng, &mut served)?;
        for k in 0..n {
            q[k] = (q[k] - served[k]).max(0.0) + arrive.sample(k, &mut rng);
        }
    }
    let h = horizon as f64;
    let slope = ls_slope(&total[horizon / 2..]);
    let arrival_total: f64 = arrivals.means.iter().sum();
    Ok(QueueTrajectory {
        horizon,
        total_avg: total.iter().sum::<f64>() / h,
        pair_avg: pair_sum.iter().map(|s| s / h).collect(),
        total,
        slope,
        divergent: slope > DIVERGENCE_SLOPE_FRACTION * arrival_total,
        ia_share: if busy == 0 { 0.0 } else { ia_slots as f64 / busy as f64 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub a: f64,
    /// Mean over replicas of the time-average total backlog.
    pub total_avg_queue: f64,
    /// Standard error of that mean across replicas (zero for one replica).
    pub stderr: f64,
    pub policy: String,
    pub technique_share_ia: f64,
    /// Mean second-half slope over replicas.
    pub slope: f64,
    /// Whether the mean slope exceeds the divergence threshold.
    pub divergent: bool,
    pub divergent_replicas: usize,
}

/// Uniform-arrival stability sweep with Poisson traffic. Grid points and
/// replicas run in parallel on independent sub-streams; output follows grid
/// order.
pub fn arrival_sweep(
    cfg: &SystemConfig,
    policy: PolicySpec,
    a_grid: &[f64],
    horizon: usize,
    replicas: usize,
    service_model: ServiceModel,
    rng: &RngStream,
) -> Result<Vec<SweepRow>> {
    if a_grid.is_empty() {
        return Err(Error::arg("arrival grid is empty"));
    }
    if replicas == 0 {
        return Err(Error::arg("need at least one replica"));
    }
    let scheduler = Scheduler::new(cfg, policy)?;
    let jobs: Vec<(usize, usize)> = (0..a_grid.len())
        .flat_map(|g| (0..replicas).map(move |r| (g, r)))
        .collect();
    let runs: Vec<QueueTrajectory> = jobs
        .par_iter()
        .map(|&(g, r)| {
            let arrivals = ArrivalSpec::uniform_poisson(cfg.n, a_grid[g]);
            let sub = rng.child((g * replicas + r) as u64);
            simulate_with(cfg, &scheduler, &arrivals, horizon, service_model, &sub)
        })
        .collect::<Result<_>>()?;
    let rows = a_grid
        .iter()
        .enumerate()
        .map(|(g, &a)| {
            let reps = &runs[g * replicas..(g + 1) * replicas];
            let m = replicas as f64;
            let mean = reps.iter().map(|t| t.total_avg).sum::<f64>() / m;
            let stderr = if replicas > 1 {
                let var = reps.iter().map(|t| (t.total_avg - mean).powi(2)).sum::<f64>() / (m - 1.0);
                (var / m).sqrt()
            } else {
                0.0
            };
            let slope = reps.iter().map(|t| t.slope).sum::<f64>() / m;
            SweepRow {
                a,
                total_avg_queue: mean,
                stderr,
                policy: policy.kind.name().to_string(),
                technique_share_ia: reps.iter().map(|t| t.ia_share).sum::<f64>() / m,
                slope,
                divergent: slope > DIVERGENCE_SLOPE_FRACTION * a * cfg.n as f64,
                divergent_replicas: reps.iter().filter(|t| t.divergent).count(),
            }
        })
        .collect();
    Ok(rows)
}

/// First grid value flagged divergent.
pub fn knee(rows: &[SweepRow]) -> Option<f64> {
    rows.iter().find(|r| r.divergent).map(|r| r.a)
}
