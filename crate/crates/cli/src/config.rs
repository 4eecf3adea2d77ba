//! Experiment configuration: strict JSON schema plus `--set` overrides.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use iasched::policies::PolicyKind;
use iasched::rate_model::uniform_zeta;
use iasched::sim::ServiceModel;
use iasched::{RateMode, RegionTechnique, SystemConfig};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    #[serde(default)]
    pub region: RegionParams,
    #[serde(default)]
    pub fractions: FractionParams,
    #[serde(default)]
    pub membership: Option<ArrivalParams>,
    #[serde(default)]
    pub select: Option<ArrivalParams>,
    #[serde(default)]
    pub simulate: SimulateParams,
    #[serde(default)]
    pub sweep: SweepParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub n: usize,
    pub nt: usize,
    pub nr: usize,
    pub d: usize,
    pub power: f64,
    pub sigma2: f64,
    pub theta: f64,
    pub bits: u32,
    pub tau: f64,
    pub rate: f64,
    pub zeta: ZetaSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ZetaSpec {
    Uniform { direct: f64, cross: f64 },
    Matrix(Vec<Vec<f64>>),
}

impl SystemSpec {
    pub fn build(&self) -> Result<SystemConfig, CliError> {
        let zeta = match &self.zeta {
            ZetaSpec::Uniform { direct, cross } => uniform_zeta(self.n, *direct, *cross),
            ZetaSpec::Matrix(m) => m.clone(),
        };
        let cfg = SystemConfig {
            n: self.n,
            nt: self.nt,
            nr: self.nr,
            d: self.d,
            power: self.power,
            sigma2: self.sigma2,
            theta: self.theta,
            bits: self.bits,
            tau: self.tau,
            rate: self.rate,
            zeta,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionParams {
    pub technique: RegionTechnique,
}

impl Default for RegionParams {
    fn default() -> Self {
        RegionParams {
            technique: RegionTechnique::IaImperfect,
        }
    }
}

/// Inclusive arithmetic grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        if !(self.step > 0.0) || !(self.stop >= self.start) || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(CliError::Schema(format!(
                "grid needs step > 0 and stop >= start, got {:?}",
                self
            )));
        }
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|i| self.start + i as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FractionParams {
    /// Reduced bit budgets; defaults to `0..=B`.
    #[serde(default)]
    pub b_prime: Option<Vec<u32>>,
    /// Target `β_P` values for the bit-budget table.
    #[serde(default)]
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Arrivals {
    Uniform(f64),
    Vector(Vec<f64>),
}

impl Arrivals {
    pub fn resolve(&self, n: usize) -> Result<Vec<f64>, CliError> {
        let a = match self {
            Arrivals::Uniform(a) => vec![*a; n],
            Arrivals::Vector(v) => v.clone(),
        };
        if a.len() != n {
            return Err(CliError::Schema(format!("arrival vector has {} entries, N = {n}", a.len())));
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalParams {
    pub arrivals: Arrivals,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub policy: PolicyKind,
    pub csi: RateMode,
    pub arrivals: Arrivals,
    pub horizon: usize,
    pub service_model: ServiceModel,
}

impl Default for SimulateParams {
    fn default() -> Self {
        SimulateParams {
            policy: PolicyKind::MaxWeight,
            csi: RateMode::Imperfect,
            arrivals: Arrivals::Uniform(100.0),
            horizon: 100_000,
            service_model: ServiceModel::AnalyticBernoulli,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParams {
    pub policy: PolicyKind,
    pub csi: RateMode,
    pub grid: Grid,
    pub horizon: usize,
    pub replicas: usize,
    pub service_model: ServiceModel,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            policy: PolicyKind::MaxWeight,
            csi: RateMode::Imperfect,
            grid: Grid {
                start: 100.0,
                stop: 700.0,
                step: 25.0,
            },
            horizon: 100_000,
            replicas: 3,
            service_model: ServiceModel::AnalyticBernoulli,
        }
    }
}

/// Applies `key.path=value` overrides to the raw JSON document. Values parse
/// as JSON when possible and fall back to strings.
pub fn apply_overrides(doc: &mut Value, sets: &[String]) -> Result<(), CliError> {
    for item in sets {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| CliError::Schema(format!("--set expects key=value, got `{item}`")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut node = &mut *doc;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            if part.is_empty() {
                return Err(CliError::Schema(format!("empty path segment in `{key}`")));
            }
            let obj = node
                .as_object_mut()
                .ok_or_else(|| CliError::Schema(format!("`{key}` does not address an object field")))?;
            if i + 1 == parts.len() {
                obj.insert(part.to_string(), value.clone());
                break;
            }
            node = obj
                .entry(part.to_string())
                .or_insert_with(|| Value::Object(Default::default()));
        }
    }
    Ok(())
}

pub fn parse(doc: Value) -> Result<ExperimentConfig, CliError> {
    serde_json::from_value(doc).map_err(|e| CliError::Schema(format!("config schema: {e}")))
}
