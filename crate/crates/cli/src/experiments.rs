use serde_json::json;

use iasched::policies::PolicySpec;
use iasched::rate_model::{svd_rate, symmetric_rate};
use iasched::region_geometry::{
    beta_a, beta_p, bits_for_fraction, bits_fraction, gap_fraction_perfect, membership,
    optimal_load, pairs_fraction, region_vertices, select_technique, MEMBERSHIP_TOL,
};
use iasched::sim::{arrival_sweep, run_queue_sim, ArrivalSpec};
use iasched::{RateMode, RegionTechnique, RngStream, SystemConfig};

use crate::config::{ArrivalParams, FractionParams, RegionParams, SimulateParams, SweepParams};
use crate::output::{Artifact, Cell};
use crate::CliError;

pub fn rates(cfg: &SystemConfig) -> Result<Vec<Artifact>, CliError> {
    let mut t = Artifact::table("rates", &["L", "r", "mu", "r_total", "mu_total", "r_svd"]);
    let r_svd = svd_rate(cfg)?;
    for l in 1..=cfg.n {
        t.push(vec![
            l.into(),
            symmetric_rate(cfg, l, RateMode::Imperfect, false)?.into(),
            symmetric_rate(cfg, l, RateMode::Perfect, false)?.into(),
            symmetric_rate(cfg, l, RateMode::Imperfect, true)?.into(),
            symmetric_rate(cfg, l, RateMode::Perfect, true)?.into(),
            r_svd.into(),
        ]);
    }
    Ok(vec![t])
}

pub fn region(cfg: &SystemConfig, p: &RegionParams) -> Result<Vec<Artifact>, CliError> {
    let set = region_vertices(cfg, p.technique)?;
    let mut header: Vec<String> = vec!["label".into(), "technique".into(), "mask".into()];
    header.extend((1..=cfg.n).map(|k| format!("x{k}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Artifact::table("region", &header_refs);
    for (pt, lab) in set.points.iter().zip(&set.labels) {
        let mut row: Vec<Cell> = vec![
            lab.set.clone().into(),
            technique_name(lab.technique).into(),
            Cell::Int(lab.mask as i64),
        ];
        row.extend(pt.iter().map(|&v| Cell::Num(v)));
        t.push(row);
    }
    t.json = Some(serde_json::to_value(&set).expect("serializable"));
    Ok(vec![t])
}

fn technique_name(t: iasched::Technique) -> &'static str {
    match t {
        iasched::Technique::Ia => "ia",
        iasched::Technique::TdmaSvd => "tdma_svd",
    }
}

pub fn fractions(cfg: &SystemConfig, p: &FractionParams) -> Result<Vec<Artifact>, CliError> {
    let mut t = Artifact::table("fractions", &["metric", "x", "value"]);
    if cfg.uniform_links().is_some() {
        let grid: Vec<u32> = p.b_prime.clone().unwrap_or_else(|| (0..=cfg.bits).collect());
        for b in grid {
            t.push(vec!["bits_fraction".into(), b.into(), bits_fraction(cfg, b)?.into()]);
        }
        for n in 1..=cfg.n {
            t.push(vec!["pairs_fraction".into(), n.into(), pairs_fraction(cfg, n)?.into()]);
        }
        t.push(vec!["gap_fraction_perfect".into(), Cell::Int(0), gap_fraction_perfect(cfg)?.into()]);
        let li = optimal_load(cfg, RateMode::Imperfect)?;
        t.push(vec!["l0_real".into(), Cell::Int(0), li.l0_real.into()]);
        t.push(vec!["l_int".into(), Cell::Int(0), li.l_int.into()]);
    }
    t.push(vec!["beta_a".into(), Cell::Int(0), beta_a(cfg)?.into()]);
    t.push(vec!["beta_p".into(), Cell::Int(0), beta_p(cfg)?.value.into()]);
    for &target in &p.targets {
        let b = bits_for_fraction(cfg, target)?;
        t.push(vec!["b_bound".into(), target.into(), b.b_bound.into()]);
        t.push(vec!["b_exact".into(), target.into(), b.b_exact.into()]);
    }
    Ok(vec![t])
}

fn need<'a>(p: Option<&'a ArrivalParams>, what: &str) -> Result<&'a ArrivalParams, CliError> {
    p.ok_or_else(|| CliError::Schema(format!("config needs a `{what}` block with `arrivals`")))
}

pub fn membership_check(cfg: &SystemConfig, p: Option<&ArrivalParams>) -> Result<Vec<Artifact>, CliError> {
    let a = need(p, "membership")?.arrivals.resolve(cfg.n)?;
    let mut t = Artifact::table("membership", &["technique", "member"]);
    let mut techniques = vec![RegionTechnique::Svd];
    if cfg.uniform_links().is_some() {
        techniques = vec![
            RegionTechnique::IaImperfect,
            RegionTechnique::IaPerfect,
            RegionTechnique::Svd,
            RegionTechnique::Switching,
        ];
    }
    for tech in techniques {
        let name = serde_json::to_value(tech).expect("serializable");
        t.push(vec![
            name.as_str().unwrap_or_default().into(),
            membership(cfg, &a, tech, MEMBERSHIP_TOL)?.into(),
        ]);
    }
    Ok(vec![t])
}

pub fn select(cfg: &SystemConfig, p: Option<&ArrivalParams>) -> Result<Vec<Artifact>, CliError> {
    let a = need(p, "select")?.arrivals.resolve(cfg.n)?;
    let s = select_technique(cfg, &a)?;
    let mut t = Artifact::table("select", &["technique", "rationale"]);
    let rationale = serde_json::to_value(s.rationale).expect("serializable");
    t.push(vec![
        technique_name(s.technique).into(),
        rationale.as_str().unwrap_or_default().into(),
    ]);
    Ok(vec![t])
}

pub fn simulate(cfg: &SystemConfig, p: &SimulateParams, rng: &RngStream) -> Result<Vec<Artifact>, CliError> {
    let a = p.arrivals.resolve(cfg.n)?;
    let spec = PolicySpec {
        kind: p.policy,
        csi: p.csi,
    };
    let traj = run_queue_sim(cfg, spec, &ArrivalSpec::poisson(a), p.horizon, p.service_model, rng)?;
    let mut slots = Artifact::table("simulate", &["slot", "total_queue"]);
    for (i, &v) in traj.total.iter().enumerate() {
        slots.push(vec![i.into(), v.into()]);
    }
    slots.json = Some(serde_json::to_value(&traj).expect("serializable"));
    let mut summary = Artifact::table("simulate_summary", &["metric", "value"]);
    summary.push(vec!["total_avg_queue".into(), traj.total_avg.into()]);
    summary.push(vec!["slope".into(), traj.slope.into()]);
    summary.push(vec!["divergent".into(), traj.divergent.into()]);
    summary.push(vec!["technique_share_ia".into(), traj.ia_share.into()]);
    for (k, v) in traj.pair_avg.iter().enumerate() {
        summary.push(vec![format!("pair_avg_{k}").into(), (*v).into()]);
    }
    summary.json = Some(json!({
        "total_avg_queue": traj.total_avg,
        "slope": traj.slope,
        "divergent": traj.divergent,
        "technique_share_ia": traj.ia_share,
        "pair_avg": traj.pair_avg,
    }));
    Ok(vec![slots, summary])
}

pub fn sweep(cfg: &SystemConfig, p: &SweepParams, rng: &RngStream) -> Result<Vec<Artifact>, CliError> {
    let grid = p.grid.points()?;
    let spec = PolicySpec {
        kind: p.policy,
        csi: p.csi,
    };
    let rows = arrival_sweep(cfg, spec, &grid, p.horizon, p.replicas, p.service_model, rng)?;
    let mut t = Artifact::table(
        "sweep",
        &["a", "total_avg_queue", "stderr", "policy", "technique_share_ia"],
    );
    for r in &rows {
        t.push(vec![
            r.a.into(),
            r.total_avg_queue.into(),
            r.stderr.into(),
            r.policy.clone().into(),
            r.technique_share_ia.into(),
        ]);
    }
    t.json = Some(serde_json::to_value(&rows).expect("serializable"));
    Ok(vec![t])
}
