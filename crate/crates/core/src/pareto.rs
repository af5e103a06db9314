//! Epsilon-constraint scans over the retransmission parameter.
//!
//! Each grid point is solved exactly and simulated. Its variance threshold
//! comes from simulating the fixed retransmit-until-`m_max` policy on the same
//! model (or a global override). Feasible points are reduced to the
//! nondominated set on (analytic mean MSE, simulated variation), and the final
//! pick minimises the mean, then the variation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::{simulate_policy, EvalConfig, EvalReport};
use crate::mdp::{Policy, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::schemes::{build, DnMode, SchemeConfig, SchemeKind, SchemeModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub kind: SchemeKind,
    pub params: BTreeMap<String, f64>,
    pub label: String,
    pub policy: Policy,
    /// Stationary mean MSE of the policy.
    pub mu: f64,
    pub mu_sim: f64,
    pub sigma2: f64,
    pub theta: f64,
    pub feasible: bool,
    pub on_front: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontStatus {
    Ok,
    EmptyFeasibleSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub points: Vec<ScanPoint>,
    /// Feasible points that were dominated.
    pub dominated_count: usize,
    pub status: FrontStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOutcome {
    /// Every grid point in scan order.
    pub scanned: Vec<ScanPoint>,
    pub front: ParetoFront,
    pub selected: Option<ScanPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// One threshold for every grid point instead of the per-point one.
    pub theta_override: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            theta_override: None,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CcScanMode {
    /// One model per power fraction.
    Static,
    /// One model per (previous, current) level pair.
    DynamicPairs,
    /// A single model whose states remember the previous level.
    DynamicAugmented,
}

fn fixed_variation(model: &SchemeModel, eval: &EvalConfig) -> Result<EvalReport> {
    let p = model.fixed_harq_policy();
    simulate_policy(model, &p, eval)
}

/// Simulated variation of the fixed retransmit-until-`m_max` policy.
pub fn theta_upper_bound(cfg: &SchemeConfig, eval: &EvalConfig) -> Result<f64> {
    let base = match &cfg.kind {
        SchemeKind::FixedHarq { base } => (**base).clone(),
        k => k.clone(),
    };
    let cfg = SchemeConfig {
        kind: SchemeKind::FixedHarq { base: Box::new(base) },
        ..cfg.clone()
    };
    let model = build(&cfg)?;
    Ok(fixed_variation(&model, eval)?.sigma2_mse)
}

/// `a` dominates `b`: no worse in both objectives, better in one.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

/// Indices of the nondominated points; of exact duplicates only the first
/// survives.
pub fn nondominated(objs: &[(f64, f64)]) -> Vec<usize> {
    (0..objs.len())
        .filter(|&j| {
            !objs
                .iter()
                .enumerate()
                .any(|(i, &o)| dominates(o, objs[j]) || (i < j && o == objs[j]))
        })
        .collect()
}

fn point(cfg: &SchemeConfig, eval: &EvalConfig, opts: &ScanOptions) -> Result<ScanPoint> {
    let model = build(cfg)?;
    let report = model.solve(opts.tol, opts.max_iter)?;
    let mu = model.policy_mse(&report.policy)?;
    let sim = simulate_policy(&model, &report.policy, eval)?;
    let theta = match opts.theta_override {
        Some(t) => t,
        None => fixed_variation(&model, eval)?.sigma2_mse,
    };
    Ok(ScanPoint {
        kind: cfg.kind.clone(),
        params: model.params.clone(),
        label: model.label(),
        policy: report.policy,
        mu,
        mu_sim: sim.mu_mse,
        sigma2: sim.sigma2_mse,
        theta,
        feasible: sim.sigma2_mse <= theta,
        on_front: false,
    })
}

/// Marks the front and picks the final point.
pub fn finish(mut scanned: Vec<ScanPoint>) -> ScanOutcome {
    let feasible: Vec<usize> = (0..scanned.len()).filter(|&i| scanned[i].feasible).collect();
    let objs: Vec<(f64, f64)> = feasible.iter().map(|&i| (scanned[i].mu, scanned[i].sigma2)).collect();
    let keep: Vec<usize> = nondominated(&objs).into_iter().map(|k| feasible[k]).collect();
    for &i in &keep {
        scanned[i].on_front = true;
    }
    let points: Vec<ScanPoint> = keep.iter().map(|&i| scanned[i].clone()).collect();
    let selected = points
        .iter()
        .min_by(|a, b| a.mu.total_cmp(&b.mu).then(a.sigma2.total_cmp(&b.sigma2)))
        .cloned();
    let front = ParetoFront {
        dominated_count: feasible.len() - points.len(),
        status: if points.is_empty() {
            FrontStatus::EmptyFeasibleSet
        } else {
            FrontStatus::Ok
        },
        points,
    };
    ScanOutcome {
        scanned,
        front,
        selected,
    }
}

/// IR-HARQ over a grid of retransmission lengths. Only `cfg.kind` is
/// replaced; link, cost and horizon are taken from `cfg`.
pub fn scan_ir(cfg: &SchemeConfig, taus: &[f64], eval: &EvalConfig, opts: &ScanOptions) -> Result<ScanOutcome> {
    let mut taus = taus.to_vec();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let scanned = taus
        .iter()
        .map(|&tau| {
            let c = SchemeConfig {
                kind: SchemeKind::Ir { tau },
                ..cfg.clone()
            };
            point(&c, eval, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(scanned))
}

/// Chase-combining over a set of power fractions.
pub fn scan_cc(
    cfg: &SchemeConfig,
    alphas: &[f64],
    mode: CcScanMode,
    eval: &EvalConfig,
    opts: &ScanOptions,
) -> Result<ScanOutcome> {
    let mut alphas = alphas.to_vec();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let kinds: Vec<SchemeKind> = match mode {
        CcScanMode::Static => alphas.iter().map(|&alpha| SchemeKind::SnCc { alpha }).collect(),
        CcScanMode::DynamicPairs => (0..alphas.len())
            .flat_map(|l1| (0..alphas.len()).map(move |l2| (l1, l2)))
            .map(|(l1, l2)| SchemeKind::DnCc {
                levels: alphas.clone(),
                mode: DnMode::PairEnum { l1, l2 },
            })
            .collect(),
        CcScanMode::DynamicAugmented => vec![SchemeKind::DnCc {
            levels: alphas.clone(),
            mode: DnMode::Augmented,
        }],
    };
    let scanned = kinds
        .into_iter()
        .map(|kind| {
            let c = SchemeConfig { kind, ..cfg.clone() };
            point(&c, eval, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(scanned))
}
