//! HARQ schemes as finite MDPs over `(m, q)` states.

mod aoi;
mod cc;
mod ir;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use aoi::{Aoi, AoiScale, MAX_TAU_DENOMINATOR};
pub use cc::{build_dn_cc_mdp, build_sn_cc_mdp};
pub use ir::{build_arq_mdp, build_ir_mdp};

use crate::error::{Error, Result};
use crate::fbl::{eps_cc, eps_ir, ir_lengths, FblLink};
use crate::lti::CostModel;
use crate::mdp::{self, ActionId, FiniteMdp, Policy, SolveReport, StateId, Transition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DnMode {
    /// `(m, q)` states; the first-transmission context uses level `l1`, the
    /// retransmission level `l2` (indices into `levels`).
    PairEnum { l1: usize, l2: usize },
    /// States carry the previous-slot context; one action per level.
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeKind {
    Arq,
    /// The base scheme under a fixed retransmit-until-`m_max` policy.
    FixedHarq { base: Box<SchemeKind> },
    Ir { tau: f64 },
    SnCc { alpha: f64 },
    DnCc { levels: Vec<f64>, mode: DnMode },
    StdIr,
    StdCc,
}

impl SchemeKind {
    /// Maps the standard schemes onto their parametrised forms.
    pub fn normalized(&self) -> SchemeKind {
        match self {
            SchemeKind::StdIr => SchemeKind::Ir { tau: 1.0 },
            SchemeKind::StdCc => SchemeKind::SnCc { alpha: 1.0 },
            SchemeKind::FixedHarq { base } => SchemeKind::FixedHarq {
                base: Box::new(base.normalized()),
            },
            k => k.clone(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SchemeKind::Arq => "ARQ".into(),
            SchemeKind::FixedHarq { base } => format!("fixed-{}", base.label()),
            SchemeKind::Ir { tau } => format!("IR-HARQ(tau={tau})"),
            SchemeKind::SnCc { alpha } => format!("SN-CC-HARQ(alpha={alpha})"),
            SchemeKind::DnCc { mode: DnMode::Augmented, .. } => "DN-CC-HARQ".into(),
            SchemeKind::DnCc {
                levels,
                mode: DnMode::PairEnum { l1, l2 },
            } => format!(
                "DN-CC-HARQ(pair={},{})",
                levels.get(*l1).copied().unwrap_or(f64::NAN),
                levels.get(*l2).copied().unwrap_or(f64::NAN)
            ),
            SchemeKind::StdIr => "IR-HARQ".into(),
            SchemeKind::StdCc => "CC-HARQ".into(),
        }
    }

    fn is_cc_family(&self) -> bool {
        matches!(
            self.normalized(),
            SchemeKind::SnCc { .. } | SchemeKind::DnCc { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    MseCost,
    /// Minimise the average age itself.
    DelayCost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub link: FblLink,
    pub q_max: u32,
    pub cost: CostModel,
    pub objective: Objective,
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        if self.q_max < 2 {
            return Err(Error::config("scheme.q_max", "must be >= 2"));
        }
        check_kind(&self.kind, &self.link, false)
    }
}

fn check_alpha(field: &str, a: f64) -> Result<()> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::config(field, format!("must lie in (0, 1], got {a}")));
    }
    Ok(())
}

fn check_kind(kind: &SchemeKind, link: &FblLink, nested: bool) -> Result<()> {
    if kind.is_cc_family() && link.m_max != 2 {
        return Err(Error::config(
            "link.m_max",
            "Chase-combining schemes are defined for m_max = 2",
        ));
    }
    match kind {
        SchemeKind::Arq => {
            if nested {
                return Err(Error::config("scheme.base", "ARQ cannot be run as fixed HARQ"));
            }
        }
        SchemeKind::FixedHarq { base } => {
            if nested {
                return Err(Error::config("scheme.base", "fixed HARQ cannot be nested"));
            }
            check_kind(base, link, true)?;
        }
        SchemeKind::Ir { tau } => {
            AoiScale::for_tau(*tau)?;
            if link.m_max < 2 {
                return Err(Error::config("link.m_max", "IR-HARQ needs m_max >= 2"));
            }
        }
        SchemeKind::StdIr => {
            if link.m_max < 2 {
                return Err(Error::config("link.m_max", "IR-HARQ needs m_max >= 2"));
            }
        }
        SchemeKind::SnCc { alpha } => check_alpha("scheme.alpha", *alpha)?,
        SchemeKind::StdCc => {}
        SchemeKind::DnCc { levels, mode } => {
            if levels.is_empty() {
                return Err(Error::config("scheme.levels", "must not be empty"));
            }
            for &a in levels {
                check_alpha("scheme.levels", a)?;
            }
            if let DnMode::PairEnum { l1, l2 } = mode {
                if *l1 >= levels.len() || *l2 >= levels.len() {
                    return Err(Error::config(
                        "scheme.mode",
                        format!("pair ({l1}, {l2}) out of range for {} levels", levels.len()),
                    ));
                }
            }
        }
    }
    Ok(())
}

/// First-transmission context of a pending update in augmented DN-CC models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrevContext {
    None,
    Solo,
    SicOk(u16),
    SicFail(u16),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SchemeState {
    /// Transmissions of the current update so far.
    pub m: u32,
    pub q: Aoi,
    /// The latest update is still undelivered.
    pub pending: bool,
    pub ctx: PrevContext,
}

impl SchemeState {
    /// `(1, 1)` right after a delivery.
    pub fn start(scale: &AoiScale) -> Self {
        Self {
            m: 1,
            q: scale.slots(1),
            pending: false,
            ctx: PrevContext::None,
        }
    }
}

/// How one slot plays out for a `(state, action)` pair; consumed by the
/// simulator so it draws packet outcomes rather than successor indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlotPlan {
    Single {
        eps: f64,
        ok: Option<StateId>,
        fail: Option<StateId>,
    },
    Noma {
        eps_old: f64,
        eps_new: f64,
        both: Option<StateId>,
        old_only: Option<StateId>,
        old_fail: Option<StateId>,
    },
}

pub(crate) enum Outcome {
    Single {
        eps: f64,
        ok: SchemeState,
        fail: SchemeState,
    },
    Noma {
        eps_old: f64,
        eps_new: f64,
        both: SchemeState,
        old_only: SchemeState,
        old_fail: SchemeState,
    },
}

impl Outcome {
    fn branches(&self) -> Vec<(SchemeState, f64)> {
        match *self {
            Outcome::Single { eps, ok, fail } => vec![(ok, 1.0 - eps), (fail, eps)],
            Outcome::Noma {
                eps_old,
                eps_new,
                both,
                old_only,
                old_fail,
            } => vec![
                (both, (1.0 - eps_old) * (1.0 - eps_new)),
                (old_only, (1.0 - eps_old) * eps_new),
                (old_fail, eps_old),
            ],
        }
    }
}

#[derive(Debug, Clone)]
pub struct SchemeModel {
    pub kind: SchemeKind,
    pub objective: Objective,
    pub mdp: FiniteMdp,
    pub states: Vec<SchemeState>,
    pub scale: AoiScale,
    pub m_max: u32,
    /// Age of each state in slots.
    pub state_age: Vec<f64>,
    /// Estimation MSE of each state.
    pub state_mse: Vec<f64>,
    /// Power fraction of each retransmission action (`None` for action 0 and
    /// for IR/ARQ retransmissions).
    pub action_alpha: Vec<Option<f64>>,
    /// `plans[s][i]` belongs to `mdp.rows[s][i]`.
    pub plans: Vec<Vec<SlotPlan>>,
    /// Set for fixed HARQ, which is evaluated rather than optimised.
    pub fixed_policy: Option<Policy>,
    pub params: BTreeMap<String, f64>,
}

impl SchemeModel {
    pub fn label(&self) -> String {
        self.kind.label()
    }

    pub fn state_of(&self, s: &SchemeState) -> Option<StateId> {
        self.states.iter().position(|x| x == s)
    }

    pub fn plan(&self, state: StateId, action: ActionId) -> Option<&SlotPlan> {
        let i = self.mdp.rows[state]
            .binary_search_by_key(&action, |r| r.action)
            .ok()?;
        Some(&self.plans[state][i])
    }

    fn tag(&self, mut p: Policy) -> Policy {
        p.scheme_label = self.label();
        p.params = self.params.clone();
        p
    }

    /// Optimal policy for the model's objective, or the fixed policy's
    /// evaluation for fixed HARQ.
    pub fn solve(&self, tol: f64, max_iter: usize) -> Result<SolveReport> {
        let mut report = match &self.fixed_policy {
            Some(p) => {
                let (g, bias) = mdp::evaluate_policy(&self.mdp, p)?;
                SolveReport {
                    policy: p.clone(),
                    average_cost: g,
                    bias,
                    iterations: 0,
                    span_residual: 0.0,
                }
            }
            None => mdp::relative_value_iteration(&self.mdp, tol, max_iter)?,
        };
        report.policy = self.tag(report.policy);
        Ok(report)
    }

    /// Retransmit while the update is pending and `m < m_max`, at the
    /// largest available power fraction; send fresh otherwise.
    pub fn fixed_harq_policy(&self) -> Policy {
        let decision = self
            .states
            .iter()
            .enumerate()
            .map(|(s, st)| {
                if !(st.pending && st.m < self.m_max) {
                    return 0;
                }
                self.mdp.rows[s]
                    .iter()
                    .filter(|r| r.action != 0)
                    .max_by(|a, b| {
                        let fa = self.action_alpha[a.action].unwrap_or(1.0);
                        let fb = self.action_alpha[b.action].unwrap_or(1.0);
                        fa.total_cmp(&fb).then(b.action.cmp(&a.action))
                    })
                    .map_or(0, |r| r.action)
            })
            .collect();
        self.tag(Policy::new(decision))
    }

    /// Average MSE of a policy, whatever the model's objective.
    pub fn policy_mse(&self, policy: &Policy) -> Result<f64> {
        let pi = mdp::stationary_distribution(&self.mdp, policy)?;
        Ok(pi.iter().zip(&self.state_mse).map(|(p, c)| p * c).sum())
    }

    /// Average age of a policy.
    pub fn policy_age(&self, policy: &Policy) -> Result<f64> {
        let pi = mdp::stationary_distribution(&self.mdp, policy)?;
        Ok(pi.iter().zip(&self.state_age).map(|(p, c)| p * c).sum())
    }
}

/// Breadth-first construction from the start state.
pub(crate) struct Spec<'a> {
    pub kind: SchemeKind,
    pub cfg: &'a SchemeConfig,
    pub scale: AoiScale,
    pub action_labels: Vec<String>,
    pub action_alpha: Vec<Option<f64>>,
    pub start: SchemeState,
    pub allowed: &'a dyn Fn(&SchemeState) -> Vec<ActionId>,
    pub outcome: &'a dyn Fn(&SchemeState, ActionId) -> Result<Outcome>,
    pub label: &'a dyn Fn(&SchemeState) -> String,
    pub params: BTreeMap<String, f64>,
}

pub(crate) fn build_model(spec: Spec<'_>) -> Result<SchemeModel> {
    let mut states = vec![spec.start];
    let mut index: HashMap<SchemeState, StateId> = HashMap::from([(spec.start, 0)]);
    let mut raw: Vec<Vec<(ActionId, Outcome)>> = Vec::new();
    let mut k = 0;
    while k < states.len() {
        let s = states[k];
        let mut row = Vec::new();
        for a in (spec.allowed)(&s) {
            let out = (spec.outcome)(&s, a)?;
            for (next, p) in out.branches() {
                if p > 0.0 && !index.contains_key(&next) {
                    index.insert(next, states.len());
                    states.push(next);
                }
            }
            row.push((a, out));
        }
        raw.push(row);
        k += 1;
    }

    let cfg = spec.cfg;
    let scale = spec.scale;
    let labels: Vec<String> = states.iter().map(|s| (spec.label)(s)).collect();
    let mut mdp = FiniteMdp::new(labels, spec.action_labels);
    let state_age: Vec<f64> = states.iter().map(|s| scale.value(s.q)).collect();
    let state_mse = state_age
        .iter()
        .map(|&q| cfg.cost.cost(q))
        .collect::<Result<Vec<f64>>>()?;
    let cost = |s: StateId| match cfg.objective {
        Objective::MseCost => state_mse[s],
        Objective::DelayCost => state_age[s],
    };
    let id = |st: &SchemeState| index.get(st).copied();
    let mut plans = Vec::with_capacity(states.len());
    for (s, row) in raw.iter().enumerate() {
        let mut prow = Vec::with_capacity(row.len());
        for (a, out) in row {
            let mut next: Vec<Transition> = Vec::new();
            for (st, p) in out.branches() {
                if p <= 0.0 {
                    continue;
                }
                let j = index[&st];
                match next.iter_mut().find(|t| t.next == j) {
                    Some(t) => t.prob += p,
                    None => next.push(Transition { next: j, prob: p }),
                }
            }
            mdp.set_row(s, *a, cost(s), next);
            prow.push(match *out {
                Outcome::Single { eps, ok, fail } => SlotPlan::Single {
                    eps,
                    ok: id(&ok),
                    fail: id(&fail),
                },
                Outcome::Noma {
                    eps_old,
                    eps_new,
                    both,
                    old_only,
                    old_fail,
                } => SlotPlan::Noma {
                    eps_old,
                    eps_new,
                    both: id(&both),
                    old_only: id(&old_only),
                    old_fail: id(&old_fail),
                },
            });
        }
        plans.push(prow);
    }

    // Unichain failures (e.g. a link that never delivers) are left to the
    // solvers; such models can still be simulated.
    let violations: Vec<_> = mdp::validate(&mdp)
        .into_iter()
        .filter(|v| v.kind != mdp::ViolationKind::NotUnichain)
        .collect();
    if let Some(v) = violations.first() {
        return Err(Error::InvalidModel(format!(
            "{}: {} violation(s), first: {v}",
            spec.kind.label(),
            violations.len()
        )));
    }

    Ok(SchemeModel {
        kind: spec.kind,
        objective: cfg.objective,
        mdp,
        states,
        scale,
        m_max: cfg.link.m_max,
        state_age,
        state_mse,
        action_alpha: spec.action_alpha,
        plans,
        fixed_policy: None,
        params: spec.params,
    })
}

/// Builds the model described by `cfg`.
pub fn build(cfg: &SchemeConfig) -> Result<SchemeModel> {
    cfg.validate()?;
    match cfg.kind.normalized() {
        SchemeKind::Arq => build_arq_mdp(cfg),
        SchemeKind::Ir { .. } => build_ir_mdp(cfg),
        SchemeKind::SnCc { .. } => build_sn_cc_mdp(cfg),
        SchemeKind::DnCc { .. } => build_dn_cc_mdp(cfg),
        SchemeKind::FixedHarq { base } => {
            let inner = SchemeConfig {
                kind: *base,
                ..cfg.clone()
            };
            let mut model = build(&inner)?;
            model.kind = cfg.kind.clone();
            let p = model.fixed_harq_policy();
            model.fixed_policy = Some(p);
            Ok(model)
        }
        SchemeKind::StdIr | SchemeKind::StdCc => unreachable!("normalized"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub ok: bool,
    /// `ε · ρ²(A)`.
    pub product: f64,
    /// Error after `m_max` transmissions.
    pub eps: f64,
}

impl StabilityReport {
    pub fn new(eps: f64, rho_sq: f64) -> Self {
        let product = eps * rho_sq;
        Self {
            ok: product < 1.0,
            product,
            eps,
        }
    }
}

/// `ε·ρ²(A) < 1` with ε the error after the deepest allowed retransmission.
/// Diagnostic only.
pub fn stability_check(cfg: &SchemeConfig) -> Result<StabilityReport> {
    cfg.validate()?;
    let link = &cfg.link;
    let p = link.power();
    let m = link.m_max as usize;
    let kind = match cfg.kind.normalized() {
        SchemeKind::FixedHarq { base } => *base,
        k => k,
    };
    let eps = match kind {
        SchemeKind::Arq => eps_ir(link, &[p], &[link.n1 as f64])?,
        SchemeKind::Ir { tau } => eps_ir(link, &vec![p; m], &ir_lengths(link, tau, m))?,
        _ => eps_cc(link, &vec![p; m])?,
    };
    Ok(StabilityReport::new(eps, cfg.cost.rho_sq()))
}

pub(crate) fn fmt_q(scale: &AoiScale, q: Aoi) -> String {
    format!("{}", scale.value(q))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::mdp::{relative_value_iteration, DEFAULT_MAX_ITER, DEFAULT_TOL};

    pub(crate) fn cfg(kind: SchemeKind, rho_sq: f64) -> SchemeConfig {
        SchemeConfig {
            kind,
            link: FblLink::benchmark(),
            q_max: 10,
            cost: CostModel::scaled(rho_sq, 4.2267).unwrap(),
            objective: Objective::MseCost,
        }
    }

    type KernelRow = (String, usize, Vec<(String, f64)>);

    pub(crate) fn kernel_rows(m: &SchemeModel) -> Vec<KernelRow> {
        let mut out = Vec::new();
        for (s, rows) in m.mdp.rows.iter().enumerate() {
            for r in rows {
                let mut next: Vec<(String, f64)> = r
                    .next
                    .iter()
                    .map(|t| (m.mdp.state_labels[t.next].clone(), t.prob))
                    .collect();
                next.sort_by(|a, b| a.0.cmp(&b.0));
                out.push((m.mdp.state_labels[s].clone(), r.action, next));
            }
        }
        out.sort_by(|a, b| (a.0.as_str(), a.1).cmp(&(b.0.as_str(), b.1)));
        out
    }

    pub(crate) fn assert_same_kernel(a: &SchemeModel, b: &SchemeModel) {
        let (ka, kb) = (kernel_rows(a), kernel_rows(b));
        assert_eq!(ka.len(), kb.len());
        for (x, y) in ka.iter().zip(&kb) {
            assert_eq!((&x.0, x.1), (&y.0, y.1));
            assert_eq!(x.2.len(), y.2.len(), "row {} {}", x.0, x.1);
            for (p, q) in x.2.iter().zip(&y.2) {
                assert_eq!(p.0, q.0);
                assert!((p.1 - q.1).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn config_errors_name_fields() {
        let field = |k: SchemeKind| match build(&cfg(k, 2.0)) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected config error, got {other:?}"),
        };
        assert_eq!(field(SchemeKind::Ir { tau: 1.5 }), "scheme.tau");
        assert_eq!(field(SchemeKind::SnCc { alpha: 0.0 }), "scheme.alpha");
        assert_eq!(
            field(SchemeKind::DnCc {
                levels: vec![],
                mode: DnMode::Augmented
            }),
            "scheme.levels"
        );
        assert_eq!(
            field(SchemeKind::FixedHarq {
                base: Box::new(SchemeKind::Arq)
            }),
            "scheme.base"
        );
        let mut c = cfg(SchemeKind::StdIr, 2.0);
        c.q_max = 1;
        assert!(matches!(build(&c), Err(Error::Config { field, .. }) if field == "scheme.q_max"));
        let mut c = cfg(SchemeKind::StdCc, 2.0);
        c.link.m_max = 3;
        assert!(matches!(build(&c), Err(Error::Config { field, .. }) if field == "link.m_max"));
    }

    #[test]
    fn arq_is_always_fresh() {
        for db in 0..=10 {
            let mut c = cfg(SchemeKind::Arq, 4.4);
            c.link.snr_db = db as f64;
            let m = build(&c).unwrap();
            let r = m.solve(DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            assert!(r.policy.decision.iter().all(|&a| a == 0), "{db} dB");
        }
    }

    #[test]
    fn fixed_harq_retransmits_after_failure() {
        for base in [SchemeKind::StdIr, SchemeKind::SnCc { alpha: 0.1 }] {
            let m = build(&cfg(SchemeKind::FixedHarq { base: Box::new(base) }, 2.4)).unwrap();
            let p = m.fixed_policy.as_ref().unwrap();
            for (s, st) in m.states.iter().enumerate() {
                let want = st.pending && st.m == 1;
                assert_eq!(p.decision[s] != 0, want, "{}", m.mdp.state_labels[s]);
            }
            let r = m.solve(DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            assert_eq!(r.policy.decision, p.decision);
        }
    }

    #[test]
    fn delay_cost_is_age() {
        let mut c = cfg(SchemeKind::StdIr, 2.0);
        c.objective = Objective::DelayCost;
        let m = build(&c).unwrap();
        for s in 0..5.min(m.states.len()) {
            let q = m.scale.value(m.states[s].q);
            for r in &m.mdp.rows[s] {
                assert_eq!(r.cost, q);
            }
        }
    }

    #[test]
    fn costs_nondecreasing_in_age() {
        let m = build(&cfg(SchemeKind::Ir { tau: 0.5 }, 4.4)).unwrap();
        for mm in 1..=2 {
            let mut v: Vec<(Aoi, f64)> = m
                .states
                .iter()
                .zip(&m.state_mse)
                .filter(|(s, _)| s.m == mm)
                .map(|(s, &c)| (s.q, c))
                .collect();
            v.sort_by_key(|x| x.0);
            assert!(v.windows(2).all(|w| w[0].1 <= w[1].1));
        }
    }

    #[test]
    fn stability_examples() {
        let mut c = cfg(SchemeKind::Ir { tau: 1.0 }, 4.4);
        c.link.b = 1;
        let r = stability_check(&c).unwrap();
        assert!(r.ok && r.eps < 1e-12);

        let r = StabilityReport::new(0.5, 2.4);
        assert!((r.product - 1.2).abs() < 1e-15 && !r.ok);

        let c = cfg(SchemeKind::StdIr, 3.38);
        let r = stability_check(&c).unwrap();
        let link = FblLink::benchmark();
        let eps = eps_ir(&link, &[1.0, 1.0], &[100.0, 100.0]).unwrap();
        assert_eq!(r.eps, eps);
        assert_eq!(r.product, eps * 3.38);
    }

    #[test]
    fn every_model_validates() {
        let kinds = [
            SchemeKind::Arq,
            SchemeKind::StdIr,
            SchemeKind::StdCc,
            SchemeKind::Ir { tau: 0.2 },
            SchemeKind::SnCc { alpha: 0.4 },
            SchemeKind::DnCc {
                levels: vec![0.1, 0.5, 1.0],
                mode: DnMode::Augmented,
            },
            SchemeKind::DnCc {
                levels: vec![0.1, 0.5, 1.0],
                mode: DnMode::PairEnum { l1: 0, l2: 2 },
            },
        ];
        for k in kinds {
            let m = build(&cfg(k.clone(), 2.4)).unwrap();
            assert!(mdp::validate(&m.mdp).is_empty());
            assert!(m.state_age.iter().all(|&q| (1.0..=10.0).contains(&q)), "{k:?}");
            let r = relative_value_iteration(&m.mdp, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            let g = mdp::policy_average_cost(&m.mdp, &r.policy).unwrap();
            assert!((g - r.average_cost).abs() < 1e-6 * g.max(1.0));
        }
    }
}
