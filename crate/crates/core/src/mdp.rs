//! Finite average-cost MDPs: representation, validation, relative value
//! iteration and brute-force policy evaluation.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type StateId = usize;
pub type ActionId = usize;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Aperiodicity transform weight: `P̃ = (1−β)I + βP`.
pub const APERIODICITY_BETA: f64 = 0.5;
/// Actions whose Q-values agree to this relative margin count as tied.
pub const TIE_TOL: f64 = 1e-12;
/// Row sums must be within this of one.
pub const PROB_TOL: f64 = 1e-9;
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub next: StateId,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRow {
    pub action: ActionId,
    pub cost: f64,
    pub next: Vec<Transition>,
}

/// States and actions are dense indices. `rows[s]` lists the allowed actions
/// of state `s`, sorted by action id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMdp {
    pub state_labels: Vec<String>,
    pub action_labels: Vec<String>,
    pub rows: Vec<Vec<ActionRow>>,
}

impl FiniteMdp {
    pub fn new(state_labels: Vec<String>, action_labels: Vec<String>) -> Self {
        let n = state_labels.len();
        Self {
            state_labels,
            action_labels,
            rows: vec![Vec::new(); n],
        }
    }

    pub fn num_states(&self) -> usize {
        self.state_labels.len()
    }

    pub fn num_actions(&self) -> usize {
        self.action_labels.len()
    }

    /// Adds (or replaces) the row of `(state, action)`, keeping rows sorted.
    pub fn set_row(&mut self, state: StateId, action: ActionId, cost: f64, next: Vec<Transition>) {
        let rows = &mut self.rows[state];
        let row = ActionRow { action, cost, next };
        match rows.binary_search_by_key(&action, |r| r.action) {
            Ok(i) => rows[i] = row,
            Err(i) => rows.insert(i, row),
        }
    }

    pub fn row(&self, state: StateId, action: ActionId) -> Option<&ActionRow> {
        let rows = self.rows.get(state)?;
        rows.binary_search_by_key(&action, |r| r.action)
            .ok()
            .map(|i| &rows[i])
    }

    pub fn allowed(&self, state: StateId) -> impl Iterator<Item = ActionId> + '_ {
        self.rows[state].iter().map(|r| r.action)
    }

    pub fn state_index(&self, label: &str) -> Option<StateId> {
        self.state_labels.iter().position(|l| l == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NoActions,
    UnknownAction,
    BadCost,
    BadProbability,
    BadSuccessor,
    RowSum,
    NotUnichain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub state: Option<StateId>,
    pub action: Option<ActionId>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.state, self.action) {
            (Some(s), Some(a)) => write!(f, "state {s}, action {a}: {:?}: {}", self.kind, self.detail),
            (Some(s), None) => write!(f, "state {s}: {:?}: {}", self.kind, self.detail),
            _ => write!(f, "{:?}: {}", self.kind, self.detail),
        }
    }
}

/// Checks the structural invariants; an empty list means the model is usable.
pub fn validate(mdp: &FiniteMdp) -> Vec<Violation> {
    let n = mdp.num_states();
    let mut out = Vec::new();
    macro_rules! push {
        ($kind:expr, $state:expr, $action:expr, $detail:expr $(,)?) => {
            out.push(Violation {
                kind: $kind,
                state: $state,
                action: $action,
                detail: $detail,
            })
        };
    }
    if n == 0 {
        push!(ViolationKind::NoActions, None, None, "model has no states".into());
        return out;
    }
    if mdp.rows.len() != n {
        push!(
            ViolationKind::NoActions,
            None,
            None,
            format!("{} rows for {} states", mdp.rows.len(), n),
        );
        return out;
    }
    for (s, rows) in mdp.rows.iter().enumerate() {
        if rows.is_empty() {
            push!(ViolationKind::NoActions, Some(s), None, "no allowed action".into());
        }
        if rows.windows(2).any(|w| w[0].action >= w[1].action) {
            push!(ViolationKind::UnknownAction, Some(s), None, "rows not sorted by action id".into());
        }
        for r in rows {
            let a = Some(r.action);
            if r.action >= mdp.num_actions() {
                push!(ViolationKind::UnknownAction, Some(s), a, format!("action id {} out of range", r.action));
            }
            if !(r.cost >= 0.0) || !r.cost.is_finite() {
                push!(ViolationKind::BadCost, Some(s), a, format!("cost {}", r.cost));
            }
            let mut sum = 0.0;
            for t in &r.next {
                if t.next >= n {
                    push!(ViolationKind::BadSuccessor, Some(s), a, format!("successor {} out of range", t.next));
                }
                if !(t.prob >= 0.0) || !t.prob.is_finite() {
                    push!(ViolationKind::BadProbability, Some(s), a, format!("probability {}", t.prob));
                }
                sum += t.prob;
            }
            if (sum - 1.0).abs() > PROB_TOL {
                push!(ViolationKind::RowSum, Some(s), a, format!("probabilities sum to {sum}"));
            }
        }
    }
    if out.is_empty() {
        let g = union_graph(mdp);
        let comps = tarjan_scc(&g).len();
        if comps > 1 {
            push!(
                ViolationKind::NotUnichain,
                None,
                None,
                format!("union transition graph has {comps} strongly connected components"),
            );
        }
    }
    out
}

fn union_graph(mdp: &FiniteMdp) -> DiGraph<(), ()> {
    let n = mdp.num_states();
    let mut g = DiGraph::with_capacity(n, 0);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for (s, rows) in mdp.rows.iter().enumerate() {
        for r in rows {
            for t in r.next.iter().filter(|t| t.prob > 0.0) {
                g.update_edge(nodes[s], nodes[t.next], ());
            }
        }
    }
    g
}

fn ensure_valid(mdp: &FiniteMdp) -> Result<()> {
    let v = validate(mdp);
    if v.is_empty() {
        return Ok(());
    }
    let msgs: Vec<String> = v.iter().take(5).map(|v| v.to_string()).collect();
    Err(Error::InvalidModel(format!(
        "{} violation(s): {}",
        v.len(),
        msgs.join("; ")
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    /// Action per state, indexed by `StateId`.
    pub decision: Vec<ActionId>,
    pub scheme_label: String,
    pub params: BTreeMap<String, f64>,
}

impl Policy {
    pub fn new(decision: Vec<ActionId>) -> Self {
        Self {
            decision,
            scheme_label: String::new(),
            params: BTreeMap::new(),
        }
    }

    pub fn check(&self, mdp: &FiniteMdp) -> Result<()> {
        if self.decision.len() != mdp.num_states() {
            return Err(Error::InvalidPolicy(format!(
                "policy covers {} states, model has {}",
                self.decision.len(),
                mdp.num_states()
            )));
        }
        for (s, &a) in self.decision.iter().enumerate() {
            if mdp.row(s, a).is_none() {
                return Err(Error::InvalidPolicy(format!(
                    "action {a} not allowed in state {s} ({})",
                    mdp.state_labels[s]
                )));
            }
        }
        Ok(())
    }

    /// Tab-separated `state<TAB>action` listing with labels.
    pub fn to_table(&self, mdp: &FiniteMdp) -> String {
        let mut s = format!("# policy scheme={}", self.scheme_label);
        for (k, v) in &self.params {
            s.push_str(&format!(" {k}={v}"));
        }
        s.push_str("\nstate\taction\n");
        for (st, &a) in self.decision.iter().enumerate() {
            s.push_str(&format!("{}\t{}\n", mdp.state_labels[st], mdp.action_labels[a]));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub policy: Policy,
    pub average_cost: f64,
    pub bias: Vec<f64>,
    pub iterations: usize,
    pub span_residual: f64,
}

fn span(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

fn expect(row: &ActionRow, h: &[f64]) -> f64 {
    row.next.iter().map(|t| t.prob * h[t.next]).sum()
}

/// Lowest action id whose value is within `TIE_TOL` of the minimum.
fn argmin_row(rows: &[ActionRow], h: &[f64]) -> (ActionId, f64) {
    let vals: Vec<f64> = rows.iter().map(|r| r.cost + expect(r, h)).collect();
    let best = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let thr = best + TIE_TOL * best.abs().max(1.0);
    let i = vals.iter().position(|&v| v <= thr).unwrap_or(0);
    (rows[i].action, vals[i])
}

/// Relative value iteration on the aperiodicity-transformed model.
///
/// Stops once the span of `T h − h` is at most `tol · max(1, |g|)`. The
/// reported bias is for the original (untransformed) model, normalised to
/// zero at state 0.
pub fn relative_value_iteration(mdp: &FiniteMdp, tol: f64, max_iter: usize) -> Result<SolveReport> {
    ensure_valid(mdp)?;
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let n = mdp.num_states();
    let beta = APERIODICITY_BETA;
    let mut h = vec![0.0; n];
    let mut th = vec![0.0; n];
    let mut diff = vec![0.0; n];
    let mut last = f64::INFINITY;

    for it in 1..=max_iter {
        for s in 0..n {
            let best = mdp.rows[s]
                .iter()
                .map(|r| r.cost + beta * expect(r, &h))
                .fold(f64::INFINITY, f64::min);
            th[s] = best + (1.0 - beta) * h[s];
            diff[s] = th[s] - h[s];
        }
        let (lo, hi) = span(&diff);
        let g = 0.5 * (lo + hi);
        last = hi - lo;
        let r0 = th[0];
        for s in 0..n {
            h[s] = th[s] - r0;
        }
        if last <= tol * g.abs().max(1.0) {
            let bias: Vec<f64> = h.iter().map(|x| beta * x).collect();
            let decision = (0..n).map(|s| argmin_row(&mdp.rows[s], &bias).0).collect();
            return Ok(SolveReport {
                policy: Policy::new(decision),
                average_cost: g,
                bias,
                iterations: it,
                span_residual: last,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: last,
    })
}

/// Transition matrix of the chain induced by `policy`.
pub fn induced_matrix(mdp: &FiniteMdp, policy: &Policy) -> Result<DMatrix<f64>> {
    policy.check(mdp)?;
    let n = mdp.num_states();
    let mut p = DMatrix::zeros(n, n);
    for (s, &a) in policy.decision.iter().enumerate() {
        let row = mdp.row(s, a).expect("checked");
        for t in &row.next {
            p[(s, t.next)] += t.prob;
        }
    }
    Ok(p)
}

fn closed_classes(p: &DMatrix<f64>) -> usize {
    let n = p.nrows();
    let mut g = DiGraph::<(), ()>::with_capacity(n, 0);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if p[(i, j)] > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let sccs = tarjan_scc(&g);
    let mut comp = vec![0usize; n];
    for (c, members) in sccs.iter().enumerate() {
        for v in members {
            comp[v.index()] = c;
        }
    }
    sccs.iter()
        .enumerate()
        .filter(|(c, members)| {
            members.iter().all(|v| {
                let i = v.index();
                (0..n).all(|j| p[(i, j)] <= 0.0 || comp[j] == *c)
            })
        })
        .count()
}

/// Stationary distribution of the chain induced by `policy`.
pub fn stationary_distribution(mdp: &FiniteMdp, policy: &Policy) -> Result<Vec<f64>> {
    let p = induced_matrix(mdp, policy)?;
    stationary_of(&p)
}

pub(crate) fn stationary_of(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p.nrows();
    if closed_classes(p) != 1 {
        return Err(Error::SingularChain);
    }
    // πᵀ(P − I) = 0 with the last equation replaced by Σπ = 1.
    let mut a = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let pi = a.lu().solve(&rhs).ok_or(Error::SingularChain)?;
    Ok(pi.iter().map(|&x| x.max(0.0)).collect())
}

/// Long-run average cost of a stationary policy.
pub fn policy_average_cost(mdp: &FiniteMdp, policy: &Policy) -> Result<f64> {
    let pi = stationary_distribution(mdp, policy)?;
    Ok(pi
        .iter()
        .zip(&policy.decision)
        .enumerate()
        .map(|(s, (&w, &a))| w * mdp.row(s, a).expect("checked").cost)
        .sum())
}

/// Gain and bias of a policy: solves `g + h = c + P h` with `h(0) = 0`.
pub fn evaluate_policy(mdp: &FiniteMdp, policy: &Policy) -> Result<(f64, Vec<f64>)> {
    let p = induced_matrix(mdp, policy)?;
    if closed_classes(&p) != 1 {
        return Err(Error::SingularChain);
    }
    let n = mdp.num_states();
    // Unknowns: g, h(1..n). Equation s: g + h(s) − Σ P(s,·) h = c(s).
    let mut a = DMatrix::zeros(n, n);
    let mut c = DVector::zeros(n);
    for s in 0..n {
        a[(s, 0)] = 1.0;
        for j in 1..n {
            a[(s, j)] = if s == j { 1.0 } else { 0.0 } - p[(s, j)];
        }
        c[s] = mdp.row(s, policy.decision[s]).expect("checked").cost;
    }
    let x = a.lu().solve(&c).ok_or(Error::SingularChain)?;
    let mut h = vec![0.0; n];
    h[1..].copy_from_slice(&x.as_slice()[1..]);
    Ok((x[0], h))
}

/// Enumerates every deterministic policy. Test oracle only.
pub fn exhaustive_policy_search(mdp: &FiniteMdp) -> Result<SolveReport> {
    ensure_valid(mdp)?;
    let sizes: Vec<usize> = mdp.rows.iter().map(|r| r.len()).collect();
    let total = sizes
        .iter()
        .try_fold(1u128, |acc, &k| acc.checked_mul(k as u128))
        .unwrap_or(u128::MAX);
    if total > EXHAUSTIVE_LIMIT {
        return Err(Error::TooLarge(total));
    }
    let n = sizes.len();
    let mut idx = vec![0usize; n];
    let mut best: Option<(f64, Vec<ActionId>)> = None;
    let mut evaluated = 0usize;
    loop {
        let decision: Vec<ActionId> = (0..n).map(|s| mdp.rows[s][idx[s]].action).collect();
        let policy = Policy::new(decision);
        match policy_average_cost(mdp, &policy) {
            Ok(g) => {
                evaluated += 1;
                let better = match &best {
                    None => true,
                    Some((bg, _)) => g < bg - TIE_TOL * bg.abs().max(1.0),
                };
                if better {
                    best = Some((g, policy.decision));
                }
            }
            Err(Error::SingularChain) => {}
            Err(e) => return Err(e),
        }
        // mixed-radix increment, last state fastest
        let mut k = n;
        loop {
            if k == 0 {
                let (g, decision) = best.ok_or(Error::SingularChain)?;
                let policy = Policy::new(decision);
                let (_, bias) = evaluate_policy(mdp, &policy)?;
                return Ok(SolveReport {
                    policy,
                    average_cost: g,
                    bias,
                    iterations: evaluated,
                    span_residual: 0.0,
                });
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < sizes[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Largest `|c(s,a*) + Σ P h − h(s) − g|` over states for the given policy.
pub fn optimality_residual(mdp: &FiniteMdp, report: &SolveReport) -> f64 {
    (0..mdp.num_states())
        .map(|s| {
            let row = mdp.row(s, report.policy.decision[s]).expect("valid policy");
            (row.cost + expect(row, &report.bias) - report.bias[s] - report.average_cost).abs()
        })
        .fold(0.0, f64::max)
}

/// Writes the model as a tab-separated table. Lines starting with `S` and `A`
/// declare state and action labels in id order; each `T` line is one
/// transition `state action cost next prob` (labels, not ids).
pub fn to_table(mdp: &FiniteMdp) -> String {
    let mut out = String::from("# kind\tfields\n");
    for l in &mdp.state_labels {
        out.push_str(&format!("S\t{l}\n"));
    }
    for l in &mdp.action_labels {
        out.push_str(&format!("A\t{l}\n"));
    }
    out.push_str("# T\tstate\taction\tcost\tnext\tprob\n");
    for (s, rows) in mdp.rows.iter().enumerate() {
        for r in rows {
            for t in &r.next {
                out.push_str(&format!(
                    "T\t{}\t{}\t{}\t{}\t{}\n",
                    mdp.state_labels[s], mdp.action_labels[r.action], r.cost, mdp.state_labels[t.next], t.prob
                ));
            }
        }
    }
    out
}

/// Inverse of [`to_table`].
pub fn from_table(text: &str) -> Result<FiniteMdp> {
    let bad = |line: usize, why: &str| Error::InvalidModel(format!("line {}: {why}", line + 1));
    let mut states = Vec::new();
    let mut actions = Vec::new();
    let mut trans = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        match f[0] {
            "S" if f.len() == 2 => states.push(f[1].to_string()),
            "A" if f.len() == 2 => actions.push(f[1].to_string()),
            "T" if f.len() == 6 => trans.push((i, f)),
            _ => return Err(bad(i, "unrecognised record")),
        }
    }
    let sidx: BTreeMap<&str, usize> = states.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let aidx: BTreeMap<&str, usize> = actions.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    if sidx.len() != states.len() || aidx.len() != actions.len() {
        return Err(Error::InvalidModel("duplicate labels".into()));
    }
    let mut mdp = FiniteMdp::new(states.clone(), actions.clone());
    for (i, f) in trans {
        let s = *sidx.get(f[1]).ok_or_else(|| bad(i, "unknown state"))?;
        let a = *aidx.get(f[2]).ok_or_else(|| bad(i, "unknown action"))?;
        let cost: f64 = f[3].parse().map_err(|_| bad(i, "bad cost"))?;
        let next = *sidx.get(f[4]).ok_or_else(|| bad(i, "unknown next state"))?;
        let prob: f64 = f[5].parse().map_err(|_| bad(i, "bad probability"))?;
        let t = Transition { next, prob };
        match mdp.rows[s].binary_search_by_key(&a, |r| r.action) {
            Ok(k) => mdp.rows[s][k].next.push(t),
            Err(k) => mdp.rows[s].insert(
                k,
                ActionRow {
                    action: a,
                    cost,
                    next: vec![t],
                },
            ),
        }
    }
    Ok(mdp)
}
