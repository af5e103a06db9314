//! Seeded Monte Carlo evaluation of a policy.
//!
//! Trial `t` draws from `ChaCha8Rng::seed_from_u64(seed)` switched to stream
//! `t`, so every trial is reproducible on its own and the result does not
//! depend on the thread count. Trials run in parallel chunks and are reduced
//! in trial order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Policy, StateId};
use crate::schemes::{build, SchemeConfig, SchemeModel, SlotPlan};

pub const DEFAULT_MAX_EVENTS: u128 = 100_000_000;
pub const DEFAULT_BINS: usize = 20;
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub slots: usize,
    pub trials: usize,
    pub seed: u64,
    pub histogram_bins: usize,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
    /// Upper bound on `trials · slots`.
    pub max_events: u128,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            slots: 1000,
            trials: 1000,
            seed: 0,
            histogram_bins: DEFAULT_BINS,
            threads: 0,
            max_events: DEFAULT_MAX_EVENTS,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.slots == 0 {
            return Err(Error::config("eval.slots", "must be >= 1"));
        }
        if self.trials == 0 {
            return Err(Error::config("eval.trials", "must be >= 1"));
        }
        if self.histogram_bins == 0 {
            return Err(Error::config("eval.histogram_bins", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub freq: f64,
}

pub type Histogram = Vec<Bin>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_slot_mean: Vec<f64>,
    pub mu_mse: f64,
    pub sigma2_mse: f64,
    pub histogram: Histogram,
    pub per_slot_mean_age: Vec<f64>,
    pub seed_used: u64,
    pub trials: usize,
}

/// Time average of the per-slot means, accumulated relative to `shift` so a
/// constant trace averages to itself exactly.
pub fn time_average(per_slot: &[f64], shift: f64) -> f64 {
    let s: f64 = per_slot.iter().map(|x| x - shift).sum();
    shift + s / per_slot.len() as f64
}

/// Population variance of the per-slot means about `mu`.
pub fn variation(per_slot: &[f64], mu: f64) -> f64 {
    per_slot.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / per_slot.len() as f64
}

/// Equal-width histogram over `[min, max]` of weighted samples. A degenerate
/// range gives one bin holding everything.
pub fn weighted_histogram(samples: &[(f64, u64)], bins: usize) -> Histogram {
    let total: u64 = samples.iter().map(|s| s.1).sum();
    if total == 0 || bins == 0 {
        return Vec::new();
    }
    let live = samples.iter().filter(|s| s.1 > 0);
    let lo = live.clone().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = live.map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![Bin { lo, hi, freq: 1.0 }];
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &(x, w) in samples {
        if w > 0 {
            let i = (((x - lo) / width) as usize).min(bins - 1);
            counts[i] += w;
        }
    }
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| Bin {
            lo: lo + i as f64 * width,
            hi: if i + 1 == bins { hi } else { lo + (i + 1) as f64 * width },
            freq: c as f64 / total as f64,
        })
        .collect()
}

/// Histogram of raw samples.
pub fn mse_histogram(samples: &[f64], bins: usize) -> Histogram {
    let w: Vec<(f64, u64)> = samples.iter().map(|&x| (x, 1)).collect();
    weighted_histogram(&w, bins)
}

struct Trace {
    states: Vec<StateId>,
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn pick(s: Option<StateId>, what: &str) -> StateId {
    s.unwrap_or_else(|| panic!("drew the zero-probability branch {what}"))
}

fn step(model: &SchemeModel, s: StateId, a: usize, rng: &mut ChaCha8Rng) -> StateId {
    let plan = model.plan(s, a).expect("policy checked against the model");
    let next = match *plan {
        SlotPlan::Single { eps, ok, fail } => {
            if rng.random::<f64>() < eps {
                pick(fail, "failure")
            } else {
                pick(ok, "success")
            }
        }
        SlotPlan::Noma {
            eps_old,
            eps_new,
            both,
            old_only,
            old_fail,
        } => {
            if rng.random::<f64>() < eps_old {
                pick(old_fail, "old update lost")
            } else if rng.random::<f64>() < eps_new {
                pick(old_only, "fresh update lost")
            } else {
                pick(both, "both delivered")
            }
        }
    };
    debug_assert!(
        model.mdp.row(s, a).is_some_and(|r| r.next.iter().any(|t| t.next == next && t.prob > 0.0)),
        "simulated transition {s} -> {next} under action {a} is not in the kernel"
    );
    next
}

fn run_trial(model: &SchemeModel, policy: &Policy, slots: usize, seed: u64, trial: usize) -> Trace {
    let mut rng = trial_rng(seed, trial);
    let mut states = Vec::with_capacity(slots);
    let mut s = 0;
    for _ in 0..slots {
        states.push(s);
        s = step(model, s, policy.decision[s], &mut rng);
    }
    Trace { states }
}

/// Runs `eval.trials` independent trials of `eval.slots` slots from the
/// just-delivered state.
pub fn simulate_policy(model: &SchemeModel, policy: &Policy, eval: &EvalConfig) -> Result<EvalReport> {
    eval.validate()?;
    policy.check(&model.mdp)?;
    let requested = eval.trials as u128 * eval.slots as u128;
    if requested > eval.max_events {
        return Err(Error::BudgetExceeded {
            requested,
            limit: eval.max_events,
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(eval.threads)
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;

    let k = eval.slots;
    let n = model.states.len();
    let shift = model.state_mse[0];
    let age_shift = model.state_age[0];
    let mut acc = vec![0.0; k];
    let mut acc_age = vec![0.0; k];
    let mut visits = vec![0u64; n];
    let trials: Vec<usize> = (0..eval.trials).collect();
    for chunk in trials.chunks(CHUNK) {
        let traces: Vec<Trace> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&t| run_trial(model, policy, k, eval.seed, t))
                .collect()
        });
        for tr in traces {
            for (slot, &s) in tr.states.iter().enumerate() {
                acc[slot] += model.state_mse[s] - shift;
                acc_age[slot] += model.state_age[s] - age_shift;
                visits[s] += 1;
            }
        }
    }
    let t = eval.trials as f64;
    let per_slot_mean: Vec<f64> = acc.iter().map(|x| shift + x / t).collect();
    let per_slot_mean_age: Vec<f64> = acc_age.iter().map(|x| age_shift + x / t).collect();
    let mu_mse = time_average(&per_slot_mean, shift);
    let sigma2_mse = variation(&per_slot_mean, mu_mse);
    let samples: Vec<(f64, u64)> = model.state_mse.iter().copied().zip(visits).collect();
    Ok(EvalReport {
        per_slot_mean,
        mu_mse,
        sigma2_mse,
        histogram: weighted_histogram(&samples, eval.histogram_bins),
        per_slot_mean_age,
        seed_used: eval.seed,
        trials: eval.trials,
    })
}

/// Builds the scheme and simulates `policy` on it.
pub fn simulate(cfg: &SchemeConfig, policy: &Policy, eval: &EvalConfig) -> Result<EvalReport> {
    let model = build(cfg)?;
    simulate_policy(&model, policy, eval)
}

/// Instantaneous MSE of every trial and slot, trial-major. Intended for
/// small runs and tests.
pub fn mse_samples(model: &SchemeModel, policy: &Policy, eval: &EvalConfig) -> Result<Vec<f64>> {
    eval.validate()?;
    policy.check(&model.mdp)?;
    let mut out = Vec::with_capacity(eval.trials * eval.slots);
    for t in 0..eval.trials {
        let tr = run_trial(model, policy, eval.slots, eval.seed, t);
        out.extend(tr.states.iter().map(|&s| model.state_mse[s]));
    }
    Ok(out)
}
