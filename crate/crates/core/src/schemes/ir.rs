//! Incremental-redundancy HARQ and plain ARQ.

use std::collections::BTreeMap;

use super::{build_model, fmt_q, AoiScale, Outcome, PrevContext, SchemeConfig, SchemeKind, SchemeModel, SchemeState, Spec};
use crate::error::{Error, Result};
use crate::fbl::{eps_ir, ir_lengths};
use crate::mdp::ActionId;

fn ir_label(scale: &AoiScale, s: &SchemeState) -> String {
    let mut l = format!("m{} q{}", s.m, fmt_q(scale, s.q));
    if s.pending {
        l.push_str(" p");
    }
    l
}

/// `combining = false` gives ARQ: every retransmission is decoded on its own.
fn build(cfg: &SchemeConfig, kind: SchemeKind, tau: f64, combining: bool) -> Result<SchemeModel> {
    let link = &cfg.link;
    let scale = AoiScale::for_tau(tau)?;
    let p = link.power();
    let m_max = link.m_max;
    let single = eps_ir(link, &[p], &[link.n1 as f64])?;
    // eps[k] is the error after k + 1 transmissions
    let eps: Vec<f64> = (1..=m_max as usize)
        .map(|m| {
            if combining {
                eps_ir(link, &vec![p; m], &ir_lengths(link, tau, m))
            } else {
                Ok(single)
            }
        })
        .collect::<Result<_>>()?;
    let cap = scale.slots(cfg.q_max);
    let start = SchemeState::start(&scale);

    let allowed = |s: &SchemeState| -> Vec<ActionId> {
        if s.pending && s.m < m_max {
            vec![0, 1]
        } else {
            vec![0]
        }
    };
    let outcome = |s: &SchemeState, a: ActionId| -> Result<Outcome> {
        match a {
            0 => Ok(Outcome::Single {
                eps: single,
                ok: start,
                fail: SchemeState {
                    m: 1,
                    q: scale.after_failure(s.q, 1, cap),
                    pending: true,
                    ctx: PrevContext::None,
                },
            }),
            1 => {
                let m = s.m + 1;
                Ok(Outcome::Single {
                    eps: eps[(m - 1) as usize],
                    ok: SchemeState {
                        m,
                        q: scale.after_delivery(m),
                        pending: false,
                        ctx: PrevContext::None,
                    },
                    fail: SchemeState {
                        m,
                        q: scale.after_failure(s.q, m, cap),
                        pending: true,
                        ctx: PrevContext::None,
                    },
                })
            }
            _ => Err(Error::Domain(format!("unknown action {a}"))),
        }
    };
    let label = |s: &SchemeState| ir_label(&scale, s);
    let mut params = BTreeMap::new();
    if combining {
        params.insert("tau".to_string(), tau);
    }
    build_model(Spec {
        kind,
        cfg,
        scale,
        action_labels: vec!["fresh".into(), "retx".into()],
        action_alpha: vec![None, None],
        start,
        allowed: &allowed,
        outcome: &outcome,
        label: &label,
        params,
    })
}

/// IR-HARQ with retransmissions of `τ·n₁` symbols.
pub fn build_ir_mdp(cfg: &SchemeConfig) -> Result<SchemeModel> {
    cfg.validate()?;
    match cfg.kind.normalized() {
        SchemeKind::Ir { tau } => build(cfg, cfg.kind.clone(), tau, true),
        k => Err(Error::config("scheme.kind", format!("expected IR-HARQ, got {}", k.label()))),
    }
}

/// ARQ: the IR state graph at `τ = 1` without combining.
pub fn build_arq_mdp(cfg: &SchemeConfig) -> Result<SchemeModel> {
    cfg.validate()?;
    if cfg.kind != SchemeKind::Arq {
        return Err(Error::config("scheme.kind", format!("expected ARQ, got {}", cfg.kind.label())));
    }
    build(cfg, SchemeKind::Arq, 1.0, false)
}

#[cfg(test)]
mod tests {
    use std::collections::{HashSet, VecDeque};

    use super::*;
    use crate::fbl::FblLink;
    use crate::schemes::tests::{assert_same_kernel, cfg};
    use crate::schemes::{build, Aoi, SlotPlan};

    #[test]
    fn unit_tau_matches_standard_ir() {
        let a = build(&cfg(SchemeKind::Ir { tau: 1.0 }, 3.0)).unwrap();
        let b = build(&cfg(SchemeKind::StdIr, 3.0)).unwrap();
        assert_same_kernel(&a, &b);
        assert!(a.states.iter().all(|s| s.q.0 % a.scale.ticks_per_slot == 0));
        assert_eq!(a.scale, AoiScale::integer());
    }

    #[test]
    fn half_tau_transitions() {
        let m = build(&cfg(SchemeKind::Ir { tau: 0.5 }, 3.0)).unwrap();
        let from = SchemeState {
            m: 1,
            q: Aoi(6),
            pending: true,
            ctx: PrevContext::None,
        };
        let s = m.state_of(&from).expect("(1, 3) pending is reachable");
        match *m.plan(s, 1).unwrap() {
            SlotPlan::Single { ok, fail, .. } => {
                let ok = m.states[ok.unwrap()];
                let fail = m.states[fail.unwrap()];
                assert_eq!((ok.m, m.scale.value(ok.q), ok.pending), (2, 1.5, false));
                assert_eq!((fail.m, m.scale.value(fail.q), fail.pending), (2, 4.5, true));
            }
            _ => panic!("IR slots are single-packet"),
        }
    }

    /// Independent reachability over `(m, a, b)` with `q = a + bτ`.
    fn oracle_count(tau_b: u32, q_max: u32, link: &FblLink) -> usize {
        // ages as multiples of 1/tau_b
        let cap = q_max * tau_b;
        let mut seen = HashSet::new();
        let mut todo = VecDeque::from([(1u32, tau_b, false)]);
        seen.insert((1u32, tau_b, false));
        while let Some((m, q, pend)) = todo.pop_front() {
            let mut next = vec![(1, tau_b, false), (1, (q + tau_b).min(cap), true)];
            if pend && m < link.m_max {
                let d = m + tau_b; // (m' − 1)τ + 1 with m' = m + 1, τ = 1/tau_b
                next.push((m + 1, d, false));
                next.push((m + 1, (q + d).min(cap), true));
            }
            for n in next {
                if seen.insert(n) {
                    todo.push_back(n);
                }
            }
        }
        seen.len()
    }

    #[test]
    fn state_count_matches_reachability() {
        let link = FblLink::benchmark();
        for (tau, tb, expect) in [(0.5, 2, 33), (0.2, 5, 54), (1.0, 1, 18)] {
            let m = build(&cfg(SchemeKind::Ir { tau }, 4.4)).unwrap();
            assert_eq!(m.states.len(), oracle_count(tb, 10, &link), "tau {tau}");
            assert_eq!(m.states.len(), expect);
            for st in &m.states {
                let (a, b) = m.scale.parts(st.q);
                let v = m.scale.value(st.q);
                assert!(v <= 10.0);
                assert!((a as f64 + b as f64 * tau - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn saturated_failure_self_loops() {
        let m = build(&cfg(SchemeKind::StdIr, 4.4)).unwrap();
        let top = SchemeState {
            m: 1,
            q: Aoi(10),
            pending: true,
            ctx: PrevContext::None,
        };
        let s = m.state_of(&top).unwrap();
        let row = m.mdp.row(s, 0).unwrap();
        assert!(row.next.iter().any(|t| t.next == s));
    }

    #[test]
    fn arq_retransmission_uses_single_shot_error() {
        let m = build(&cfg(SchemeKind::Arq, 4.4)).unwrap();
        let eps: Vec<f64> = m
            .plans
            .iter()
            .flatten()
            .map(|p| match p {
                SlotPlan::Single { eps, .. } => *eps,
                _ => unreachable!(),
            })
            .collect();
        assert!(eps.iter().all(|&e| e == eps[0]));
    }
}
