//! Chase-combining HARQ with a non-orthogonal retransmission slot: the old
//! update is retransmitted with power `αP` on top of a fresh update sent with
//! `(1−α)P`. The receiver decodes the old update first and cancels it.

use std::collections::BTreeMap;

use super::{
    build_model, fmt_q, AoiScale, DnMode, Outcome, PrevContext, SchemeConfig, SchemeKind, SchemeModel, SchemeState,
    Spec,
};
use crate::error::{Error, Result};
use crate::fbl::{eps_cc, noma_sinrs, NomaSplit, PrevCase};
use crate::mdp::ActionId;

/// Where the first-transmission SNR of a pending update comes from.
#[derive(Debug, Clone, Copy)]
enum FirstSnr {
    /// `(m, q)` states only: `m = 1` was sent solo, `m = 2` rode along with a
    /// retransmission at power fraction `alpha` and survived SIC.
    Collapsed { alpha: f64 },
    /// Read from the state's context.
    Augmented,
}

fn cc_label(scale: &AoiScale, levels: &[f64], s: &SchemeState) -> String {
    let mut l = format!("m{} q{}", s.m, fmt_q(scale, s.q));
    if s.pending {
        l.push_str(" p");
    }
    match s.ctx {
        PrevContext::None => {}
        PrevContext::Solo => l.push_str(" solo"),
        PrevContext::SicOk(i) => l.push_str(&format!(" ok@{}", levels[i as usize])),
        PrevContext::SicFail(i) => l.push_str(&format!(" fail@{}", levels[i as usize])),
    }
    l
}

fn build(cfg: &SchemeConfig, levels: Vec<f64>, first: FirstSnr, params: BTreeMap<String, f64>) -> Result<SchemeModel> {
    let link = &cfg.link;
    let p = link.power();
    let scale = AoiScale::integer();
    let cap = scale.slots(cfg.q_max);
    let start = SchemeState::start(&scale);
    let eps_solo = eps_cc(link, &[p])?;
    let splits: Vec<NomaSplit> = levels.iter().map(|&a| NomaSplit::new(a)).collect::<Result<_>>()?;
    let augmented = matches!(first, FirstSnr::Augmented);
    let num_levels = levels.len();

    let allowed = |s: &SchemeState| -> Vec<ActionId> {
        if s.pending {
            (0..=num_levels).collect()
        } else {
            vec![0]
        }
    };
    let outcome = |s: &SchemeState, a: ActionId| -> Result<Outcome> {
        if a == 0 {
            return Ok(Outcome::Single {
                eps: eps_solo,
                ok: start,
                fail: SchemeState {
                    m: 1,
                    q: scale.after_failure(s.q, 1, cap),
                    pending: true,
                    ctx: if augmented { PrevContext::Solo } else { PrevContext::None },
                },
            });
        }
        let level = a - 1;
        let cur = *splits
            .get(level)
            .ok_or_else(|| Error::Domain(format!("unknown action {a}")))?;
        let (prev, case) = match (first, s.ctx) {
            (FirstSnr::Collapsed { .. }, _) if s.m == 1 => (None, PrevCase::Solo),
            (FirstSnr::Collapsed { alpha }, _) => (Some(NomaSplit::new(alpha)?), PrevCase::SicOk),
            (FirstSnr::Augmented, PrevContext::SicOk(i)) => (Some(splits[i as usize]), PrevCase::SicOk),
            (FirstSnr::Augmented, PrevContext::SicFail(i)) => (Some(splits[i as usize]), PrevCase::SicFail),
            (FirstSnr::Augmented, _) => (None, PrevCase::Solo),
        };
        let g = noma_sinrs(p, prev, cur, case)?;
        let eps_old = eps_cc(link, &[g.gamma_old_first, g.gamma_retx])?;
        let eps_new = if g.gamma_new > 0.0 {
            eps_cc(link, &[g.gamma_new])?
        } else {
            1.0
        };
        let ctx = |c: PrevContext| if augmented { c } else { PrevContext::None };
        Ok(Outcome::Noma {
            eps_old,
            eps_new,
            both: start,
            old_only: SchemeState {
                m: 2,
                q: scale.slots(2).min(cap),
                pending: true,
                ctx: ctx(PrevContext::SicOk(level as u16)),
            },
            old_fail: SchemeState {
                m: 2,
                q: scale.after_failure(s.q, 1, cap),
                pending: true,
                ctx: ctx(PrevContext::SicFail(level as u16)),
            },
        })
    };
    let label = |s: &SchemeState| cc_label(&scale, &levels, s);
    let mut action_labels = vec!["fresh".to_string()];
    action_labels.extend(levels.iter().map(|a| format!("retx@{a}")));
    let mut action_alpha = vec![None];
    action_alpha.extend(levels.iter().map(|&a| Some(a)));

    build_model(Spec {
        kind: cfg.kind.clone(),
        cfg,
        scale,
        action_labels,
        action_alpha,
        start,
        allowed: &allowed,
        outcome: &outcome,
        label: &label,
        params,
    })
}

/// Single fixed power fraction `α` for every retransmission.
pub fn build_sn_cc_mdp(cfg: &SchemeConfig) -> Result<SchemeModel> {
    cfg.validate()?;
    match cfg.kind.normalized() {
        SchemeKind::SnCc { alpha } => build(
            cfg,
            vec![alpha],
            FirstSnr::Collapsed { alpha },
            BTreeMap::from([("alpha".to_string(), alpha)]),
        ),
        k => Err(Error::config("scheme.kind", format!("expected SN-CC-HARQ, got {}", k.label()))),
    }
}

/// Power fraction chosen per slot from a set of levels.
pub fn build_dn_cc_mdp(cfg: &SchemeConfig) -> Result<SchemeModel> {
    cfg.validate()?;
    match cfg.kind.normalized() {
        SchemeKind::DnCc {
            levels,
            mode: DnMode::PairEnum { l1, l2 },
        } => build(
            cfg,
            vec![levels[l2]],
            FirstSnr::Collapsed { alpha: levels[l1] },
            BTreeMap::from([
                ("alpha_prev".to_string(), levels[l1]),
                ("alpha".to_string(), levels[l2]),
            ]),
        ),
        SchemeKind::DnCc {
            levels,
            mode: DnMode::Augmented,
        } => {
            let n = levels.len() as f64;
            build(cfg, levels, FirstSnr::Augmented, BTreeMap::from([("levels".to_string(), n)]))
        }
        k => Err(Error::config("scheme.kind", format!("expected DN-CC-HARQ, got {}", k.label()))),
    }
}
