//! Gains pinned against an independent re-derivation of each transition
//! kernel (separate code, same model definitions), cost base 4.2267.

use harqopt::fbl::FblLink;
use harqopt::lti::CostModel;
use harqopt::mdp::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use harqopt::schemes::{build, DnMode, Objective, SchemeConfig, SchemeKind};

fn gain(kind: SchemeKind, rho_sq: f64, objective: Objective) -> f64 {
    let cfg = SchemeConfig {
        kind,
        link: FblLink::benchmark(),
        q_max: 10,
        cost: CostModel::scaled(rho_sq, 4.2267).unwrap(),
        objective,
    };
    let m = build(&cfg).unwrap();
    let p = m.solve(DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap().policy;
    m.policy_mse(&p).unwrap()
}

fn close(got: f64, want: f64, rel: f64) {
    assert!((got - want).abs() <= rel * want, "got {got}, want {want}");
}

fn deciles() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

#[test]
fn ir_gains() {
    close(gain(SchemeKind::Ir { tau: 0.2 }, 4.4, Objective::MseCost), 10.151, 5e-4);
    close(gain(SchemeKind::Ir { tau: 0.5 }, 4.4, Objective::MseCost), 9.988, 5e-4);
    close(gain(SchemeKind::StdIr, 4.4, Objective::MseCost), 14.462, 5e-4);
}

#[test]
fn cc_gains() {
    let dn = SchemeKind::DnCc {
        levels: deciles(),
        mode: DnMode::Augmented,
    };
    close(gain(SchemeKind::SnCc { alpha: 0.1 }, 2.4, Objective::MseCost), 9.052, 5e-4);
    close(gain(SchemeKind::StdCc, 2.4, Objective::MseCost), 7.479, 5e-4);
    close(gain(dn.clone(), 2.4, Objective::MseCost), 7.479, 5e-4);
    close(gain(SchemeKind::SnCc { alpha: 0.1 }, 4.4, Objective::MseCost), 66.4, 5e-3);
    close(gain(SchemeKind::StdCc, 4.4, Objective::MseCost), 14.46, 5e-4);
    close(gain(dn, 4.4, Objective::MseCost), 14.46, 5e-4);
}

#[test]
fn benchmark_ordering_gains() {
    let sn = SchemeKind::SnCc { alpha: 0.1 };
    close(gain(sn.clone(), 2.4, Objective::MseCost), 9.052, 5e-4);
    close(gain(sn.clone(), 2.4, Objective::DelayCost), 9.446, 5e-4);
    close(
        gain(SchemeKind::FixedHarq { base: Box::new(sn) }, 2.4, Objective::MseCost),
        9.523,
        5e-4,
    );
    close(gain(SchemeKind::Arq, 2.4, Objective::MseCost), 10.082, 5e-4);
}
