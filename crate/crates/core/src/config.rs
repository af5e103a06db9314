//! JSON run configuration and its resolution into solver inputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::fbl::FblLink;
use crate::lti::{self, kalman_steady_state, CostMode, CostModel, LtiSystem, RICCATI_MAX_ITER, RICCATI_TOL};
use crate::mdp::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::pareto::CcScanMode;
use crate::schemes::{Objective, SchemeConfig, SchemeKind};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "HARQOPT_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "harqopt-out";

/// Omitted matrices take their benchmark values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "Qw")]
    pub qw: Vec<Vec<f64>>,
    #[serde(rename = "Qv")]
    pub qv: Vec<Vec<f64>>,
    #[serde(rename = "Sigma0")]
    pub sigma0: Vec<Vec<f64>>,
}

impl Default for SystemSpec {
    fn default() -> Self {
        let sys = LtiSystem::benchmark();
        Self {
            a: lti::mat_to_rows(sys.a()),
            c: lti::mat_to_rows(sys.c()),
            qw: lti::mat_to_rows(sys.qw()),
            qv: lti::mat_to_rows(sys.qv()),
            sigma0: lti::mat_to_rows(sys.sigma0()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub mode: CostMode,
    /// Growth rate for the scaled mode; defaults to `ρ²(A)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_sq: Option<f64>,
    /// Cost at age one for the scaled mode; defaults to `Tr(P̄₀)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_cost: Option<f64>,
}

impl Default for CostSpec {
    fn default() -> Self {
        Self {
            mode: CostMode::ExactMatrix,
            rho_sq: None,
            base_cost: None,
        }
    }
}

fn default_q_max() -> u32 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    #[serde(flatten)]
    pub kind: SchemeKind,
    #[serde(default = "default_q_max")]
    pub q_max: u32,
    #[serde(default)]
    pub cost: CostSpec,
    #[serde(default)]
    pub objective: Objective,
}

impl Default for SchemeSpec {
    fn default() -> Self {
        Self {
            kind: SchemeKind::StdIr,
            q_max: default_q_max(),
            cost: CostSpec::default(),
            objective: Objective::MseCost,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanFamily {
    Ir,
    Cc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParetoSpec {
    pub family: ScanFamily,
    /// τ values for IR, power fractions for CC.
    pub grid: Vec<f64>,
    #[serde(default = "default_cc_mode")]
    pub mode: CcScanMode,
    /// Global variance threshold replacing the per-point one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

fn default_cc_mode() -> CcScanMode {
    CcScanMode::Static
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureSpec {
    pub id: String,
    /// Penalty growth rates to sweep.
    #[serde(default)]
    pub rho_sq: Vec<f64>,
    /// τ values or power fractions, depending on the figure.
    #[serde(default)]
    pub grid: Vec<f64>,
    /// Power levels of the dynamic scheme.
    #[serde(default)]
    pub levels: Vec<f64>,
    /// Extra seed used for two-seed agreement checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub system: SystemSpec,
    pub link: LinkSpec,
    pub scheme: SchemeSpec,
    pub eval: EvalConfig,
    pub solver: SolverSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pareto: Option<ParetoSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub figure: Option<FigureSpec>,
    /// Policy table to evaluate instead of solving.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// `FblLink` with benchmark defaults for omitted fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSpec {
    pub n1: u32,
    pub b: u32,
    pub snr_db: f64,
    pub m_max: u32,
}

impl Default for LinkSpec {
    fn default() -> Self {
        let l = FblLink::benchmark();
        Self {
            n1: l.n1,
            b: l.b,
            snr_db: l.snr_db,
            m_max: l.m_max,
        }
    }
}

impl From<LinkSpec> for FblLink {
    fn from(l: LinkSpec) -> Self {
        FblLink {
            n1: l.n1,
            b: l.b,
            snr_db: l.snr_db,
            m_max: l.m_max,
        }
    }
}

/// Everything derived from a `RunConfig` that the commands need.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub system: LtiSystem,
    pub pbar0: lti::Mat,
    pub scheme: SchemeConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// SHA-256 of the canonical JSON without the output directory and the
    /// thread count, neither of which affects results. Standard schemes are
    /// hashed as their parametrised forms.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        c.eval.threads = 0;
        c.scheme.kind = c.scheme.kind.normalized();
        let digest = Sha256::digest(serde_json::to_vec(&c).expect("config serialises"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn system(&self) -> Result<LtiSystem> {
        let s = &self.system;
        LtiSystem::from_rows(&s.a, &s.c, &s.qw, &s.qv, &s.sigma0)
    }

    /// Cost model for the given system and steady state, honouring an
    /// optional growth-rate override.
    pub fn cost_model(&self, sys: &LtiSystem, pbar0: &lti::Mat, rho_sq: Option<f64>) -> Result<CostModel> {
        let spec = &self.scheme.cost;
        match spec.mode {
            CostMode::ExactMatrix => {
                if rho_sq.is_some() || spec.rho_sq.is_some() || spec.base_cost.is_some() {
                    return Err(Error::config(
                        "scheme.cost",
                        "rho_sq and base_cost apply to the scaled_exponential mode only",
                    ));
                }
                if self.scheme.q_max > lti::EXACT_TABLE_MAX_AGE {
                    return Err(Error::config(
                        "scheme.q_max",
                        format!("exact costs are tabulated up to age {}", lti::EXACT_TABLE_MAX_AGE),
                    ));
                }
                Ok(CostModel::exact(sys, pbar0))
            }
            CostMode::ScaledExponential => CostModel::scaled(
                rho_sq.or(spec.rho_sq).unwrap_or_else(|| lti::spectral_radius_sq(sys.a())),
                spec.base_cost.unwrap_or_else(|| pbar0.trace()),
            ),
        }
    }

    pub fn resolve(&self) -> Result<Resolved> {
        self.resolve_with(None, None)
    }

    /// Resolves with the scheme kind and/or growth rate replaced.
    pub fn resolve_with(&self, kind: Option<SchemeKind>, rho_sq: Option<f64>) -> Result<Resolved> {
        let system = self.system()?;
        let pbar0 = kalman_steady_state(&system, RICCATI_TOL, RICCATI_MAX_ITER)?.pbar0;
        let cost = self.cost_model(&system, &pbar0, rho_sq)?;
        let scheme = SchemeConfig {
            kind: kind.unwrap_or_else(|| self.scheme.kind.clone()),
            link: self.link.into(),
            q_max: self.scheme.q_max,
            cost,
            objective: self.scheme.objective,
        };
        scheme.validate()?;
        self.eval.validate()?;
        if !(self.solver.tol > 0.0) {
            return Err(Error::config("solver.tol", "must be positive"));
        }
        if let Some(p) = &self.pareto {
            if p.grid.is_empty() {
                return Err(Error::config("pareto.grid", "must not be empty"));
            }
        }
        Ok(Resolved { system, pbar0, scheme })
    }

    /// `--out`, then the config, then the environment, then the default.
    pub fn output_dir(&self, cli: Option<&Path>) -> PathBuf {
        if let Some(p) = cli {
            return p.to_path_buf();
        }
        if let Some(p) = &self.output_dir {
            return p.clone();
        }
        match std::env::var_os(OUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => PathBuf::from(DEFAULT_OUT_DIR),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_benchmark() {
        let c = RunConfig::from_json("{}").unwrap();
        let r = c.resolve().unwrap();
        assert_eq!(r.scheme.link, FblLink::benchmark());
        assert_eq!(r.scheme.q_max, 10);
        assert_eq!(r.scheme.kind, SchemeKind::StdIr);
        assert_eq!(r.scheme.cost.mode(), CostMode::ExactMatrix);
    }

    #[test]
    fn scheme_kind_is_flattened() {
        let c = RunConfig::from_json(
            r#"{"scheme": {"kind": "dn_cc", "levels": [0.1, 1.0], "mode": {"mode": "pair_enum", "l1": 0, "l2": 1},
                "q_max": 8, "cost": {"mode": "scaled_exponential", "rho_sq": 2.4}}}"#,
        )
        .unwrap();
        let r = c.resolve().unwrap();
        assert_eq!(r.scheme.q_max, 8);
        assert_eq!(r.scheme.cost.rho_sq(), 2.4);
        assert!((r.scheme.cost.base_cost() - r.pbar0.trace()).abs() < 1e-15);
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn bad_fields_are_named() {
        let err = |json: &str| match RunConfig::from_json(json).and_then(|c| c.resolve().map(|_| ())) {
            Err(Error::Config { field, reason }) => format!("{field}: {reason}"),
            other => panic!("expected a config error, got {other:?}"),
        };
        assert!(err(r#"{"system": {"A": [[1, 0]], "C": [[1, 1]], "Qw": [[1,0],[0,1]], "Qv": [[1]], "Sigma0": [[1,0],[0,1]]}}"#)
            .starts_with("system.A"));
        assert!(err(r#"{"scheme": {"kind": "ir", "tau": 2}}"#).starts_with("scheme.tau"));
        assert!(err(r#"{"eval": {"slots": 0, "trials": 1, "seed": 0}}"#).starts_with("eval.slots"));
        assert!(err(r#"{"bogus": 1}"#).starts_with("config"));
        assert!(err(r#"{"scheme": {"kind": "std_ir", "cost": {"mode": "exact_matrix", "rho_sq": 2}}}"#)
            .starts_with("scheme.cost"));
    }

    #[test]
    fn hash_ignores_only_result_neutral_fields() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output_dir = Some("/tmp/x".into());
        b.eval.threads = 4;
        b.scheme.kind = SchemeKind::Ir { tau: 1.0 };
        assert_eq!(a.hash(), b.hash());
        b.eval.seed = 9;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn output_dir_precedence() {
        let mut c = RunConfig::default();
        assert_eq!(c.output_dir(Some(Path::new("cli"))), PathBuf::from("cli"));
        c.output_dir = Some("cfg".into());
        assert_eq!(c.output_dir(None), PathBuf::from("cfg"));
    }
}
