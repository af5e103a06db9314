//! Python bindings for `harqopt`.
//!
//! Configurations are passed as JSON strings in the same format the command
//! line reads, so a preset file can be used from either side.

use std::collections::BTreeMap;
use std::path::PathBuf;

use harqopt::config::{RunConfig, ScanFamily};
use harqopt::eval::{simulate_policy, EvalConfig};
use harqopt::fbl::{self, FblLink};
use harqopt::lti::{self, LtiSystem};
use harqopt::mdp::Policy;
use harqopt::pareto::{scan_cc, scan_ir, ScanOptions};
use harqopt::schemes::{build, stability_check, SchemeConfig, SchemeModel};
use harqopt::{reproduce, Error};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config { .. } | Error::Domain(_) | Error::InvalidPolicy(_) | Error::Json(_) => {
            PyValueError::new_err(e.to_string())
        }
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn link(n1: u32, b: u32, snr_db: f64, m_max: u32) -> PyResult<FblLink> {
    let l = FblLink { n1, b, snr_db, m_max };
    l.validate().map_err(py_err)?;
    Ok(l)
}

/// Steady-state posterior covariance and iteration count.
#[pyfunction]
#[pyo3(signature = (a, c, qw, qv, sigma0, tol = lti::RICCATI_TOL))]
fn kalman_steady_state(
    a: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    qw: Vec<Vec<f64>>,
    qv: Vec<Vec<f64>>,
    sigma0: Vec<Vec<f64>>,
    tol: f64,
) -> PyResult<(Vec<Vec<f64>>, usize)> {
    let sys = LtiSystem::from_rows(&a, &c, &qw, &qv, &sigma0).map_err(py_err)?;
    let ss = lti::kalman_steady_state(&sys, tol, lti::RICCATI_MAX_ITER).map_err(py_err)?;
    Ok((lti::mat_to_rows(&ss.pbar0), ss.iterations))
}

#[pyfunction]
fn spectral_radius_sq(a: Vec<Vec<f64>>) -> PyResult<f64> {
    let m = lti::mat_from_rows("A", &a).map_err(py_err)?;
    Ok(lti::spectral_radius_sq(&m))
}

/// Chase-combining error after combining the given per-attempt SNRs.
#[pyfunction]
#[pyo3(signature = (gammas, n1 = 100, b = 100, m_max = 2))]
fn eps_cc(gammas: Vec<f64>, n1: u32, b: u32, m_max: u32) -> PyResult<f64> {
    fbl::eps_cc(&link(n1, b, 0.0, m_max)?, &gammas).map_err(py_err)
}

/// Incremental-redundancy error for per-attempt SNRs and lengths.
#[pyfunction]
#[pyo3(signature = (gammas, lengths, n1 = 100, b = 100, m_max = 2))]
fn eps_ir(gammas: Vec<f64>, lengths: Vec<f64>, n1: u32, b: u32, m_max: u32) -> PyResult<f64> {
    fbl::eps_ir(&link(n1, b, 0.0, m_max)?, &gammas, &lengths).map_err(py_err)
}

/// A built scheme model with its run configuration.
#[pyclass(module = "harqopt_py")]
struct Scheme {
    rc: RunConfig,
    cfg: SchemeConfig,
    model: SchemeModel,
}

#[pymethods]
impl Scheme {
    #[new]
    #[pyo3(signature = (config_json = "{}"))]
    fn new(config_json: &str) -> PyResult<Self> {
        let rc = RunConfig::from_json(config_json).map_err(py_err)?;
        let cfg = rc.resolve().map_err(py_err)?.scheme;
        let model = build(&cfg).map_err(py_err)?;
        Ok(Self { rc, cfg, model })
    }

    #[getter]
    fn label(&self) -> String {
        self.model.label()
    }

    #[getter]
    fn states(&self) -> Vec<String> {
        self.model.mdp.state_labels.clone()
    }

    #[getter]
    fn actions(&self) -> Vec<String> {
        self.model.mdp.action_labels.clone()
    }

    #[getter]
    fn params(&self) -> BTreeMap<String, f64> {
        self.model.params.clone()
    }

    /// Per-state MSE cost.
    #[getter]
    fn state_mse(&self) -> Vec<f64> {
        self.model.state_mse.clone()
    }

    /// Solves the model; returns a dict with `policy` (state -> action
    /// label), `decision`, `gain`, `mu_mse` and `stable`.
    fn solve<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = self
            .model
            .solve(self.rc.solver.tol, self.rc.solver.max_iter)
            .map_err(py_err)?;
        let st = stability_check(&self.cfg).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("policy", self.named(&r.policy))?;
        d.set_item("decision", r.policy.decision.clone())?;
        d.set_item("gain", r.average_cost)?;
        d.set_item("mu_mse", self.model.policy_mse(&r.policy).map_err(py_err)?)?;
        d.set_item("iterations", r.iterations)?;
        d.set_item("stable", st.ok)?;
        Ok(d)
    }

    /// Stationary mean MSE of a decision vector (action id per state).
    fn policy_mse(&self, decision: Vec<usize>) -> PyResult<f64> {
        let p = self.policy(decision)?;
        self.model.policy_mse(&p).map_err(py_err)
    }

    /// Monte Carlo evaluation. `decision` defaults to the solved policy.
    #[pyo3(signature = (decision = None, trials = None, slots = None, seed = None, threads = 0))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        decision: Option<Vec<usize>>,
        trials: Option<usize>,
        slots: Option<usize>,
        seed: Option<u64>,
        threads: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let policy = match decision {
            Some(d) => self.policy(d)?,
            None => {
                self.model
                    .solve(self.rc.solver.tol, self.rc.solver.max_iter)
                    .map_err(py_err)?
                    .policy
            }
        };
        let base = &self.rc.eval;
        let eval = EvalConfig {
            trials: trials.unwrap_or(base.trials),
            slots: slots.unwrap_or(base.slots),
            seed: seed.unwrap_or(base.seed),
            threads,
            ..base.clone()
        };
        let rep = py
            .detach(|| simulate_policy(&self.model, &policy, &eval))
            .map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("mu_mse", rep.mu_mse)?;
        d.set_item("sigma2_mse", rep.sigma2_mse)?;
        d.set_item("per_slot_mean", rep.per_slot_mean)?;
        d.set_item("per_slot_mean_age", rep.per_slot_mean_age)?;
        let hist: Vec<(f64, f64, f64)> = rep.histogram.iter().map(|b| (b.lo, b.hi, b.freq)).collect();
        d.set_item("histogram", hist)?;
        d.set_item("seed", rep.seed_used)?;
        d.set_item("trials", rep.trials)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Scheme({}, {} states)", self.model.label(), self.model.states.len())
    }
}

impl Scheme {
    fn policy(&self, decision: Vec<usize>) -> PyResult<Policy> {
        let p = Policy::new(decision);
        p.check(&self.model.mdp).map_err(py_err)?;
        Ok(p)
    }

    fn named(&self, p: &Policy) -> BTreeMap<String, String> {
        p.decision
            .iter()
            .enumerate()
            .map(|(s, &a)| (self.model.mdp.state_labels[s].clone(), self.model.mdp.action_labels[a].clone()))
            .collect()
    }
}

/// Runs the scan described by the config's `pareto` section. Returns one
/// dict per grid point and the selected label (or None).
#[pyfunction]
fn pareto<'py>(py: Python<'py>, config_json: &str) -> PyResult<(Vec<Bound<'py, PyDict>>, Option<String>)> {
    let rc = RunConfig::from_json(config_json).map_err(py_err)?;
    let r = rc.resolve().map_err(py_err)?;
    let spec = rc
        .pareto
        .clone()
        .ok_or_else(|| PyValueError::new_err("invalid pareto: config has no pareto section"))?;
    let opts = ScanOptions {
        theta_override: spec.theta,
        tol: rc.solver.tol,
        max_iter: rc.solver.max_iter,
    };
    let scan = py
        .detach(|| match spec.family {
            ScanFamily::Ir => scan_ir(&r.scheme, &spec.grid, &rc.eval, &opts),
            ScanFamily::Cc => scan_cc(&r.scheme, &spec.grid, spec.mode, &rc.eval, &opts),
        })
        .map_err(py_err)?;
    let points = scan
        .scanned
        .iter()
        .map(|p| {
            let d = PyDict::new(py);
            d.set_item("label", &p.label)?;
            d.set_item("params", p.params.clone())?;
            d.set_item("mu", p.mu)?;
            d.set_item("mu_sim", p.mu_sim)?;
            d.set_item("sigma2", p.sigma2)?;
            d.set_item("theta", p.theta)?;
            d.set_item("feasible", p.feasible)?;
            d.set_item("on_front", p.on_front)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok((points, scan.selected.map(|p| p.label)))
}

/// Runs a bundled figure into `out_dir/<figure>`; returns
/// `(name, passed, detail)` per assertion.
#[pyfunction]
#[pyo3(signature = (figure, out_dir, seed = None, trials = None, slots = None))]
fn reproduce_figure(
    py: Python<'_>,
    figure: &str,
    out_dir: PathBuf,
    seed: Option<u64>,
    trials: Option<usize>,
    slots: Option<usize>,
) -> PyResult<Vec<(String, bool, String)>> {
    let mut rc = reproduce::preset_config(figure).map_err(py_err)?;
    if let Some(s) = seed {
        rc.eval.seed = s;
    }
    if let Some(t) = trials {
        rc.eval.trials = t;
    }
    if let Some(k) = slots {
        rc.eval.slots = k;
    }
    let run = py
        .detach(|| reproduce::run_figure(figure, &rc, &out_dir))
        .map_err(py_err)?;
    Ok(run
        .assertions
        .into_iter()
        .map(|a| (a.name, a.passed, a.detail))
        .collect())
}

#[pymodule]
pub fn harqopt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scheme>()?;
    m.add_function(wrap_pyfunction!(kalman_steady_state, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_radius_sq, m)?)?;
    m.add_function(wrap_pyfunction!(eps_cc, m)?)?;
    m.add_function(wrap_pyfunction!(eps_ir, m)?)?;
    m.add_function(wrap_pyfunction!(pareto, m)?)?;
    m.add_function(wrap_pyfunction!(reproduce_figure, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
