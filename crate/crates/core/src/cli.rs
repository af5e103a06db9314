//! The `harqopt` command line.
//!
//! Exit codes: 0 on success, 1 when a reproduced figure fails an assertion
//! or `verify` finds a dominance violation, 2 on any invalid configuration
//! or runtime error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{RunConfig, ScanFamily};
use crate::error::{Error, Result};
use crate::eval::simulate_policy;
use crate::lti::{mat_to_rows, spectral_radius_sq};
use crate::mdp::{to_table, Policy};
use crate::output::{self, SummaryRow};
use crate::pareto::{scan_cc, scan_ir, FrontStatus, ScanOptions};
use crate::reproduce;
use crate::schemes::{build, stability_check, SchemeModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "harqopt", version, about = "Retransmission control for remote estimation over HARQ links")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Monte Carlo seed (overrides eval.seed).
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory (overrides the config and HARQOPT_OUT_DIR).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Monte Carlo trials (overrides eval.trials).
    #[arg(long, global = true, value_name = "N")]
    pub trials: Option<usize>,
    /// Slots per trial (overrides eval.slots).
    #[arg(long, global = true, value_name = "K")]
    pub slots: Option<usize>,
    /// Worker threads, 0 for all cores.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and solve the configured scheme; write the policy table.
    Solve,
    /// Simulate a policy (from `policy_file`, or solved inline).
    Evaluate,
    /// Scan the retransmission parameter and extract the Pareto front.
    Pareto,
    /// Run a bundled figure pipeline and check its assertions.
    Reproduce {
        /// One of fig3 .. fig10.
        figure: String,
    },
    /// Recheck the dominance relation of a front file.
    Verify {
        /// A front.csv written by `pareto` or `reproduce`.
        path: PathBuf,
    },
}

impl Common {
    fn apply(&self, rc: &mut RunConfig) {
        if let Some(s) = self.seed {
            rc.eval.seed = s;
        }
        if let Some(t) = self.trials {
            rc.eval.trials = t;
        }
        if let Some(k) = self.slots {
            rc.eval.slots = k;
        }
        if let Some(n) = self.threads {
            rc.eval.threads = n;
        }
    }

    fn load(&self) -> Result<RunConfig> {
        let mut rc = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        self.apply(&mut rc);
        Ok(rc)
    }
}

#[derive(Serialize)]
struct RunMeta<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_hash: String,
    scheme: String,
    params: &'a std::collections::BTreeMap<String, f64>,
    seed: u64,
    states: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    average_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu_mse_analytic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    pbar0: Vec<Vec<f64>>,
    rho_sq_a: f64,
    cost_rho_sq: f64,
    cost_base: f64,
    config: &'a RunConfig,
}

fn write_config(dir: &Path, rc: &RunConfig) -> Result<()> {
    let mut saved = rc.clone();
    saved.output_dir = None;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.json"), saved.to_json() + "\n")?;
    Ok(())
}

fn solve(c: &Common) -> Result<i32> {
    let rc = c.load()?;
    let r = rc.resolve()?;
    let dir = rc.output_dir(c.out.as_deref());
    let hash = rc.hash();
    let model = build(&r.scheme)?;
    let report = model.solve(rc.solver.tol, rc.solver.max_iter)?;
    let stability = stability_check(&r.scheme)?;
    output::write_policy(&dir.join("policy.csv"), &hash, &model, &report, &stability)?;
    std::fs::write(dir.join("model.tsv"), to_table(&model.mdp))?;
    let meta = RunMeta {
        tool: "harqopt",
        version: env!("CARGO_PKG_VERSION"),
        command: "solve",
        config_hash: hash,
        scheme: model.label(),
        params: &model.params,
        seed: rc.eval.seed,
        states: model.states.len(),
        average_cost: Some(report.average_cost),
        mu_mse_analytic: Some(model.policy_mse(&report.policy)?),
        iterations: Some(report.iterations),
        pbar0: mat_to_rows(&r.pbar0),
        rho_sq_a: spectral_radius_sq(r.system.a()),
        cost_rho_sq: r.scheme.cost.rho_sq(),
        cost_base: r.scheme.cost.base_cost(),
        config: &rc,
    };
    output::write_json(&dir.join("run.json"), &meta)?;
    write_config(&dir, &rc)?;
    println!(
        "{}: gain {} over {} states, stability {} (product {}); wrote {}",
        model.label(),
        report.average_cost,
        model.states.len(),
        if stability.ok { "ok" } else { "violated" },
        stability.product,
        dir.display()
    );
    Ok(EXIT_OK)
}

fn evaluation_policy(rc: &RunConfig, model: &SchemeModel) -> Result<Policy> {
    match &rc.policy_file {
        Some(p) => output::read_policy(p, model).map_err(|e| match e {
            Error::Io(io) => Error::config("policy_file", format!("{}: {io}", p.display())),
            e => e,
        }),
        None => Ok(model.solve(rc.solver.tol, rc.solver.max_iter)?.policy),
    }
}

fn evaluate(c: &Common) -> Result<i32> {
    let rc = c.load()?;
    let r = rc.resolve()?;
    let dir = rc.output_dir(c.out.as_deref());
    let hash = rc.hash();
    let model = build(&r.scheme)?;
    let policy = evaluation_policy(&rc, &model)?;
    let report = simulate_policy(&model, &policy, &rc.eval)?;
    let mu = model.policy_mse(&policy).ok();
    let named = [(model.label(), &report)];
    output::write_traces(&dir.join("trace.csv"), &hash, &named)?;
    output::write_histograms(&dir.join("histogram.csv"), &hash, &named)?;
    output::write_summary(
        &dir.join("summary.csv"),
        &hash,
        &[SummaryRow {
            series: model.label(),
            report: &report,
            mu_analytic: mu,
        }],
    )?;
    let meta = RunMeta {
        tool: "harqopt",
        version: env!("CARGO_PKG_VERSION"),
        command: "evaluate",
        config_hash: hash,
        scheme: model.label(),
        params: &model.params,
        seed: rc.eval.seed,
        states: model.states.len(),
        average_cost: None,
        mu_mse_analytic: mu,
        iterations: None,
        pbar0: mat_to_rows(&r.pbar0),
        rho_sq_a: spectral_radius_sq(r.system.a()),
        cost_rho_sq: r.scheme.cost.rho_sq(),
        cost_base: r.scheme.cost.base_cost(),
        config: &rc,
    };
    output::write_json(&dir.join("run.json"), &meta)?;
    write_config(&dir, &rc)?;
    println!(
        "{}: mu_mse {} sigma2_mse {} ({} trials x {} slots); wrote {}",
        model.label(),
        report.mu_mse,
        report.sigma2_mse,
        rc.eval.trials,
        rc.eval.slots,
        dir.display()
    );
    Ok(EXIT_OK)
}

fn pareto(c: &Common) -> Result<i32> {
    let rc = c.load()?;
    let r = rc.resolve()?;
    let spec = rc
        .pareto
        .as_ref()
        .ok_or_else(|| Error::config("pareto", "the pareto command needs a pareto section"))?;
    let dir = rc.output_dir(c.out.as_deref());
    let hash = rc.hash();
    let opts = ScanOptions {
        theta_override: spec.theta,
        tol: rc.solver.tol,
        max_iter: rc.solver.max_iter,
    };
    let scan = match spec.family {
        ScanFamily::Ir => scan_ir(&r.scheme, &spec.grid, &rc.eval, &opts)?,
        ScanFamily::Cc => scan_cc(&r.scheme, &spec.grid, spec.mode, &rc.eval, &opts)?,
    };
    output::write_front(&dir.join("front.csv"), &hash, &scan)?;
    output::write_scan_status(&dir.join("scan_status.csv"), &hash, &scan)?;
    for (i, p) in scan.scanned.iter().enumerate() {
        let cfg = crate::schemes::SchemeConfig {
            kind: p.kind.clone(),
            ..r.scheme.clone()
        };
        let model = build(&cfg)?;
        output::write_policy_table(&dir.join("policies").join(format!("point_{i}.csv")), &hash, &model, &p.policy)?;
    }
    write_config(&dir, &rc)?;
    match (&scan.front.status, &scan.selected) {
        (FrontStatus::Ok, Some(sel)) => println!(
            "{} points, {} on the front; selected {} (mu {}, sigma2 {}); wrote {}",
            scan.scanned.len(),
            scan.front.points.len(),
            sel.label,
            sel.mu,
            sel.sigma2,
            dir.display()
        ),
        _ => println!(
            "{} points, empty feasible set; wrote {}",
            scan.scanned.len(),
            dir.display()
        ),
    }
    Ok(EXIT_OK)
}

fn reproduce_cmd(c: &Common, figure: &str) -> Result<i32> {
    let mut rc = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => reproduce::preset_config(figure)?,
    };
    c.apply(&mut rc);
    let out = rc.output_dir(c.out.as_deref());
    let run = reproduce::run_figure(figure, &rc, &out)?;
    for a in &run.assertions {
        println!(
            "{} {}: {} ({})",
            run.id,
            if a.passed { "PASS" } else { "FAIL" },
            a.name,
            a.detail
        );
    }
    println!("wrote {}", run.dir.display());
    Ok(if run.passed() { EXIT_OK } else { EXIT_ASSERTION })
}

fn verify(path: &Path) -> Result<i32> {
    let bad = output::verify_front(path)?;
    for b in &bad {
        println!("violation: {b}");
    }
    if bad.is_empty() {
        println!("{}: no dominance violations", path.display());
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_ASSERTION)
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    let c = &cli.common;
    match &cli.command {
        Command::Solve => solve(c),
        Command::Evaluate => evaluate(c),
        Command::Pareto => pareto(c),
        Command::Reproduce { figure } => reproduce_cmd(c, figure),
        Command::Verify { path } => verify(path),
    }
}

/// Parses `args`, runs the command and maps errors to exit code 2.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_are_global() {
        let cli = Cli::try_parse_from(["harqopt", "solve", "--seed", "7", "--threads", "0"]).unwrap();
        assert_eq!(cli.common.seed, Some(7));
        assert_eq!(cli.common.threads, Some(0));
        assert!(matches!(cli.command, Command::Solve));
    }

    #[test]
    fn bad_flag_exits_two() {
        assert_eq!(main_with_args(["harqopt", "solve", "--trials", "x"]), EXIT_CONFIG);
        assert_eq!(main_with_args(["harqopt", "reproduce", "fig99"]), EXIT_CONFIG);
    }
}
