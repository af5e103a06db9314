//! Bundled figure pipelines with qualitative assertions.
//!
//! Each figure writes plot-ready CSVs plus `assertions.csv` into its own
//! directory. Orderings on μ̄ use the simulated time average; the analytic
//! stationary mean is written next to it in `summary.csv`.

use std::path::{Path, PathBuf};

use crate::config::{FigureSpec, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{simulate_policy, EvalConfig, EvalReport};
use crate::mdp::Policy;
use crate::output::{self, Assertion, SummaryRow};
use crate::pareto::{scan_ir, ScanOptions};
use crate::schemes::{build, DnMode, Objective, SchemeKind, SchemeModel};

pub const FIGURES: [&str; 8] = ["fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10"];

/// Relative slack for simulated orderings between schemes whose means are
/// within Monte Carlo noise of each other.
pub const SIM_SLACK: f64 = 0.02;

pub fn preset(id: &str) -> Option<&'static str> {
    Some(match id {
        "fig2" => include_str!("../../../presets/fig2.json"),
        "fig3" => include_str!("../../../presets/fig3.json"),
        "fig4" => include_str!("../../../presets/fig4.json"),
        "fig5" => include_str!("../../../presets/fig5.json"),
        "fig6" => include_str!("../../../presets/fig6.json"),
        "fig7" => include_str!("../../../presets/fig7.json"),
        "fig8" => include_str!("../../../presets/fig8.json"),
        "fig9" => include_str!("../../../presets/fig9.json"),
        "fig10" => include_str!("../../../presets/fig10.json"),
        _ => return None,
    })
}

pub fn preset_config(id: &str) -> Result<RunConfig> {
    if !FIGURES.contains(&id) {
        return Err(Error::config(
            "figure",
            format!("unknown figure {id:?}; expected one of {}", FIGURES.join(", ")),
        ));
    }
    RunConfig::from_json(preset(id).expect("bundled"))
}

pub struct Series {
    pub name: String,
    pub model: SchemeModel,
    pub policy: Policy,
    pub mu_analytic: f64,
    pub report: EvalReport,
}

pub struct FigureRun {
    pub id: String,
    pub dir: PathBuf,
    pub assertions: Vec<Assertion>,
}

impl FigureRun {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }
}

struct Ctx<'a> {
    rc: &'a RunConfig,
    fig: FigureSpec,
    dir: PathBuf,
    hash: String,
    out: Vec<Assertion>,
}

impl Ctx<'_> {
    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.out.push(Assertion {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    fn rho(&self, i: usize) -> Result<f64> {
        self.fig
            .rho_sq
            .get(i)
            .copied()
            .ok_or_else(|| Error::config("figure.rho_sq", format!("needs at least {} entries", i + 1)))
    }

    fn grid(&self, n: usize) -> Result<&[f64]> {
        if self.fig.grid.len() < n {
            return Err(Error::config("figure.grid", format!("needs at least {n} entries")));
        }
        Ok(&self.fig.grid)
    }

    fn series(&self, name: &str, kind: SchemeKind, rho: f64, objective: Objective) -> Result<Series> {
        self.series_with(name, kind, rho, objective, &self.rc.eval)
    }

    fn series_with(
        &self,
        name: &str,
        kind: SchemeKind,
        rho: f64,
        objective: Objective,
        eval: &EvalConfig,
    ) -> Result<Series> {
        let mut r = self.rc.resolve_with(Some(kind), Some(rho))?;
        r.scheme.objective = objective;
        let model = build(&r.scheme)?;
        let policy = model.solve(self.rc.solver.tol, self.rc.solver.max_iter)?.policy;
        let mu_analytic = model.policy_mse(&policy)?;
        let report = simulate_policy(&model, &policy, eval)?;
        Ok(Series {
            name: name.to_string(),
            model,
            policy,
            mu_analytic,
            report,
        })
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write_series(&self, series: &[Series], traces: bool, histograms: bool) -> Result<()> {
        let named: Vec<(String, &EvalReport)> = series.iter().map(|s| (s.name.clone(), &s.report)).collect();
        if traces {
            output::write_traces(&self.file("trace.csv"), &self.hash, &named)?;
        }
        if histograms {
            output::write_histograms(&self.file("histogram.csv"), &self.hash, &named)?;
        }
        let rows: Vec<SummaryRow> = series
            .iter()
            .map(|s| SummaryRow {
                series: s.name.clone(),
                report: &s.report,
                mu_analytic: Some(s.mu_analytic),
            })
            .collect();
        output::write_summary(&self.file("summary.csv"), &self.hash, &rows)
    }

    fn check_histograms(&mut self, series: &[Series]) {
        for s in series {
            let total: f64 = s.report.histogram.iter().map(|b| b.freq).sum();
            self.check(
                &format!("histogram_normalised[{}]", s.name),
                (total - 1.0).abs() <= 1e-9,
                format!("sum={total}"),
            );
        }
    }
}

fn mu(s: &Series) -> f64 {
    s.report.mu_mse
}

fn sigma2(s: &Series) -> f64 {
    s.report.sigma2_mse
}

fn ir_series(c: &Ctx, rho: f64) -> Result<Vec<Series>> {
    c.grid(1)?
        .iter()
        .map(|&tau| c.series(&format!("tau={tau}"), SchemeKind::Ir { tau }, rho, Objective::MseCost))
        .collect()
}

fn find<'a>(series: &'a [Series], name: &str) -> Result<&'a Series> {
    series
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::config("figure.grid", format!("series {name} is required by this figure")))
}

fn ir_ordering(c: &mut Ctx, series: &[Series], check_mean: bool) -> Result<()> {
    let (a, b, d) = (find(series, "tau=0.2")?, find(series, "tau=0.5")?, find(series, "tau=1")?);
    if check_mean {
        c.check(
            "mu(tau=0.5) < mu(tau=1)",
            mu(b) < mu(d),
            format!("{} vs {}", mu(b), mu(d)),
        );
    }
    c.check(
        "sigma2(tau=0.5) < min(sigma2(tau=0.2), sigma2(tau=1))",
        sigma2(b) < sigma2(a).min(sigma2(d)),
        format!("{} vs {} / {}", sigma2(b), sigma2(a), sigma2(d)),
    );
    Ok(())
}

fn fig3(c: &mut Ctx) -> Result<()> {
    let rho = c.rho(0)?;
    let alpha = *c.grid(1)?.first().expect("checked");
    let sn = SchemeKind::SnCc { alpha };
    let kinds = [
        ("mse_optimal", sn.clone(), Objective::MseCost),
        ("delay_optimal", sn.clone(), Objective::DelayCost),
        ("fixed_harq", SchemeKind::FixedHarq { base: Box::new(sn) }, Objective::MseCost),
        ("arq", SchemeKind::Arq, Objective::MseCost),
    ];
    let series = kinds
        .iter()
        .map(|(n, k, o)| c.series(n, k.clone(), rho, *o))
        .collect::<Result<Vec<_>>>()?;
    c.write_series(&series, true, false)?;

    let arq = &series[3];
    c.check(
        "arq_policy_all_fresh",
        arq.policy.decision.iter().all(|&a| a == 0),
        format!("{} states", arq.policy.decision.len()),
    );
    let analytic: Vec<f64> = series.iter().map(|s| s.mu_analytic).collect();
    c.check(
        "analytic: mse_optimal <= delay_optimal <= fixed_harq <= arq",
        analytic.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-9)),
        format!("{analytic:?}"),
    );
    let mut seeds = vec![c.rc.eval.seed];
    seeds.extend(c.fig.second_seed);
    for seed in seeds {
        let eval = EvalConfig { seed, ..c.rc.eval.clone() };
        let sims: Vec<f64> = if seed == c.rc.eval.seed {
            series.iter().map(mu).collect()
        } else {
            series
                .iter()
                .map(|s| simulate_policy(&s.model, &s.policy, &eval).map(|r| r.mu_mse))
                .collect::<Result<_>>()?
        };
        c.check(
            &format!("simulated seed {seed}: mse_optimal <= delay_optimal <= fixed_harq <= arq"),
            sims.windows(2).all(|w| w[0] <= w[1] * (1.0 + SIM_SLACK)),
            format!("{sims:?}"),
        );
    }
    Ok(())
}

fn fig4(c: &mut Ctx) -> Result<()> {
    let series = ir_series(c, c.rho(0)?)?;
    c.write_series(&series, true, false)?;
    ir_ordering(c, &series, false)
}

fn fig5(c: &mut Ctx) -> Result<()> {
    let rho = c.rho(0)?;
    let series = ir_series(c, rho)?;
    c.write_series(&series, true, false)?;
    ir_ordering(c, &series, true)?;
    let r = c.rc.resolve_with(None, Some(rho))?;
    let opts = ScanOptions {
        theta_override: c.rc.pareto.as_ref().and_then(|p| p.theta),
        tol: c.rc.solver.tol,
        max_iter: c.rc.solver.max_iter,
    };
    let scan = scan_ir(&r.scheme, c.grid(1)?, &c.rc.eval, &opts)?;
    output::write_front(&c.file("front.csv"), &c.hash, &scan)?;
    output::write_scan_status(&c.file("scan_status.csv"), &c.hash, &scan)?;
    let bad = output::verify_front(&c.file("front.csv"))?;
    c.check("front_nondominated", bad.is_empty(), bad.join("; "));
    Ok(())
}

fn fig6(c: &mut Ctx) -> Result<()> {
    let series = ir_series(c, c.rho(0)?)?;
    c.write_series(&series, false, true)?;
    c.check_histograms(&series);
    Ok(())
}

fn sn_series(c: &Ctx, rho: f64) -> Result<Vec<Series>> {
    let mut out = vec![c.series("StdCC", SchemeKind::StdCc, rho, Objective::MseCost)?];
    for &alpha in c.grid(1)? {
        out.push(c.series(&format!("alpha={alpha}"), SchemeKind::SnCc { alpha }, rho, Objective::MseCost)?);
    }
    Ok(out)
}

fn fig7(c: &mut Ctx) -> Result<()> {
    let series = sn_series(c, c.rho(0)?)?;
    c.write_series(&series, true, false)?;
    let std = find(&series, "StdCC")?;
    let (a1, a4, a9) = (
        find(&series, "alpha=0.1")?,
        find(&series, "alpha=0.4")?,
        find(&series, "alpha=0.9")?,
    );
    c.check(
        "mu(alpha=0.1) < mu(StdCC)",
        mu(a1) < mu(std),
        format!("{} vs {}", mu(a1), mu(std)),
    );
    c.check(
        "mu(alpha=0.1) < mu(alpha=0.9)",
        mu(a1) < mu(a9),
        format!("{} vs {}", mu(a1), mu(a9)),
    );
    c.check(
        "mu(alpha=0.9) < mu(alpha=0.4)",
        mu(a9) < mu(a4),
        format!("{} vs {}", mu(a9), mu(a4)),
    );
    Ok(())
}

fn fig8(c: &mut Ctx) -> Result<()> {
    let series = sn_series(c, c.rho(0)?)?;
    c.write_series(&series, false, true)?;
    c.check_histograms(&series);
    Ok(())
}

fn cc_trio(c: &Ctx, rho: f64, suffix: &str) -> Result<Vec<Series>> {
    let alpha = *c.grid(1)?.first().expect("checked");
    if c.fig.levels.is_empty() {
        return Err(Error::config("figure.levels", "must not be empty"));
    }
    let dn = SchemeKind::DnCc {
        levels: c.fig.levels.clone(),
        mode: DnMode::Augmented,
    };
    Ok(vec![
        c.series(&format!("StdCC{suffix}"), SchemeKind::StdCc, rho, Objective::MseCost)?,
        c.series(&format!("SN{suffix}"), SchemeKind::SnCc { alpha }, rho, Objective::MseCost)?,
        c.series(&format!("DN{suffix}"), dn, rho, Objective::MseCost)?,
    ])
}

fn fig9(c: &mut Ctx) -> Result<()> {
    let (lo, hi) = (c.rho(0)?, c.rho(1)?);
    let mut series = cc_trio(c, lo, &format!("@{lo}"))?;
    series.extend(cc_trio(c, hi, &format!("@{hi}"))?);
    c.write_series(&series, true, false)?;

    let mut rows = Vec::new();
    let mut gains = Vec::new();
    for (rho, trio) in [(lo, &series[..3]), (hi, &series[3..])] {
        let (std, sn, dn) = (trio[0].mu_analytic, trio[1].mu_analytic, trio[2].mu_analytic);
        let dn_over_sn = (sn - dn) / sn;
        let dn_over_std = (std - dn) / std;
        gains.push(dn_over_sn);
        rows.push(vec![
            format!("{rho}"),
            format!("{std}"),
            format!("{sn}"),
            format!("{dn}"),
            format!("{}", 100.0 * dn_over_sn),
            format!("{}", 100.0 * dn_over_std),
        ]);
        c.check(
            &format!("analytic DN <= SN at rho_sq={rho}"),
            dn <= sn * (1.0 + 1e-9),
            format!("{dn} vs {sn}"),
        );
        c.check(
            &format!("analytic SN <= StdCC at rho_sq={rho}"),
            sn <= std * (1.0 + 1e-9),
            format!("{sn} vs {std}"),
        );
    }
    output::write_csv(
        &c.file("gains.csv"),
        output::SCHEMA_GAINS,
        &c.hash,
        &["rho_sq", "mu_stdcc", "mu_sn", "mu_dn", "dn_over_sn_pct", "dn_over_stdcc_pct"],
        &rows,
    )?;
    c.check(
        &format!("DN over SN at rho_sq={lo} in [5%, 30%]"),
        (0.05..=0.30).contains(&gains[0]),
        format!("{:.2}%", 100.0 * gains[0]),
    );
    c.check(
        &format!("DN over SN larger at rho_sq={hi} than at rho_sq={lo}"),
        gains[1] > gains[0],
        format!("{:.2}% vs {:.2}%", 100.0 * gains[1], 100.0 * gains[0]),
    );
    Ok(())
}

fn fig10(c: &mut Ctx) -> Result<()> {
    let series = cc_trio(c, c.rho(0)?, "")?;
    c.write_series(&series, false, true)?;
    c.check_histograms(&series);
    Ok(())
}

/// Runs figure `id` with `rc` (normally the bundled preset) into
/// `out/<id>/`.
pub fn run_figure(id: &str, rc: &RunConfig, out: &Path) -> Result<FigureRun> {
    if !FIGURES.contains(&id) {
        return Err(Error::config(
            "figure",
            format!("unknown figure {id:?}; expected one of {}", FIGURES.join(", ")),
        ));
    }
    rc.resolve()?;
    let dir = out.join(id);
    std::fs::create_dir_all(&dir)?;
    let mut c = Ctx {
        rc,
        fig: rc.figure.clone().unwrap_or_default(),
        dir,
        hash: rc.hash(),
        out: Vec::new(),
    };
    match id {
        "fig3" => fig3(&mut c)?,
        "fig4" => fig4(&mut c)?,
        "fig5" => fig5(&mut c)?,
        "fig6" => fig6(&mut c)?,
        "fig7" => fig7(&mut c)?,
        "fig8" => fig8(&mut c)?,
        "fig9" => fig9(&mut c)?,
        "fig10" => fig10(&mut c)?,
        _ => unreachable!(),
    }
    output::write_assertions(&c.file("assertions.csv"), &c.hash, &c.out)?;
    let mut saved = rc.clone();
    saved.output_dir = None;
    std::fs::write(c.file("config.json"), saved.to_json() + "\n")?;
    Ok(FigureRun {
        id: id.to_string(),
        dir: c.dir,
        assertions: c.out,
    })
}
