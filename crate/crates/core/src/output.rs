//! CSV and JSON writers for command outputs.
//!
//! Every CSV starts with a `# schema=<name> config_hash=<sha256>` line, then
//! a header row. Floats use the shortest round-trip representation so files
//! are byte-stable across runs.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::mdp::{Policy, SolveReport};
use crate::pareto::{dominates, ScanOutcome, ScanPoint};
use crate::schemes::{SchemeModel, StabilityReport};

pub const SCHEMA_POLICY: &str = "harqopt.policy.v1";
pub const SCHEMA_TRACE: &str = "harqopt.trace.v1";
pub const SCHEMA_HISTOGRAM: &str = "harqopt.histogram.v1";
pub const SCHEMA_SUMMARY: &str = "harqopt.summary.v1";
pub const SCHEMA_FRONT: &str = "harqopt.front.v1";
pub const SCHEMA_SCAN_STATUS: &str = "harqopt.scan_status.v1";
pub const SCHEMA_ASSERTIONS: &str = "harqopt.assertions.v1";
pub const SCHEMA_GAINS: &str = "harqopt.gains.v1";

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn write_csv<S: AsRef<str>>(path: &Path, schema: &str, hash: &str, header: &[S], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "# schema={schema} config_hash={hash}")?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(header.iter().map(|h| h.as_ref())).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub struct CsvTable {
    pub schema: Option<String>,
    pub config_hash: Option<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::config("csv", format!("missing column {name}")))
    }
}

pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let text = std::fs::read_to_string(path)?;
    let mut schema = None;
    let mut config_hash = None;
    if let Some(first) = text.lines().next().and_then(|l| l.strip_prefix('#')) {
        for kv in first.split_whitespace() {
            match kv.split_once('=') {
                Some(("schema", v)) => schema = Some(v.to_string()),
                Some(("config_hash", v)) => config_hash = Some(v.to_string()),
                _ => {}
            }
        }
    }
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()
        .map_err(csv_err)?;
    Ok(CsvTable {
        schema,
        config_hash,
        header,
        rows,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

fn f(x: f64) -> String {
    format!("{x}")
}

/// One row per state: label, chosen action, gain and the stability flag.
pub fn write_policy(
    path: &Path,
    hash: &str,
    model: &SchemeModel,
    report: &SolveReport,
    stability: &StabilityReport,
) -> Result<()> {
    let rows: Vec<Vec<String>> = report
        .policy
        .decision
        .iter()
        .enumerate()
        .map(|(s, &a)| {
            vec![
                model.mdp.state_labels[s].clone(),
                model.mdp.action_labels[a].clone(),
                f(report.average_cost),
                stability.ok.to_string(),
                f(stability.product),
            ]
        })
        .collect();
    write_csv(
        path,
        SCHEMA_POLICY,
        hash,
        &["state", "action", "gain", "stability_ok", "stability_product"],
        &rows,
    )
}

/// State and action labels only, for policies without a solve report.
pub fn write_policy_table(path: &Path, hash: &str, model: &SchemeModel, policy: &Policy) -> Result<()> {
    let rows: Vec<Vec<String>> = policy
        .decision
        .iter()
        .enumerate()
        .map(|(s, &a)| vec![model.mdp.state_labels[s].clone(), model.mdp.action_labels[a].clone()])
        .collect();
    write_csv(path, SCHEMA_POLICY, hash, &["state", "action"], &rows)
}

/// Reads a policy table written by [`write_policy`] against `model`.
pub fn read_policy(path: &Path, model: &SchemeModel) -> Result<Policy> {
    let t = read_csv(path)?;
    let (sc, ac) = (t.column("state")?, t.column("action")?);
    let mut decision = vec![usize::MAX; model.states.len()];
    for r in &t.rows {
        let s = model
            .mdp
            .state_index(&r[sc])
            .ok_or_else(|| Error::InvalidPolicy(format!("unknown state {}", r[sc])))?;
        let a = model
            .mdp
            .action_labels
            .iter()
            .position(|l| *l == r[ac])
            .ok_or_else(|| Error::InvalidPolicy(format!("unknown action {}", r[ac])))?;
        decision[s] = a;
    }
    if let Some(s) = decision.iter().position(|&a| a == usize::MAX) {
        return Err(Error::InvalidPolicy(format!(
            "no action for state {}",
            model.mdp.state_labels[s]
        )));
    }
    let p = Policy {
        decision,
        scheme_label: model.label(),
        params: model.params.clone(),
    };
    p.check(&model.mdp)?;
    Ok(p)
}

/// Per-slot means, one column pair per series.
pub fn write_traces(path: &Path, hash: &str, series: &[(String, &EvalReport)]) -> Result<()> {
    let mut header = vec!["slot".to_string()];
    if series.len() == 1 {
        header.extend(["mean_mse".to_string(), "mean_age".to_string()]);
    } else {
        for (name, _) in series {
            header.push(format!("{name}_mse"));
            header.push(format!("{name}_age"));
        }
    }
    let k = series.iter().map(|s| s.1.per_slot_mean.len()).max().unwrap_or(0);
    let rows: Vec<Vec<String>> = (0..k)
        .map(|slot| {
            let mut r = vec![(slot + 1).to_string()];
            for (_, rep) in series {
                r.push(rep.per_slot_mean.get(slot).map_or(String::new(), |&x| f(x)));
                r.push(rep.per_slot_mean_age.get(slot).map_or(String::new(), |&x| f(x)));
            }
            r
        })
        .collect();
    write_csv(path, SCHEMA_TRACE, hash, &header, &rows)
}

pub fn write_histograms(path: &Path, hash: &str, series: &[(String, &EvalReport)]) -> Result<()> {
    let mut rows = Vec::new();
    for (name, rep) in series {
        for b in &rep.histogram {
            rows.push(vec![name.clone(), f(b.lo), f(b.hi), f(b.freq)]);
        }
    }
    write_csv(path, SCHEMA_HISTOGRAM, hash, &["series", "bin_lo", "bin_hi", "freq"], &rows)
}

pub struct SummaryRow<'a> {
    pub series: String,
    pub report: &'a EvalReport,
    pub mu_analytic: Option<f64>,
}

pub fn write_summary(path: &Path, hash: &str, rows: &[SummaryRow<'_>]) -> Result<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.series.clone(),
                f(r.report.mu_mse),
                f(r.report.sigma2_mse),
                r.mu_analytic.map_or(String::new(), f),
                r.report.trials.to_string(),
                r.report.per_slot_mean.len().to_string(),
                r.report.seed_used.to_string(),
            ]
        })
        .collect();
    write_csv(
        path,
        SCHEMA_SUMMARY,
        hash,
        &["series", "mu_mse", "sigma2_mse", "mu_analytic", "trials", "slots", "seed"],
        &rows,
    )
}

fn param_keys(points: &[ScanPoint]) -> Vec<String> {
    let keys: BTreeSet<&String> = points.iter().flat_map(|p| p.params.keys()).collect();
    keys.into_iter().cloned().collect()
}

/// Every scanned point with its objectives and front membership.
pub fn write_front(path: &Path, hash: &str, out: &ScanOutcome) -> Result<()> {
    let keys = param_keys(&out.scanned);
    let mut header = vec!["label".to_string()];
    header.extend(keys.iter().cloned());
    header.extend(
        ["mu_analytic", "mu_sim", "sigma2_sim", "theta", "feasible", "on_front"]
            .iter()
            .map(|s| s.to_string()),
    );
    let rows: Vec<Vec<String>> = out
        .scanned
        .iter()
        .map(|p| {
            let mut r = vec![p.label.clone()];
            r.extend(keys.iter().map(|k| p.params.get(k).map_or(String::new(), |&v| f(v))));
            r.extend([
                f(p.mu),
                f(p.mu_sim),
                f(p.sigma2),
                f(p.theta),
                p.feasible.to_string(),
                p.on_front.to_string(),
            ]);
            r
        })
        .collect();
    write_csv(path, SCHEMA_FRONT, hash, &header, &rows)
}

pub fn write_scan_status(path: &Path, hash: &str, out: &ScanOutcome) -> Result<()> {
    let status = serde_json::to_value(out.front.status)?;
    let sel = out.selected.as_ref();
    let row = vec![
        status.as_str().unwrap_or_default().to_string(),
        out.scanned.len().to_string(),
        out.front.points.len().to_string(),
        out.front.dominated_count.to_string(),
        sel.map_or(String::new(), |p| p.label.clone()),
        sel.map_or(String::new(), |p| f(p.mu)),
        sel.map_or(String::new(), |p| f(p.sigma2)),
    ];
    write_csv(
        path,
        SCHEMA_SCAN_STATUS,
        hash,
        &["status", "scanned", "front_size", "dominated", "selected", "selected_mu", "selected_sigma2"],
        &[row],
    )
}

/// Re-reads a front file and lists every front point dominated by a feasible
/// point, plus flag inconsistencies.
pub fn verify_front(path: &Path) -> Result<Vec<String>> {
    let t = read_csv(path)?;
    if t.schema.as_deref() != Some(SCHEMA_FRONT) {
        return Err(Error::config(
            "verify",
            format!("{} is not a front file (schema {:?})", path.display(), t.schema),
        ));
    }
    let (mc, sc, tc) = (t.column("mu_analytic")?, t.column("sigma2_sim")?, t.column("theta")?);
    let (fc, oc, lc) = (t.column("feasible")?, t.column("on_front")?, t.column("label")?);
    let num = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::config("verify", format!("not a number: {s}")))
    };
    let flag = |s: &str| -> Result<bool> {
        s.parse()
            .map_err(|_| Error::config("verify", format!("not a boolean: {s}")))
    };
    struct Row {
        label: String,
        obj: (f64, f64),
        feasible: bool,
        front: bool,
    }
    let mut rows = Vec::new();
    let mut bad = Vec::new();
    for r in &t.rows {
        let row = Row {
            label: r[lc].clone(),
            obj: (num(&r[mc])?, num(&r[sc])?),
            feasible: flag(&r[fc])?,
            front: flag(&r[oc])?,
        };
        if row.feasible != (row.obj.1 <= num(&r[tc])?) {
            bad.push(format!("{}: feasible flag disagrees with theta", row.label));
        }
        if row.front && !row.feasible {
            bad.push(format!("{}: infeasible point on the front", row.label));
        }
        rows.push(row);
    }
    for p in rows.iter().filter(|r| r.front) {
        for q in rows.iter().filter(|r| r.feasible) {
            if dominates(q.obj, p.obj) {
                bad.push(format!("{} is dominated by {}", p.label, q.label));
            }
        }
    }
    Ok(bad)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

pub fn write_assertions(path: &Path, hash: &str, items: &[Assertion]) -> Result<()> {
    let rows: Vec<Vec<String>> = items
        .iter()
        .map(|a| vec![a.name.clone(), a.passed.to_string(), a.detail.clone()])
        .collect();
    write_csv(path, SCHEMA_ASSERTIONS, hash, &["assertion", "passed", "detail"], &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_schema_and_quotes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let rows = vec![vec!["x, y".to_string(), "1.5".to_string()]];
        write_csv(&p, "s.v1", "abc", &["name", "value"], &rows).unwrap();
        let t = read_csv(&p).unwrap();
        assert_eq!(t.schema.as_deref(), Some("s.v1"));
        assert_eq!(t.config_hash.as_deref(), Some("abc"));
        assert_eq!(t.header, vec!["name", "value"]);
        assert_eq!(t.rows, rows);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# schema=s.v1 config_hash=abc\nname,value\n\"x, y\",1.5\n"));
    }

    #[test]
    fn verify_flags_dominated_front_points() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("front.csv");
        let header = ["label", "mu_analytic", "mu_sim", "sigma2_sim", "theta", "feasible", "on_front"];
        let row = |l: &str, mu: f64, s2: f64, front: bool| {
            vec![l.into(), f(mu), f(mu), f(s2), "10".into(), "true".into(), front.to_string()]
        };
        write_csv(&p, SCHEMA_FRONT, "h", &header, &[row("a", 1.0, 1.0, true), row("b", 2.0, 2.0, false)]).unwrap();
        assert!(verify_front(&p).unwrap().is_empty());
        write_csv(&p, SCHEMA_FRONT, "h", &header, &[row("a", 1.0, 1.0, false), row("b", 2.0, 2.0, true)]).unwrap();
        assert_eq!(verify_front(&p).unwrap(), vec!["b is dominated by a"]);
    }
}
