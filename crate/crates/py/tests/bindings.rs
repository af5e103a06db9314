//! Drives the module through an embedded interpreter.

use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<F: FnOnce(Python<'_>, &Bound<'_, PyDict>)>(f: F) {
    Python::attach(|py| {
        let m = pyo3::wrap_pymodule!(harqopt_py::harqopt_py)(py);
        let globals = PyDict::new(py);
        globals.set_item("hq", m).unwrap();
        f(py, &globals);
    });
}

fn run(py: Python<'_>, g: &Bound<'_, PyDict>, code: &str) {
    let code = std::ffi::CString::new(code).unwrap();
    if let Err(e) = py.run(&code, Some(g), None) {
        e.print(py);
        panic!("python snippet failed");
    }
}

#[test]
fn solve_and_evaluate_from_python() {
    with_module(|py, g| {
        run(
            py,
            g,
            r#"
import json
s = hq.Scheme(json.dumps({"scheme": {"kind": "arq"}, "eval": {"trials": 30, "slots": 40, "seed": 2}}))
sol = s.solve()
assert set(sol["policy"].values()) == {"fresh"}
r1 = s.evaluate()
r2 = s.evaluate(threads=2)
assert r1["mu_mse"] == r2["mu_mse"]
assert len(r1["per_slot_mean"]) == 40
assert abs(s.policy_mse(sol["decision"]) - sol["mu_mse"]) < 1e-12
"#,
        );
    });
}

#[test]
fn errors_map_to_value_error() {
    with_module(|py, g| {
        run(
            py,
            g,
            r#"
try:
    hq.Scheme('{"scheme": {"kind": "ir", "tau": 2.0}}')
    raise SystemExit("accepted tau = 2")
except ValueError as e:
    assert "scheme.tau" in str(e)
try:
    hq.eps_cc([1.0, 1.0, 1.0])
    raise SystemExit("accepted three transmissions with m_max = 2")
except ValueError:
    pass
assert hq.eps_cc([1.0]) == hq.eps_ir([1.0], [100.0])
"#,
        );
    });
}
