use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::types::PyDict;

fn run(script: &str) {
    Python::attach(|py| {
        let module = pyo3::wrap_pymodule!(ivtsc_py::ivtsc_module)(py);
        py.import("sys")
            .unwrap()
            .getattr("modules")
            .unwrap()
            .set_item("ivtsc", module)
            .unwrap();
        let globals = PyDict::new(py);
        let code = CString::new(script).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            e.display(py);
            panic!("python script failed");
        }
    });
}

#[test]
fn simulate_and_image() {
    run(r#"
import ivtsc
d = ivtsc.simulate("1", [-0.9, 0.9], 5, 20, seed=3)
assert len(d) == 10 and d.classes == 2 and d.series_len == 20
assert d.labels() == [0] * 5 + [1] * 5
lo, up = d.bounds(0)
assert all(a <= b for a, b in zip(lo, up))
c = ivtsc.combine(lo, up, [0.5] * 20)
img = ivtsc.rp(c, m=2, nu=10.0)
assert len(img) == 19 and all(len(r) == 19 for r in img)
assert all(img[i][j] == img[j][i] for i in range(19) for j in range(19))
hard = ivtsc.rp([0.0, 1.0, 0.0, 1.0], eps="fixed:0.5")
assert hard == [[1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1]]
assert ivtsc.jrp([[0.0, 1.0, 0.0, 1.0]], eps="fixed:0.5") == hard
"#);
}

#[test]
fn scores_match_hand_computation() {
    run(r#"
import ivtsc
s = ivtsc.scores([0, 0, 1, 1], [0, 1, 1, 1], 2)
assert s["miP"] == s["miR"] == s["accuracy"] == 0.75
assert abs(s["maP"] - 0.8333333333333334) < 1e-12
assert abs(s["maF1"] - 0.7333333333333334) < 1e-12
assert s["degenerate_labels"] == []
try:
    ivtsc.scores([5], [0], 2)
    raise AssertionError("expected ValueError")
except ValueError as e:
    assert "LabelOutOfRange" in str(e)
"#);
}

#[test]
fn train_save_load_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let script = format!(
        r#"
import ivtsc, os
d = ivtsc.simulate("2", [-0.5, 0.5], 6, 16, seed=1)
train, held = d.split(0.75, 1)
out = ivtsc.train(d.subset(train), admm={{"outer_iters": 2, "inner_alpha_steps": 2}}, seed=4)
assert len(out["beta"]) == 16 and all(0.0 <= b <= 1.0 for b in out["beta"])
assert [h["iter"] for h in out["history"]] == [1, 2]
model = out["model"]
path = os.path.join({dir:?}, "m.ckpt")
model.save(path)
back = ivtsc.Model.load(path)
assert back.parameter_count == model.parameter_count and back.classes == 2
r1 = model.evaluate(d.subset(held), out["beta"])
r2 = back.evaluate(d.subset(held), out["beta"])
assert r1 == r2 and r1["n_eval"] == len(held) and r1["K"] == 2
d.write_csv(os.path.join({dir:?}, "d.csv"))
assert ivtsc.Dataset.read_csv(os.path.join({dir:?}, "d.csv")).labels() == d.labels()
"#,
        dir = dir.path().to_str().unwrap()
    );
    run(&script);
}
