import json

import numpy as np
import pytest

from chebdp.cli import main
from chebdp.errors import IngestError
from chebdp.grid import Grid
from chebdp.io import ingest, read_synthetic, write_synthetic
from chebdp.synth import MechanismConfig, SyntheticDataset, run


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_ingest_with_and_without_header(tmp_path):
    a = ingest(_write(tmp_path / "a.csv", "0.1,0.2\n-0.5,0.9\n1,-1\n"), 2)
    b = ingest(_write(tmp_path / "b.csv", "x,y\n0.1,0.2\n-0.5,0.9\n1,-1\n"), 2)
    assert a.n == b.n == 3 and a.d == 2
    np.testing.assert_array_equal(a.points, b.points)
    assert b.header == ["x", "y"]


def test_ingest_rejects_out_of_range_row(tmp_path):
    path = _write(tmp_path / "c.csv", "x\n0.5\n1.5\n-0.2\n")
    with pytest.raises(IngestError, match=r"lines \[3\]"):
        ingest(path, 1)


def test_ingest_normalize(tmp_path):
    data = ingest(_write(tmp_path / "n.csv", "0\n5\n10\n"), 1, normalize=True)
    np.testing.assert_allclose(data.points.ravel(), [-1.0, 0.0, 1.0])
    assert data.normalization == {"min": [0.0], "max": [10.0]}


@pytest.mark.parametrize(
    "text,match",
    [("", "empty"), ("a,b\n", "no data"), ("0.1,0.2\n0.3\n", "columns"), ("0.1,0.2\n0.3,abc\n", "not numeric")],
)
def test_ingest_errors(tmp_path, text, match):
    with pytest.raises(IngestError, match=match):
        ingest(_write(tmp_path / "e.csv", text), 2)


def test_ingest_wrong_arity(tmp_path):
    with pytest.raises(IngestError, match="expected 3"):
        ingest(_write(tmp_path / "w.csv", "0.1,0.2\n"), 3)


def test_synthetic_csv_roundtrip(tmp_path, rng):
    X = 2 * rng.beta(2, 5, size=(500, 2)) - 1
    syn, report = run(X, MechanismConfig(d=2, k=1, epsilon=1.0, delta=1e-5, seed=1))
    for expand in (False, True):
        path = tmp_path / f"s{expand}.csv"
        write_synthetic(path, syn, report.manifest, expand=expand)
        back = read_synthetic(path, syn.grid)
        np.testing.assert_array_equal(back.counts, syn.counts)


def test_read_synthetic_rejects_off_grid(tmp_path):
    path = _write(tmp_path / "off.csv", "x1,count\n0.1,3\n")
    with pytest.raises(IngestError):
        read_synthetic(path, Grid(1, 4))


@pytest.fixture
def data_1d(tmp_path):
    X = np.random.default_rng(3).uniform(-1, 1, size=(200, 1))
    path = tmp_path / "data.csv"
    np.savetxt(path, X, delimiter=",", header="x", comments="")
    return path


def test_generate_minimal_run(tmp_path, data_1d, capsys):
    out = tmp_path / "out"
    code = main(["generate", "--data", str(data_1d), "--out", str(out), "--epsilon", "1", "--delta", "1e-5"])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    syn = ingest(out / "synthetic.csv", 1)
    assert syn.weights.sum() == report["m_prime"]
    assert (out / "synthetic.csv").read_text().startswith("# manifest: ")
    assert report["manifest"]["seed"] == 0 and "data_hash" in report["manifest"]


def test_generate_is_byte_identical(tmp_path, data_1d):
    args = ["generate", "--data", str(data_1d), "--epsilon", "1", "--delta", "1e-5", "--seed", "5"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "synthetic.csv").read_bytes() == (tmp_path / "b" / "synthetic.csv").read_bytes()


def test_generate_missing_delta(tmp_path, data_1d, capsys):
    code = main(["generate", "--data", str(data_1d), "--out", str(tmp_path), "--epsilon", "1"])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "UsageError" and "--delta" in err["message"]


def test_generate_cap_and_budget_errors(tmp_path, data_1d, capsys):
    base = ["generate", "--data", str(data_1d), "--out", str(tmp_path), "--epsilon", "1"]
    assert main(base + ["--delta", "1e-5", "--m", "50", "--k", "3", "--cap-grid", "1000"]) == 3
    assert json.loads(capsys.readouterr().err)["error"] == "CapExceededError"
    assert main(base + ["--delta", "0.7"]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "BudgetError"


def test_generate_out_of_range_data(tmp_path, capsys):
    path = _write(tmp_path / "bad.csv", "x\n0.5\n3.0\n")
    args = ["generate", "--data", str(path), "--out", str(tmp_path / "o"), "--epsilon", "1", "--delta", "1e-5"]
    assert main(args) == 2
    assert "lines [3]" in json.loads(capsys.readouterr().err)["message"]
    assert main(args + ["--normalize"]) == 0


def test_config_file_and_flag_override(tmp_path, data_1d):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epsilon": 0.5, "delta": 1e-6, "seed": 4, "m": 6}))
    out = tmp_path / "o"
    assert main(["generate", "--config", str(cfg), "--data", str(data_1d), "--out", str(out), "--seed", "9"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["epsilon"] == 0.5 and report["m"] == 6
    assert report["config"]["seed"] == 9


def test_unsafe_run_is_watermarked(tmp_path, data_1d):
    out = tmp_path / "u"
    args = ["generate", "--data", str(data_1d), "--out", str(out), "--epsilon", "1", "--delta", "1e-5"]
    assert main(args + ["--unsafe-no-privacy"]) == 0
    assert "UNSAFE" in (out / "synthetic.csv").read_text().splitlines()[0]
    assert json.loads((out / "report.json").read_text())["sigma"] == 0.0


def test_evaluate_identical_files(tmp_path, data_1d, capsys):
    out = tmp_path / "eval.json"
    assert main(["evaluate", "--data", str(data_1d), "--synthetic", str(data_1d), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["gamma"] == 0.0
    assert all(v == 0.0 for v in rep["lower_estimates"].values())
    for key in ("n_original", "n_synthetic", "d", "k", "m", "gamma", "dk_upper_bound", "dk_lower_bound"):
        assert rep[key] is not None
    assert set(rep["lower_estimates"]) == {"monomial", "linear", "quadratic", "gaussian", "logistic", "bump"}


def test_evaluate_bump_on_disjoint_masses(tmp_path, capsys):
    from chebdp.bumps import bump_family

    fam = bump_family(4, 1, 1)
    a = _write(tmp_path / "a.csv", "\n".join(repr(float(v)) for v in fam.centers[:, 0]) + "\n")
    b = _write(tmp_path / "b.csv", "\n".join(repr(float(v)) for v in fam.x_max[:, 0]) + "\n")
    assert main(["evaluate", "--data", str(a), "--synthetic", str(b), "--families", "bump", "--bump-cells", "4"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["lower_estimates"]["bump"] >= fam.r / (16 * fam.C0 * 1.01)


def test_evaluate_arity_mismatch(tmp_path, data_1d, capsys):
    two = _write(tmp_path / "two.csv", "0.1,0.2\n0.3,0.4\n")
    assert main(["evaluate", "--data", str(data_1d), "--synthetic", str(two)]) == 2


def test_hard_instance_command(tmp_path, capsys):
    out = tmp_path / "hi"
    assert main(["hard-instance", "--n", "64", "--d", "1", "--m-cells", "4", "--seed", "2", "--out", str(out)]) == 0
    doc = json.loads((out / "instance.json").read_text())
    assert len(doc["theta"]) == 4 and doc["flips"] == 2
    assert ingest(out / "points.csv", 1).n == 64


def test_rates_command(tmp_path, capsys):
    out = tmp_path / "rates"
    assert main(["rates", "--d", "1", "--ns", "128,256,512", "--reps", "2", "--out", str(out)]) == 0
    doc = json.loads((out / "rates.json").read_text())
    assert len(doc["points"]) == 3
    assert "noise_term" in doc["slopes"]
    lines = (out / "rates.csv").read_text().splitlines()
    assert lines[0].startswith("# manifest: ") and lines[1].startswith("n,")
    assert doc["manifest"]["seed"] == 0
