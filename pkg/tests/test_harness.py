import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hpm import harness
from hpm.cli import main
from hpm.config import default_config, eval_number, load_config, parse_config
from hpm.errors import InvalidConfigError, TrainingFailedError

FAST = """
[experiment]
family = burgers
seed = 3
[solver]
n_points = 64
n_snapshots = 6
[data]
n_curr = 12
n_prev = 10
snapshot = 2
noise = 0, 0.01
dt_multipliers = 1, 2
[train]
restarts = 1
max_iters = 40
"""


@pytest.fixture
def fast_cfg(tmp_path):
    return parse_config(FAST).replace(output_dir=str(tmp_path / "run"))


# ---------------------------------------------------------------- quartiles

@pytest.mark.parametrize("data, expect", [
    ([1, 2, 3, 4, 5], (2, 3, 4)),
    ([1, 2, 3, 4], (1.75, 2.5, 3.25)),
    ([7.5], (7.5, 7.5, 7.5)),
    ([5, 1, 4, 2, 3], (2, 3, 4)),
])
def test_quartile_examples(data, expect):
    assert harness.quartiles(data) == pytest.approx(expect)


def _brute_quantile(sorted_v, p):
    # linear interpolation between order statistics at position p (n - 1)
    pos = p * (len(sorted_v) - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, len(sorted_v) - 1)
    return sorted_v[lo] + (pos - lo) * (sorted_v[hi] - sorted_v[lo])


def test_quartiles_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        v = rng.normal(size=rng.integers(1, 40))
        s = sorted(v)
        expect = tuple(_brute_quantile(s, p) for p in (0.25, 0.5, 0.75))
        assert harness.quartiles(v) == pytest.approx(expect, abs=1e-12)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30))
def test_quartiles_ordered_and_permutation_invariant(v):
    q = harness.quartiles(v)
    assert min(v) <= q[0] <= q[1] <= q[2] <= max(v)
    assert harness.quartiles(v[::-1]) == q


# ---------------------------------------------------------------- config

def test_eval_number():
    assert eval_number("32*pi") == pytest.approx(32 * math.pi)
    assert eval_number("pi/500") == pytest.approx(math.pi / 500)
    assert eval_number("0.25") == 0.25


def test_defaults_per_family():
    cfg = default_config("kdv")
    assert (cfg.data.n_curr, cfg.data.n_prev) == (111, 109)
    assert default_config("fractional_laplacian").solver.alpha == 1.5
    assert default_config("ks").solver.domain == pytest.approx((0.0, 32 * math.pi))


def test_config_parsing(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text(FAST)
    cfg = load_config(p)
    assert cfg.family == "burgers" and cfg.seed == 3
    assert cfg.solver.n_points == 64 and cfg.solver.nu == 0.1
    assert cfg.data.noise == (0.0, 0.01) and cfg.data.dt_multipliers == (1, 2)
    assert cfg.train.restarts == 1


def test_config_hash_ignores_threads_and_output(fast_cfg):
    other = fast_cfg.replace(output_dir="/elsewhere")
    assert other.config_hash == fast_cfg.config_hash
    assert fast_cfg.replace(seed=4).config_hash != fast_cfg.config_hash


@pytest.mark.parametrize("text", [
    "[experiment]\nfamily = burgers\n[solver]\ndt = 0\n",
    "[experiment]\nfamily = burgers\n[data]\ndt_multipliers =\n",
    "[experiment]\nfamily = burgers\n[data]\ndt_multiplier = 0\n",
    "[experiment]\nfamily = burgers\n[data]\nnoise = -0.1\n",
    "[experiment]\nfamily = burgers\n[data]\nn_curr = 1000\n",
    "[experiment]\nfamily = burgers\n[data]\nsnapshot = 100\n",
    "[experiment]\nfamily = heat\n",
    "[experiment]\nseed = 1\n",
    "[experiment]\nfamily = burgers\n[solver]\nbogus = 1\n",
    "[experiment]\nfamily = burgers\n[train]\nseed = 1\n",
    "[experiment]\nfamily = burgers\n[extra]\n",
    "[experiment]\nfamily = burgers\nformat = hdf5\n",
    "[experiment]\nfamily = burgers\n[solver]\ndomain = 1\n",
    "not an ini file",
])
def test_config_errors(text):
    with pytest.raises(InvalidConfigError):
        parse_config(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(InvalidConfigError):
        load_config(tmp_path / "absent.ini")


# ---------------------------------------------------------------- datasets

def test_generated_shapes():
    assert harness.generate_field(default_config("burgers")).values.shape == (101, 256, 1)
    assert harness.generate_field(default_config("ks")).values.shape == (251, 1024, 1)


@pytest.mark.parametrize("fmt_", ["binary", "text"])
def test_field_round_trip(tmp_path, fmt_):
    cfg = parse_config(FAST)
    sol = harness.generate_field(cfg)
    harness.save_field(sol, tmp_path, fmt_)
    back = harness.load_field(tmp_path)
    np.testing.assert_array_equal(back.values, sol.values)
    np.testing.assert_array_equal(back.grid, sol.grid)
    assert back.true_lambda == sol.true_lambda and back.family == "burgers"


def test_binary_layout_is_little_endian_float64(tmp_path, fast_cfg):
    harness.cmd_generate(fast_cfg)
    d = Path(fast_cfg.output_dir) / "data"
    meta = json.loads((d / "field.json").read_text())
    assert meta["dtype"] == "float64" and meta["byte_order"] == "little"
    raw = (d / "values.f8").read_bytes()
    assert len(raw) == 8 * 6 * 64
    t = np.frombuffer((d / "times.f8").read_bytes(), dtype="<f8")
    np.testing.assert_allclose(t, 0.1 * np.arange(6))


def test_generate_is_idempotent(fast_cfg):
    side = harness.cmd_generate(fast_cfg)
    stamp = side.stat().st_mtime_ns
    harness.cmd_generate(fast_cfg)
    assert side.stat().st_mtime_ns == stamp


# ---------------------------------------------------------------- commands

def _files(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(Path(root).rglob("*")) if p.is_file()}


def test_identify_outputs_and_byte_identical_rerun(tmp_path, fast_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    rec = harness.cmd_identify(fast_cfg, str(a))
    harness.cmd_identify(fast_cfg, str(b))
    assert rec.status == "ok" and len(rec.lam) == 2
    assert _files(a) == _files(b)
    for name in ("identify.csv", "identify.json", "identify_points.csv", "identify_curves.csv"):
        assert (a / name).exists()
    meta = json.loads((a / "identify.json").read_text())
    assert meta["provenance"]["config_hash"] == fast_cfg.config_hash
    with open(a / "identify_points.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["snapshot", "x", "u"] and len(rows) == 1 + 22


def test_sweeps_and_report(tmp_path, fast_cfg):
    out = tmp_path / "s"
    table = harness.cmd_sweep_pairs(fast_cfg.replace(data=fast_cfg.data.__class__(
        **{**fast_cfg.data.__dict__, "max_pairs": 2})), str(out))
    assert [r[0] for r in table.rows] == [0.0, 0.01]
    assert table.header()[:4] == ["noise_pct", "lambda1_q1", "lambda1_median", "lambda1_q3"]
    dt_table = harness.cmd_sweep_dt(fast_cfg, str(out))
    assert [r[0] for r in dt_table.rows] == pytest.approx([0.1, 0.2])
    written = harness.cmd_report(out)
    names = {p.name for p in written}
    assert {"sweep_pairs_table.csv", "sweep_dt_table.csv"} <= names
    rebuilt = (out / "report" / "sweep_pairs_table.csv").read_text()
    assert rebuilt.splitlines()[1:] == table.csv().splitlines()[1:]


def test_report_on_empty_directory_warns(tmp_path):
    with pytest.warns(UserWarning):
        assert harness.cmd_report(tmp_path) == []


def test_failed_pair_is_a_missing_cell(tmp_path, fast_cfg, monkeypatch):
    real = harness.train

    def flaky(model, pair, tc):
        if pair.meta["k_prev"] == 0:
            raise TrainingFailedError("forced", diagnostics=[])
        return real(model, pair, tc)

    monkeypatch.setattr(harness, "train", flaky)
    cfg = fast_cfg.replace(data=fast_cfg.data.__class__(**{**fast_cfg.data.__dict__, "noise": (0.0,)}))
    table = harness.cmd_sweep_pairs(cfg, str(tmp_path / "f"))
    assert table.n_runs == [4]
    with open(tmp_path / "f" / "sweep_pairs_runs.csv") as fh:
        rows = list(csv.DictReader(fh))
    failed = [r for r in rows if r["status"] != "ok"]
    assert len(failed) == 1 and failed[0]["lambda_1"] == "nan"
    assert failed[0]["status"] == "failed: TrainingFailedError"
    meta = json.loads((tmp_path / "f" / "sweep_pairs_runs.json").read_text())
    assert list(meta["failures"]) == ["0-1@0.0"]


def test_all_failed_sweep_gives_nan_cells(fast_cfg, tmp_path, monkeypatch):
    def broken(model, pair, tc):
        raise TrainingFailedError("forced", diagnostics=[])

    monkeypatch.setattr(harness, "train", broken)
    table = harness.cmd_sweep_pairs(fast_cfg, str(tmp_path / "x"))
    assert all(math.isnan(c) for _, cells in table.rows for cell in cells for c in cell)
    with pytest.raises(TrainingFailedError):
        harness.cmd_identify(fast_cfg, str(tmp_path / "y"))


def test_equation_string():
    assert harness.equation_string("burgers", (1.0, 0.1)) == "u_t + 1.0000 u u_x - 0.1000 u_xx = 0"


# ---------------------------------------------------------------- CLI

def test_cli_end_to_end(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text(FAST)
    out = tmp_path / "cli"
    assert main(["generate", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "data" / "field.json").exists()
    assert main(["identify", "--config", str(cfg), "--out", str(out), "--seed", "5"]) == 0
    text = capsys.readouterr().out
    assert "correct:" in text and "identified:" in text
    assert json.loads((out / "identify.json").read_text())["provenance"]["seed"] == 5
    assert main(["report", str(out)]) == 0


def test_cli_errors(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\nfamily = burgers\n[data]\ndt_multipliers =\n")
    assert main(["sweep-dt", "--config", str(bad)]) == 1
    assert "error" in capsys.readouterr().err
    assert main(["identify", "--config", str(bad), "--threads", "0"]) == 2
    with pytest.raises(SystemExit):
        main(["identify"])


def test_shipped_configs_parse():
    paths = sorted((Path(__file__).resolve().parent.parent / "configs").glob("*.ini"))
    assert len(paths) >= 7
    for p in paths:
        load_config(p)
