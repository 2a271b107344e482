import json
import subprocess
import sys

import numpy as np
import pytest

from eprsim import apparatus as ap
from eprsim import pipeline as pl
from eprsim.cli import main
from eprsim.config import RunConfig
from eprsim.errors import ConfigError, DataError


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("full")
    assert main(["full", "--out", str(out), "--seed", "5"]) == 0
    return out


# ------------------------------------------------------------------ config

def test_config_defaults_round_trip(tmp_path):
    cfg = RunConfig()
    p = tmp_path / "c.yaml"
    p.write_text("pump_width_mm: 0.2\ncrystal_length_mm: 3\nseed: 4\nphasematch: sinc\n")
    c = RunConfig.from_file(p)
    assert c.pump_width_mm == 0.2 and c.crystal_length_mm == 3.0 and c.seed == 4
    assert isinstance(c.crystal_length_mm, float)
    assert RunConfig.from_mapping(cfg.as_dict()) == cfg


@pytest.mark.parametrize("text", [
    "pump_width_mm: -0.1\n", "pump_width_mm: abc\n", "bogus_key: 1\n", "seed: 1.5\n",
    "phasematch: cubic\n", "slit_correction: maybe\n", "nested:\n  a: 1\n", "- 1\n- 2\n",
    "pump_width_mm: [1, 2\n", "oversample: 2\n", "position_scan_points: 4\n",
    "background_fraction: 1.5\n", "pump_width_mm: null\n",
])
def test_config_rejects_bad_values(tmp_path, text):
    p = tmp_path / "c.yaml"
    p.write_text(text)
    with pytest.raises(ConfigError):
        RunConfig.from_file(p)


def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_file(tmp_path / "none.yaml")


def test_empty_config_is_defaults(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("")
    assert RunConfig.from_file(p) == RunConfig()


def test_config_model_choices():
    from eprsim import model as mdl
    assert isinstance(RunConfig().model().crystal.phasematch, mdl.GaussianAngular)
    assert isinstance(RunConfig(phasematch="sinc").model().crystal.phasematch, mdl.ParaxialSinc)
    s = RunConfig().scan_config(ap.MOMENTUM)
    assert s.mode == ap.MOMENTUM and s.scan_step_mm == 0.008


# ------------------------------------------------------------------ theory

def test_theory_reference_defaults():
    r = pl.theory_analysis(RunConfig()).report
    np.testing.assert_allclose(r.dx_inf_mm, 0.019417, rtol=2e-4)
    np.testing.assert_allclose(r.dp_inf_invmm, 2.93638, rtol=2e-4)
    np.testing.assert_allclose(r.product_hbar2, 0.003251, rtol=1e-3)
    np.testing.assert_allclose(r.theory_dx_mm, 0.019449, rtol=1e-4)
    assert r.epr_violated and r.inseparable
    assert r.mancini_margin > 100


def test_theory_conditionals_are_normalized():
    th = pl.theory_analysis(RunConfig())
    for c in (th.position_conditional, th.momentum_conditional):
        np.testing.assert_allclose(c.values.sum() * c.grid.spacing, 1.0, rtol=1e-12)
        assert c.conditioned_on is not None


def test_explicit_condition_value():
    th = pl.theory_analysis(RunConfig(condition_x2_mm=0.01))
    assert abs(th.position_conditional.conditioned_on - 0.01) < th.position_conditional.grid.spacing
    base = pl.theory_analysis(RunConfig()).report.dx_inf_mm
    np.testing.assert_allclose(th.report.dx_inf_mm, base, rtol=1e-3)


def test_sinc_theory_runs():
    r = pl.theory_analysis(RunConfig(phasematch="sinc")).report
    np.testing.assert_allclose(r.theory_dx_mm, 0.024183, rtol=1e-4)
    assert r.epr_violated


# ------------------------------------------------------------------ experiment

def test_experiment_deterministic_per_seed():
    a = pl.experiment_analysis(RunConfig(seed=3))
    b = pl.experiment_analysis(RunConfig(seed=3))
    c = pl.experiment_analysis(RunConfig(seed=4))
    assert np.array_equal(a.position_scan.counts, b.position_scan.counts)
    assert a.report == b.report
    assert not np.array_equal(a.position_scan.counts, c.position_scan.counts)


def test_experiment_flags():
    base = pl.experiment_analysis(RunConfig())
    assert base.position_background is None
    sub = pl.experiment_analysis(RunConfig(background_subtract=True))
    assert sub.position_background is not None
    assert sub.report.product_hbar2 < base.report.product_hbar2
    raw = pl.experiment_analysis(RunConfig(slit_correction=False))
    assert raw.report.dx_inf_mm > base.report.dx_inf_mm


def test_momentum_scan_mapping_scale():
    ex = pl.experiment_analysis(RunConfig())
    np.testing.assert_allclose(ex.momentum_scan.mapping_scale, 2 * np.pi * 1e6 / 780 / 100.0)


# ------------------------------------------------------------------ files

def test_full_run_outputs(full_run):
    names = sorted(p.name for p in full_run.iterdir())
    assert names == sorted([
        "comparison.txt", "report_experiment.json", "report_experiment.txt",
        "report_theory.json", "report_theory.txt", "scan_momentum.csv", "scan_position.csv",
        "theory_momentum_conditional.csv", "theory_position_conditional.csv"])
    rep = pl.parse_report((full_run / "report_theory.txt").read_text())
    for k in pl.REQUIRED_KEYS:
        assert k in rep
    assert rep["seed"] == "5" and rep["epr_violated"] == "true"
    js = json.loads((full_run / "report_experiment.json").read_text())
    assert js["config"]["seed"] == 5
    assert js["report"]["epr_violated"] is True


def test_report_key_order(full_run):
    lines = (full_run / "report_theory.txt").read_text().splitlines()
    keys = [l.split("=")[0] for l in lines]
    n = len(pl.REQUIRED_KEYS)
    assert tuple(keys[:n]) == pl.REQUIRED_KEYS
    assert all(k.startswith("config.") for k in keys[n + len(pl.EXTRA_KEYS):])


def test_scan_csv_format(full_run):
    mom = (full_run / "scan_momentum.csv").read_text().splitlines()
    assert mom[0].startswith(pl.MAPPING_PREFIX) and mom[1] == pl.SCAN_HEADER
    pos = (full_run / "scan_position.csv").read_text().splitlines()
    assert pos[0] == pl.SCAN_HEADER and len(pos) == 62


def test_analyze_reproduces_experiment(full_run, tmp_path):
    out = tmp_path / "an"
    rc = main(["analyze", "--position", str(full_run / "scan_position.csv"),
               "--momentum", str(full_run / "scan_momentum.csv"), "--out", str(out), "--seed", "5"])
    assert rc == 0
    a = pl.parse_report((out / "report_analyze.txt").read_text())
    e = pl.parse_report((full_run / "report_experiment.txt").read_text())
    a.pop("provenance"), e.pop("provenance")
    a.pop("config.output_dir"), e.pop("config.output_dir")
    assert a == e


def test_byte_identical_reruns(tmp_path):
    out = tmp_path / "o"
    assert main(["experiment", "--out", str(out), "--seed", "9"]) == 0
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    pl.clear_caches()
    assert main(["experiment", "--out", str(out), "--seed", "9"]) == 0
    assert {p.name: p.read_bytes() for p in out.iterdir()} == first


def test_background_files_written(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("background_subtract: true\n")
    assert main(["experiment", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "experiment_background_position.csv").exists()


# ------------------------------------------------------------------ bad input

def _scan_file(tmp_path, body, name="s.csv"):
    p = tmp_path / name
    p.write_text(body)
    return p


@pytest.mark.parametrize("body,fragment", [
    ("wrong,header\n1,1,1\n", ":1:"),
    (pl.SCAN_HEADER + "\n0.0,1.0,5\n0.1,1.0\n0.2,1,1\n", ":3:"),
    (pl.SCAN_HEADER + "\n0.0,1.0,5\n0.1,x,2\n0.2,1,1\n", ":3:"),
    (pl.SCAN_HEADER + "\n0.0,1.0,5\n0.1,1.0,-2\n0.2,1,1\n", ":3:"),
    (pl.SCAN_HEADER + "\n0.0,1.0,5\n0.1,1.0,2.5\n0.2,1,1\n", ":3:"),
    (pl.SCAN_HEADER + "\n0.0,1.0,5\n0.1,nan,2\n0.2,1,1\n", ":3:"),
    (pl.SCAN_HEADER + "\n0.2,1.0,5\n0.1,1.0,2\n0.3,1,1\n", "increasing"),
    (pl.SCAN_HEADER + "\n0.0,1.0,0\n0.1,1.0,0\n0.2,1,0\n", "all counts"),
    (pl.SCAN_HEADER + "\n0.0,1.0,5\n", "fewer than 3"),
    ("", "missing header"),
])
def test_read_scan_csv_errors(tmp_path, body, fragment):
    p = _scan_file(tmp_path, body)
    with pytest.raises(DataError, match=fragment):
        pl.read_scan_csv(p, ap.POSITION)


def test_read_scan_csv_bad_mapping(tmp_path):
    p = _scan_file(tmp_path, pl.MAPPING_PREFIX + "abc\n" + pl.SCAN_HEADER + "\n0,1,1\n1,1,1\n2,1,1\n")
    with pytest.raises(DataError, match=":1:"):
        pl.read_scan_csv(p, ap.MOMENTUM)


def test_read_scan_csv_default_mapping(tmp_path):
    p = _scan_file(tmp_path, pl.SCAN_HEADER + "\n0,1,1\n1,1,4\n2,1,1\n")
    assert pl.read_scan_csv(p, ap.MOMENTUM, 80.0).mapping_scale == 80.0
    assert pl.read_scan_csv(p, ap.POSITION, 80.0).mapping_scale == 1.0


def test_cli_exit_codes(tmp_path, capsys):
    bad_cfg = _scan_file(tmp_path, "pump_width_mm: -1\n", "bad.yaml")
    assert main(["theory", "--config", str(bad_cfg), "--out", str(tmp_path / "a")]) == 2
    assert "config error" in capsys.readouterr().err
    bad_scan = _scan_file(tmp_path, "nope\n")
    assert main(["analyze", "--position", str(bad_scan), "--momentum", str(bad_scan),
                 "--out", str(tmp_path / "b")]) == 3
    assert not (tmp_path / "b").exists()
    flat = _scan_file(tmp_path, pl.SCAN_HEADER + "\n0,1,0\n0.1,1,5\n0.2,1,0\n0.3,1,0\n", "flat.csv")
    assert main(["analyze", "--position", str(flat), "--momentum", str(flat),
                 "--out", str(tmp_path / "c")]) == 4


def test_cli_summary_line(tmp_path, capsys):
    assert main(["theory", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("[theory] dx_inf=") and "EPR violated=True" in out


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "eprsim", "theory", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "[theory]" in r.stdout


def test_cli_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])


def test_invalid_config_writes_nothing(tmp_path):
    bad = _scan_file(tmp_path, "pump_width_mm: -0.17\n", "bad.yaml")
    assert main(["full", "--config", str(bad), "--out", str(tmp_path / "none")]) == 2
    assert not (tmp_path / "none").exists()


def test_analyze_synthetic_gaussian_counts(tmp_path):
    """Counts drawn from Gaussians of known std recover sigma^2 within 3 standard errors."""
    rng = np.random.default_rng(2024)
    x = np.round(np.arange(-0.2, 0.2001, 0.004), 10)
    scale = 80.0
    sx, su = 0.03, 0.04
    files = {}
    for name, s, prefix in (("pos", sx, ""), ("mom", su, f"{pl.MAPPING_PREFIX}{scale}\n")):
        lam = 1e4 * np.exp(-0.5 * (x / s) ** 2)
        counts = rng.poisson(lam)
        rows = "".join(f"{float(a)!r},{float(b)!r},{c}\n" for a, b, c in zip(x, lam, counts))
        files[name] = _scan_file(tmp_path, prefix + pl.SCAN_HEADER + "\n" + rows, f"{name}.csv")
        files[name + "_n"] = counts.sum()
    cfg = RunConfig(slit_correction=False, background_subtract=False)
    r = pl.analyze_external(files["pos"], files["mom"], cfg, tmp_path / "out")
    for got, s2, n in ((r.dx_inf_mm ** 2, sx ** 2, files["pos_n"]),
                       (r.dp_inf_invmm ** 2, (su * scale) ** 2, files["mom_n"])):
        se = s2 * np.sqrt(2.0 / n)
        assert abs(got - s2) < 3 * se
