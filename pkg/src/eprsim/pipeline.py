"""End-to-end runs: theory curves, simulated slit scans and external data."""
from __future__ import annotations

import dataclasses
import functools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import apparatus as ap
from . import engine as eng
from .config import RunConfig
from .criteria import CriteriaReport, inferred_momentum_variance, inferred_position_variance
from .engine import AxisGrid, Density1D
from .errors import DataError

REQUIRED_KEYS = (
    "dx_inf_mm", "dp_inf_invmm", "product_hbar2", "dx12_mm", "dp12_invmm",
    "joint_product_hbar2", "epr_violated", "inseparable", "theory_dx_mm",
    "theory_dp_invmm", "theory_product_hbar2", "seed",
)
EXTRA_KEYS = ("epr_margin", "mancini_margin", "epr_bound", "mancini_bound", "provenance")
SCAN_HEADER = "position_mm,expected_rate,counts"
MAPPING_PREFIX = "# mapping_scale_radpermm_per_mm="

# half-width of the conditional window, in conditional stds
_WINDOW_STDS = 16
_FIXED_AXIS_N = 64


@dataclass(frozen=True, eq=False)
class TheoryResult:
    report: CriteriaReport
    position_conditional: Density1D
    momentum_conditional: Density1D
    dx12_sq: float
    dp12_sq: float


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    report: CriteriaReport
    position_scan: ap.ScanResult
    momentum_scan: ap.ScanResult
    position_background: Optional[np.ndarray] = None
    momentum_background: Optional[np.ndarray] = None


def _physics_key(cfg: RunConfig) -> RunConfig:
    """Config with fields that do not affect expected curves neutralised (cache key)."""
    return cfg.replace(seed=0, output_dir="", background_subtract=False, slit_correction=True)


@functools.lru_cache(maxsize=8)
def _amplitude(cfg: RunConfig) -> eng.FactorizedAmplitude:
    return eng.factorized_amplitude(cfg.model(), cfg.oversample, cfg.min_n)


def _conditional(amp: eng.FactorizedAmplitude, std: float, center1: float, center2: float,
                 condition: Optional[float], samples_per_std: int = 32) -> Density1D:
    h = std / samples_per_std
    g1 = AxisGrid(eng.next_pow2(2 * _WINDOW_STDS * samples_per_std), h, center1)
    g2 = AxisGrid(_FIXED_AXIS_N, h, center2)
    d = eng.density_of(amp.joint_on(g1, g2))
    if condition is None:
        condition = ap._peak_position(d)
    return eng.conditional_slice(d, 2, condition)


def conditional_densities(cfg: RunConfig, amp: eng.FactorizedAmplitude,
                          samples_per_std: int = 32):
    """Joint variances and peak-conditioned P(x1|x2), P(p1|p2) from a factorized amplitude."""
    pos = eng.to_position(amp)
    mom_d = eng.density_of(amp)
    pos_d = eng.density_of(pos)
    dp12_sq = mom_d.plus.variance()
    dx12_sq = 4.0 * pos_d.minus.variance()

    # singles means: q1,2 = (q+ +- q-)/2 and x1,2 = x+ +- x-
    qp, qm = mom_d.plus.mean(), mom_d.minus.mean()
    xp, xm = pos_d.plus.mean(), pos_d.minus.mean()
    cond_x = _conditional(pos, np.sqrt(dx12_sq), xp + xm, xp - xm, cfg.condition_x2_mm,
                          samples_per_std)
    cond_p = _conditional(amp, np.sqrt(dp12_sq), 0.5 * (qp + qm), 0.5 * (qp - qm),
                          cfg.condition_p2_invmm, samples_per_std)
    return dx12_sq, dp12_sq, cond_x, cond_p


@functools.lru_cache(maxsize=8)
def _theory(cfg: RunConfig) -> TheoryResult:
    amp = _amplitude(_physics_key(cfg.replace(condition_x2_mm=None, condition_p2_invmm=None)))
    dx12_sq, dp12_sq, cond_x, cond_p = conditional_densities(cfg, amp)
    report = CriteriaReport.from_variances(
        inferred_position_variance(cond_x), inferred_momentum_variance(cond_p),
        dx12_sq, dp12_sq, cfg.model(), "theory grid")
    return TheoryResult(report, cond_x, cond_p, dx12_sq, dp12_sq)


def clear_caches() -> None:
    for f in (_amplitude, _theory, _expected_scans):
        f.cache_clear()


def theory_analysis(cfg: RunConfig) -> TheoryResult:
    return _theory(cfg.replace(seed=0, output_dir="", background_subtract=False,
                               slit_correction=True))


@functools.lru_cache(maxsize=8)
def _expected_scans(cfg: RunConfig) -> tuple[ap.ScanResult, ap.ScanResult]:
    amp = _amplitude(cfg.replace(fixed_slit_position_mm=None, fixed_slit_momentum_mm=None,
                                 condition_x2_mm=None, condition_p2_invmm=None))
    th = theory_analysis(cfg)
    k = cfg.model().k_d
    pcfg, mcfg = cfg.scan_config(ap.POSITION), cfg.scan_config(ap.MOMENTUM)
    scale = k / cfg.focal_length_mm
    dpos = ap.scan_plane_density(amp, pcfg, k, np.sqrt(th.dx12_sq))
    dmom = ap.scan_plane_density(amp, mcfg, k, np.sqrt(th.dp12_sq) / scale)
    pos = ap.add_wings(ap.expected_scan(dpos, pcfg), pcfg)
    mom = ap.add_wings(ap.expected_scan(dmom, mcfg, scale), mcfg)
    return pos, mom


def simulate_scans(cfg: RunConfig) -> tuple[ap.ScanResult, ap.ScanResult]:
    """Both slit scans with wings and Poisson counts, deterministic in ``cfg.seed``."""
    pos, mom = _expected_scans(_physics_key(cfg))
    meta = {"seed": cfg.seed}
    pos = ap.sample_counts(dataclasses.replace(pos, metadata=dict(pos.metadata, **meta)),
                           cfg.scan_config(ap.POSITION))
    mom = ap.sample_counts(dataclasses.replace(mom, metadata=dict(mom.metadata, **meta)),
                           cfg.scan_config(ap.MOMENTUM))
    return pos, mom


def analyze_scans(cfg: RunConfig, pos: ap.ScanResult, mom: ap.ScanResult,
                  provenance: str) -> ExperimentResult:
    """Inferred variances from one position scan and one momentum scan.

    Joint variances (x1 - x2, p1 + p2) are not accessible from a single
    fixed-slit scan; they are taken from the model's joint distribution.
    """
    a = cfg.slit_width_mm
    bgs = []
    variances = []
    for sr in (pos, mom):
        y = sr.counts.astype(float)
        bgs.append(ap.fit_background(sr.positions_mm, y) if cfg.background_subtract else None)
        v = ap.scan_variance(sr, use_counts=True, background_subtract=cfg.background_subtract)
        if cfg.slit_correction:
            v = ap.slit_correction(v, a * sr.mapping_scale)
        variances.append(v)
    th = theory_analysis(cfg)
    report = CriteriaReport.from_variances(variances[0], variances[1], th.dx12_sq, th.dp12_sq,
                                           cfg.model(), provenance)
    return ExperimentResult(report, pos, mom, bgs[0], bgs[1])


def experiment_analysis(cfg: RunConfig) -> ExperimentResult:
    pos, mom = simulate_scans(cfg)
    return analyze_scans(cfg, pos, mom, "simulated scan")


# ---------------------------------------------------------------- file formats

def _num(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def format_report(report: CriteriaReport, cfg: RunConfig) -> str:
    d = report.as_dict()
    d["seed"] = cfg.seed
    lines = [f"{k}={_num(d[k])}" for k in REQUIRED_KEYS + EXTRA_KEYS]
    for k, v in cfg.as_dict().items():
        lines.append(f"config.{k}={'null' if v is None else _num(v)}")
    return "\n".join(lines) + "\n"


def report_json(report: CriteriaReport, cfg: RunConfig) -> str:
    d = report.as_dict()
    d["seed"] = cfg.seed
    return json.dumps({"report": d, "config": cfg.as_dict()}, indent=2, sort_keys=True) + "\n"


def parse_report(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if line.strip():
            k, _, v = line.partition("=")
            out[k] = v
    return out


def format_scan_csv(sr: ap.ScanResult) -> str:
    lines = []
    if sr.mode == ap.MOMENTUM:
        lines.append(f"{MAPPING_PREFIX}{_num(sr.mapping_scale)}")
    lines.append(SCAN_HEADER)
    counts = sr.counts if sr.counts is not None else np.zeros(len(sr.positions_mm), dtype=int)
    for p, r, c in zip(sr.positions_mm, sr.expected_rate, counts):
        lines.append(f"{_num(float(p))},{_num(float(r))},{int(c)}")
    return "\n".join(lines) + "\n"


def format_curve_csv(header: str, x: np.ndarray, y: np.ndarray) -> str:
    rows = [header] + [f"{_num(float(a))},{_num(float(b))}" for a, b in zip(x, y)]
    return "\n".join(rows) + "\n"


def read_scan_csv(path, mode: str, default_scale: float = 1.0) -> ap.ScanResult:
    """Parse a scan file; raises DataError naming the offending line."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read scan file {path}: {exc}") from exc
    scale = None
    header_seen = False
    rows = []
    for lineno, line in enumerate(lines, start=1):
        if line.startswith("#"):
            if line.startswith(MAPPING_PREFIX):
                try:
                    scale = float(line[len(MAPPING_PREFIX):])
                except ValueError:
                    raise DataError(f"{path}:{lineno}: bad mapping scale") from None
            continue
        if not header_seen:
            if line.strip() != SCAN_HEADER:
                raise DataError(f"{path}:{lineno}: expected header '{SCAN_HEADER}'")
            header_seen = True
            continue
        if not line.strip():
            continue
        cols = line.split(",")
        if len(cols) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 columns, got {len(cols)}")
        try:
            p, r = float(cols[0]), float(cols[1])
            c = float(cols[2])
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric value") from None
        if not (np.isfinite(p) and np.isfinite(r) and np.isfinite(c)):
            raise DataError(f"{path}:{lineno}: non-finite value")
        if c < 0 or c != int(c) or r < 0:
            raise DataError(f"{path}:{lineno}: counts must be non-negative integers")
        rows.append((p, r, int(c)))
    if not header_seen:
        raise DataError(f"{path}: missing header")
    if len(rows) < 3:
        raise DataError(f"{path}: fewer than 3 data rows")
    arr = np.array([r[:2] for r in rows])
    counts = np.array([r[2] for r in rows], dtype=np.int64)
    if np.any(np.diff(arr[:, 0]) <= 0):
        raise DataError(f"{path}: positions are not strictly increasing")
    if not counts.any():
        raise DataError(f"{path}: all counts are zero")
    if mode == ap.MOMENTUM:
        scale = default_scale if scale is None else scale
    else:
        scale = 1.0
    return ap.ScanResult(arr[:, 0], arr[:, 1], mode, scale, counts)


# ---------------------------------------------------------------- runners

def _write_outputs(out_dir, files: dict[str, str]) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        for name, text in files.items():
            p = out / name
            p.write_text(text, encoding="utf-8")
            written.append(p)
    except OSError:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return written


def _out(cfg: RunConfig, out_dir) -> Path:
    return Path(out_dir if out_dir is not None else cfg.output_dir)


def theory_files(cfg: RunConfig, th: TheoryResult) -> dict[str, str]:
    cx, cp = th.position_conditional, th.momentum_conditional
    return {
        "theory_position_conditional.csv": format_curve_csv("x1_mm,density", cx.grid.points, cx.values),
        "theory_momentum_conditional.csv": format_curve_csv("p1_invmm,density", cp.grid.points, cp.values),
        "report_theory.txt": format_report(th.report, cfg),
        "report_theory.json": report_json(th.report, cfg),
    }


def experiment_files(cfg: RunConfig, ex: ExperimentResult, kind: str = "experiment") -> dict[str, str]:
    files = {}
    if kind == "experiment":
        files["scan_position.csv"] = format_scan_csv(ex.position_scan)
        files["scan_momentum.csv"] = format_scan_csv(ex.momentum_scan)
    for name, sr, bg in (("position", ex.position_scan, ex.position_background),
                         ("momentum", ex.momentum_scan, ex.momentum_background)):
        if bg is not None:
            files[f"{kind}_background_{name}.csv"] = format_curve_csv(
                "position_mm,fit_background", sr.positions_mm, bg)
    files[f"report_{kind}.txt"] = format_report(ex.report, cfg)
    files[f"report_{kind}.json"] = report_json(ex.report, cfg)
    return files


def run_theory(cfg: RunConfig, out_dir=None) -> CriteriaReport:
    th = theory_analysis(cfg)
    _write_outputs(_out(cfg, out_dir), theory_files(cfg, th))
    return th.report


def run_experiment(cfg: RunConfig, out_dir=None) -> CriteriaReport:
    ex = experiment_analysis(cfg)
    _write_outputs(_out(cfg, out_dir), experiment_files(cfg, ex))
    return ex.report


def analyze_external(scan_pos_file, scan_mom_file, cfg: RunConfig, out_dir=None) -> CriteriaReport:
    scale = cfg.model().k_d / cfg.focal_length_mm
    pos = read_scan_csv(scan_pos_file, ap.POSITION)
    mom = read_scan_csv(scan_mom_file, ap.MOMENTUM, scale)
    ex = analyze_scans(cfg, pos, mom, "external data")
    _write_outputs(_out(cfg, out_dir), experiment_files(cfg, ex, "analyze"))
    return ex.report


def comparison_text(theory: CriteriaReport, experiment: CriteriaReport) -> str:
    keys = ("dx_inf_mm", "dp_inf_invmm", "product_hbar2")
    lines = []
    for k in keys:
        t, e = getattr(theory, k), getattr(experiment, k)
        lines.append(f"theory_{k}={_num(t)}")
        lines.append(f"experiment_{k}={_num(e)}")
        lines.append(f"ratio_{k}={_num(e / t if t else float('nan'))}")
    return "\n".join(lines) + "\n"


def run_full(cfg: RunConfig, out_dir=None) -> tuple[CriteriaReport, CriteriaReport]:
    th = theory_analysis(cfg)
    ex = experiment_analysis(cfg)
    files = theory_files(cfg, th)
    files.update(experiment_files(cfg, ex))
    files["comparison.txt"] = comparison_text(th.report, ex.report)
    _write_outputs(_out(cfg, out_dir), files)
    return th.report, ex.report
