"""Build scenarios from configs, run them, and write CSV telemetry and metrics."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..estimators import (AnnihilatorSet, AssumptionError, build_he, check_rank_precondition,
                          run_estimator)
from ..gpebo import observer_regressor, run_observer
from ..regext import ConfigurationError, LreStream, extend_regressor
from ..sigproc import (NoiseSpec, RangeError, RationalFilter, SignalTrace, TimeGrid,
                       correlation_decay, pe_bounds, write_csv)
from .config import ConfigError, ScenarioConfig, matrix
from .scenarios import (Harmonic, LinearScenario, closed_loop_plant, first_order_plant,
                        harmonic_oscillator, make_exogenous)

log = logging.getLogger(__name__)

OUT_ENV = "PAEST_OUT"
STEADY_FRACTION = 0.1
PE_REL_TOL = 1e-9
# largest acceptable rms-correlation ratio between windows factor*T and T
DECAY_LIMITS = {4: 0.75, 2: 0.85}


def default_out_root() -> Path:
    return Path(os.environ.get(OUT_ENV, "paest_out"))


def make_grid(cfg: ScenarioConfig) -> TimeGrid:
    return TimeGrid.from_horizon(cfg.t0, cfg.h, cfg.horizon)


def _noise_spec(cfg: ScenarioConfig) -> NoiseSpec | None:
    if cfg.noise_power == 0:
        return None
    return NoiseSpec(cfg.noise_power, cfg.noise_sample_time, cfg.noise_seed)


def build_plant(cfg: ScenarioConfig):
    """LinearScenario for the estimator kinds, AffineSystem for the oscillator."""
    u = Harmonic(cfg.u_amplitudes, cfg.u_frequencies, cfg.u_phases, cfg.u_offset)
    eta = make_exogenous(Harmonic(cfg.eta_amplitudes, cfg.eta_frequencies), _noise_spec(cfg),
                         cfg.t0, cfg.horizon)
    if cfg.kind == "oscillator":
        return harmonic_oscillator(cfg.omega, cfg.xi0, u, eta, cfg.phi_cap)
    f = Harmonic(cfg.f_amplitudes, cfg.f_frequencies)
    if cfg.kind == "first_order":
        return first_order_plant(cfg.a, cfg.b, cfg.k, u, f, eta, cfg.feedback_gain)
    return closed_loop_plant(cfg.num, cfg.den, cfg.delta, u, f, eta)


def build_annihilator(cfg: ScenarioConfig) -> AnnihilatorSet | None:
    if not cfg.independent:
        return None
    n, m = cfg.n, cfg.m
    idx = [i - 1 for i in cfg.independent]
    H = matrix(cfg.H, n, n - m) if cfg.H else None
    He = None
    if cfg.law == "C":
        E = matrix(cfg.E, n, 2 * (n - m)) if cfg.E else None
        He = build_he(n, m, E)
    return AnnihilatorSet.from_selection(n, idx, H=H, He=He)


def build_stream(cfg: ScenarioConfig, plant: LinearScenario | None = None) -> tuple[LreStream, LreStream]:
    """Measured stream and the stream the law runs on (doubled for law C)."""
    plant = plant or build_plant(cfg)
    lre = plant.simulate(make_grid(cfg))
    if cfg.law == "C":
        return lre, extend_regressor(lre, RationalFilter(cfg.filter_num, cfg.filter_den))
    return lre, lre


@dataclass
class RunResult:
    """Telemetry table, summary metrics and diagnostics of one run."""

    config: ScenarioConfig
    header: list[str]
    table: np.ndarray
    metrics: dict
    warnings: list[str] = field(default_factory=list)
    diverged: bool = False
    files: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return "diverged" if self.diverged else "ok"

    def column(self, name: str) -> np.ndarray:
        return self.table[:, self.header.index(name)]

    def columns(self, prefix: str) -> np.ndarray:
        idx = [i for i, h in enumerate(self.header) if h.startswith(prefix)]
        return self.table[:, idx]

    def write(self, out_dir) -> dict:
        """Write ``<id>.csv`` and ``<id>_metrics.json`` into `out_dir`."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = self.config.id
        csv_path = out / f"{stem}.csv"
        json_path = out / f"{stem}_metrics.json"
        write_csv(csv_path, self.header, self.table)
        write_json(json_path, self.summary())
        self.files = {"csv": str(csv_path), "metrics": str(json_path)}
        return self.files

    def summary(self) -> dict:
        return {"scenario": self.config.id, "law": self.config.law, "status": self.status,
                "metrics": self.metrics, "warnings": list(self.warnings)}


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def write_json(path, obj) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n")
    tmp.replace(path)


def compute_metrics(header: list[str], table: np.ndarray, epsilon: float = 1e-4) -> dict:
    """Summary metrics re-derivable from an emitted telemetry table.

    ``steady_state_max_err`` is the mean over the final 10% of the record of
    ``max_i |theta_err_i|``; ``steady_state_norm_err`` the same for the
    Euclidean norm. ``time_to_eps`` is the first emitted time after which
    ``max_i |theta_err_i|`` stays at or below `epsilon` (None if never).
    Observer tables add the final and final-10% mean of ``ln_xerr``.
    """
    t = table[:, 0]
    err_idx = [i for i, h in enumerate(header) if h.startswith("theta_err_")]
    err = table[:, err_idx]
    t_start = t[-1] - STEADY_FRACTION * (t[-1] - t[0])
    tail = t >= t_start
    out = {"t_final": float(t[-1]), "epsilon": float(epsilon)}
    if err.size and np.all(np.isfinite(err)):
        emax = np.max(np.abs(err), axis=1)
        out["steady_state_max_err"] = float(np.mean(emax[tail]))
        out["steady_state_norm_err"] = float(np.mean(np.sqrt(np.sum(err[tail] ** 2, axis=1))))
        out["final_max_err"] = float(emax[-1])
        above = np.nonzero(emax > epsilon)[0]
        if above.size == 0:
            out["time_to_eps"] = float(t[0])
        elif above[-1] + 1 < t.size:
            out["time_to_eps"] = float(t[above[-1] + 1])
        else:
            out["time_to_eps"] = None
    if "ln_xerr" in header:
        ln = table[:, header.index("ln_xerr")]
        out["final_ln_xerr"] = float(ln[-1])
        out["mean_final_ln_xerr"] = float(np.mean(ln[tail]))
    return out


def _pe_warning(phi: SignalTrace, window: float) -> list[str]:
    span = phi.grid.t_end - phi.grid.t0
    if span < 2 * window:
        return ["record shorter than 2T: excitation not checked"]
    lo, hi = pe_bounds(phi, window)
    if not lo > PE_REL_TOL * max(hi, 1e-300):
        return [f"regressor not persistently exciting at window {window:g} "
                f"(alpha_lower={lo:.3g}, alpha_upper={hi:.3g})"]
    return []


def run_scenario(cfg: ScenarioConfig, out_dir=None) -> RunResult:
    """Build and run one scenario; write CSV and metrics when `out_dir` is given.

    Raises AssumptionError when a law's rank precondition fails before
    estimation. Divergence is recorded in the result with the partial
    traces.
    """
    warnings = list(cfg.warnings)
    if cfg.is_observer:
        sys = build_plant(cfg)
        Gamma = matrix(cfg.Gamma, cfg.n, cfg.n) if cfg.Gamma else None
        theta0 = np.asarray(cfg.theta0) if cfg.theta0 else None
        run = run_observer(sys, make_grid(cfg), cfg.law, cfg.gamma, cfg.window or 1.0,
                           Gamma=Gamma, theta0=theta0, decimation=cfg.decimation)
        header, table = run.header, run.table()
        warnings += [w for w in run.warnings if w not in warnings]
        diverged = run.diverged
        result_extra = {"identity_residual": run.identity_residual}
    else:
        lre, stream = build_stream(cfg)
        ann = build_annihilator(cfg)
        warnings += _pe_warning(stream.phi, cfg.window)
        theta0 = np.asarray(cfg.theta0) if cfg.theta0 else None
        run = run_estimator(stream, cfg.law, cfg.gamma, cfg.window, ann, theta0,
                            decimation=cfg.decimation, unconstrained=cfg.unconstrained,
                            m2_rule=cfg.m2_rule)
        header, table = run.header, run.table()
        warnings += [w for w in run.warnings if w not in warnings]
        diverged = run.diverged
        result_extra = {}
    metrics = compute_metrics(header, table, cfg.epsilon)
    metrics["window"] = None if cfg.window is None else cfg.window_steps * cfg.h
    metrics.update(result_extra)
    res = RunResult(cfg, header, table, metrics, warnings, diverged)
    if out_dir is not None:
        res.write(out_dir)
    return res


@dataclass
class SweepTable:
    param: str
    values: list[float]
    results: list[RunResult]

    header = ["value", "steady_state_max_err", "steady_state_norm_err", "time_to_eps", "status"]

    def rows(self) -> list[list]:
        return [[v, r.metrics.get("steady_state_max_err", math.nan),
                 r.metrics.get("steady_state_norm_err", math.nan),
                 r.metrics.get("time_to_eps") if r.metrics.get("time_to_eps") is not None else math.nan,
                 0.0 if r.status == "ok" else 1.0]
                for v, r in zip(self.values, self.results)]

    def column(self, name: str) -> np.ndarray:
        i = self.header.index(name)
        return np.array([row[i] for row in self.rows()], dtype=float)


SWEEP_FIELDS = {"T": "window", "gamma": "gamma"}


def sweep(cfg: ScenarioConfig, param: str, values, out_dir=None) -> SweepTable:
    """Run `cfg` once per value of `param` (``T`` or ``gamma``), sharing the seed."""
    if param not in SWEEP_FIELDS:
        raise ConfigError([f"sweep parameter must be one of {', '.join(SWEEP_FIELDS)}, got {param!r}"], cfg.source)
    values = [float(v) for v in values]
    errs = []
    if not values:
        errs.append("sweep needs at least one value")
    if any(not v > 0 for v in values):
        errs.append("sweep values must be positive")
    if any(b <= a for a, b in zip(values, values[1:])):
        errs.append("sweep values must be sorted ascending without repeats")
    if param == "T" and cfg.law == "gd_baseline":
        errs.append("law gd_baseline has no window to sweep")
    if errs:
        raise ConfigError(errs, cfg.source)
    results = []
    for v in values:
        run_cfg = cfg.with_overrides(**{SWEEP_FIELDS[param]: v})
        sub = None if out_dir is None else Path(out_dir) / f"{param}_{v!r}"
        results.append(run_scenario(run_cfg, sub))
    table = SweepTable(param, values, results)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_csv(Path(out_dir) / "sweep.csv", table.header, np.array(table.rows(), dtype=float))
    return table


@dataclass
class CompareReport:
    a: RunResult
    b: RunResult
    ratios: dict

    def summary(self) -> dict:
        return {"a": self.a.summary(), "b": self.b.summary(), "ratios": self.ratios}


def _ratio(x, y) -> float:
    if x is None or y is None:
        return math.nan
    if x == y:
        return 1.0
    return x / y if y != 0 else math.inf


def compare(cfg_a: ScenarioConfig, cfg_b: ScenarioConfig, out_dir=None) -> CompareReport:
    """Paired runs on a shared grid and noise seed, with ratio metrics (a over b)."""
    errs = []
    for name in ("t0", "h", "horizon"):
        if getattr(cfg_a, name) != getattr(cfg_b, name):
            errs.append(f"grid.{name} differs: {getattr(cfg_a, name)} vs {getattr(cfg_b, name)}")
    if (cfg_a.noise_seed, cfg_a.noise_power) != (cfg_b.noise_seed, cfg_b.noise_power):
        errs.append("perturbation.noise_seed / noise_power differ between the two configs")
    if errs:
        raise ConfigError(errs, f"{cfg_a.source} vs {cfg_b.source}")
    sub_a = sub_b = None
    if out_dir is not None:
        sub_a, sub_b = Path(out_dir) / "a", Path(out_dir) / "b"
    ra = run_scenario(cfg_a, sub_a)
    rb = run_scenario(cfg_b, sub_b)
    ma, mb = ra.metrics, rb.metrics
    ratios = {
        "steady_state_max_err_ratio": _ratio(ma.get("steady_state_max_err"), mb.get("steady_state_max_err")),
        "steady_state_norm_err_ratio": _ratio(ma.get("steady_state_norm_err"), mb.get("steady_state_norm_err")),
    }
    if "final_ln_xerr" in ma and "final_ln_xerr" in mb:
        ratios["final_ln_xerr_diff"] = ma["final_ln_xerr"] - mb["final_ln_xerr"]
        ratios["mean_final_ln_xerr_diff"] = ma["mean_final_ln_xerr"] - mb["mean_final_ln_xerr"]
    report = CompareReport(ra, rb, ratios)
    if out_dir is not None:
        write_json(Path(out_dir) / "compare.json", report.summary())
    return report


@dataclass
class Check:
    name: str
    ok: bool
    detail: str
    skipped: bool = False


@dataclass
class DiagnosticReport:
    scenario: str
    checks: list[Check]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def lines(self) -> list[str]:
        return [f"{'SKIP' if c.skipped else 'PASS' if c.ok else 'FAIL'} {c.name}: {c.detail}"
                for c in self.checks]


def diagnose(cfg: ScenarioConfig) -> DiagnosticReport:
    """Assumption checks only: excitation, independence decay and rank conditions."""
    checks: list[Check] = []
    window = cfg.window
    if cfg.is_observer:
        sys = build_plant(cfg)
        phi, w = observer_regressor(sys, make_grid(cfg))
        independent = list(range(cfg.n))
        window = window or 36.0
    else:
        lre, stream = build_stream(cfg)
        phi, w = stream.phi, stream.w
        independent = [i - 1 for i in cfg.independent] if cfg.law != "C" else \
            [i - 1 for i in cfg.independent] + [cfg.n + i - 1 for i in cfg.independent]
        if cfg.law == "A" and not cfg.independent:
            independent = list(range(cfg.n))
    try:
        lo, hi = pe_bounds(phi, window)
        checks.append(Check("excitation", lo > PE_REL_TOL * max(hi, 1e-300),
                            f"window {window:g}: alpha_lower={lo:.6g}, alpha_upper={hi:.6g}"))
    except RangeError as exc:
        checks.append(Check("excitation", False, str(exc)))
    span = phi.grid.t_end - phi.grid.t0
    # wider windows separate decay from dependence better; fall back when the record is short
    factor = next((f for f in DECAY_LIMITS if span >= f * window + phi.grid.h), None)
    for i in independent:
        name = f"independence phi_{i + 1}"
        if factor is None:
            checks.append(Check(name, True, f"record of length {span:g} is shorter than 2T", skipped=True))
            continue
        c1, cf = correlation_decay(phi.component(i), w, window, factor)
        ok = cf <= DECAY_LIMITS[factor] * c1 or cf <= 1e-3
        checks.append(Check(name, ok, f"rms correlation {c1:.4g} at T -> {cf:.4g} at {factor}T"))
    if not cfg.is_observer and cfg.law in ("B", "C"):
        ann = build_annihilator(cfg)
        grid = stream.grid
        t = min(grid.t0 + grid.steps(2 * window) * grid.h, grid.t_end)
        ok, r, k = check_rank_precondition(stream, cfg.law, ann, cfg.window_steps * cfg.h, t)
        checks.append(Check("rank precondition", ok, f"rank {r} at t={t:g}, expected {k}"))
    return DiagnosticReport(cfg.id, checks)


__all__ = ["AssumptionError", "CompareReport", "ConfigurationError", "DiagnosticReport", "RunResult",
           "SweepTable", "build_annihilator", "build_plant", "build_stream", "compare",
           "compute_metrics", "diagnose", "run_scenario", "sweep"]
