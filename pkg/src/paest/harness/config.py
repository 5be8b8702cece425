"""Scenario configuration files.

Configs are INI files read with :mod:`configparser`. Every key belongs to
one of the sections below; unknown sections or keys are errors. Lists are
comma-separated. Validation collects every problem before raising.

``[scenario]``
    ``id`` (required), ``kind`` (required: first_order, closed_loop,
    oscillator), ``description``.
``[grid]``
    ``h``, ``horizon`` (required), ``t0`` (0), ``decimation`` (10).
``[plant]``
    first_order: ``a``, ``b`` (required), ``k`` (1), ``feedback_gain`` (0).
    closed_loop: ``num``, ``den``, ``delta`` (required, descending powers).
    oscillator: ``xi0`` (required), ``omega`` (1), ``phi_cap`` (1e6).
``[input]``
    ``offset``, ``amplitudes``, ``frequencies``, ``phases`` (rad/s, rad).
``[perturbation]``
    ``f_amplitudes``, ``f_frequencies`` (linear kinds only),
    ``eta_amplitudes``, ``eta_frequencies``, ``noise_power``,
    ``noise_sample_time``, ``noise_seed``. Held noise adds to the
    measurement noise.
``[annihilator]``
    ``independent``: 1-based regressor indices free of the perturbation.
    ``H``: n x (n-m) annihilator, row-major (law B). ``E``: n x 2(n-m)
    block of ``He`` (law C, default leading identity columns).
    ``filter_num``, ``filter_den``: the law C filter (default 1/(0.5s+1)).
``[estimator]``
    ``law`` (required: A, B, C, proposed, gd_baseline), ``gamma``
    (required), ``window`` (required except gd_baseline), ``Gamma``
    (row-major, default identity), ``theta0``, ``m2_rule`` (det, det_adj),
    ``unconstrained`` (false), ``epsilon`` (1e-4).
"""

from __future__ import annotations

import configparser
import dataclasses
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..regext import ConfigurationError

log = logging.getLogger(__name__)

KINDS = ("first_order", "closed_loop", "oscillator")
ESTIMATOR_LAWS = ("A", "B", "C")
OBSERVER_LAWS = ("proposed", "gd_baseline")


class ConfigError(ConfigurationError):
    """Invalid scenario configuration; `errors` lists every problem found."""

    def __init__(self, errors: list[str], source: str = "<config>"):
        self.errors = list(errors)
        self.source = source
        super().__init__(f"{source}: {len(self.errors)} error(s)\n  " + "\n  ".join(self.errors))


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.replace(";", ",").split(",") if v.strip())


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "yes", "true", "on"):
        return True
    if v in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# (section, key) -> (field name, parser)
SCHEMA = {
    ("scenario", "id"): ("id", str),
    ("scenario", "kind"): ("kind", str),
    ("scenario", "description"): ("description", str),
    ("grid", "t0"): ("t0", float),
    ("grid", "h"): ("h", float),
    ("grid", "horizon"): ("horizon", float),
    ("grid", "decimation"): ("decimation", int),
    ("plant", "a"): ("a", float),
    ("plant", "b"): ("b", float),
    ("plant", "k"): ("k", float),
    ("plant", "feedback_gain"): ("feedback_gain", float),
    ("plant", "num"): ("num", _floats),
    ("plant", "den"): ("den", _floats),
    ("plant", "delta"): ("delta", _floats),
    ("plant", "xi0"): ("xi0", _floats),
    ("plant", "omega"): ("omega", float),
    ("plant", "phi_cap"): ("phi_cap", float),
    ("input", "offset"): ("u_offset", float),
    ("input", "amplitudes"): ("u_amplitudes", _floats),
    ("input", "frequencies"): ("u_frequencies", _floats),
    ("input", "phases"): ("u_phases", _floats),
    ("perturbation", "f_amplitudes"): ("f_amplitudes", _floats),
    ("perturbation", "f_frequencies"): ("f_frequencies", _floats),
    ("perturbation", "eta_amplitudes"): ("eta_amplitudes", _floats),
    ("perturbation", "eta_frequencies"): ("eta_frequencies", _floats),
    ("perturbation", "noise_power"): ("noise_power", float),
    ("perturbation", "noise_sample_time"): ("noise_sample_time", float),
    ("perturbation", "noise_seed"): ("noise_seed", int),
    ("annihilator", "independent"): ("independent", _ints),
    ("annihilator", "H"): ("H", _floats),
    ("annihilator", "E"): ("E", _floats),
    ("annihilator", "filter_num"): ("filter_num", _floats),
    ("annihilator", "filter_den"): ("filter_den", _floats),
    ("estimator", "law"): ("law", str),
    ("estimator", "gamma"): ("gamma", float),
    ("estimator", "window"): ("window", float),
    ("estimator", "Gamma"): ("Gamma", _floats),
    ("estimator", "theta0"): ("theta0", _floats),
    ("estimator", "m2_rule"): ("m2_rule", str),
    ("estimator", "unconstrained"): ("unconstrained", _bool),
    ("estimator", "epsilon"): ("epsilon", float),
}
_KEY_OF = {fname: f"{sec}.{key}" for (sec, key), (fname, _) in SCHEMA.items()}
ALWAYS_REQUIRED = ("id", "kind", "h", "horizon", "law", "gamma")
KIND_REQUIRED = {
    "first_order": ("a", "b"),
    "closed_loop": ("num", "den", "delta"),
    "oscillator": ("xi0",),
}
KIND_ONLY = {
    "a": "first_order", "b": "first_order", "k": "first_order", "feedback_gain": "first_order",
    "num": "closed_loop", "den": "closed_loop", "delta": "closed_loop",
    "xi0": "oscillator", "omega": "oscillator", "phi_cap": "oscillator",
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario parameters; see the module docstring for the file schema."""

    id: str = ""
    kind: str = ""
    description: str = ""
    t0: float = 0.0
    h: float = 0.0
    horizon: float = 0.0
    decimation: int = 10
    a: float | None = None
    b: float | None = None
    k: float = 1.0
    feedback_gain: float = 0.0
    num: tuple = ()
    den: tuple = ()
    delta: tuple = ()
    xi0: tuple = ()
    omega: float = 1.0
    phi_cap: float = 1e6
    u_offset: float = 0.0
    u_amplitudes: tuple = ()
    u_frequencies: tuple = ()
    u_phases: tuple = ()
    f_amplitudes: tuple = ()
    f_frequencies: tuple = ()
    eta_amplitudes: tuple = ()
    eta_frequencies: tuple = ()
    noise_power: float = 0.0
    noise_sample_time: float = 0.01
    noise_seed: int = 0
    independent: tuple = ()
    H: tuple = ()
    E: tuple = ()
    filter_num: tuple = (1.0,)
    filter_den: tuple = (0.5, 1.0)
    law: str = ""
    gamma: float = 0.0
    window: float | None = None
    Gamma: tuple = ()
    theta0: tuple = ()
    m2_rule: str = "det"
    unconstrained: bool = False
    epsilon: float = 1e-4
    source: str = field(default="<config>", compare=False)
    warnings: tuple = field(default=(), compare=False)

    @property
    def n(self) -> int:
        """Number of unknown parameters."""
        if self.kind == "first_order":
            return 2
        if self.kind == "closed_loop":
            return 2 * (len(self.den) - 1)
        return len(self.xi0)

    @property
    def m(self) -> int:
        return len(self.independent)

    @property
    def is_observer(self) -> bool:
        return self.kind == "oscillator"

    @property
    def window_steps(self) -> int:
        return int(round(self.window / self.h))

    def with_overrides(self, **changes) -> "ScenarioConfig":
        """Copy with fields replaced, re-validated."""
        unknown = set(changes) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise ConfigError([f"unknown field {k!r}" for k in sorted(unknown)], self.source)
        new = dataclasses.replace(self, warnings=(), **changes)
        return validate(new)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("source")
        d["warnings"] = list(self.warnings)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def validate(cfg: ScenarioConfig, present: set | None = None) -> ScenarioConfig:
    """Check cross-field consistency; raises ConfigError listing every problem.

    `present` names the fields set explicitly (used for kind-specific keys).
    Returns the config with snapping warnings attached.
    """
    errs: list[str] = []
    warns: list[str] = list(cfg.warnings)
    present = present if present is not None else {
        f.name for f in dataclasses.fields(cfg) if getattr(cfg, f.name) != f.default
    }
    for name in ALWAYS_REQUIRED:
        if name not in present:
            errs.append(f"missing required key {_KEY_OF[name]}")
    kind_ok = cfg.kind in KINDS
    if "kind" in present and not kind_ok:
        errs.append(f"scenario.kind must be one of {', '.join(KINDS)}, got {cfg.kind!r}")
    if kind_ok:
        for name in KIND_REQUIRED[cfg.kind]:
            if name not in present:
                errs.append(f"missing required key {_KEY_OF[name]} for kind {cfg.kind}")
        for name, owner in KIND_ONLY.items():
            if name in present and owner != cfg.kind:
                errs.append(f"{_KEY_OF[name]} is not used by kind {cfg.kind}")
        if cfg.kind == "oscillator" and ("f_amplitudes" in present or "f_frequencies" in present):
            errs.append("perturbation.f_* is not used by kind oscillator (noise enters the output only)")
    if "h" in present and not cfg.h > 0:
        errs.append(f"grid.h must be positive, got {cfg.h}")
    if "horizon" in present and not cfg.horizon > cfg.t0:
        errs.append(f"grid.horizon must exceed grid.t0, got {cfg.horizon}")
    if cfg.decimation < 1:
        errs.append(f"grid.decimation must be >= 1, got {cfg.decimation}")
    for prefix, n_amp, n_freq in (("input.", len(cfg.u_amplitudes), len(cfg.u_frequencies)),
                                  ("perturbation.f_", len(cfg.f_amplitudes), len(cfg.f_frequencies)),
                                  ("perturbation.eta_", len(cfg.eta_amplitudes), len(cfg.eta_frequencies))):
        if n_amp != n_freq:
            errs.append(f"{prefix}amplitudes and {prefix}frequencies differ in length ({n_amp} vs {n_freq})")
    if cfg.u_phases and len(cfg.u_phases) != len(cfg.u_amplitudes):
        errs.append("input.phases must match input.amplitudes in length")
    if cfg.noise_power < 0:
        errs.append(f"perturbation.noise_power must be >= 0, got {cfg.noise_power}")
    if not cfg.noise_sample_time > 0:
        errs.append(f"perturbation.noise_sample_time must be positive, got {cfg.noise_sample_time}")
    if kind_ok and cfg.kind == "first_order" and not cfg.k > 0:
        errs.append(f"plant.k must be positive, got {cfg.k}")
    if kind_ok and cfg.kind == "closed_loop" and cfg.den:
        p = len(cfg.den) - 1
        if p < 1 or cfg.den[0] != 1.0:
            errs.append("plant.den must be monic of degree >= 1")
        if len(cfg.delta) != p + 1 or (cfg.delta and cfg.delta[0] != 1.0):
            errs.append(f"plant.delta must be monic of degree {p}")
        if len(cfg.num) > p:
            errs.append(f"plant.num has {len(cfg.num)} coefficients, at most {p} allowed")
    if kind_ok and cfg.kind == "oscillator" and not cfg.omega > 0:
        errs.append(f"plant.omega must be positive, got {cfg.omega}")

    law = cfg.law
    if "law" in present:
        allowed = OBSERVER_LAWS if cfg.kind == "oscillator" else ESTIMATOR_LAWS
        if kind_ok and law not in allowed:
            errs.append(f"estimator.law {law!r} is not valid for kind {cfg.kind}; use one of {', '.join(allowed)}")
    if "gamma" in present and not cfg.gamma > 0:
        errs.append(f"estimator.gamma must be positive, got {cfg.gamma}")
    if law != "gd_baseline" and "law" in present:
        if cfg.window is None:
            errs.append("missing required key estimator.window")
        elif not cfg.window > 0:
            errs.append(f"estimator.window must be positive, got {cfg.window}")
        elif cfg.h > 0:
            steps = int(round(cfg.window / cfg.h))
            if steps < 1:
                errs.append(f"estimator.window {cfg.window} is shorter than one step")
            elif abs(steps * cfg.h - cfg.window) > 1e-9 * max(cfg.window, 1.0):
                warns.append(f"window {cfg.window} snapped to {steps * cfg.h!r} ({steps} steps)")
    if cfg.m2_rule not in ("det", "det_adj"):
        errs.append(f"estimator.m2_rule must be det or det_adj, got {cfg.m2_rule!r}")
    if not cfg.epsilon > 0:
        errs.append(f"estimator.epsilon must be positive, got {cfg.epsilon}")

    if kind_ok and ("den" not in KIND_REQUIRED[cfg.kind] or cfg.den) and (cfg.kind != "oscillator" or cfg.xi0):
        n = cfg.n
        if cfg.theta0 and len(cfg.theta0) != n:
            errs.append(f"estimator.theta0 has {len(cfg.theta0)} entries, expected {n}")
        if cfg.Gamma and len(cfg.Gamma) != n * n:
            errs.append(f"estimator.Gamma has {len(cfg.Gamma)} entries, expected {n * n}")
        if cfg.Gamma and law != "gd_baseline":
            errs.append("estimator.Gamma is only used by law gd_baseline")
        if any(not 1 <= i <= n for i in cfg.independent) or len(set(cfg.independent)) != len(cfg.independent):
            errs.append(f"annihilator.independent must list distinct indices in 1..{n}")
        m = len(cfg.independent)
        if law in ("B", "C") and m == 0:
            errs.append(f"law {law} needs annihilator.independent")
        if law == "B" and m:
            if len(cfg.H) != n * (n - m):
                errs.append(f"annihilator.H has {len(cfg.H)} entries, expected n*(n-m) = {n * (n - m)}")
        elif cfg.H:
            errs.append("annihilator.H is only used by law B")
        if law == "C" and m:
            if 2 * m < n:
                errs.append(f"law C needs 2m >= n, got n={n}, m={m}")
            if cfg.E and len(cfg.E) != n * 2 * (n - m):
                errs.append(f"annihilator.E has {len(cfg.E)} entries, expected {n * 2 * (n - m)}")
        elif cfg.E:
            errs.append("annihilator.E is only used by law C")
        if cfg.unconstrained and law != "C":
            errs.append("estimator.unconstrained is only used by law C")
    if errs:
        raise ConfigError(errs, cfg.source)
    for w in warns[len(cfg.warnings):]:
        log.warning("%s: %s", cfg.source, w)
    return dataclasses.replace(cfg, warnings=tuple(warns))


def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    """Parse and validate INI text."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    errs: list[str] = []
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError([f"malformed file: {exc}"], source) from None
    sections = {sec for sec, _ in SCHEMA}
    values = {}
    for sec in parser.sections():
        if sec not in sections:
            errs.append(f"unknown section [{sec}]")
            continue
        for key, raw in parser.items(sec):
            spec = SCHEMA.get((sec, key))
            if spec is None:
                errs.append(f"unknown key {sec}.{key}")
                continue
            name, conv = spec
            try:
                values[name] = conv(raw.strip())
            except ValueError as exc:
                errs.append(f"{sec}.{key}: cannot parse {raw!r} ({exc})")
    if "id" in values and not values["id"]:
        errs.append("scenario.id must not be empty")
    cfg = ScenarioConfig(source=source, **values)
    try:
        cfg = validate(cfg, present=set(values))
    except ConfigError as exc:
        errs.extend(exc.errors)
    if errs:
        raise ConfigError(errs, source)
    return cfg


def load_config(path) -> ScenarioConfig:
    """Read and validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read file: {exc}"], str(path)) from None
    return parse_config(text, str(path))


def shipped_configs() -> list[str]:
    """Names of the scenario files bundled with the package."""
    root = resources.files("paest.scenarios")
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".cfg"))


def shipped_config(name: str) -> ScenarioConfig:
    """Load a bundled scenario by file name (with or without ``.cfg``)."""
    if not name.endswith(".cfg"):
        name += ".cfg"
    res = resources.files("paest.scenarios") / name
    if not res.is_file():
        raise ConfigError([f"no shipped scenario {name!r}; available: {', '.join(shipped_configs())}"], name)
    return parse_config(res.read_text(), name)


def matrix(values: tuple, rows: int, cols: int) -> np.ndarray:
    return np.asarray(values, dtype=float).reshape(rows, cols)
