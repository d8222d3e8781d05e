"""Scenario files: a sectioned ``key = value`` description of one experiment.

Sections and keys (defaults in brackets)::

    [source]          clock_hz [3000], duty_cycle [0.5], amplitude [1],
                      position (x, y in m, required), freq_offset_hz [0],
                      gate_period_s, gate_duty [1]
    [interferer.N]    same keys as [source]
    [array]           n_switched [8], spacing_m [0.0625], wavelength_m [0.3125],
                      fs [3.072e6], dwell_samples [96000], guard_samples [1% of dwell]
    [vantage.N]       position (required), heading_deg (required),
                      reflections: "aoa_deg:magnitude:phase_deg, ..." relative to
                      the direct path [none]
    [noise]           power [1], rho [0.8]
    [estimator]       tau ["period"; or a sample count, 0 = standard estimator],
                      packets [10], threshold [0.1], retries [3],
                      min_period [16], max_period [4096]
    [solver]          method [sparse | joint | music | spotfi | ifft],
                      beta [1], grid [256], lambda_g [1], rel_threshold [0.05],
                      squared [true], tol [1e-8], max_iters [20000]
    [run]             seed [0], output [out], range_loss_exponent [2],
                      random_reflections [0], reflection_gain [0.2, 0.6],
                      reflection_separation_deg [15, 40]

Sections may repeat with numeric suffixes (``vantage.1``, ``vantage.2``).
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Optional

from .emamodel import DEFAULT_SPACING_M, DEFAULT_WAVELENGTH_M

DEFAULT_FS = 3.072e6
DEFAULT_DWELL = 96000
SOLVER_METHODS = ("sparse", "joint", "music", "spotfi", "ifft")


class ScenarioError(ValueError):
    """Invalid scenario; ``key`` names the offending section.key."""

    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass(frozen=True)
class EmitterCfg:
    clock_hz: float
    position_m: tuple
    duty_cycle: float = 0.5
    amplitude: float = 1.0
    freq_offset_hz: float = 0.0
    gate_period_s: Optional[float] = None
    gate_duty: float = 1.0


@dataclass(frozen=True)
class ArrayCfg:
    n_switched: int = 8
    spacing_m: float = DEFAULT_SPACING_M
    wavelength_m: float = DEFAULT_WAVELENGTH_M
    fs: float = DEFAULT_FS
    dwell_samples: int = DEFAULT_DWELL
    guard_samples: int = DEFAULT_DWELL // 100


@dataclass(frozen=True)
class Reflection:
    aoa_deg: float
    magnitude: float
    phase_deg: float


@dataclass(frozen=True)
class VantageCfg:
    position_m: tuple
    heading_deg: float
    reflections: tuple = ()


@dataclass(frozen=True)
class NoiseCfg:
    power: float = 1.0
    rho: float = 0.8


@dataclass(frozen=True)
class EstimatorCfg:
    tau: object = "period"  # "period" or an integer sample count
    packets: int = 10
    threshold: float = 0.1
    retries: int = 3
    min_period: float = 16
    max_period: float = 4096


@dataclass(frozen=True)
class SolverCfg:
    method: str = "sparse"
    beta: float = 1.0
    grid: int = 256
    lambda_g: float = 1.0
    rel_threshold: float = 0.05
    squared: bool = True
    tol: float = 1e-8
    max_iters: int = 20000


@dataclass(frozen=True)
class RunCfg:
    seed: int = 0
    output: str = "out"
    range_loss_exponent: float = 2.0
    random_reflections: int = 0
    reflection_gain: tuple = (0.2, 0.6)
    reflection_separation_deg: tuple = (15.0, 40.0)


@dataclass(frozen=True)
class Scenario:
    source: EmitterCfg
    array: ArrayCfg
    vantages: tuple
    noise: NoiseCfg = NoiseCfg()
    estimator: EstimatorCfg = EstimatorCfg()
    solver: SolverCfg = SolverCfg()
    run: RunCfg = RunCfg()
    interferers: tuple = ()
    name: str = "scenario"

    def with_(self, **sections) -> "Scenario":
        return replace(self, **sections)


def _floats(key: str, text: str, n: Optional[int] = None) -> tuple:
    try:
        vals = tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
    except ValueError:
        raise ScenarioError(key, f"expected numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise ScenarioError(key, f"expected {n} values, got {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise ScenarioError(key, "values must be finite")
    return vals


class _Section:
    def __init__(self, name: str, items: dict, allowed: set):
        self.name = name
        self.items = dict(items)
        unknown = set(self.items) - allowed
        if unknown:
            raise ScenarioError(f"{name}.{sorted(unknown)[0]}", "unknown key")

    def key(self, k):
        return f"{self.name}.{k}"

    def has(self, k):
        return k in self.items

    def num(self, k, default=None, cond=None, what="", kind=float):
        if k not in self.items:
            if default is None:
                raise ScenarioError(self.key(k), "required key is missing")
            return default
        raw = self.items[k]
        try:
            v = kind(float(raw)) if kind is int else kind(raw)
        except ValueError:
            raise ScenarioError(self.key(k), f"not a number: {raw!r}") from None
        if kind is int and float(raw) != int(float(raw)):
            raise ScenarioError(self.key(k), f"expected an integer, got {raw!r}")
        if isinstance(v, float) and not math.isfinite(v):
            raise ScenarioError(self.key(k), "must be finite")
        if cond is not None and not cond(v):
            raise ScenarioError(self.key(k), f"must be {what}, got {raw}")
        return v

    def vec(self, k, n, default=None):
        if k not in self.items:
            if default is None:
                raise ScenarioError(self.key(k), "required key is missing")
            return default
        return _floats(self.key(k), self.items[k], n)

    def text(self, k, default):
        return self.items.get(k, default).strip()

    def boolean(self, k, default):
        if k not in self.items:
            return default
        v = self.items[k].strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ScenarioError(self.key(k), f"expected true/false, got {v!r}")


_EMITTER_KEYS = {
    "clock_hz", "duty_cycle", "amplitude", "position", "freq_offset_hz", "gate_period_s", "gate_duty",
}


def _emitter(sec: _Section) -> EmitterCfg:
    pos = lambda v: v > 0  # noqa: E731
    gate = sec.num("gate_period_s", cond=pos, what="positive") if sec.has("gate_period_s") else None
    return EmitterCfg(
        clock_hz=sec.num("clock_hz", 3000.0, pos, "positive"),
        position_m=sec.vec("position", 2),
        duty_cycle=sec.num("duty_cycle", 0.5, lambda v: 0 < v <= 1, "in (0, 1]"),
        amplitude=sec.num("amplitude", 1.0, lambda v: v >= 0, "non-negative"),
        freq_offset_hz=sec.num("freq_offset_hz", 0.0),
        gate_period_s=gate,
        gate_duty=sec.num("gate_duty", 1.0, lambda v: 0 < v <= 1, "in (0, 1]"),
    )


def _reflections(key: str, text: str) -> tuple:
    out = []
    for item in (t.strip() for t in text.split(",")):
        if not item:
            continue
        parts = item.split(":")
        if len(parts) != 3:
            raise ScenarioError(key, f"reflection {item!r} is not aoa_deg:magnitude:phase_deg")
        try:
            a, m, p = (float(v) for v in parts)
        except ValueError:
            raise ScenarioError(key, f"reflection {item!r} has a non-numeric field") from None
        if not abs(a) < 90:
            raise ScenarioError(key, f"reflection angle {a} outside (-90, 90)")
        if not m >= 0:
            raise ScenarioError(key, f"reflection magnitude {m} is negative")
        out.append(Reflection(a, m, p))
    return tuple(out)


def _numbered(cp: configparser.ConfigParser, prefix: str) -> list:
    names = []
    for s in cp.sections():
        if s == prefix or s.startswith(prefix + "."):
            suffix = s[len(prefix) + 1 :]
            if s != prefix and not suffix.isdigit():
                raise ScenarioError(s, f"section suffix must be a number ({prefix}.1, ...)")
            names.append((int(suffix) if suffix else 0, s))
    return [s for _, s in sorted(names)]


def parse_scenario_text(text: str, name: str = "scenario") -> Scenario:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str.lower
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError("file", str(exc).splitlines()[0]) from None
    known = {"source", "array", "noise", "estimator", "solver", "run"}
    for s in cp.sections():
        base = s.split(".", 1)[0]
        if s not in known and base not in ("interferer", "vantage"):
            raise ScenarioError(s, "unknown section")

    def sec(name, allowed):
        return _Section(name, dict(cp.items(name)) if cp.has_section(name) else {}, allowed)

    if not cp.has_section("source"):
        raise ScenarioError("source", "section is required")
    source = _emitter(sec("source", _EMITTER_KEYS))
    interferers = tuple(
        _emitter(_Section(s, dict(cp.items(s)), _EMITTER_KEYS)) for s in _numbered(cp, "interferer")
    )

    a = sec("array", {"n_switched", "spacing_m", "wavelength_m", "fs", "dwell_samples", "guard_samples"})
    pos = lambda v: v > 0  # noqa: E731
    dwell = a.num("dwell_samples", DEFAULT_DWELL, pos, "positive", int)
    array = ArrayCfg(
        n_switched=a.num("n_switched", 8, lambda v: v >= 2, ">= 2", int),
        spacing_m=a.num("spacing_m", DEFAULT_SPACING_M, pos, "positive"),
        wavelength_m=a.num("wavelength_m", DEFAULT_WAVELENGTH_M, pos, "positive"),
        fs=a.num("fs", DEFAULT_FS, pos, "positive"),
        dwell_samples=dwell,
        guard_samples=a.num("guard_samples", dwell // 100, lambda v: 0 <= v < dwell, "in [0, dwell)", int),
    )
    if array.spacing_m / array.wavelength_m >= 0.5:
        raise ScenarioError("array.wavelength_m", "d/lambda must stay below 0.5 (spatial aliasing)")

    vantages = []
    for s in _numbered(cp, "vantage"):
        v = _Section(s, dict(cp.items(s)), {"position", "heading_deg", "reflections"})
        vantages.append(
            VantageCfg(
                v.vec("position", 2),
                v.num("heading_deg"),
                _reflections(v.key("reflections"), v.text("reflections", "")),
            )
        )
    if not vantages:
        raise ScenarioError("vantage", "at least one [vantage.N] section is required")

    nz = sec("noise", {"power", "rho"})
    noise = NoiseCfg(
        nz.num("power", 1.0, lambda v: v >= 0, "non-negative"),
        nz.num("rho", 0.8, lambda v: 0 <= v <= 1, "in [0, 1]"),
    )

    e = sec("estimator", {"tau", "packets", "threshold", "retries", "min_period", "max_period"})
    tau_text = e.text("tau", "period").lower()
    if tau_text == "period":
        tau = "period"
    else:
        tau = e.num("tau", 0, lambda v: v >= 0, "'period' or a non-negative sample count", int)
    min_p = e.num("min_period", 16.0, lambda v: v >= 2, ">= 2")
    estimator = EstimatorCfg(
        tau=tau,
        packets=e.num("packets", 10, lambda v: v >= 1, ">= 1", int),
        threshold=e.num("threshold", 0.1, lambda v: v >= 0, "non-negative"),
        retries=e.num("retries", 3, lambda v: v >= 0, "non-negative", int),
        min_period=min_p,
        max_period=e.num("max_period", 4096.0, lambda v: v >= min_p, ">= min_period"),
    )

    so = sec("solver", {"method", "beta", "grid", "lambda_g", "rel_threshold", "squared", "tol", "max_iters"})
    method = so.text("method", "sparse").lower()
    if method not in SOLVER_METHODS:
        raise ScenarioError("solver.method", f"must be one of {', '.join(SOLVER_METHODS)}")
    n_total = array.n_switched + 1
    solver = SolverCfg(
        method=method,
        beta=so.num("beta", 1.0, lambda v: v >= 0, "non-negative"),
        grid=so.num("grid", 256, lambda v: v >= 4 * n_total, f">= {4 * n_total}", int),
        lambda_g=so.num("lambda_g", 1.0, lambda v: v >= 0, "non-negative"),
        rel_threshold=so.num("rel_threshold", 0.05, lambda v: 0 < v < 1, "in (0, 1)"),
        squared=so.boolean("squared", True),
        tol=so.num("tol", 1e-8, pos, "positive"),
        max_iters=so.num("max_iters", 20000, pos, "positive", int),
    )

    r = sec("run", {
        "seed", "output", "range_loss_exponent", "random_reflections",
        "reflection_gain", "reflection_separation_deg",
    })
    gains = r.vec("reflection_gain", 2, (0.2, 0.6))
    seps = r.vec("reflection_separation_deg", 2, (15.0, 40.0))
    if not 0 <= gains[0] <= gains[1]:
        raise ScenarioError("run.reflection_gain", "expected 0 <= low <= high")
    if not 0 <= seps[0] <= seps[1] < 180:
        raise ScenarioError("run.reflection_separation_deg", "expected 0 <= low <= high < 180")
    run = RunCfg(
        seed=r.num("seed", 0, lambda v: v >= 0, "non-negative", int),
        output=r.text("output", "out"),
        range_loss_exponent=r.num("range_loss_exponent", 2.0, lambda v: v >= 0, "non-negative"),
        random_reflections=r.num("random_reflections", 0, lambda v: v >= 0, "non-negative", int),
        reflection_gain=gains,
        reflection_separation_deg=seps,
    )
    return Scenario(source, array, tuple(vantages), noise, estimator, solver, run, interferers, name)


def bundled_scenarios() -> list:
    root = resources.files("emaloc") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def load_scenario(path_or_name: str) -> Scenario:
    """Read a scenario file, or a bundled scenario by name (e.g. ``quickstart``)."""
    if os.path.exists(path_or_name):
        with open(path_or_name, encoding="utf-8") as fh:
            text = fh.read()
        name = os.path.splitext(os.path.basename(path_or_name))[0]
    else:
        res = resources.files("emaloc") / "scenarios" / f"{path_or_name}.ini"
        if not res.is_file():
            raise ScenarioError("file", f"no scenario file or bundled scenario named {path_or_name!r}")
        text = res.read_text(encoding="utf-8")
        name = path_or_name
    return parse_scenario_text(text, name)
