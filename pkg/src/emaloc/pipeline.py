"""End-to-end scenario execution and parameter sweeps.

Per vantage: simulate one sweep per packet, detect the clock on the
reference port of the first batch, estimate offset and inverse-offset channels per packet, drop
interfered packets (each drop spends one retry), average the clean ones,
solve for AoA, and finally triangulate across vantages.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import aoasolve as aoa
from .capture import SwitchSchedule, packetize, simulate_capture
from .chanest import (
    ClockEstimate,
    DegenerateOffsetError,
    NoClockFound,
    average_channels,
    detect_clock,
    detect_interference,
    estimate_inverse,
    estimate_offset,
    estimate_standard,
    offset_spike_snr,
    spike_snr,
)
from .emamodel import (
    AliasingWarning,
    ArrayGeometry,
    EmanationSource,
    InterferenceSource,
    NoiseModel,
    PathSet,
    steering_phase,
)
from .localize import Bearing, IllConditionedError, aoa_error, localization_error, triangulate
from .scenario import Scenario, ScenarioError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NO_CLOCK = 3
EXIT_INTERFERENCE = 4
EXIT_NONCONVERGENCE = 5

SWEEP_AXES = ("beta", "range", "packets", "tau")


class PipelineError(RuntimeError):
    exit_code = 1

    def __init__(self, stage: str, msg: str):
        super().__init__(f"[{stage}] {msg}")
        self.stage = stage


class NoClockError(PipelineError):
    exit_code = EXIT_NO_CLOCK


class InterferenceUnresolved(PipelineError):
    exit_code = EXIT_INTERFERENCE


@dataclass(frozen=True)
class VantageChannel:
    """Everything up to (not including) the AoA solve for one vantage."""

    index: int
    geometry: ArrayGeometry
    truth: PathSet
    channel: object  # RelativeChannel
    packet_channels: tuple
    clock: ClockEstimate
    tau_samples: int
    snr_db: float
    ref_snr_db: float
    packets_used: int
    retries_used: int
    max_score: float


@dataclass(frozen=True)
class VantageResult:
    index: int
    true_aoa_deg: float
    est_aoa_deg: float
    aoa_error_deg: float
    weight: float
    n_paths: int
    clock_hz: float
    tau_samples: int
    snr_db: float
    ref_snr_db: float
    packets_used: int
    retries_used: int
    max_interference_score: float
    solver_iters: int
    converged: bool
    residual: float


@dataclass(frozen=True)
class Report:
    scenario: str
    seed: int
    vantages: tuple
    position_m: Optional[tuple]
    truth_m: tuple
    loc_error_m: float
    loc_residual_m: float
    condition: float

    @property
    def converged(self) -> bool:
        return all(v.converged for v in self.vantages)

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.converged else EXIT_NONCONVERGENCE

    @property
    def mean_aoa_error_deg(self) -> float:
        return float(np.mean([v.aoa_error_deg for v in self.vantages]))


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _geometry(sc: Scenario, vi: int) -> ArrayGeometry:
    v = sc.vantages[vi]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AliasingWarning)
        return ArrayGeometry(
            sc.array.n_switched,
            sc.array.spacing_m,
            sc.array.wavelength_m,
            v.position_m,
            math.radians(v.heading_deg),
        )


def _range_gain(sc: Scenario, geom: ArrayGeometry, pos) -> float:
    r = max(geom.distance_to(pos), 1e-3)
    return r ** (-sc.run.range_loss_exponent / 2.0)


def vantage_paths(sc: Scenario, vi: int, seed: int) -> PathSet:
    """Direct path plus configured and randomly drawn reflections (local angles)."""
    geom = _geometry(sc, vi)
    direct = geom.local_aoa(sc.source.position_m)
    if not abs(direct) < math.radians(89.0):
        raise ScenarioError(
            f"vantage.{vi + 1}.heading_deg",
            f"source is {math.degrees(direct):.1f} deg off broadside, outside the forward half-plane",
        )
    aoas = [direct]
    gains = [1.0 + 0j]
    for r in sc.vantages[vi].reflections:
        aoas.append(math.radians(r.aoa_deg))
        gains.append(r.magnitude * complex(math.cos(math.radians(r.phase_deg)), math.sin(math.radians(r.phase_deg))))
    rng = np.random.default_rng(derive_seed(seed, vi, 101))
    lim = math.radians(80.0)
    for _ in range(sc.run.random_reflections):
        sep = math.radians(rng.uniform(*sc.run.reflection_separation_deg))
        side = 1.0 if rng.random() < 0.5 else -1.0
        ang = direct + side * sep
        if abs(ang) > lim:
            ang = direct - side * sep
        ang = float(np.clip(ang, -lim, lim))
        mag = rng.uniform(*sc.run.reflection_gain)
        ph = rng.uniform(0.0, 2 * math.pi)
        aoas.append(ang)
        gains.append(mag * complex(math.cos(ph), math.sin(ph)))
    return PathSet.from_arrays(aoas, gains)


def _emitters(sc: Scenario, geom: ArrayGeometry, paths: PathSet):
    s = sc.source
    # amplitude is defined as received at the reference antenna
    amp = s.amplitude * _range_gain(sc, geom, s.position_m)
    src = EmanationSource(
        1.0 / s.clock_hz, s.duty_cycle, amp, s.position_m, s.freq_offset_hz, s.gate_period_s, s.gate_duty
    )
    intfs = []
    for k, it in enumerate(sc.interferers):
        ang = geom.local_aoa(it.position_m)
        if not abs(ang) < math.pi / 2:
            ang = math.copysign(math.radians(89.0), ang)
        alpha = tuple(steering_phase(geom, ang, i) for i in range(1, geom.n_total))
        intfs.append(
            InterferenceSource(
                1.0 / it.clock_hz,
                it.duty_cycle,
                it.amplitude * _range_gain(sc, geom, it.position_m),
                it.position_m,
                it.freq_offset_hz,
                it.gate_period_s,
                it.gate_duty,
                alpha=alpha,
            )
        )
    return src, intfs


def _tau_for(sc: Scenario, clock: ClockEstimate, tau_multiple: Optional[int]) -> int:
    if tau_multiple is not None:
        return int(tau_multiple) * int(round(clock.period_samples))
    if sc.estimator.tau == "period":
        return int(round(clock.period_samples))
    return int(sc.estimator.tau)


def estimate_vantage(
    sc: Scenario, vi: int, seed: int, tau_multiple: Optional[int] = None
) -> VantageChannel:
    geom = _geometry(sc, vi)
    paths = vantage_paths(sc, vi, seed)
    src, intfs = _emitters(sc, geom, paths)
    sched = SwitchSchedule(sc.array.n_switched, sc.array.dwell_samples, sc.array.guard_samples)
    wl = sc.array.wavelength_m
    stage = f"vantage {vi + 1}"

    def packet(k):
        noise = NoiseModel(sc.noise.power, sc.noise.rho, derive_seed(seed, vi, k))
        cap = simulate_capture(
            src, geom, paths, noise, sched, sc.array.fs, 1, intfs, start_sweep=k
        )
        return cap, packetize(cap)[0]

    batch = [packet(k) for k in range(sc.estimator.packets)]
    # the clock is detected on the contiguous reference port across the first
    # batch; packet segments have guard gaps that break periodicity
    ref_stream = np.concatenate([c.ref_stream for c, _ in batch])
    max_p = min(sc.estimator.max_period, ref_stream.size / 4)
    min_p = min(sc.estimator.min_period, max_p)
    try:
        clock = detect_clock(ref_stream, min_p, max_p)
    except NoClockFound as exc:
        raise NoClockError(f"{stage}: clock", str(exc)) from None
    tau = _tau_for(sc, clock, tau_multiple)
    if tau >= sched.usable_samples:
        raise ScenarioError("estimator.tau", f"tau {tau} is not shorter than the usable dwell")

    clean, refs, sws = [], [], []
    retries = 0
    max_score = 0.0
    k = 0
    while len(clean) < sc.estimator.packets:
        pkt = batch[k][1] if k < len(batch) else packet(k)[1]
        k += 1
        if tau == 0:
            h = estimate_standard(pkt, wl)
        else:
            try:
                h = estimate_offset(pkt, tau, wl)
                h_inv = estimate_inverse(pkt, tau, wl)
            except DegenerateOffsetError as exc:
                raise NoClockError(f"{stage}: offset estimate", str(exc)) from None
            chk = detect_interference(h, h_inv, sc.estimator.threshold)
            max_score = max(max_score, chk.score)
            if chk.interfered:
                retries += 1
                if retries > sc.estimator.retries:
                    raise InterferenceUnresolved(
                        f"{stage}: interference",
                        f"packet {k - 1} interfered (score {chk.score:.3f} > "
                        f"{sc.estimator.threshold}); retry budget {sc.estimator.retries} exhausted",
                    )
                continue
        clean.append(h)
        refs.append(pkt.ref[0])
        sws.append(pkt.switched[0])
    h_avg = average_channels(clean)
    snr = offset_spike_snr(np.array(refs), np.array(sws), clock, tau)
    ref_snr = spike_snr(ref_stream, clock)
    return VantageChannel(
        vi, geom, paths, h_avg, tuple(clean), clock, tau, snr, ref_snr, len(clean), retries, max_score
    )


def _solver_options(sc: Scenario) -> aoa.SolverOptions:
    return aoa.SolverOptions(
        tol=sc.solver.tol, max_iters=sc.solver.max_iters, squared=sc.solver.squared, record_objective=False
    )


def solve_vantage(sc: Scenario, vc: VantageChannel):
    """AoA estimate, iteration count, convergence flag and residual for one vantage."""
    dl = vc.geometry.d_over_lambda
    s = sc.solver
    iters, conv, resid = 0, True, float("nan")
    if s.method == "joint":
        W = aoa.build_window_matrix(vc.geometry.n_total, s.grid)
        meas = [(aoa.ifft_profile(h, s.grid), W) for h in vc.packet_channels]
        prof = aoa.solve_joint(meas, s.lambda_g, dl, _solver_options(sc),
                               tags=[f"packet {i}" for i in range(len(meas))])
        est = aoa.extract_angles(prof, s.rel_threshold)
        iters, conv, resid = prof.solver_iters, prof.converged, prof.residual
    else:
        est, prof = aoa.estimate_aoa(
            vc.channel, dl, s.method, s.beta, s.grid, s.rel_threshold, _solver_options(sc)
        )
        if prof is not None:
            iters, conv, resid = prof.solver_iters, prof.converged, prof.residual
    return est, iters, conv, resid


def finish(sc: Scenario, seed: int, channels: Sequence[VantageChannel]) -> Report:
    rows, bearings = [], []
    for vc in channels:
        est, iters, conv, resid = solve_vantage(sc, vc)
        local = float(est.angles_rad[0])
        weight = float(est.magnitudes[0])
        rows.append(
            VantageResult(
                vc.index + 1,
                math.degrees(vc.truth.dominant().aoa_rad),
                math.degrees(local),
                aoa_error(est, vc.truth),
                weight,
                len(est),
                vc.clock.frequency_hz(sc.array.fs),
                vc.tau_samples,
                vc.snr_db,
                vc.ref_snr_db,
                vc.packets_used,
                vc.retries_used,
                vc.max_score,
                iters,
                conv,
                resid,
            )
        )
        v = sc.vantages[vc.index]
        bearings.append(Bearing(v.position_m, math.radians(v.heading_deg) + local, weight))
    truth = sc.source.position_m
    pos, err, res, cond = None, float("nan"), float("nan"), float("nan")
    if len(bearings) >= 2:
        try:
            loc = triangulate(bearings)
        except IllConditionedError as exc:
            raise PipelineError("triangulation", str(exc)) from None
        pos, res, cond = loc.position_m, loc.residual_m, loc.condition
        err = localization_error(loc, truth)
    return Report(sc.name, seed, tuple(rows), pos, truth, err, res, cond)


def run_pipeline(sc: Scenario, seed: Optional[int] = None, tau_multiple: Optional[int] = None) -> Report:
    seed = sc.run.seed if seed is None else int(seed)
    chans = [estimate_vantage(sc, vi, seed, tau_multiple) for vi in range(len(sc.vantages))]
    return finish(sc, seed, chans)


# -- sweeps -------------------------------------------------------------------


def _with_value(sc: Scenario, axis: str, value):
    """Scenario (and tau multiple) for one sweep point."""
    if axis == "beta":
        if not float(value) >= 0:
            raise ScenarioError("sweep.beta", f"beta must be non-negative, got {value}")
        return replace(sc, solver=replace(sc.solver, beta=float(value))), None
    if axis == "packets":
        if int(value) != float(value) or int(value) < 1:
            raise ScenarioError("sweep.packets", f"packet count must be a positive integer, got {value}")
        return replace(sc, estimator=replace(sc.estimator, packets=int(value))), None
    if axis == "tau":
        if int(value) != float(value) or int(value) < 0:
            raise ScenarioError("sweep.tau", f"tau is given in clock periods (0, 1, 2, ...), got {value}")
        return sc, int(value)
    if axis == "range":
        r = float(value)
        if not r > 0:
            raise ScenarioError("sweep.range", f"range must be positive, got {value}")
        o = np.array(sc.vantages[0].position_m)
        d = np.array(sc.source.position_m) - o
        norm = float(np.hypot(*d))
        if norm == 0:
            raise ScenarioError("source.position", "source coincides with the first vantage")
        p = o + d / norm * r
        return replace(sc, source=replace(sc.source, position_m=(float(p[0]), float(p[1])))), None
    raise ScenarioError("sweep.axis", f"unknown axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")


def parse_sweep_value(axis: str, text: str) -> float:
    t = text.strip().lower()
    if axis == "tau" and t == "period":
        return 1.0
    try:
        return float(t)
    except ValueError:
        raise ScenarioError(f"sweep.{axis}", f"not a number: {text!r}") from None


@dataclass(frozen=True)
class SweepRow:
    axis_value: float
    seed: int
    aoa_error_deg: float
    loc_error_m: float
    snr_db: float
    iters: int
    status: str


def _row(value, seed, rep: Optional[Report], status: str) -> SweepRow:
    if rep is None:
        return SweepRow(value, seed, float("nan"), float("nan"), float("nan"), 0, status)
    return SweepRow(
        value,
        seed,
        rep.mean_aoa_error_deg,
        rep.loc_error_m,
        float(np.mean([v.snr_db for v in rep.vantages])),
        int(sum(v.solver_iters for v in rep.vantages)),
        "ok" if rep.converged else "nonconverged",
    )


def _status(exc: Exception) -> str:
    if isinstance(exc, NoClockError):
        return "no-clock"
    if isinstance(exc, InterferenceUnresolved):
        return "interference"
    return "error"


def run_sweep(
    sc: Scenario,
    axis: str,
    values: Sequence[float],
    seeds: Sequence[int],
    workers: int = 1,
) -> list:
    """One row per (value, seed), in value-major order regardless of worker scheduling.

    Every point with the same seed sees the same noise and multipath draws,
    so values are compared on common random numbers. For the beta axis the
    channel estimates do not depend on the value and are computed once per seed.
    """
    if axis not in SWEEP_AXES:
        raise ScenarioError("sweep.axis", f"unknown axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")
    values = [float(v) for v in values]
    if not values:
        raise ScenarioError("sweep.values", "need at least one value")
    points = [_with_value(sc, axis, v) for v in values]
    seeds = [int(s) for s in seeds]

    def by_seed(seed):
        # beta only changes the solve, so reuse one set of channel estimates
        try:
            chans = [estimate_vantage(sc, vi, seed) for vi in range(len(sc.vantages))]
        except (NoClockError, InterferenceUnresolved) as exc:
            return [_row(v, seed, None, _status(exc)) for v in values]
        return [_row(v, seed, finish(p, seed, chans), "ok") for v, (p, _) in zip(values, points)]

    def by_point(args):
        (p, tau_mult), v, seed = args
        try:
            return [_row(v, seed, run_pipeline(p, seed, tau_mult), "ok")]
        except (NoClockError, InterferenceUnresolved) as exc:
            return [_row(v, seed, None, _status(exc))]

    if axis == "beta":
        tasks, fn = seeds, by_seed
    else:
        tasks = [(pt, v, s) for pt, v in zip(points, values) for s in seeds]
        fn = by_point
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(fn, tasks))
    else:
        chunks = [fn(t) for t in tasks]
    rows = [r for c in chunks for r in c]
    order = {v: i for i, v in enumerate(values)}
    rows.sort(key=lambda r: (order[r.axis_value], seeds.index(r.seed)))
    return rows
