"""Command line entry point: ``emaloc {simulate,estimate,aoa,localize,run,sweep}``.

Exit codes: 0 success, 2 invalid input, 3 no clock found, 4 interference
not resolved within the retry budget, 5 solver did not converge.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from dataclasses import replace
from typing import Iterable, Sequence

import numpy as np

from . import aoasolve as aoa
from .capture import (
    CaptureFormatError,
    IQCapture,
    SwitchSchedule,
    packetize,
    read_capture,
    simulate_capture,
    write_capture,
)
from .channel import RelativeChannel
from .chanest import (
    DegenerateOffsetError,
    NoClockFound,
    average_channels,
    detect_clock,
    detect_interference,
    estimate_inverse,
    estimate_offset,
    estimate_standard,
)
from .localize import Bearing, IllConditionedError, triangulate
from .pipeline import (
    EXIT_INTERFERENCE,
    EXIT_NO_CLOCK,
    EXIT_NONCONVERGENCE,
    EXIT_OK,
    EXIT_VALIDATION,
    SWEEP_AXES,
    PipelineError,
    _emitters,
    _geometry,
    derive_seed,
    parse_sweep_value,
    run_pipeline,
    run_sweep,
    vantage_paths,
)
from .emamodel import NoiseModel
from .scenario import ScenarioError, load_scenario

log = logging.getLogger("emaloc")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float) or isinstance(x, np.floating):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return format(x, ".10g")
    return str(x)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


VANTAGE_HEADER = (
    "vantage", "true_aoa_deg", "est_aoa_deg", "aoa_error_deg", "weight", "n_paths",
    "clock_hz", "tau_samples", "snr_db", "ref_snr_db", "packets_used", "retries_used",
    "max_interference_score", "solver_iters", "converged", "residual",
)
LOC_HEADER = ("x_m", "y_m", "truth_x_m", "truth_y_m", "loc_error_m", "residual_m", "condition", "n_bearings")
SWEEP_HEADER = ("axis_value", "seed", "aoa_error_deg", "loc_error_m", "snr_db", "iters", "status")


def write_report(rep, out_dir: str) -> list:
    vpath = os.path.join(out_dir, "vantages.csv")
    write_csv(vpath, VANTAGE_HEADER, (
        (v.index, v.true_aoa_deg, v.est_aoa_deg, v.aoa_error_deg, v.weight, v.n_paths, v.clock_hz,
         v.tau_samples, v.snr_db, v.ref_snr_db, v.packets_used, v.retries_used,
         v.max_interference_score, v.solver_iters, v.converged, v.residual)
        for v in rep.vantages
    ))
    lpath = os.path.join(out_dir, "localization.csv")
    pos = rep.position_m or (float("nan"), float("nan"))
    write_csv(lpath, LOC_HEADER, [(
        pos[0], pos[1], rep.truth_m[0], rep.truth_m[1], rep.loc_error_m, rep.loc_residual_m,
        rep.condition, len(rep.vantages) if rep.position_m else 0,
    )])
    return [vpath, lpath]


def _scenario(args):
    sc = load_scenario(args.scenario)
    if args.seed is not None:
        sc = replace(sc, run=replace(sc.run, seed=args.seed))
    return sc


def _out_dir(args, sc=None) -> str:
    if args.out:
        return args.out
    return sc.run.output if sc is not None else "out"


# -- subcommands --------------------------------------------------------------


def cmd_run(args) -> int:
    sc = _scenario(args)
    rep = run_pipeline(sc)
    paths = write_report(rep, _out_dir(args, sc))
    for v in rep.vantages:
        log.info("vantage %d: AoA %.2f deg (truth %.2f), error %.2f deg, snr %.1f dB",
                 v.index, v.est_aoa_deg, v.true_aoa_deg, v.aoa_error_deg, v.snr_db)
    if rep.position_m is not None:
        log.info("position (%.3f, %.3f) m, error %.3f m", *rep.position_m, rep.loc_error_m)
    print("\n".join(paths))
    if not rep.converged:
        print("warning: AoA solver hit max_iters before converging", file=sys.stderr)
    return rep.exit_code


def cmd_sweep(args) -> int:
    sc = _scenario(args)
    values = [parse_sweep_value(args.axis, v) for v in args.values.split(",") if v.strip()]
    base = sc.run.seed
    seeds = [base + k for k in range(args.seeds)]
    rows = run_sweep(sc, args.axis, values, seeds, workers=args.workers)
    path = os.path.join(_out_dir(args, sc), f"sweep_{args.axis}.csv")
    write_csv(path, SWEEP_HEADER, (
        (r.axis_value, r.seed, r.aoa_error_deg, r.loc_error_m, r.snr_db, r.iters, r.status) for r in rows
    ))
    print(path)
    return EXIT_NONCONVERGENCE if any(r.status == "nonconverged" for r in rows) else EXIT_OK


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    out = _out_dir(args, sc)
    os.makedirs(out, exist_ok=True)
    seed = sc.run.seed
    n_sweeps = args.sweeps or sc.estimator.packets
    sched = SwitchSchedule(sc.array.n_switched, sc.array.dwell_samples, sc.array.guard_samples)
    for vi in range(len(sc.vantages)):
        geom = _geometry(sc, vi)
        paths = vantage_paths(sc, vi, seed)
        src, intfs = _emitters(sc, geom, paths)
        noise = NoiseModel(sc.noise.power, sc.noise.rho, derive_seed(seed, vi, 0))
        cap = simulate_capture(src, geom, paths, noise, sched, sc.array.fs, n_sweeps, intfs)
        if not args.double:
            cap = IQCapture(cap.fs, cap.ref_stream.astype(np.complex64),
                            cap.switched_stream.astype(np.complex64), cap.schedule)
        prefix = os.path.join(out, f"vantage{vi + 1}")
        write_capture(cap, prefix)
        print(prefix)
    return EXIT_OK


def _read_channel(path: str) -> RelativeChannel:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ScenarioError(path, "channel file has no rows")
    try:
        rows.sort(key=lambda r: int(r["antenna"]))
        vals = [complex(float(r["re"]), float(r["im"])) for r in rows]
        r0 = rows[0]
        return RelativeChannel(
            np.array(vals), r0.get("estimator", "true"), int(r0.get("tau_samples", 0) or 0),
            float(r0.get("wavelength_m", "nan") or "nan"), int(r0.get("n_packets", 1) or 1),
        )
    except (KeyError, ValueError) as exc:
        raise ScenarioError(path, f"malformed channel file: {exc}") from None


def cmd_estimate(args) -> int:
    try:
        cap = read_capture(args.capture)
    except (CaptureFormatError, OSError) as exc:
        raise ScenarioError("capture", str(exc)) from None
    pkts = packetize(cap)
    ref = cap.ref_stream[: cap.schedule.sweep_samples]
    max_p = min(args.max_period, ref.size / 4)
    try:
        clock = detect_clock(ref, min(args.min_period, max_p), max_p)
    except NoClockFound as exc:
        print(f"no clock found: {exc}", file=sys.stderr)
        return EXIT_NO_CLOCK
    if args.tau == "period":
        tau = int(round(clock.period_samples))
    else:
        try:
            tau = int(args.tau)
        except ValueError:
            raise ScenarioError("--tau", f"expected 'period' or a sample count, got {args.tau!r}") from None
    chans, skipped = [], 0
    for p in pkts:
        if tau == 0:
            chans.append(estimate_standard(p, args.wavelength))
            continue
        try:
            h = estimate_offset(p, tau, args.wavelength)
            hi = estimate_inverse(p, tau, args.wavelength)
        except DegenerateOffsetError as exc:
            print(str(exc), file=sys.stderr)
            return EXIT_NO_CLOCK
        if detect_interference(h, hi, args.threshold).interfered:
            skipped += 1
            continue
        chans.append(h)
    if not chans or skipped > args.retries:
        print(f"interference in {skipped} of {len(pkts)} packets", file=sys.stderr)
        return EXIT_INTERFERENCE
    h = average_channels(chans)
    out = _out_dir(args)
    path = os.path.join(out, "channel.csv")
    write_csv(path, ("antenna", "re", "im", "estimator", "tau_samples", "wavelength_m", "n_packets", "clock_hz"), (
        (i, v.real, v.imag, h.estimator_kind, h.tau_samples, h.carrier_wavelength_m,
         h.n_packets_averaged, clock.frequency_hz(cap.fs))
        for i, v in enumerate(h.values)
    ))
    print(path)
    return EXIT_OK


def cmd_aoa(args) -> int:
    h = _read_channel(args.channel)
    dl = args.spacing / args.wavelength
    if not 0 < dl < 0.5:
        raise ScenarioError("--wavelength", f"d/lambda = {dl:.3f} must lie in (0, 0.5)")
    opts = aoa.SolverOptions(record_objective=False)
    est, prof = aoa.estimate_aoa(h, dl, args.method, args.beta, args.grid, args.rel_threshold, opts)
    path = os.path.join(_out_dir(args), "aoa.csv")
    w = np.asarray(est.weights)
    write_csv(path, ("rank", "aoa_deg", "psi", "weight_re", "weight_im", "magnitude"), (
        (k, math.degrees(a), ps, complex(wk).real, complex(wk).imag, abs(wk))
        for k, (a, ps, wk) in enumerate(zip(est.angles_rad, est.psi, w))
    ))
    print(path)
    if prof is not None and not prof.converged:
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def cmd_localize(args) -> int:
    bearings = []
    for spec in args.bearing or []:
        try:
            parts = [float(v) for v in spec.split(",")]
        except ValueError:
            raise ScenarioError("--bearing", f"expected x,y,angle_deg[,weight], got {spec!r}") from None
        if len(parts) not in (3, 4):
            raise ScenarioError("--bearing", f"expected x,y,angle_deg[,weight], got {spec!r}")
        bearings.append(Bearing((parts[0], parts[1]), math.radians(parts[2]), parts[3] if len(parts) == 4 else 1.0))
    if len(bearings) < 2:
        raise ScenarioError("--bearing", "need at least two bearings")
    try:
        res = triangulate(bearings)
    except IllConditionedError as exc:
        raise ScenarioError("--bearing", str(exc)) from None
    path = os.path.join(_out_dir(args), "position.csv")
    write_csv(path, ("x_m", "y_m", "residual_m", "condition", "n_bearings"), [
        (res.position_m[0], res.position_m[1], res.residual_m, res.condition, res.n_bearings)
    ])
    print(f"{fmt(res.position_m[0])},{fmt(res.position_m[1])}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--verbose", "-v", action="store_true")

    p = argparse.ArgumentParser(prog="emaloc", description="Emanation AoA estimation and localization.",
                                parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", parents=[common], help="full pipeline on a scenario, writes report CSVs")
    s.add_argument("scenario", help="scenario file or bundled name (e.g. quickstart)")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[common], help="repeat a scenario over one parameter")
    s.add_argument("scenario")
    s.add_argument("--axis", required=True, choices=SWEEP_AXES)
    s.add_argument("--values", required=True,
                   help="comma list; tau is in clock periods (0, 1, ... or 'period')")
    s.add_argument("--seeds", type=int, default=10, help="number of seeds starting at the scenario seed")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("simulate", parents=[common], help="write simulated IQ captures per vantage")
    s.add_argument("scenario")
    s.add_argument("--sweeps", type=int, default=None, help="sweeps per capture (default: packets)")
    s.add_argument("--double", action="store_true", help="store cf64 instead of cf32")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("estimate", parents=[common], help="relative channel from an IQ capture")
    s.add_argument("capture", help="capture path prefix (without .meta)")
    s.add_argument("--tau", default="period", help="'period' or a sample count (0 = standard estimator)")
    s.add_argument("--threshold", type=float, default=0.1)
    s.add_argument("--retries", type=int, default=3)
    s.add_argument("--min-period", type=float, default=16)
    s.add_argument("--max-period", type=float, default=4096)
    s.add_argument("--wavelength", type=float, default=float("nan"))
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("aoa", parents=[common], help="AoA from a channel CSV")
    s.add_argument("channel")
    s.add_argument("--method", default="sparse", choices=("sparse", "music", "spotfi", "ifft"))
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--grid", type=int, default=256)
    s.add_argument("--rel-threshold", type=float, default=0.05)
    s.add_argument("--spacing", type=float, default=0.0625)
    s.add_argument("--wavelength", type=float, default=0.3125)
    s.set_defaults(func=cmd_aoa)

    s = sub.add_parser("localize", parents=[common], help="triangulate bearings")
    s.add_argument("--bearing", action="append", help="x,y,global_angle_deg[,weight]; repeat")
    s.set_defaults(func=cmd_localize)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PipelineError as exc:
        print(str(exc), file=sys.stderr)
        return exc.exit_code
    except aoa.GridError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
