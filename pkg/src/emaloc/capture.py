"""Switched-antenna acquisition: simulation, packet framing and raw IQ files.

The receiver has two synchronized ports. Port A is wired to the reference
element permanently; port B is multiplexed over the switched elements, each
held for ``dwell_samples`` samples. The first ``guard_samples`` after every
switch event are treated as settling transients and discarded by
:func:`packetize`.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .emamodel import (
    ArrayGeometry,
    EmanationSource,
    InterferenceSource,
    NoiseModel,
    PathSet,
    generate_correlated_noise,
    synthesize_emanation,
    true_relative_channel,
)

FORMAT_TAG = "emaloc-iq-1"
_SAMPLE_FORMATS = {"cf32": np.dtype("<c8"), "cf64": np.dtype("<c16")}


class CaptureFormatError(ValueError):
    """Metadata or stream files do not describe a valid capture."""


@dataclass(frozen=True)
class SwitchSchedule:
    n_antennas: int = 8
    dwell_samples: int = 96000
    guard_samples: int = 960
    order: tuple = ()

    def __post_init__(self):
        if int(self.n_antennas) < 1:
            raise ValueError("n_antennas must be >= 1")
        if int(self.dwell_samples) < 1:
            raise ValueError("dwell_samples must be > 0")
        if not 0 <= int(self.guard_samples) < int(self.dwell_samples):
            raise ValueError("guard_samples must satisfy 0 <= guard < dwell")
        object.__setattr__(self, "n_antennas", int(self.n_antennas))
        object.__setattr__(self, "dwell_samples", int(self.dwell_samples))
        object.__setattr__(self, "guard_samples", int(self.guard_samples))
        order = tuple(int(a) for a in self.order) or tuple(range(1, self.n_antennas + 1))
        if sorted(order) != list(range(1, self.n_antennas + 1)):
            raise ValueError(f"order {order} is not a permutation of 1..{self.n_antennas}")
        object.__setattr__(self, "order", order)

    @property
    def sweep_samples(self) -> int:
        return self.n_antennas * self.dwell_samples

    @property
    def usable_samples(self) -> int:
        return self.dwell_samples - self.guard_samples

    def antenna_at(self, sample_index: np.ndarray) -> np.ndarray:
        """Switched antenna (1-based) selected at each absolute sample index."""
        slot = (np.asarray(sample_index) % self.sweep_samples) // self.dwell_samples
        return np.asarray(self.order)[slot]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class IQCapture:
    fs: float
    ref_stream: np.ndarray
    switched_stream: np.ndarray
    schedule: SwitchSchedule
    packet_len_samples: Optional[int] = None

    def __post_init__(self):
        if not self.fs > 0:
            raise ValueError("fs must be positive")
        ref = np.asarray(self.ref_stream)
        sw = np.asarray(self.switched_stream)
        if not np.iscomplexobj(ref):
            ref = ref.astype(complex)
        if not np.iscomplexobj(sw):
            sw = sw.astype(complex)
        if ref.ndim != 1 or sw.ndim != 1:
            raise ValueError("streams must be 1-D")
        if ref.shape != sw.shape:
            raise ValueError(
                f"stream lengths differ: ref {ref.size}, switched {sw.size}"
            )
        sweep = self.schedule.sweep_samples
        if ref.size == 0 or ref.size % sweep:
            raise ValueError(
                f"stream length {ref.size} is not a whole number of {sweep}-sample sweeps"
            )
        plen = sweep if self.packet_len_samples is None else int(self.packet_len_samples)
        if plen != sweep:
            raise ValueError(f"packet_len_samples {plen} must equal one sweep ({sweep})")
        object.__setattr__(self, "fs", float(self.fs))
        object.__setattr__(self, "packet_len_samples", plen)
        object.__setattr__(self, "ref_stream", _frozen(ref))
        object.__setattr__(self, "switched_stream", _frozen(sw))

    @property
    def n_samples(self) -> int:
        return self.ref_stream.size

    @property
    def n_sweeps(self) -> int:
        return self.n_samples // self.schedule.sweep_samples

    def __eq__(self, other):
        if not isinstance(other, IQCapture):
            return NotImplemented
        return (
            self.fs == other.fs
            and self.schedule == other.schedule
            and self.packet_len_samples == other.packet_len_samples
            and self.ref_stream.dtype == other.ref_stream.dtype
            and self.switched_stream.dtype == other.switched_stream.dtype
            and self.ref_stream.tobytes() == other.ref_stream.tobytes()
            and self.switched_stream.tobytes() == other.switched_stream.tobytes()
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Packet:
    """One sweep. Row ``i - 1`` of ``ref`` and ``switched`` holds the
    co-timed usable samples of switched antenna ``i``."""

    ref: np.ndarray
    switched: np.ndarray
    sweep_index: int
    order: tuple
    start_samples: tuple = field(default=())

    @property
    def n_switched(self) -> int:
        return self.switched.shape[0]

    @property
    def segment_len(self) -> int:
        return self.switched.shape[1]

    def switched_in_time_order(self) -> np.ndarray:
        return np.concatenate([self.switched[a - 1] for a in self.order])

    def ref_in_time_order(self) -> np.ndarray:
        return np.concatenate([self.ref[a - 1] for a in self.order])


def simulate_capture(
    src: EmanationSource,
    geom: ArrayGeometry,
    paths: PathSet,
    noise: NoiseModel,
    schedule: SwitchSchedule,
    fs: float,
    n_sweeps: int,
    interferers: Sequence[InterferenceSource] = (),
    wavelength_m: Optional[float] = None,
    start_sweep: int = 0,
) -> IQCapture:
    """Two-port recording of ``src`` through ``paths`` plus interferers and noise.

    The reference port sees the emanation with unit channel, each interferer
    with unit channel, and noise; the switched port sees ``h_i`` (and
    ``alpha_i`` for interferers) for whichever antenna is selected.
    ``start_sweep`` offsets the waveform clocks so consecutive single-sweep
    captures continue one another.
    """
    if schedule.n_antennas != geom.n_switched:
        raise ValueError(
            f"schedule has {schedule.n_antennas} antennas, geometry has {geom.n_switched}"
        )
    if int(n_sweeps) < 1:
        raise ValueError("n_sweeps must be >= 1")
    n = int(n_sweeps) * schedule.sweep_samples
    h = true_relative_channel(geom, paths, wavelength_m).values
    ant = schedule.antenna_at(np.arange(schedule.sweep_samples))
    ant = np.tile(ant, int(n_sweeps))

    t0 = int(start_sweep) * schedule.sweep_samples
    s = synthesize_emanation(src, fs, n, start=t0)
    ref = s.copy()
    sw = h[ant] * s
    for intf in interferers:
        alpha = np.concatenate(([1.0 + 0j], intf.alpha_for(geom.n_switched)))
        d = synthesize_emanation(intf, fs, n, start=t0)
        ref += d
        sw += alpha[ant] * d
    if noise.noise_power > 0:
        nz = generate_correlated_noise(noise, 2, n)
        ref += nz[0]
        sw += nz[1]
    return IQCapture(fs, ref, sw, schedule)


def packetize(cap: IQCapture) -> list:
    sch = cap.schedule
    g, u = sch.guard_samples, sch.usable_samples
    out = []
    for k in range(cap.n_sweeps):
        base = k * sch.sweep_samples
        ref = np.empty((sch.n_antennas, u), dtype=cap.ref_stream.dtype)
        sw = np.empty((sch.n_antennas, u), dtype=cap.switched_stream.dtype)
        starts = [0] * sch.n_antennas
        for slot, a in enumerate(sch.order):
            lo = base + slot * sch.dwell_samples + g
            ref[a - 1] = cap.ref_stream[lo : lo + u]
            sw[a - 1] = cap.switched_stream[lo : lo + u]
            starts[a - 1] = lo
        ref.setflags(write=False)
        sw.setflags(write=False)
        out.append(Packet(ref, sw, k, sch.order, tuple(starts)))
    return out


def _meta_path(prefix) -> str:
    return f"{os.fspath(prefix)}.meta"


def write_capture(cap: IQCapture, path_prefix) -> None:
    """Write ``<prefix>.ref.iq``, ``<prefix>.sw.iq`` and ``<prefix>.meta``.

    complex64 streams are stored as cf32; anything else is stored as cf64 so
    the round trip stays bit-exact.
    """
    fmt = "cf32" if cap.ref_stream.dtype == np.complex64 else "cf64"
    dt = _SAMPLE_FORMATS[fmt]
    sch = cap.schedule
    meta = {
        "format": FORMAT_TAG,
        "sample_format": fmt,
        "fs": repr(cap.fs),
        "n_antennas": str(sch.n_antennas),
        "dwell_samples": str(sch.dwell_samples),
        "guard_samples": str(sch.guard_samples),
        "order": ",".join(str(a) for a in sch.order),
        "packet_len": str(cap.packet_len_samples),
        "n_samples": str(cap.n_samples),
    }
    prefix = os.fspath(path_prefix)
    cap.ref_stream.astype(dt).tofile(prefix + ".ref.iq")
    cap.switched_stream.astype(dt).tofile(prefix + ".sw.iq")
    with open(_meta_path(prefix), "w", encoding="utf-8") as fh:
        for k, v in meta.items():
            fh.write(f"{k} = {v}\n")


def _parse_meta(path: str) -> dict:
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CaptureFormatError(f"{path}:{lineno}: expected 'key = value'")
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
    return meta


def read_capture(path_prefix) -> IQCapture:
    prefix = os.fspath(path_prefix)
    meta = _parse_meta(_meta_path(prefix))

    def need(key, conv):
        if key not in meta:
            raise CaptureFormatError(f"metadata is missing '{key}'")
        try:
            return conv(meta[key])
        except ValueError as exc:
            raise CaptureFormatError(f"metadata '{key}' = {meta[key]!r}: {exc}") from None

    fmt = meta.get("sample_format", "cf32")
    if fmt not in _SAMPLE_FORMATS:
        raise CaptureFormatError(f"unknown sample_format {fmt!r}")
    fs = need("fs", float)
    n_ant = need("n_antennas", int)
    dwell = need("dwell_samples", int)
    guard = need("guard_samples", int)
    order = need("order", lambda v: tuple(int(a) for a in v.split(",") if a.strip()))
    plen = need("packet_len", int)
    if n_ant < 1:
        raise CaptureFormatError(f"n_antennas must be >= 1, got {n_ant}")
    try:
        sched = SwitchSchedule(n_ant, dwell, guard, order)
    except ValueError as exc:
        raise CaptureFormatError(f"invalid schedule in metadata: {exc}") from None
    if plen != sched.sweep_samples:
        raise CaptureFormatError(
            f"packet_len {plen} does not match one sweep ({sched.sweep_samples})"
        )

    dt = _SAMPLE_FORMATS[fmt]
    streams = []
    for suffix in (".ref.iq", ".sw.iq"):
        data = np.fromfile(prefix + suffix, dtype=dt)
        raw = os.path.getsize(prefix + suffix)
        if raw % dt.itemsize:
            raise CaptureFormatError(
                f"{prefix + suffix}: {raw} bytes is not a whole number of {fmt} samples"
            )
        streams.append(data.astype(np.complex64 if fmt == "cf32" else np.complex128))
    declared = meta.get("n_samples")
    expected = int(declared) if declared is not None else None
    for suffix, data in zip((".ref.iq", ".sw.iq"), streams):
        if expected is not None and data.size != expected:
            raise CaptureFormatError(
                f"{prefix + suffix}: expected {expected} samples, found {data.size}"
            )
        if data.size % sched.sweep_samples or data.size == 0:
            want = max(1, math.ceil(data.size / sched.sweep_samples)) * sched.sweep_samples
            raise CaptureFormatError(
                f"{prefix + suffix}: expected a multiple of {sched.sweep_samples} samples "
                f"(e.g. {want}), found {data.size}"
            )
    return IQCapture(fs, streams[0], streams[1], sched, plen)
