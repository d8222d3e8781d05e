"""Emanation waveforms, multipath relative channels and correlated receiver noise.

Everything here is baseband. A clock emanation is an on/off pulse train
(optionally gated by slow activity bursts and rotated by a small residual
carrier offset); a propagation environment is a short list of plane-wave
paths impinging on a uniform linear array whose element 0 is the fixed
reference antenna.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import RelativeChannel

SPEED_OF_LIGHT = 299_792_458.0

# 62.5 mm elements at a 960 MHz harmonic (d/lambda = 0.2)
DEFAULT_SPACING_M = 0.0625
DEFAULT_WAVELENGTH_M = 0.3125


class ResolutionError(ValueError):
    """The clock period is not resolved by the sample rate."""


class SingularChannelError(ValueError):
    """Path gains sum to zero, so the reference element sees nothing."""


class AliasingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EmanationSource:
    """Square-wave clock leakage at baseband.

    ``freq_offset_hz`` is the residual carrier offset of the harmonic after
    tuning; the target is normally tuned exactly (offset 0). The optional
    activity gate switches the whole emission on and off with period
    ``gate_period_s`` and duty ``gate_duty``.
    """

    clock_period_s: float
    duty_cycle: float = 0.5
    amplitude: float = 1.0
    position_m: tuple = (0.0, 0.0)
    freq_offset_hz: float = 0.0
    gate_period_s: Optional[float] = None
    gate_duty: float = 1.0

    def __post_init__(self):
        if not self.clock_period_s > 0:
            raise ValueError("clock_period_s must be positive")
        if not 0.0 < self.duty_cycle <= 1.0:
            raise ValueError("duty_cycle must lie in (0, 1]")
        if not self.amplitude >= 0:
            raise ValueError("amplitude must be non-negative")
        if self.gate_period_s is not None and not self.gate_period_s > 0:
            raise ValueError("gate_period_s must be positive")
        if not 0.0 < self.gate_duty <= 1.0:
            raise ValueError("gate_duty must lie in (0, 1]")
        object.__setattr__(self, "position_m", tuple(float(v) for v in self.position_m))

    @property
    def clock_hz(self) -> float:
        return 1.0 / self.clock_period_s

    def mean_power(self) -> float:
        """Average of |s(t)|^2 over a full cycle (and gate cycle)."""
        duty = 1.0 if self.duty_cycle >= 1.0 - 1e-9 else self.duty_cycle
        gate = 1.0 if self.gate_period_s is None else self.gate_duty
        return self.amplitude**2 * duty * gate


@dataclass(frozen=True)
class InterferenceSource(EmanationSource):
    """A second leakage emitter; ``alpha`` holds its relative channel on the
    switched elements 1..N (the reference sees it with unit gain)."""

    alpha: tuple = ()

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "alpha", tuple(complex(a) for a in self.alpha))

    def alpha_for(self, n_switched: int) -> np.ndarray:
        if len(self.alpha) != n_switched:
            raise ValueError(
                f"interferer has {len(self.alpha)} switched gains, array has {n_switched}"
            )
        return np.asarray(self.alpha, dtype=complex)


@dataclass(frozen=True)
class ArrayGeometry:
    """Reference element plus ``n_switched`` elements on a uniform line.

    ``vantage_heading_rad`` is the global direction of the array broadside;
    local angles of arrival are measured from it.
    """

    n_switched: int = 8
    spacing_m: float = DEFAULT_SPACING_M
    carrier_wavelength_m: float = DEFAULT_WAVELENGTH_M
    vantage_position_m: tuple = (0.0, 0.0)
    vantage_heading_rad: float = 0.0

    def __post_init__(self):
        if self.n_switched < 2:
            raise ValueError("need at least 2 switched elements")
        if not self.spacing_m > 0 or not self.carrier_wavelength_m > 0:
            raise ValueError("spacing and wavelength must be positive")
        object.__setattr__(
            self, "vantage_position_m", tuple(float(v) for v in self.vantage_position_m)
        )
        if self.aliased:
            warnings.warn(
                f"d/lambda = {self.d_over_lambda:.3f} >= 0.5: spatial aliasing",
                AliasingWarning,
                stacklevel=3,
            )

    @property
    def d_over_lambda(self) -> float:
        return self.spacing_m / self.carrier_wavelength_m

    @property
    def aliased(self) -> bool:
        return self.d_over_lambda >= 0.5

    @property
    def n_total(self) -> int:
        return self.n_switched + 1

    def with_wavelength(self, wavelength_m: float) -> "ArrayGeometry":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AliasingWarning)
            return ArrayGeometry(
                self.n_switched,
                self.spacing_m,
                wavelength_m,
                self.vantage_position_m,
                self.vantage_heading_rad,
            )

    def local_aoa(self, point_m) -> float:
        """Angle of arrival (from broadside) of a plane wave from ``point_m``."""
        dx = point_m[0] - self.vantage_position_m[0]
        dy = point_m[1] - self.vantage_position_m[1]
        ang = math.atan2(dy, dx) - self.vantage_heading_rad
        return math.atan2(math.sin(ang), math.cos(ang))

    def distance_to(self, point_m) -> float:
        return math.hypot(
            point_m[0] - self.vantage_position_m[0], point_m[1] - self.vantage_position_m[1]
        )


@dataclass(frozen=True)
class Path:
    aoa_rad: float
    gain: complex

    def __post_init__(self):
        if not abs(self.aoa_rad) < math.pi / 2:
            raise ValueError(f"path AoA {self.aoa_rad} rad outside (-pi/2, pi/2)")
        object.__setattr__(self, "gain", complex(self.gain))


@dataclass(frozen=True)
class PathSet:
    paths: tuple = field(default_factory=tuple)

    def __post_init__(self):
        paths = tuple(p if isinstance(p, Path) else Path(*p) for p in self.paths)
        if not paths:
            raise ValueError("a path set needs at least one path")
        object.__setattr__(self, "paths", paths)

    @classmethod
    def from_arrays(cls, aoas_rad: Sequence[float], gains: Sequence[complex]) -> "PathSet":
        if len(aoas_rad) != len(gains):
            raise ValueError("aoas and gains differ in length")
        return cls(tuple(Path(float(a), complex(g)) for a, g in zip(aoas_rad, gains)))

    @property
    def m(self) -> int:
        return len(self.paths)

    @property
    def aoas(self) -> np.ndarray:
        return np.array([p.aoa_rad for p in self.paths])

    @property
    def gains(self) -> np.ndarray:
        return np.array([p.gain for p in self.paths], dtype=complex)

    def dominant(self) -> Path:
        return max(self.paths, key=lambda p: abs(p.gain))

    def scaled(self, factor: complex) -> "PathSet":
        return PathSet(tuple(Path(p.aoa_rad, p.gain * factor) for p in self.paths))


@dataclass(frozen=True)
class NoiseModel:
    noise_power: float = 1.0
    cross_corr_rho: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.noise_power < 0:
            raise ValueError("noise_power must be non-negative")
        if not 0.0 <= self.cross_corr_rho <= 1.0:
            raise ValueError("cross_corr_rho must lie in [0, 1]")


def period_in_samples(clock_period_s: float, fs: float) -> float:
    p = clock_period_s * fs
    r = round(p)
    # snap float noise such as 1023.9999999999999
    if abs(p - r) <= 1e-9 * max(p, 1.0):
        return float(r)
    return p


def _pulse_train(t: np.ndarray, period: float, duty: float, phase0: float) -> np.ndarray:
    if duty >= 1.0 - 1e-9:
        return np.ones(t.shape)
    pos = np.mod(t + phase0 * period, period)
    return (pos < duty * period).astype(float)


def synthesize_emanation(
    src: EmanationSource, fs: float, n: int, phase0: float = 0.0, start: int = 0
) -> np.ndarray:
    """Baseband samples s[start .. start+n) of the clock leakage.

    ``phase0`` is the starting phase as a fraction of the clock period.
    """
    period = period_in_samples(src.clock_period_s, fs)
    if period < 2:
        raise ResolutionError(
            f"clock period is {period:.3f} samples at fs={fs:g}; need at least 2"
        )
    if n < 1:
        raise ValueError("n must be >= 1")
    t = np.arange(start, start + n, dtype=float)
    s = src.amplitude * _pulse_train(t, period, src.duty_cycle, phase0)
    if src.gate_period_s is not None and src.gate_duty < 1.0:
        gate_period = src.gate_period_s * fs
        s = s * _pulse_train(t, gate_period, src.gate_duty, 0.0)
    out = s.astype(complex)
    if src.freq_offset_hz:
        out = out * np.exp(2j * np.pi * src.freq_offset_hz * t / fs)
    return out


def steering_phase(geom: ArrayGeometry, aoa_rad: float, i) -> complex:
    """exp(-j 2 pi i sin(theta) d / lambda) for element ``i`` (0 = reference)."""
    idx = np.asarray(i)
    if np.any(idx < 0) or np.any(idx > geom.n_switched):
        raise ValueError(f"antenna index {i} outside 0..{geom.n_switched}")
    if not abs(aoa_rad) < math.pi / 2:
        raise ValueError("aoa must lie in (-pi/2, pi/2)")
    out = np.exp(-2j * np.pi * idx * math.sin(aoa_rad) * geom.d_over_lambda)
    return complex(out) if np.ndim(out) == 0 else out


def steering_vector(n_total: int, psi) -> np.ndarray:
    """Columns exp(-j 2 pi n psi), n = 0..n_total-1, one per normalized spatial frequency."""
    n = np.arange(n_total)[:, None]
    return np.exp(-2j * np.pi * n * np.atleast_1d(np.asarray(psi, dtype=float))[None, :])


def true_relative_channel(
    geom: ArrayGeometry, paths: PathSet, wavelength_m: Optional[float] = None
) -> RelativeChannel:
    """Noise-free relative channel of ``paths`` at the given wavelength."""
    wl = geom.carrier_wavelength_m if wavelength_m is None else wavelength_m
    gains = paths.gains
    total = gains.sum()
    if abs(total) <= 1e-12 * max(np.abs(gains).max(), 1e-300):
        raise SingularChannelError("path gains sum to zero")
    psi = np.sin(paths.aoas) * geom.spacing_m / wl
    h = steering_vector(geom.n_total, psi) @ gains / total
    h[0] = 1.0
    return RelativeChannel(h, estimator_kind="true", tau_samples=0, carrier_wavelength_m=wl)


def generate_correlated_noise(model: NoiseModel, n_streams: int, n_samples: int) -> np.ndarray:
    """``n_streams`` x ``n_samples`` circular white noise with lag-0 cross-correlation rho.

    Each stream is sqrt(rho) * common + sqrt(1 - rho) * private, scaled to
    total power ``noise_power``.
    """
    if n_streams < 1:
        raise ValueError("n_streams must be >= 1")
    rng = np.random.default_rng(model.seed)

    def cn(shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)

    rho = model.cross_corr_rho
    common = cn((1, n_samples))
    private = cn((n_streams, n_samples))
    noise = math.sqrt(rho) * common + math.sqrt(1.0 - rho) * private
    return math.sqrt(model.noise_power) * noise
