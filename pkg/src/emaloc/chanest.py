"""Relative-channel estimation from packetized captures.

Three estimators share one shape: a lagged cross-correlation between the
switched port and the reference port, divided by the reference port's own
lagged autocorrelation, each taken over one antenna's dwell.

* standard: lag 0. Correlated receiver noise biases it toward 1.
* offset: lag +tau. White noise decorrelates, the periodic emanation does not.
* inverse: lag -tau. Differs from the offset estimate only when a second
  periodic emitter with complex lag correlation is present.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.signal import find_peaks

from .capture import Packet
from .channel import RelativeChannel


class ZeroReferencePowerError(ValueError):
    pass


class DegenerateOffsetError(ValueError):
    """The lagged reference autocorrelation is indistinguishable from noise."""


class ProvenanceError(ValueError):
    pass


class NoClockFound(RuntimeError):
    pass


@dataclass(frozen=True)
class LagCorrelation:
    lag_samples: int
    value: complex


@dataclass(frozen=True)
class ClockEstimate:
    period_samples: float
    confidence: float  # dB, peak over median of the other lags

    def __post_init__(self):
        if not self.period_samples >= 2:
            raise ValueError("period_samples must be >= 2")

    def frequency_hz(self, fs: float) -> float:
        return fs / self.period_samples


@dataclass(frozen=True)
class InterferenceCheck:
    status: str  # "clean" | "interfered"
    score: float

    @property
    def interfered(self) -> bool:
        return self.status == "interfered"


def lag_correlation(x: np.ndarray, y: np.ndarray, lag: int) -> LagCorrelation:
    """Sample estimate of E[x(t) y*(t - lag)] over the overlap."""
    x = np.asarray(x)
    y = np.asarray(y)
    n = min(x.size, y.size)
    if abs(lag) >= n:
        raise ValueError(f"lag {lag} leaves no overlap in {n} samples")
    if lag >= 0:
        v = np.vdot(y[: n - lag], x[lag:n]) / (n - lag)
    else:
        v = np.vdot(y[-lag:n], x[: n + lag]) / (n + lag)
    return LagCorrelation(int(lag), complex(v))


def _lagged(pkt: Packet, lag: int):
    ref, sw = pkt.ref, pkt.switched
    L = pkt.segment_len
    if lag >= 0:
        a, b = slice(lag, L), slice(0, L - lag)
    else:
        a, b = slice(0, L + lag), slice(-lag, L)
    m = L - abs(lag)
    num = np.einsum("ij,ij->i", sw[:, a], ref[:, b].conj()) / m
    den = np.einsum("ij,ij->i", ref[:, a], ref[:, b].conj()) / m
    return num, den


def _finish(pkt, num, den, kind, tau, wavelength_m):
    vals = np.empty(pkt.n_switched + 1, dtype=complex)
    vals[0] = 1.0
    vals[1:] = num / den
    return RelativeChannel(vals, kind, tau, wavelength_m, 1)


def estimate_standard(pkt: Packet, wavelength_m: float = float("nan")) -> RelativeChannel:
    if pkt.segment_len < 1:
        raise ValueError("empty antenna segment")
    num, den = _lagged(pkt, 0)
    den = den.real
    if np.any(den <= np.finfo(float).tiny):
        bad = int(np.argmin(den)) + 1
        raise ZeroReferencePowerError(f"reference power is zero during antenna {bad}'s dwell")
    return _finish(pkt, num, den, "standard", 0, wavelength_m)


def _check_tau(pkt: Packet, tau: int) -> int:
    if int(tau) != tau or tau < 1:
        raise ValueError(f"tau_samples must be a positive integer, got {tau}")
    tau = int(tau)
    if pkt.segment_len <= tau:
        raise ValueError(f"usable dwell {pkt.segment_len} must exceed tau {tau}")
    return tau


def _check_denominator(pkt: Packet, den: np.ndarray, tau: int, floor_sigmas: float):
    # A lagged correlation of m uncorrelated samples spreads ~ power / sqrt(m).
    # Whether the signal survives at this lag is a property of tau, not of one
    # dwell, so the test pools all dwells of the packet.
    m = (pkt.segment_len - tau) * den.size
    power = float(np.mean(np.abs(pkt.ref) ** 2))
    floor = floor_sigmas * power / math.sqrt(m)
    pooled = abs(complex(np.mean(den)))
    if not pooled > floor or not np.all(np.abs(den) > np.finfo(float).tiny):
        raise DegenerateOffsetError(
            f"|lagged reference correlation| {pooled:.3g} at tau={tau} is below the "
            f"noise floor {floor:.3g}; tau is not aligned to the signal period or the "
            "signal is absent"
        )


def estimate_offset(
    pkt: Packet, tau_samples: int, wavelength_m: float = float("nan"), floor_sigmas: float = 4.0
) -> RelativeChannel:
    """h_i = E[r_i(t) r_ref*(t - tau)] / E[r_ref(t) r_ref*(t - tau)] per dwell."""
    tau = _check_tau(pkt, tau_samples)
    num, den = _lagged(pkt, tau)
    _check_denominator(pkt, den, tau, floor_sigmas)
    return _finish(pkt, num, den, "offset", tau, wavelength_m)


def estimate_inverse(
    pkt: Packet, tau_samples: int, wavelength_m: float = float("nan"), floor_sigmas: float = 4.0
) -> RelativeChannel:
    """h_i = E[r_i(t) r_ref*(t + tau)] / E[r_ref(t) r_ref*(t + tau)] per dwell."""
    tau = _check_tau(pkt, tau_samples)
    num, den = _lagged(pkt, -tau)
    _check_denominator(pkt, den, tau, floor_sigmas)
    return _finish(pkt, num, den, "inverse", tau, wavelength_m)


def _same_wavelength(a: float, b: float) -> bool:
    return a == b or (math.isnan(a) and math.isnan(b))


def detect_interference(
    h_off: RelativeChannel, h_inv: RelativeChannel, threshold: float = 0.1
) -> InterferenceCheck:
    if (
        h_off.n_antennas != h_inv.n_antennas
        or h_off.tau_samples != h_inv.tau_samples
        or h_off.n_packets_averaged != h_inv.n_packets_averaged
        or not _same_wavelength(h_off.carrier_wavelength_m, h_inv.carrier_wavelength_m)
    ):
        raise ProvenanceError(
            "offset and inverse estimates differ in length, tau, packet count or wavelength"
        )
    if not threshold >= 0:
        raise ValueError("threshold must be non-negative")
    score = float(np.linalg.norm(h_off.values - h_inv.values) / np.linalg.norm(h_off.values))
    return InterferenceCheck("interfered" if score > threshold else "clean", score)


def average_channels(channels: Sequence[RelativeChannel]) -> RelativeChannel:
    """Non-coherent average over packets: element-wise mean of the estimates."""
    channels = list(channels)
    if not channels:
        raise ValueError("cannot average an empty list of channels")
    first = channels[0]
    for c in channels[1:]:
        if not first.same_provenance(c):
            raise ProvenanceError(
                f"mixed provenance: {first.provenance()} vs {c.provenance()}"
            )
    vals = np.mean([c.values for c in channels], axis=0)
    total = sum(c.n_packets_averaged for c in channels)
    return RelativeChannel(
        vals, first.estimator_kind, first.tau_samples, first.carrier_wavelength_m, total
    )


def autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased autocorrelation R[k] = (1/n) sum x[t + k] x*[t], k = 0..max_lag."""
    x = np.asarray(x)
    n = x.size
    nfft = 1 << int(math.ceil(math.log2(n + max_lag + 1)))
    X = np.fft.fft(x, nfft)
    r = np.fft.ifft(np.abs(X) ** 2)[: max_lag + 1] / n
    return r if np.iscomplexobj(x) else r.real


def detect_clock(
    iq: np.ndarray,
    min_period: float = 2,
    max_period: Optional[float] = None,
    floor: float = 6.0,
    tie_ratio: float = 0.9,
) -> ClockEstimate:
    """Clock period from the mean-removed autocorrelation of ``iq``.

    The autocorrelation is normalized by its zero-lag value, so the result
    does not depend on amplitude. Candidates are local maxima of its real
    part in [min_period, max_period]; the decaying edge of the zero-lag lobe
    is not a local maximum and so never wins. The real part (positive lobe)
    is used rather than the magnitude because a mean-removed 50% square wave
    has an equally deep trough at half its period. This assumes the clock
    harmonic sits close to the tuned frequency: a residual carrier offset f
    rotates the lobe at lag T by 2*pi*f*T. Multiples of the period score
    almost as high as the period itself, so the shortest lag within
    ``tie_ratio`` of the best (or within four noise deviations of it) is
    returned, then sharpened on a later repetition of the same lobe. Peaks
    below ``floor`` standard deviations of white noise (1 / sqrt(2 n)) raise
    :class:`NoClockFound`.
    """
    x = np.asarray(iq, dtype=complex)
    n = x.size
    if max_period is None:
        max_period = n // 4
    if not 2 <= min_period <= max_period:
        raise ValueError("need 2 <= min_period <= max_period")
    if max_period > n / 4:
        raise ValueError(f"max_period {max_period} exceeds n/4 = {n / 4:g}")
    x = x - x.mean()
    lo, hi = int(math.ceil(min_period)), int(math.floor(max_period))
    # one transform serves the search and the refinement on a later repetition
    rc = autocorrelation(x, int(min(n // 2, 64 * (hi + 1))))
    if not rc[0].real > 0:
        raise NoClockFound("input is constant")
    # prominence needs the far flank of a lobe sitting at max_period as well
    ext = min(rc.size - 1, hi + max(2, hi // 2))
    r = (rc[: ext + 1] / rc[0]).real
    threshold = floor / math.sqrt(2 * n)
    # ripple on the flank of a lobe also makes local maxima; only whole lobes count
    seg = r[lo - 1 : ext + 1]
    cand, props = find_peaks(seg, prominence=0.0)
    keep = props["prominences"] >= 0.25 * max(seg[cand].max(initial=0.0), 0.0) if cand.size else []
    cand = cand[keep] + lo - 1
    cand = cand[(cand >= lo) & (cand <= hi)]
    if cand.size == 0 or not r[cand].max() > threshold:
        best = r[cand].max() if cand.size else r[lo : hi + 1].max()
        raise NoClockFound(
            f"strongest autocorrelation lobe {best:.3g} is below the noise floor {threshold:.3g}"
        )
    top = r[cand].max()
    # noise can lift a multiple of the period above the period itself
    slack = max((1.0 - tie_ratio) * top, 4.0 / math.sqrt(2 * n))
    k = int(cand[np.flatnonzero(r[cand] >= top - slack)[0]])
    peak = r[k]
    period = k + _parabolic(r, k)
    ra = np.abs(rc) / rc[0].real * n / (n - np.arange(rc.size))
    period = _refine_by_repetition(ra, period, threshold, n)
    seg = r[lo : hi + 1]
    others = np.abs(np.delete(seg, k - lo))
    ref = np.median(others) if others.size else 0.0
    conf = 20 * math.log10(peak / ref) if ref > 0 else float("inf")
    return ClockEstimate(max(period, 2.0), conf)


def _parabolic(r: np.ndarray, k: int) -> float:
    a, b, c = r[k - 1], r[k], r[k + 1]
    curv = a - 2 * b + c
    if not curv < 0:
        return 0.0
    return float(np.clip(0.5 * (a - c) / curv, -0.5, 0.5))


def _refine_by_repetition(r: np.ndarray, period: float, threshold: float, n: int) -> float:
    """Locate the m-th repetition of the period lobe in ``r`` and divide its lag by m.

    ``r`` is the unbiased, normalized autocorrelation magnitude. The lag
    error of one lobe does not grow with m, so the period error shrinks as
    1/m. Falls back to ``period`` when that lobe is too weak.
    """
    max_lag = r.size - 1
    # the lobe is the only maximum within half a period of its centre
    half = int(period / 4)
    m = int((max_lag - half - 2) // period)
    if m < 2:
        return period
    centre = m * period
    lo, hi = int(math.floor(centre - half)), int(math.ceil(centre + half))
    if lo < 1 or hi >= max_lag:
        return period
    j = lo + int(np.argmax(r[lo : hi + 1]))
    if j in (lo, hi) or not r[j] > threshold * math.sqrt(n / (n - j)):
        return period
    return (j + _parabolic(r, j)) / m


def _harmonic_bins(nfft: int, period: float, n_harmonics: int) -> np.ndarray:
    k = np.arange(1, n_harmonics + 1)
    pos = np.rint(k * nfft / period).astype(int)
    pos = pos[(pos > 0) & (pos < nfft // 2)]
    return np.concatenate((pos, nfft - pos))


def _floor_and_peak(spec_mag: np.ndarray, period: float, n_harmonics: int):
    nfft = spec_mag.size
    bins = _harmonic_bins(nfft, period, n_harmonics)
    if bins.size == 0:
        raise ValueError("clock period too long for the analysed length")
    rest = spec_mag[1:]
    return float(spec_mag[bins].max()), float(np.median(rest))


def spike_snr(iq: np.ndarray, clock: ClockEstimate, n_harmonics: int = 5) -> float:
    """Strongest clock harmonic over the median spectral floor, in dB.

    Harmonics 1..n_harmonics on both sides of DC are examined; the DC bin is
    left out of the floor.
    """
    X = np.abs(np.fft.fft(np.asarray(iq)))
    peak, floor = _floor_and_peak(X, clock.period_samples, n_harmonics)
    if floor <= 0:
        return float("inf")
    return 20 * math.log10(peak / floor)


def offset_spike_snr(
    ref: np.ndarray,
    switched: np.ndarray,
    clock: ClockEstimate,
    tau_samples: int,
    n_harmonics: int = 5,
    segment_len: Optional[int] = None,
) -> float:
    """Spike SNR of the lag-``tau`` cross spectrum between the two ports, in dB.

    ``ref`` and ``switched`` are co-timed dwell segments, 1-D or one row per
    segment (for example the same antenna across packets). Each row is cut
    into windows of ``segment_len`` samples (default one clock period) and
    fft(switched[t..t+L]) * conj(fft(ref[t-tau..t-tau+L])) is averaged over
    all windows. At tau = 0 the correlated part of the receiver noise leaves
    a flat floor that averaging cannot remove; at a whole clock period the
    two windows no longer share samples, so that floor averages toward zero
    while the clock lines add up. Windows longer than tau would overlap and
    let the lag-0 noise correlation back in. The cross spectrum is a power
    quantity, hence 10*log10.
    """
    ref = np.atleast_2d(np.asarray(ref))
    switched = np.atleast_2d(np.asarray(switched))
    if ref.shape != switched.shape or ref.ndim != 2:
        raise ValueError("ref and switched must be co-timed segments of equal shape")
    tau = int(tau_samples)
    if tau < 0:
        raise ValueError("tau_samples must be >= 0")
    L = int(segment_len) if segment_len else max(int(round(clock.period_samples)), 8)
    n_seg = (ref.shape[1] - tau) // L
    if n_seg < 1:
        raise ValueError("segment too short for the requested tau and segment length")
    s = switched[:, tau : tau + n_seg * L].reshape(-1, L)
    r = ref[:, : n_seg * L].reshape(-1, L)
    C = np.mean(np.fft.fft(s, axis=1) * np.fft.fft(r, axis=1).conj(), axis=0)
    peak, floor = _floor_and_peak(np.abs(C), clock.period_samples, n_harmonics)
    if floor <= 0:
        return float("inf")
    return 10 * math.log10(peak / floor)
