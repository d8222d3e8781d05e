"""Shared builders for the chanest and acceptance tests."""

import math

import numpy as np

from emaloc.capture import SwitchSchedule, packetize, simulate_capture
from emaloc.emamodel import ArrayGeometry, EmanationSource, InterferenceSource, NoiseModel, PathSet, steering_phase

FS = 3.072e6
PERIOD = 64


def unit_power_source(period=PERIOD, snr_db=0.0, noise_power=1.0, **kw):
    """50% square wave whose mean power is snr_db above noise_power."""
    amp = math.sqrt(2 * noise_power * 10 ** (snr_db / 10))
    return EmanationSource(period / FS, amplitude=amp, **kw)


def packet(paths=None, snr_db=0.0, rho=0.8, seed=0, dwell=12000, guard=0, period=PERIOD,
           interferers=(), noise_power=1.0, n_sweeps=1, geom=None, amplitude=None):
    geom = geom or ArrayGeometry()
    paths = paths or PathSet.from_arrays([0.0], [1.0])
    src = unit_power_source(period, snr_db, max(noise_power, 1e-300))
    if amplitude is not None:
        src = EmanationSource(period / FS, amplitude=amplitude)
    cap = simulate_capture(src, geom, paths, NoiseModel(noise_power, rho, seed),
                           SwitchSchedule(geom.n_switched, dwell, guard), FS, n_sweeps, list(interferers))
    pk = packetize(cap)
    return pk[0] if n_sweeps == 1 else pk


def calibrated_interferer(geom=None, tau=PERIOD, aoa_deg=-35.0, power_ratio=1.0):
    """Equal-power emitter with a 100-sample clock, 35 deg off the target.

    Its carrier is a quarter turn per tau away from the target's, which makes
    its lag-tau correlation imaginary so offset and inverse estimates split.
    """
    geom = geom or ArrayGeometry()
    alpha = tuple(steering_phase(geom, math.radians(aoa_deg), i) for i in range(1, geom.n_total))
    return InterferenceSource(100 / FS, amplitude=math.sqrt(2 * power_ratio),
                              freq_offset_hz=0.25 * FS / tau, alpha=alpha)
