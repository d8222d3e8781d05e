"""Relative-channel container shared by the simulator and the estimators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ESTIMATOR_KINDS = ("true", "standard", "offset", "inverse")


@dataclass(frozen=True)
class RelativeChannel:
    """Per-antenna complex ratio to the reference element.

    ``values[0]`` is the reference element and is 1 by convention.
    """

    values: np.ndarray
    estimator_kind: str = "true"
    tau_samples: int = 0
    carrier_wavelength_m: float = float("nan")
    n_packets_averaged: int = 1

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex).copy()
        if values.ndim != 1 or values.size < 2:
            raise ValueError("relative channel needs a 1-D vector of at least 2 entries")
        if not np.all(np.isfinite(values)):
            raise ValueError("relative channel contains non-finite entries")
        if self.estimator_kind not in ESTIMATOR_KINDS:
            raise ValueError(f"unknown estimator kind {self.estimator_kind!r}")
        values[0] = 1.0
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_antennas(self) -> int:
        return self.values.size

    def provenance(self) -> tuple:
        return (self.estimator_kind, self.tau_samples, self.carrier_wavelength_m, self.values.size)

    def same_provenance(self, other: "RelativeChannel") -> bool:
        a, b = self.provenance(), other.provenance()
        wl_equal = (a[2] == b[2]) or (np.isnan(a[2]) and np.isnan(b[2]))
        return a[0] == b[0] and a[1] == b[1] and a[3] == b[3] and wl_equal
