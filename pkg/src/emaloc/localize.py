"""Bearing-only triangulation and the two error metrics used in evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .aoasolve import AoAEstimate
from .emamodel import PathSet

CONDITION_FLOOR = 1e-6


class IllConditionedError(ValueError):
    """Bearings are (nearly) parallel; ``condition`` is the smallest singular value."""

    def __init__(self, msg: str, condition: float):
        super().__init__(msg)
        self.condition = condition


@dataclass(frozen=True)
class Bearing:
    origin_m: tuple
    global_angle_rad: float
    confidence: float = 1.0

    def __post_init__(self):
        origin = tuple(float(v) for v in self.origin_m)
        if len(origin) != 2 or not all(math.isfinite(v) for v in origin):
            raise ValueError("origin must be two finite coordinates")
        if not math.isfinite(self.global_angle_rad):
            raise ValueError("bearing angle must be finite")
        if not self.confidence >= 0:
            raise ValueError("confidence must be >= 0")
        object.__setattr__(self, "origin_m", origin)

    @property
    def normal(self) -> np.ndarray:
        return np.array([-math.sin(self.global_angle_rad), math.cos(self.global_angle_rad)])


@dataclass(frozen=True)
class LocalizationResult:
    position_m: tuple
    residual_m: float
    n_bearings: int
    condition: float


def triangulate(bearings: Sequence[Bearing]) -> LocalizationResult:
    """Point minimizing sum_i w_i * (distance to line i)^2.

    Each bearing defines a line through its origin; the perpendicular
    distance of p is n_i . (p - o_i) with n_i the unit normal.
    """
    bearings = list(bearings)
    if len(bearings) < 2:
        raise ValueError(f"need at least 2 bearings, got {len(bearings)}")
    w = np.array([b.confidence for b in bearings], dtype=float)
    if not np.any(w > 0):
        raise ValueError("all bearing confidences are zero")
    Nrm = np.array([b.normal for b in bearings])
    O = np.array([b.origin_m for b in bearings])
    c = np.einsum("ij,ij->i", Nrm, O)
    sw = np.sqrt(w)
    M = sw[:, None] * Nrm
    cond = float(np.linalg.svd(M, compute_uv=False)[-1])
    if cond < CONDITION_FLOOR:
        raise IllConditionedError(
            f"bearings are nearly parallel (smallest singular value {cond:.3g})", cond
        )
    p = np.linalg.solve(M.T @ M, M.T @ (sw * c))
    d = Nrm @ p - c
    resid = math.sqrt(float(np.sum(w * d**2) / np.sum(w)))
    return LocalizationResult((float(p[0]), float(p[1])), resid, len(bearings), cond)


def aoa_error(est: AoAEstimate, truth: PathSet) -> float:
    """Degrees between the strongest estimated path and the strongest true path."""
    if len(est.angles_rad) == 0:
        raise ValueError("empty AoA estimate")
    return abs(math.degrees(est.angles_rad[0] - truth.dominant().aoa_rad))


def localization_error(result: LocalizationResult, truth_position_m) -> float:
    return math.hypot(
        result.position_m[0] - truth_position_m[0], result.position_m[1] - truth_position_m[1]
    )
