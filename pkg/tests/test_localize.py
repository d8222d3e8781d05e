import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emaloc.aoasolve import AoAEstimate
from emaloc.emamodel import PathSet
from emaloc.localize import (
    Bearing,
    IllConditionedError,
    LocalizationResult,
    aoa_error,
    localization_error,
    triangulate,
)

VANTAGES = [(0.0, 0.0), (5.0, 0.0), (0.0, 5.0), (5.0, 5.0), (2.5, 0.0)]


def bearings_to(point, origins, noise_rad=None, rng=None):
    out = []
    for o in origins:
        ang = math.atan2(point[1] - o[1], point[0] - o[0])
        if noise_rad is not None:
            ang += rng.normal(0, noise_rad)
        out.append(Bearing(o, ang))
    return out


def est_deg(*angles):
    a = np.radians(angles)
    return AoAEstimate(a, np.linspace(1, 0.5, len(a)), "test", 0.2 * np.sin(a))


def test_two_bearing_intersection():
    r = triangulate([Bearing((0, 0), math.radians(45)), Bearing((5, 0), math.radians(135))])
    assert r.position_m == pytest.approx((2.5, 2.5), abs=1e-12)
    assert r.residual_m == pytest.approx(0, abs=1e-12)
    assert r.n_bearings == 2


def test_three_consistent_bearings():
    r = triangulate(bearings_to((1, 2), [(0, 0), (4, 0), (-2, 5)]))
    assert r.position_m == pytest.approx((1, 2), abs=1e-12)
    assert r.residual_m < 1e-12


def test_parallel_bearings_rejected():
    with pytest.raises(IllConditionedError) as info:
        triangulate([Bearing((0, 0), math.pi / 2), Bearing((5, 0), math.pi / 2)])
    assert info.value.condition < 1e-6


def test_single_bearing_rejected():
    with pytest.raises(ValueError):
        triangulate([Bearing((0, 0), 0.3)])


def test_bearing_validation():
    with pytest.raises(ValueError):
        Bearing((0, math.nan), 0.1)
    with pytest.raises(ValueError):
        Bearing((0, 0), 0.1, confidence=-1)


def test_weights_pull_toward_trusted_lines():
    # three lines pairwise intersecting at different points
    b = [Bearing((0, 0), 0.0), Bearing((0, 1), 0.0), Bearing((3, -5), math.pi / 2)]
    even = triangulate(b)
    assert even.position_m[1] == pytest.approx(0.5)
    heavy = triangulate([Bearing((0, 0), 0.0, 9.0), *b[1:]])
    assert heavy.position_m[1] == pytest.approx(0.1)
    assert heavy.position_m[0] == pytest.approx(3.0)


def test_residual_is_rms_distance():
    b = [Bearing((0, 0), 0.0), Bearing((0, 1), 0.0), Bearing((3, -5), math.pi / 2)]
    assert triangulate(b).residual_m == pytest.approx(math.sqrt((0.25 + 0.25 + 0) / 3))


def test_aoa_error_examples():
    truth = PathSet.from_arrays([math.radians(30)], [1])
    assert aoa_error(est_deg(30.0), truth) == pytest.approx(0, abs=1e-12)
    assert aoa_error(est_deg(25.0), truth) == pytest.approx(5)
    multi = PathSet.from_arrays([0.0, math.radians(40)], [1, 0.3])
    assert aoa_error(est_deg(2.0, 40.0), multi) == pytest.approx(2)
    with pytest.raises(ValueError):
        aoa_error(AoAEstimate(np.zeros(0), np.zeros(0), "test"), truth)


def test_localization_error_examples():
    r = LocalizationResult((2.5, 2.5), 0.0, 2, 1.0)
    assert localization_error(r, (2.5, 2.5)) == 0
    assert localization_error(r, (2.5, 2.7)) == pytest.approx(0.2)


coords = st.floats(-20, 20)


@settings(max_examples=60, deadline=None)
@given(coords, coords, st.floats(-math.pi, math.pi), coords, coords, st.integers(0, 2**31))
def test_rigid_equivariance(px, py, rot, tx, ty, seed):
    rng = np.random.default_rng(seed)
    origins = [tuple(rng.uniform(-10, 10, 2)) for _ in range(4)]
    if min(math.hypot(px - o[0], py - o[1]) for o in origins) < 0.5:
        return
    b = [Bearing(x.origin_m, x.global_angle_rad + rng.normal(0, 0.05), rng.uniform(0.2, 2))
         for x in bearings_to((px, py), origins)]
    try:
        base = triangulate(b)
    except IllConditionedError:
        return
    c, s = math.cos(rot), math.sin(rot)

    def move(p):
        return (c * p[0] - s * p[1] + tx, s * p[0] + c * p[1] + ty)

    moved = triangulate([Bearing(move(x.origin_m), x.global_angle_rad + rot, x.confidence) for x in b])
    assert moved.position_m == pytest.approx(move(base.position_m), abs=1e-9)
    assert moved.residual_m == pytest.approx(base.residual_m, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.3, 4.7), st.floats(0.3, 4.7))
def test_noiseless_exactness(x, y):
    r = triangulate(bearings_to((x, y), VANTAGES))
    assert localization_error(r, (x, y)) <= 1e-6


def test_small_noise_linearity():
    rng = np.random.default_rng(11)
    target = (2.0, 3.0)

    def median_err(sigma_deg):
        errs = [
            localization_error(triangulate(bearings_to(target, VANTAGES, math.radians(sigma_deg), rng)), target)
            for _ in range(500)
        ]
        return float(np.median(errs))

    for sigma in (0.5, 1.5):
        ratio = median_err(2 * sigma) / median_err(sigma)
        assert 1.6 <= ratio <= 2.4
