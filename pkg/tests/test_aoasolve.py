import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emaloc import aoasolve as aoa
from emaloc.channel import RelativeChannel
from emaloc.emamodel import steering_vector

N = 9
DL = 0.2


def on_grid_channel(D, bins, weights, n_total=N):
    g = aoa.psi_grid(D)
    w = np.asarray(weights, dtype=complex)
    h = steering_vector(n_total, g[list(bins)]) @ w / w.sum()
    return RelativeChannel(h)


def two_bin_oracle(P, W, D, dl):
    """Exhaustive constrained least squares over every pair of in-support bins."""
    g = aoa.psi_grid(D)
    S = np.flatnonzero(np.abs(g) <= dl + 1e-12)
    best = (np.inf, None, None)
    for i, j in itertools.combinations(S, 2):
        # a_i + a_j = 1  ->  P - W_j = a_i (W_i - W_j)
        u = W[:, i] - W[:, j]
        v = P - W[:, j]
        ai = np.vdot(u, v) / np.vdot(u, u)
        r = np.linalg.norm(v - ai * u) ** 2
        if r < best[0]:
            best = (r, (i, j), np.array([ai, 1 - ai]))
    return best


def test_window_matrix_structure():
    W = aoa.build_window_matrix(N, 72)
    assert np.allclose(np.diag(W.matrix), 1)
    col0 = W.matrix[:, 0]
    for j in range(1, 72):
        assert np.allclose(W.matrix[:, j], np.roll(col0, j))
    assert np.argmax(np.abs(col0)) == 0


def test_window_matrix_nulls():
    # the kernel vanishes at offsets k/N
    for k in range(1, N):
        assert abs(aoa.dirichlet(k / N, N)) < 1e-12
    # first null of column 0 at one grid step of 1/N: D = 72 puts bin 8 at 1/9
    W = aoa.build_window_matrix(N, 72).matrix
    g = aoa.psi_grid(72)
    c = np.flatnonzero(g == 0)[0]
    assert abs(W[c + 8, c]) < 1e-12
    assert np.all(np.abs(W[c + 1 : c + 8, c]) > 1e-3)


def test_window_matrix_too_small():
    with pytest.raises(aoa.GridError):
        aoa.build_window_matrix(N, 4 * N - 1)


def test_ifft_profile_matches_columns():
    D = 64
    W = aoa.build_window_matrix(N, D).matrix
    c = D // 2
    assert np.allclose(aoa.ifft_profile(RelativeChannel(np.ones(N)), D), W[:, c], atol=1e-12)
    k = c + 5
    assert np.allclose(aoa.ifft_profile(on_grid_channel(D, [k], [1]), D), W[:, k], atol=1e-12)
    P = aoa.ifft_profile(on_grid_channel(D, [c - 3, c + 7], [2 / 3, 1 / 3]), D)
    assert np.allclose(P, (2 / 3) * W[:, c - 3] + (1 / 3) * W[:, c + 7], atol=1e-12)


def test_single_on_grid_path_indicator():
    D = 128
    W = aoa.build_window_matrix(N, D)
    k = D // 2 + 9
    prof = aoa.solve_sparse(aoa.ifft_profile(on_grid_channel(D, [k], [1]), D), W, 1.0, DL)
    a = prof.coeffs
    assert abs(a[k] - 1) < 1e-4
    assert np.all(np.abs(np.delete(a, k)) < 1e-4)
    assert prof.converged


@pytest.mark.parametrize("seed", range(5))
def test_two_path_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    D = 64
    W = aoa.build_window_matrix(N, D)
    S = np.flatnonzero(aoa.support_mask(aoa.psi_grid(D), DL))
    k1, k2 = sorted(rng.choice(S, 2, replace=False))
    P = aoa.ifft_profile(on_grid_channel(D, [k1, k2], [2 / 3, 1 / 3]), D)
    a = aoa.solve_sparse(P, W, 1.0, DL).coeffs
    r, pair, w = two_bin_oracle(P, W.matrix, D, DL)
    assert set(pair) == {k1, k2}
    # same relative cut that extract_angles applies, without its adjacent-bin merge
    support = np.flatnonzero(np.abs(a) >= 0.05 * np.abs(a).max())
    assert sorted(support) == sorted(pair)
    for k, wt in zip(pair, w):
        assert abs(a[k] - wt) <= 0.05 * abs(wt)


def test_support_constraint_count():
    D = 256
    g = aoa.psi_grid(D)
    n_in = aoa.support_mask(g, 0.1).sum()
    # floor(2 * 0.1 * 256) + 1 = 52 is the upper bound; the grid itself holds 51 such bins
    assert n_in <= math.floor(2 * 0.1 * D) + 1
    assert n_in == 2 * math.floor(0.1 * D) + 1
    rng = np.random.default_rng(1)
    h = RelativeChannel(np.exp(1j * rng.uniform(0, 6, N)))
    prof = aoa.solve_sparse(aoa.ifft_profile(h, D), aoa.build_window_matrix(N, D), 1.0, 0.1)
    assert np.all(prof.coeffs[~aoa.support_mask(g, 0.1)] == 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 3.0))
def test_feasibility_any_input(seed, beta):
    rng = np.random.default_rng(seed)
    D = 64
    h = RelativeChannel(rng.standard_normal(N) + 1j * rng.standard_normal(N))
    prof = aoa.solve_sparse(aoa.ifft_profile(h, D), aoa.build_window_matrix(N, D), beta, DL,
                            aoa.SolverOptions(max_iters=3000))
    assert abs(prof.coeffs.sum() - 1) <= 1e-6
    assert np.abs(prof.coeffs[~aoa.support_mask(prof.grid, DL)]).max(initial=0) <= 1e-6


def test_objective_non_increasing():
    rng = np.random.default_rng(2)
    D = 128
    h = RelativeChannel(rng.standard_normal(N) + 1j * rng.standard_normal(N))
    prof = aoa.solve_sparse(aoa.ifft_profile(h, D), aoa.build_window_matrix(N, D), 0.5, DL)
    log = np.array(prof.objective_log)
    assert log.size > 2
    assert np.all(np.diff(log) <= 1e-12 * np.abs(log[:-1]))


def _objective(P, W, a, beta):
    return np.linalg.norm(P - W @ a) ** 2 + beta * np.abs(a).sum()


@pytest.mark.parametrize("seed,beta", [(0, 0.3), (1, 1.0), (2, 2.0)])
def test_matches_convex_solver(seed, beta):
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(seed)
    D = 36
    W = aoa.build_window_matrix(N, D).matrix
    h = on_grid_channel(D, [16, 21], [1, 0.5 * np.exp(1j * rng.uniform(0, 6))]).values.copy()
    h[1:] += 0.2 * (rng.standard_normal(N - 1) + 1j * rng.standard_normal(N - 1))
    P = aoa.ifft_profile(RelativeChannel(h), D)
    mask = aoa.support_mask(aoa.psi_grid(D), DL)
    a = cp.Variable(D, complex=True)
    prob = cp.Problem(cp.Minimize(cp.sum_squares(P - W @ a) + beta * cp.norm1(a)),
                      [cp.sum(a) == 1, a[~mask] == 0])
    prob.solve(solver=cp.CLARABEL)
    prof = aoa.solve_sparse(P, W, beta, DL, aoa.SolverOptions(tol=1e-12))
    ours = _objective(P, W, prof.coeffs, beta)
    ref = _objective(P, W, a.value, beta)
    assert ours <= ref * (1 + 1e-5) + 1e-9
    assert np.abs(prof.coeffs - a.value).max() < 1e-3


def test_unsquared_residual_variant():
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(4)
    D = 36
    W = aoa.build_window_matrix(N, D).matrix
    h = on_grid_channel(D, [15, 20], [1, 0.4]).values.copy()
    h[1:] += 0.1 * (rng.standard_normal(N - 1) + 1j * rng.standard_normal(N - 1))
    P = aoa.ifft_profile(RelativeChannel(h), D)
    mask = aoa.support_mask(aoa.psi_grid(D), DL)
    a = cp.Variable(D, complex=True)
    cp.Problem(cp.Minimize(cp.norm(P - W @ a, 2) + 0.3 * cp.norm1(a)), [cp.sum(a) == 1, a[~mask] == 0]).solve(
        solver=cp.CLARABEL)
    prof = aoa.solve_sparse(P, W, 0.3, DL, aoa.SolverOptions(squared=False, tol=1e-12))

    def f(x):
        return np.linalg.norm(P - W @ x) + 0.3 * np.abs(x).sum()

    assert f(prof.coeffs) <= f(a.value) * (1 + 1e-4)


def test_joint_single_column_matches_sparse():
    rng = np.random.default_rng(5)
    D = 64
    W = aoa.build_window_matrix(N, D)
    h = RelativeChannel(rng.standard_normal(N) + 1j * rng.standard_normal(N))
    P = aoa.ifft_profile(h, D)
    opts = aoa.SolverOptions(tol=1e-13)
    a = aoa.solve_sparse(P, W, 0.7, DL, opts).coeffs
    A = aoa.solve_joint([(P, W)], 0.7, DL, opts).A[:, 0]
    assert np.abs(a - A).max() < 1e-5


def test_joint_identical_columns():
    D = 64
    W = aoa.build_window_matrix(N, D)
    P = aoa.ifft_profile(on_grid_channel(D, [30, 38], [1, 0.5j]), D)
    opts = aoa.SolverOptions(tol=1e-13)
    L = 5
    # the group norm of L equal entries is sqrt(L) times one of them
    single = aoa.solve_sparse(P, W, 1.0, DL, opts).coeffs
    A = aoa.solve_joint([(P, W)] * L, math.sqrt(L), DL, opts).A
    for col in A.T:
        assert np.abs(col - single).max() < 1e-5


def test_joint_zero_weight_decouples():
    # with no regularizer each column is an independent constrained least squares; a
    # random 9-vector is always reachable, so every column must fit to (near) zero
    rng = np.random.default_rng(6)
    D = 64
    W = aoa.build_window_matrix(N, D)
    Ps = [aoa.ifft_profile(RelativeChannel(rng.standard_normal(N) + 1j * rng.standard_normal(N)), D) for _ in range(3)]
    opts = aoa.SolverOptions(tol=1e-14, max_iters=200_000, record_objective=False)
    joint = aoa.solve_joint([(P, W) for P in Ps], 0.0, DL, opts)
    assert joint.converged
    for P, col in zip(Ps, joint.A.T):
        assert np.linalg.norm(P - W.matrix @ col) < 1e-3 * np.linalg.norm(P)


def test_joint_row_support_shared():
    rng = np.random.default_rng(7)
    D = 64
    W = aoa.build_window_matrix(N, D)
    meas = []
    for _ in range(4):
        h = on_grid_channel(D, [28, 37], [1, 0.6 * np.exp(1j * rng.uniform(0, 6))]).values.copy()
        h[1:] += 0.05 * (rng.standard_normal(N - 1) + 1j * rng.standard_normal(N - 1))
        meas.append((aoa.ifft_profile(RelativeChannel(h), D), W))
    A = aoa.solve_joint(meas, 2.0, DL).A
    rows = np.linalg.norm(A, axis=1)
    live = rows > 1e-6
    assert np.all(np.abs(A[~live]) < 1e-6)
    assert set(np.flatnonzero(rows > 0.1 * rows.max())) <= {27, 28, 29, 36, 37, 38}


def test_extract_angles_examples():
    g = np.array([-0.1, -0.05, 0.0, 0.05, 0.1])
    prof = aoa.AoAProfile(g, np.array([0, 0, 0, 1.0, 0]), 0.1, 0.0, 0)
    est = aoa.extract_angles(prof)
    assert est.angles_deg[0] == pytest.approx(30.0)
    prof = aoa.AoAProfile(g, np.array([0, 0, 1.0, 0, 0]), 0.1, 0.0, 0)
    assert aoa.extract_angles(prof).angles_deg[0] == pytest.approx(0.0)
    with pytest.raises(aoa.NoPathFound):
        aoa.extract_angles(aoa.AoAProfile(g, np.zeros(5), 0.1, 0.0, 0))


def test_extract_never_emits_outside_support():
    g = aoa.psi_grid(64)
    a = np.zeros(64, complex)
    a[2] = 5.0  # psi far outside 0.2
    a[32] = 1.0
    est = aoa.extract_angles(aoa.AoAProfile(g, a, DL, 0, 0), 0.05)
    assert np.all(np.abs(est.psi) <= DL)


def test_extract_merges_adjacent_bins():
    g = aoa.psi_grid(64)
    a = np.zeros(64, complex)
    a[40], a[41] = 0.75, 0.25
    est = aoa.extract_angles(aoa.AoAProfile(g, a, DL, 0, 0))
    assert len(est) == 1
    assert est.psi[0] == pytest.approx(0.75 * g[40] + 0.25 * g[41])


@given(st.floats(1e-3, 1e3))
def test_extract_scale_invariant(c):
    g = aoa.psi_grid(64)
    a = np.zeros(64, complex)
    a[[25, 33, 40]] = [0.2, 1.0, -0.4j]
    e1 = aoa.extract_angles(aoa.AoAProfile(g, a, DL, 0, 0))
    e2 = aoa.extract_angles(aoa.AoAProfile(g, c * a, DL, 0, 0))
    assert np.allclose(e1.angles_rad, e2.angles_rad)


def path_channel(thetas_deg, gains, n_total=N):
    psi = DL * np.sin(np.radians(thetas_deg))
    w = np.asarray(gains, dtype=complex)
    return RelativeChannel(steering_vector(n_total, psi) @ w / w.sum())


@pytest.mark.parametrize("theta", [-40.0, 0.0, 20.0])
def test_music_single_path(theta):
    est = aoa.music_aoa(path_channel([theta], [1]), d_over_lambda=DL)
    assert est.angles_deg[0] == pytest.approx(theta, abs=0.25)


def test_music_covariance_ignores_common_phase():
    h = path_channel([12.0, -30.0], [1, 0.5j]).values
    spec1, _ = aoa._music_scan(np.outer(h, h.conj()), 1, aoa.default_scan_grid(), DL)
    g = h * np.exp(0.9j)
    spec2, _ = aoa._music_scan(np.outer(g, g.conj()), 1, aoa.default_scan_grid(), DL)
    assert np.allclose(spec1, spec2, rtol=1e-9)


def test_music_fails_to_resolve_two_paths():
    h = path_channel([0.0, 20.0], [1, 0.8j])
    est = aoa.music_aoa(h, d_over_lambda=DL)
    errs = [min(abs(a - t) for a in est.angles_deg) for t in (0.0, 20.0)]
    assert len(est) < 2 or max(errs) > 10


def test_spotfi_smoothing_shape_and_rank():
    h = path_channel([-10.0, 25.0], [1, 0.7])
    R = aoa.smoothed_covariance(h.values, 5)
    assert R.shape == (5, 5)
    segs = np.lib.stride_tricks.sliding_window_view(h.values, 5)
    assert segs.shape[0] == 5
    brute = sum(np.outer(s, s.conj()) for s in segs) / 5
    assert np.allclose(R, brute)
    ev = np.linalg.eigvalsh(R)
    assert np.sum(ev > 1e-9 * ev.max()) >= 2
    with pytest.raises(ValueError):
        aoa.smoothed_covariance(h.values, 10)


def test_spotfi_single_path():
    est = aoa.spotfi_aoa(path_channel([-33.0], [1]), d_over_lambda=DL)
    assert est.angles_deg[0] == pytest.approx(-33.0, abs=0.25)


def test_spotfi_resolves_wide_pair():
    D = 256
    g = aoa.psi_grid(D)
    # on-grid pair about 30 deg apart
    k1, k2 = D // 2 - 10, D // 2 + 16
    t = np.degrees(np.arcsin(g[[k1, k2]] / DL))
    h = RelativeChannel(steering_vector(N, g[[k1, k2]]) @ np.array([1, 0.8]) / 1.8)
    est = aoa.spotfi_aoa(h, d_over_lambda=DL, n_sources=2)
    got = sorted(est.angles_deg)
    assert abs(got[0] - min(t)) < 3 and abs(got[1] - max(t)) < 3


def test_nonconvergence_flagged():
    rng = np.random.default_rng(8)
    D = 128
    h = RelativeChannel(rng.standard_normal(N) + 1j * rng.standard_normal(N))
    prof = aoa.solve_sparse(aoa.ifft_profile(h, D), aoa.build_window_matrix(N, D), 0.01, DL,
                            aoa.SolverOptions(max_iters=5))
    assert prof.solver_iters == 5
    assert not prof.converged
    assert abs(prof.coeffs.sum() - 1) < 1e-9
