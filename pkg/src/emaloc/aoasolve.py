"""Angle-of-arrival estimation from relative channels.

The sparse estimator works on the zero-padded inverse transform of the
relative channel. A path at normalized spatial frequency psi = d sin(theta)/lambda
shows up in that profile as a Dirichlet kernel centred on psi, so the profile
is ``P = W a`` with ``W`` a circulant dictionary of shifted kernels and ``a`` the
sparse vector of normalized path gains. We recover ``a`` from

    min  ||P - W a||^2 + beta * sum_j |a_j|
    s.t. sum(a) = 1,   a_j = 0 where |psi_j| > d/lambda

by proximal gradient with an exact proximal step. The group-sparse variant
stacks several measurements as columns and swaps the l1 penalty for a sum of
row norms.

MUSIC on the raw relative channel and SpotFi-style forward smoothing are
provided as baselines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.signal import find_peaks

from .channel import RelativeChannel
from .emamodel import steering_vector


class GridError(ValueError):
    pass


class NoPathFound(RuntimeError):
    pass


@dataclass(frozen=True)
class WindowMatrix:
    """Circulant dictionary of finite-aperture responses on the psi grid."""

    matrix: np.ndarray
    n_antennas_incl_ref: int

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def grid(self) -> np.ndarray:
        return psi_grid(self.size)


@dataclass
class AoAProfile:
    grid: np.ndarray
    coeffs: np.ndarray
    d_over_lambda: float
    residual: float
    solver_iters: int
    converged: bool = True
    objective_log: list = field(default_factory=list, repr=False)


@dataclass
class JointProfile:
    grid: np.ndarray
    A: np.ndarray
    d_over_lambda: np.ndarray
    group_weight: float
    residual: float
    solver_iters: int
    tags: list = field(default_factory=list)
    converged: bool = True
    objective_log: list = field(default_factory=list, repr=False)


@dataclass
class AoAEstimate:
    """Paths sorted by descending weight magnitude.

    ``weights`` is 1-D for single-measurement methods and (n_paths, L) for
    joint profiles; ``psi`` keeps the spatial frequency of each path.
    """

    angles_rad: np.ndarray
    weights: np.ndarray
    method: str
    psi: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def magnitudes(self) -> np.ndarray:
        w = np.asarray(self.weights)
        return np.abs(w) if w.ndim == 1 else np.linalg.norm(w, axis=1)

    @property
    def angles_deg(self) -> np.ndarray:
        return np.degrees(self.angles_rad)

    def __len__(self):
        return len(self.angles_rad)


@dataclass
class SolverOptions:
    tol: float = 1e-8
    max_iters: int = 20000
    squared: bool = True
    accelerate: bool = True
    record_objective: bool = True


def psi_grid(D: int) -> np.ndarray:
    """D points uniformly spanning [-1/2, 1/2)."""
    return (np.arange(D) - D // 2) / D


def dirichlet(x, n_total: int) -> np.ndarray:
    """(1/N) sum_{n<N} exp(j 2 pi n x); equals 1 at x = 0 and vanishes at x = k/N."""
    n = np.arange(n_total)
    x = np.asarray(x, dtype=float)
    return np.exp(2j * np.pi * np.multiply.outer(x, n)).mean(axis=-1)


def build_window_matrix(n_antennas_incl_ref: int, D: int) -> WindowMatrix:
    """W[i, j] = kernel(psi_i - psi_j); column j is the response of an on-grid path at psi_j."""
    if D < 4 * n_antennas_incl_ref:
        raise GridError(f"D={D} too small for {n_antennas_incl_ref} antennas (need >= 4N)")
    grid = psi_grid(D)
    kernel = dirichlet(grid - grid[0], n_antennas_incl_ref)
    # circulant: column j is column 0 rolled by j
    idx = (np.arange(D)[:, None] - np.arange(D)[None, :]) % D
    matrix = kernel[idx]
    return WindowMatrix(matrix, n_antennas_incl_ref)


def angle_dictionary(n_antennas_incl_ref: int, D: int, centers_psi) -> np.ndarray:
    """Window responses on the D-point grid for arbitrary (possibly off-grid) centres."""
    grid = psi_grid(D)
    return dirichlet(grid[:, None] - np.asarray(centers_psi)[None, :], n_antennas_incl_ref)


def ifft_profile(h: Union[RelativeChannel, np.ndarray], D: int) -> np.ndarray:
    """Zero-padded D-point inverse transform of h, fftshifted onto the psi grid.

    Scaled so that a single on-grid path gives a peak of exactly 1.
    """
    values = h.values if isinstance(h, RelativeChannel) else np.asarray(h, dtype=complex)
    N = values.size
    if N > D:
        raise GridError("profile size smaller than the channel length")
    # h_n = sum_k a_k exp(-j 2 pi n psi_k); the inverse transform picks +j
    prof = np.fft.ifft(values, D) * (D / N)
    return np.fft.fftshift(prof)


def support_mask(grid: np.ndarray, d_over_lambda: float) -> np.ndarray:
    return np.abs(grid) <= d_over_lambda + 1e-12


# -- proximal machinery ------------------------------------------------------


def _row_norms(X: np.ndarray) -> np.ndarray:
    return np.sqrt((X.real**2 + X.imag**2).sum(axis=1))


def _group_soft(X: np.ndarray, kappa: float) -> np.ndarray:
    """Row-wise block soft threshold (reduces to the complex soft threshold for one column)."""
    r = _row_norms(X)
    scale = np.where(r > kappa, 1.0 - kappa / np.maximum(r, 1e-300), 0.0)
    return X * scale[:, None]


def _solve_multiplier_single(v, kappa, mu):
    """One-column, full-support case of :func:`_solve_multiplier` with a closed-form 2x2 Newton step."""
    gtol = 1e-12 * max(1.0, kappa * v.size)

    def evaluate(mu):
        x = v + mu
        r = np.abs(x)
        act = r > kappa
        xa, ra = x[act], r[act]
        shrink = 1.0 - kappa / ra
        y = xa * shrink
        excess = ra - kappa
        phi = 0.5 * float(excess @ excess) - mu.real
        g = complex(y.sum()) - 1.0
        return xa, ra, shrink, act, phi, g

    xa, ra, shrink, act, phi, g = evaluate(mu)
    for _ in range(60):
        if max(abs(g.real), abs(g.imag)) <= gtol:
            break
        if xa.size == 0:
            step = -g / max(v.size, 1)
            slope = -abs(g) ** 2 / max(v.size, 1)
        else:
            w = kappa / ra**3
            a = float(shrink.sum())
            hxx = a + float(w @ (xa.real**2))
            hyy = a + float(w @ (xa.imag**2))
            hxy = float(w @ (xa.real * xa.imag))
            det = hxx * hyy - hxy * hxy
            if det <= 1e-300:
                step = -g / max(v.size, 1)
            else:
                sx = -(hyy * g.real - hxy * g.imag) / det
                sy = -(hxx * g.imag - hxy * g.real) / det
                step = complex(sx, sy)
            slope = g.real * step.real + g.imag * step.imag
        gsq = abs(g) ** 2
        t = 1.0
        for _ in range(40):
            cand = evaluate(mu + t * step)
            if cand[4] <= phi + 1e-4 * t * slope or abs(cand[5]) ** 2 < 0.25 * gsq:
                break
            t *= 0.5
        else:
            break
        mu = mu + t * step
        xa, ra, shrink, act, phi, g = cand
    out = np.zeros_like(v)
    out[act] = xa * shrink
    return out, mu


def _solve_multiplier(V, masks, kappa, mu0):
    """Find complex mu (one per column) with column sums of group_soft(mask*(V + mu)) equal to 1.

    This is the exact proximal step of kappa * sum_j ||X_j||_2 restricted to the
    affine set {sum_j X_ij = 1, X_ij = 0 off-support}. ``mu`` minimises the
    convex potential sum_j 0.5 * max(0, ||x_j|| - kappa)^2 - Re(sum mu), solved
    by damped Newton in real coordinates.
    """
    L = V.shape[1]
    mu = mu0.copy()
    mf = masks.astype(float)
    n_rows = max(int(mf.sum(axis=0).max()), 1)
    gtol = 1e-12 * max(1.0, kappa * n_rows)

    def evaluate(mu):
        X = (V + mu) * mf
        r = _row_norms(X)
        excess = np.maximum(r - kappa, 0.0)
        phi = 0.5 * (excess @ excess) - mu.real.sum()
        scale = np.where(r > kappa, excess / np.maximum(r, 1e-300), 0.0)
        g = (X * scale[:, None]).sum(axis=0) - 1.0
        gr = np.concatenate([g.real, g.imag])
        return X, r, phi, gr

    X, r, phi, gr = evaluate(mu)
    for _ in range(60):
        if np.abs(gr).max() <= gtol:
            break
        active = r > kappa
        # real Hessian in coordinates [Re mu, Im mu]
        Xa = X[active]
        ra = r[active]
        Ma = mf[active]
        U = np.concatenate([Xa.real, Xa.imag], axis=1) / ra[:, None]
        M2 = np.concatenate([Ma, Ma], axis=1)
        H = np.diag((1.0 - kappa / ra) @ M2) + (U.T * (kappa / ra)) @ U
        H.flat[:: 2 * L + 1] += 1e-12 * n_rows
        try:
            step = -np.linalg.solve(H, gr)
        except np.linalg.LinAlgError:
            step = -gr / n_rows
        slope = float(gr @ step)
        if not np.isfinite(slope) or slope >= 0:
            step = -gr / n_rows
            slope = -float(gr @ gr) / n_rows
        d = step[:L] + 1j * step[L:]
        t = 1.0
        gsq = gr @ gr
        for _ in range(40):
            cand = mu + t * d
            Xc, rc, phic, grc = evaluate(cand)
            # roundoff stalls the Armijo test near the root; a smaller gradient is progress too
            if phic <= phi + 1e-4 * t * slope or grc @ grc < 0.25 * gsq:
                break
            t *= 0.5
        else:
            break
        mu, X, r, phi, gr = cand, Xc, rc, phic, grc
    return _group_soft(X, kappa), mu


class _Problem:
    """sum_i ||P_i - W_i x_i||^2 (or its square root) + weight * sum_j ||X_j||_2 on masked coordinates."""

    def __init__(self, Ps, Ws, masks, weight, squared):
        self.L = len(Ps)
        self.masks = masks
        self.weight = float(weight)
        self.squared = squared
        self.G = [W.conj().T @ W for W in Ws]
        self.q = [W.conj().T @ P for W, P in zip(Ws, Ps)]
        self.pp = [float(np.vdot(P, P).real) for P in Ps]
        self.lip = 2.0 * max(np.linalg.norm(W[:, m], 2) ** 2 for W, m in zip(Ws, masks.T))

    def fit(self, X):
        """Per-column squared residuals and gradients of the squared data term."""
        res = np.empty(self.L)
        grad = np.empty_like(X)
        for i in range(self.L):
            gx = self.G[i] @ X[:, i]
            res[i] = max(np.vdot(X[:, i], gx).real - 2 * np.vdot(self.q[i], X[:, i]).real + self.pp[i], 0.0)
            grad[:, i] = 2.0 * (gx - self.q[i])
        return res, grad

    def penalty(self, X):
        return self.weight * float(_row_norms(X).sum())

    def objective(self, X, data_scale=1.0):
        res, _ = self.fit(X)
        return data_scale * res.sum() + self.penalty(X), res


def _project(X, masks):
    """Zero off-support entries, then shift in-support entries uniformly so each column sums to 1."""
    X = X * masks
    count = masks.sum(axis=0)
    shift = (1.0 - X.sum(axis=0)) / np.maximum(count, 1)
    return X + masks * shift[None, :]


def _prox_gradient(prob: _Problem, X0, opts: SolverOptions, data_scale=1.0):
    """Monotone (restarted) accelerated proximal gradient on the squared-data objective."""
    step = 1.0 / (prob.lip * data_scale) if prob.lip > 0 else 1.0
    kappa = step * prob.weight
    X = _project(X0, prob.masks)
    mu = np.zeros(prob.L, dtype=complex)
    res, gX = prob.fit(X)
    F = data_scale * res.sum() + prob.penalty(X)
    log = [F] if opts.record_objective else []
    Y, gY = X, gX
    X_prev, g_prev = X, gX
    t = 1.0
    converged = False
    last_change = math.inf
    it = 0
    floor = 1e-14 * max(sum(prob.pp) * data_scale, 1.0)
    single = prob.L == 1 and bool(prob.masks.all())
    for it in range(1, opts.max_iters + 1):
        V = Y - (step * data_scale) * gY
        if single:
            z, m0 = _solve_multiplier_single(V[:, 0], kappa, complex(mu[0]))
            Z, mu = z[:, None], np.array([m0])
        else:
            Z, mu = _solve_multiplier(V, prob.masks, kappa, mu)
        resz, gZ = prob.fit(Z)
        Fz = data_scale * resz.sum() + prob.penalty(Z)
        if Fz <= F:
            change = F - Fz
            last_change = change
            X_prev, g_prev, X, gX = X, gX, Z, gZ
            F_old, F = F, Fz
            if opts.accelerate:
                t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
                c = (t - 1.0) / t_next
                # the data gradient is affine, so it extrapolates with the iterate
                Y = X + c * (X - X_prev)
                gY = gX + c * (gX - g_prev)
                t = t_next
            else:
                Y, gY = X, gX
            if opts.record_objective:
                log.append(F)
            if change <= opts.tol * max(abs(F_old), floor) or change <= floor:
                converged = True
                break
        else:
            # momentum overshoot: restart from the current iterate
            if Y is X or t == 1.0:
                converged = True
                break
            Y, gY = X, gX
            t = 1.0
            if opts.record_objective:
                log.append(F)
    if not converged:
        # out of iterations; only flag it when still moving well above tol
        converged = last_change <= 100 * opts.tol * max(abs(F), floor)
    return X, it, converged, log


def _solve(Ps, Ws, masks_full, weight, opts: SolverOptions, X0=None):
    # only bins inside some column's support can ever be nonzero
    D, L = masks_full.shape
    rows = np.flatnonzero(masks_full.any(axis=1))
    masks = masks_full[rows]
    prob = _Problem(Ps, [W[:, rows] for W in Ws], masks, weight, opts.squared)
    X0 = np.zeros((rows.size, L), dtype=complex) if X0 is None else X0[rows]
    if opts.squared:
        X, iters, conv, log = _prox_gradient(prob, X0, opts)
    else:
        # sqrt-residual form via its variational bound ||r|| = min_s (||r||^2/s + s)/2
        X, iters, conv = X0, 0, False
        log = []
        sigma = max(math.sqrt(sum(prob.pp)), 1e-6)
        for _ in range(50):
            X_new, k, conv, lg = _prox_gradient(prob, X, opts, data_scale=0.5 / sigma)
            iters += k
            log.extend(lg)
            res, _ = prob.fit(X_new)
            new_sigma = max(math.sqrt(res.sum()), 1e-9)
            done = abs(new_sigma - sigma) <= 1e-6 * max(sigma, 1e-9)
            X, sigma = X_new, new_sigma
            if done:
                break
    X = _project(X, masks)
    res, _ = prob.fit(X)
    out = np.zeros((D, L), dtype=complex)
    out[rows] = X
    return out, float(res.sum()), iters, conv, log


def solve_sparse(
    P: np.ndarray,
    W: Union[WindowMatrix, np.ndarray],
    beta: float = 1.0,
    d_over_lambda: float = 0.2,
    opts: Optional[SolverOptions] = None,
) -> AoAProfile:
    """Constrained l1 fit of the IFFT profile ``P`` by dictionary ``W``."""
    opts = opts or SolverOptions()
    Wm = W.matrix if isinstance(W, WindowMatrix) else np.asarray(W)
    D = Wm.shape[1]
    if P.shape[0] != Wm.shape[0]:
        raise GridError("profile and window matrix sizes differ")
    if not d_over_lambda < 0.5:
        raise GridError("d/lambda must be below 1/2")
    grid = psi_grid(D)
    mask = support_mask(grid, d_over_lambda)[:, None]
    X, res, iters, conv, log = _solve([np.asarray(P, dtype=complex)], [Wm], mask, beta, opts)
    return AoAProfile(grid, X[:, 0], d_over_lambda, res, iters, conv, log)


def solve_joint(
    measurements: Sequence[tuple],
    lambda_g: float = 1.0,
    d_over_lambda: Union[float, Sequence[float]] = 0.2,
    opts: Optional[SolverOptions] = None,
    tags: Optional[list] = None,
) -> JointProfile:
    """Group-sparse fit of L profiles sharing one row support.

    ``measurements`` is a sequence of ``(P_i, W_i)``; each column keeps its own
    sum-to-one and support constraints.
    """
    opts = opts or SolverOptions()
    if not measurements:
        raise ValueError("need at least one measurement")
    Ps, Ws = [], []
    for P, W in measurements:
        Wm = W.matrix if isinstance(W, WindowMatrix) else np.asarray(W)
        Ps.append(np.asarray(P, dtype=complex))
        Ws.append(Wm)
    D = Ws[0].shape[1]
    if any(W.shape[1] != D or P.shape[0] != W.shape[0] for P, W in zip(Ps, Ws)):
        raise GridError("all measurements must share the grid size")
    L = len(Ps)
    dl = np.broadcast_to(np.asarray(d_over_lambda, dtype=float), (L,)).copy()
    if np.any(dl >= 0.5):
        raise GridError("d/lambda must be below 1/2")
    grid = psi_grid(D)
    masks = np.stack([support_mask(grid, v) for v in dl], axis=1)
    X, res, iters, conv, log = _solve(Ps, Ws, masks, lambda_g, opts)
    return JointProfile(grid, X, dl, float(lambda_g), res, iters, list(tags or []), conv, log)


# -- peak extraction ---------------------------------------------------------


def _clusters(selected: np.ndarray):
    idx = np.flatnonzero(selected)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1) + 1
    return np.split(idx, breaks)


def extract_angles(
    profile: Union[AoAProfile, JointProfile], rel_threshold: float = 0.05
) -> AoAEstimate:
    """Turn a sparse profile into paths; adjacent above-threshold bins merge to their centroid."""
    if isinstance(profile, JointProfile):
        coeffs = profile.A
        mag = np.linalg.norm(coeffs, axis=1)
        dl = float(profile.d_over_lambda[0])
        method = "joint"
    else:
        coeffs = profile.coeffs[:, None]
        mag = np.abs(profile.coeffs)
        dl = profile.d_over_lambda
        method = "sparse"
    peak = mag.max() if mag.size else 0.0
    if not peak > 0:
        raise NoPathFound("profile is identically zero")
    selected = (mag > rel_threshold * peak) & support_mask(profile.grid, dl)
    groups = _clusters(selected)
    if not groups:
        raise NoPathFound("no bin above threshold")
    psis, weights = [], []
    for g in groups:
        m = mag[g]
        psis.append(float(np.sum(m * profile.grid[g]) / np.sum(m)))
        weights.append(coeffs[g].sum(axis=0))
    psis = np.array(psis)
    weights = np.array(weights)
    strength = np.abs(weights[:, 0]) if method == "sparse" else np.linalg.norm(weights, axis=1)
    order = np.lexsort((np.abs(psis), -strength))
    psis = psis[order]
    weights = weights[order]
    angles = np.arcsin(np.clip(psis / dl, -1.0, 1.0))
    if method == "sparse":
        weights = weights[:, 0]
    return AoAEstimate(angles, weights, method, psis)


# -- subspace baselines ------------------------------------------------------


def default_scan_grid(step_deg: float = 0.25) -> np.ndarray:
    lim = 90.0 - step_deg
    return np.radians(np.arange(-lim, lim + step_deg / 2, step_deg))


def _order_by_gap(eigvals: np.ndarray, max_sources: int) -> int:
    ev = np.sort(np.abs(eigvals))[::-1]
    floor = max(ev[0], 1e-300) * 1e-15
    ev = np.maximum(ev, floor)
    ratios = ev[:-1] / ev[1:]
    return int(np.argmax(ratios[:max_sources]) + 1)


def _music_scan(R, n_sources, scan_grid, d_over_lambda):
    M = R.shape[0]
    w, V = np.linalg.eigh(R)
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    if n_sources is None:
        n_sources = _order_by_gap(w, M - 1)
    En = V[:, n_sources:]
    A = steering_vector(M, d_over_lambda * np.sin(scan_grid))
    denom = np.sum(np.abs(En.conj().T @ A) ** 2, axis=0)
    spectrum = 1.0 / np.maximum(denom, 1e-300)
    return spectrum, n_sources


def _peaks_to_estimate(spectrum, scan_grid, n_sources, h, d_over_lambda, method):
    peaks, _ = find_peaks(np.concatenate(([-np.inf], spectrum, [-np.inf])))
    peaks = peaks - 1
    if peaks.size == 0:
        peaks = np.array([int(np.argmax(spectrum))])
    peaks = peaks[np.argsort(spectrum[peaks])[::-1]][:n_sources]
    angles = scan_grid[peaks]
    psi = d_over_lambda * np.sin(angles)
    A = steering_vector(h.size, psi)
    weights, *_ = np.linalg.lstsq(A, h, rcond=None)
    order = np.lexsort((np.abs(psi), -np.abs(weights)))
    return AoAEstimate(angles[order], weights[order], method, psi[order])


def music_aoa(
    h: RelativeChannel,
    n_sources: Optional[int] = None,
    scan_grid: Optional[np.ndarray] = None,
    d_over_lambda: Optional[float] = None,
    return_spectrum: bool = False,
):
    """MUSIC on the rank-one outer product of the full relative channel.

    With a single snapshot the signal subspace is always one-dimensional, so
    multipath collapses into one merged peak.
    """
    values = h.values
    if n_sources is not None and n_sources >= values.size:
        raise ValueError("n_sources must be smaller than the number of antennas")
    dl = _resolve_dl(h, d_over_lambda)
    scan = default_scan_grid() if scan_grid is None else np.asarray(scan_grid)
    R = np.outer(values, values.conj())
    spectrum, k = _music_scan(R, n_sources, scan, dl)
    est = _peaks_to_estimate(spectrum, scan, k, values, dl, "music")
    return (est, spectrum) if return_spectrum else est


def smoothed_covariance(values: np.ndarray, subarray_len: int) -> np.ndarray:
    N = values.size
    if subarray_len > N or subarray_len < 1:
        raise ValueError(f"subarray length {subarray_len} invalid for {N} channel values")
    segs = np.lib.stride_tricks.sliding_window_view(values, subarray_len)
    return segs.T @ segs.conj() / segs.shape[0]


def spotfi_aoa(
    h: RelativeChannel,
    subarray_len: int = 5,
    n_sources: Optional[int] = None,
    scan_grid: Optional[np.ndarray] = None,
    d_over_lambda: Optional[float] = None,
    return_spectrum: bool = False,
):
    """MUSIC on the forward spatially smoothed covariance of the relative channel."""
    values = h.values
    dl = _resolve_dl(h, d_over_lambda)
    R = smoothed_covariance(values, subarray_len)
    if n_sources is not None and n_sources >= subarray_len:
        raise ValueError("n_sources must be smaller than the subarray length")
    scan = default_scan_grid() if scan_grid is None else np.asarray(scan_grid)
    spectrum, k = _music_scan(R, n_sources, scan, dl)
    est = _peaks_to_estimate(spectrum, scan, k, values, dl, "spotfi")
    return (est, spectrum) if return_spectrum else est


def ifft_aoa(h: RelativeChannel, D: int = 256, d_over_lambda: Optional[float] = None,
             rel_threshold: float = 0.5) -> AoAEstimate:
    """Peaks of the raw IFFT profile inside the visible region."""
    dl = _resolve_dl(h, d_over_lambda)
    P = ifft_profile(h, D)
    grid = psi_grid(D)
    mag = np.abs(P) * support_mask(grid, dl)
    peaks, _ = find_peaks(np.concatenate(([0.0], mag, [0.0])))
    peaks = peaks - 1
    peaks = peaks[mag[peaks] > rel_threshold * mag.max()]
    psi = grid[peaks]
    weights = P[peaks]
    order = np.lexsort((np.abs(psi), -np.abs(weights)))
    psi = psi[order]
    return AoAEstimate(np.arcsin(np.clip(psi / dl, -1, 1)), weights[order], "ifft", psi)


def _resolve_dl(h: RelativeChannel, d_over_lambda: Optional[float]) -> float:
    if d_over_lambda is not None:
        return float(d_over_lambda)
    raise ValueError("d_over_lambda is required for scanning")


def estimate_aoa(
    h: RelativeChannel,
    d_over_lambda: float,
    method: str = "sparse",
    beta: float = 1.0,
    D: int = 256,
    rel_threshold: float = 0.05,
    opts: Optional[SolverOptions] = None,
):
    """Convenience front end returning ``(AoAEstimate, profile_or_None)``."""
    if method == "sparse":
        W = build_window_matrix(h.n_antennas, D)
        prof = solve_sparse(ifft_profile(h, D), W, beta, d_over_lambda, opts)
        return extract_angles(prof, rel_threshold), prof
    if method == "music":
        return music_aoa(h, d_over_lambda=d_over_lambda), None
    if method == "spotfi":
        return spotfi_aoa(h, d_over_lambda=d_over_lambda), None
    if method == "ifft":
        return ifft_aoa(h, D, d_over_lambda), None
    raise ValueError(f"unknown AoA method {method!r}")
