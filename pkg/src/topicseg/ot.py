"""Entropic optimal-transport solvers and the temporal signal extractor.

sinkhorn_wd moves mass between two point clouds under squared Euclidean
cost; entropic_gw compares two intra-space distance matrices with the
square-loss Gromov objective, solved by mirror descent: each step
KL-projects the previous coupling reweighted by the linearized cost
tensor onto the transport polytope.  Both run in the log domain.
temporal_signals slides past/future windows over the feature sequences
to produce the per-timestep scalar channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.spatial.distance import cdist

from .dcca import CcaModel, cca_signal
from .errors import DataError, DimensionError
from .fusion import SignalSeries

EPS_FLOOR = 1e-12


@dataclass(frozen=True)
class PointCloud:
    """An empirical measure: m weighted points in R^d."""

    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise DimensionError(f"points must be (m>=1, d), got {pts.shape}")
        if self.weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (pts.shape[0],):
            raise DimensionError("weights must have one entry per point")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise DataError("weights must be nonnegative and sum to 1 (tol 1e-9)")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class TransportPlan:
    matrix: np.ndarray
    row_marginal_error: float
    col_marginal_error: float
    converged: bool


@dataclass(frozen=True)
class OtConfig:
    """Solver settings; epsilon=None scales the regularizer to the instance
    (epsilon_scale times the median off-diagonal cost)."""

    epsilon: float | None = None
    epsilon_scale: float = 0.05
    max_iter: int = 1000
    tol: float = 1e-6
    gw_outer_iter: int = 50

    def __post_init__(self):
        if self.epsilon is not None and self.epsilon <= 0:
            raise DataError("epsilon must be > 0 when given")
        if self.epsilon_scale <= 0 or self.tol <= 0:
            raise DataError("epsilon_scale and tol must be > 0")
        if self.max_iter < 1 or self.gw_outer_iter < 1:
            raise DataError("iteration caps must be >= 1")


def _resolve_epsilon(C: np.ndarray, cfg: OtConfig) -> float:
    if cfg.epsilon is not None:
        return cfg.epsilon
    if C.shape[0] == C.shape[1]:
        mask = ~np.eye(C.shape[0], dtype=bool)
        vals = C[mask]
    else:
        vals = C.ravel()
    med = float(np.median(vals)) if vals.size else 0.0
    return max(cfg.epsilon_scale * med, EPS_FLOOR)


def _sinkhorn_core(C: np.ndarray, a: np.ndarray, b: np.ndarray, epsilon: float,
                   max_iter: int, tol: float):
    """Log-domain Sinkhorn; returns (plan, marginal errors, converged)."""
    Mr = -C / epsilon
    with np.errstate(divide="ignore"):
        loga = np.log(a)
        logb = np.log(b)
    u = np.zeros(a.size)
    v = np.zeros(b.size)
    converged = False
    plan = None
    for it in range(max_iter):
        v = logb - _logsumexp(Mr + u[:, None], axis=0)
        u = loga - _logsumexp(Mr + v[None, :], axis=1)
        if it % 5 == 0 or it == max_iter - 1:
            plan = np.exp(Mr + u[:, None] + v[None, :])
            err_r = float(np.max(np.abs(plan.sum(axis=1) - a)))
            err_c = float(np.max(np.abs(plan.sum(axis=0) - b)))
            if max(err_r, err_c) < tol:
                converged = True
                break
    plan = np.exp(Mr + u[:, None] + v[None, :])
    err_r = float(np.max(np.abs(plan.sum(axis=1) - a)))
    err_c = float(np.max(np.abs(plan.sum(axis=0) - b)))
    return plan, err_r, err_c, converged or max(err_r, err_c) < tol


def _logsumexp(M: np.ndarray, axis: int) -> np.ndarray:
    mx = np.max(M, axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(M - mx), axis=axis)) + np.squeeze(mx, axis=axis)
    return out


def sinkhorn_wd(P: PointCloud, Q: PointCloud, cfg: OtConfig | None = None):
    """Entropic Wasserstein cost between two clouds under squared Euclidean
    ground cost.

    Returns (cost, TransportPlan) where cost is the transport cost of the
    regularized plan (sum plan * C, entropy excluded).  Non-convergence at
    max_iter is reported through the plan's converged flag.
    """
    cfg = cfg or OtConfig()
    if P.d != Q.d:
        raise DimensionError(f"cloud dims differ: {P.d} vs {Q.d}")
    C = cdist(P.points, Q.points, metric="sqeuclidean")
    epsilon = _resolve_epsilon(C, cfg)
    plan, err_r, err_c, converged = _sinkhorn_core(
        C, P.weights, Q.weights, epsilon, cfg.max_iter, cfg.tol
    )
    cost = float(np.sum(plan * C))
    return cost, TransportPlan(plan, err_r, err_c, converged)


def _validate_distance_matrix(C: np.ndarray, name: str) -> np.ndarray:
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise DimensionError(f"{name} must be square, got {C.shape}")
    if not np.allclose(C, C.T, atol=1e-8):
        raise DataError(f"{name} must be symmetric")
    if np.any(np.abs(np.diag(C)) > 1e-12):
        raise DataError(f"{name} must have a zero diagonal")
    if np.any(C < 0):
        raise DataError(f"{name} must be nonnegative")
    return C


@njit(cache=True)
def _gw_prox_core(Cx, Cy, wx, wy, epsilon, outer_iter, inner_iter, tol):
    """Mirror-descent Gromov solver: KL-prox Sinkhorn steps on the
    linearized square-loss tensor, warm-started from the running coupling.
    """
    m = wx.size
    mp = wy.size
    cx2 = (Cx**2) @ wx
    cy2 = (Cy**2) @ wy
    loga = np.log(wx)
    logb = np.log(wy)
    T = np.outer(wx, wy)
    logT = np.log(T)
    Mr = np.empty((m, mp))
    u = np.zeros(m)
    v = np.zeros(mp)
    converged = False
    err_r = 1.0
    err_c = 1.0
    for _ in range(outer_iter):
        M = Cx @ T @ Cy
        for i in range(m):
            for j in range(mp):
                Mr[i, j] = logT[i, j] - 2.0 * (cx2[i] + cy2[j] - 2.0 * M[i, j]) / epsilon
        for i in range(m):
            u[i] = 0.0
        for j in range(mp):
            v[j] = 0.0
        for it in range(inner_iter):
            for j in range(mp):
                mx = -np.inf
                for i in range(m):
                    val = Mr[i, j] + u[i]
                    if val > mx:
                        mx = val
                s = 0.0
                for i in range(m):
                    s += np.exp(Mr[i, j] + u[i] - mx)
                v[j] = logb[j] - (np.log(s) + mx)
            for i in range(m):
                mx = -np.inf
                for j in range(mp):
                    val = Mr[i, j] + v[j]
                    if val > mx:
                        mx = val
                s = 0.0
                for j in range(mp):
                    s += np.exp(Mr[i, j] + v[j] - mx)
                u[i] = loga[i] - (np.log(s) + mx)
            if it % 8 == 7 or it == inner_iter - 1:
                err_r = 0.0
                err_c = 0.0
                for i in range(m):
                    rs = 0.0
                    for j in range(mp):
                        rs += np.exp(Mr[i, j] + u[i] + v[j])
                    if abs(rs - wx[i]) > err_r:
                        err_r = abs(rs - wx[i])
                for j in range(mp):
                    cs = 0.0
                    for i in range(m):
                        cs += np.exp(Mr[i, j] + u[i] + v[j])
                    if abs(cs - wy[j]) > err_c:
                        err_c = abs(cs - wy[j])
                if err_r < tol and err_c < tol:
                    break
        delta = 0.0
        for i in range(m):
            for j in range(mp):
                newT = np.exp(Mr[i, j] + u[i] + v[j])
                delta += abs(newT - T[i, j])
                T[i, j] = newT
                logT[i, j] = Mr[i, j] + u[i] + v[j]
        if delta < tol:
            converged = True
            break
    return T, err_r, err_c, converged


def entropic_gw(Cx: np.ndarray, Cy: np.ndarray, wx: np.ndarray | None = None,
                wy: np.ndarray | None = None, cfg: OtConfig | None = None):
    """Entropic Gromov-Wasserstein cost between two metric spaces.

    Square-loss objective sum (Cx_ik - Cy_jl)^2 T_ij T_kl, minimized by
    mirror descent from the product coupling wx wy^T: each outer step
    KL-projects the previous coupling reweighted by the linearized cost
    tensor (the regularizer is frozen from the first linearization).
    Returns (cost of the final coupling, TransportPlan); the reported
    cost excludes the entropy term.
    """
    cfg = cfg or OtConfig()
    Cx = _validate_distance_matrix(Cx, "Cx")
    Cy = _validate_distance_matrix(Cy, "Cy")
    wx = np.full(Cx.shape[0], 1.0 / Cx.shape[0]) if wx is None else np.asarray(wx, float)
    wy = np.full(Cy.shape[0], 1.0 / Cy.shape[0]) if wy is None else np.asarray(wy, float)
    if wx.shape != (Cx.shape[0],) or wy.shape != (Cy.shape[0],):
        raise DimensionError("weights do not match distance matrices")
    if np.any(wx <= 0) or np.any(wy <= 0):
        raise DataError("GW weights must be strictly positive")

    constC = (Cx**2 @ wx)[:, None] + (Cy**2 @ wy)[None, :]
    T0 = np.outer(wx, wy)
    epsilon = _resolve_epsilon(2.0 * (constC - 2.0 * (Cx @ T0 @ Cy)), cfg)
    T, err_r, err_c, converged = _gw_prox_core(
        Cx, Cy, wx, wy, epsilon, cfg.gw_outer_iter, cfg.max_iter, cfg.tol
    )
    cost = float(np.sum((constC - 2.0 * (Cx @ T @ Cy)) * T))
    return cost, TransportPlan(T, float(err_r), float(err_c), bool(converged))


def temporal_signals(V2, L2, cca: CcaModel, w: int = 10,
                     cfg: OtConfig | None = None) -> SignalSeries:
    """Per-timestep transport and correlation channels.

    For each interior t (w <= t < n-w): wd channels transport the past
    window of w frames onto the future window of w frames within one
    modality; gwd compares the 2w-frame visual and language windows around
    t through their intra-window Euclidean distance matrices; cca is the
    canonical cosine at t.  Edge timesteps copy the nearest interior value.
    """
    cfg = cfg or OtConfig()
    from .fusion import _as_matrix

    V2 = _as_matrix(V2)
    L2 = _as_matrix(L2)
    n = V2.shape[0]
    if L2.shape[0] != n:
        raise DimensionError("V2 and L2 must share one length")
    if w < 1 or n < 2 * w + 1:
        raise DimensionError(f"window w={w} needs n >= 2w+1 frames, got n={n}")

    lo, hi = w, n - w
    wd_v = np.zeros(n)
    wd_l = np.zeros(n)
    gwd = np.zeros(n)
    cca_sig = np.zeros(n)
    for t in range(lo, hi):
        past = slice(t - w + 1, t + 1)
        future = slice(t + 1, t + w + 1)
        wd_v[t], _ = sinkhorn_wd(PointCloud(V2[past]), PointCloud(V2[future]), cfg)
        wd_l[t], _ = sinkhorn_wd(PointCloud(L2[past]), PointCloud(L2[future]), cfg)
        window = slice(t - w + 1, t + w + 1)
        Cv = cdist(V2[window], V2[window])
        Cl = cdist(L2[window], L2[window])
        np.fill_diagonal(Cv, 0.0)
        np.fill_diagonal(Cl, 0.0)
        gwd[t], _ = entropic_gw(np.minimum(Cv, Cv.T), np.minimum(Cl, Cl.T), cfg=cfg)
        cca_sig[t] = cca_signal(cca, V2[t], L2[t])
    for arr in (wd_v, wd_l, gwd, cca_sig):
        arr[:lo] = arr[lo]
        arr[hi:] = arr[hi - 1]
    return SignalSeries(wd_v=wd_v, wd_l=wd_l, gwd=gwd, cca=cca_sig)
