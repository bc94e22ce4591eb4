"""Duration-explicit switching-Gaussian segmentation model with a
weak-limit hierarchical Dirichlet prior, fit by blocked Gibbs sampling.

The truncated model: top-level stick weights beta ~ Dir(gamma/S, ...);
per-state transition rows pi_i ~ Dir(alpha * beta) with the diagonal
zeroed and renormalized (no self-transitions); Gaussian emissions with a
factored Normal x Inverse-Wishart prior; shifted-Poisson segment
durations (d >= 1) with a Gamma prior on the rate, truncated and
renormalized on [1, D_max] inside the message recursions.

Each sweep alternates an exact block resample of the label sequence
(backward messages + forward sampling over segment/duration pairs) with
conjugate parameter updates, and tracks the joint density; the reported
segmentation comes from the highest-joint sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.linalg import solve_triangular
from scipy.special import gammaln
from scipy.stats import invwishart, multivariate_normal

from .datamodel import Segmentation
from .errors import DataError, DimensionError, TrainingError

BETA_FLOOR = 1e-300


@dataclass
class NiwParams:
    """Factored Normal x Inverse-Wishart prior over (mu, Sigma)."""

    mu0: np.ndarray
    S0: np.ndarray
    nu0: float
    Delta0: np.ndarray

    def __post_init__(self):
        d = self.mu0.shape[0]
        for name in ("S0", "Delta0"):
            M = getattr(self, name)
            if M.shape != (d, d) or not np.allclose(M, M.T, atol=1e-10):
                raise DimensionError(f"{name} must be symmetric ({d}, {d})")
            if np.linalg.eigvalsh(M)[0] <= 0:
                raise DataError(f"{name} must be positive definite")
        if self.nu0 <= d - 1:
            raise DataError(f"nu0 must exceed d-1={d - 1}, got {self.nu0}")

    @classmethod
    def empirical(cls, obs: np.ndarray) -> "NiwParams":
        """Weakly-informative prior centered on the data moments."""
        d = obs.shape[1]
        cov = np.cov(obs, rowvar=False, ddof=1) if obs.shape[0] > 1 else np.eye(d)
        cov = np.atleast_2d(cov)
        ridge = max(1e-9, 1e-6 * float(np.mean(np.diag(cov))))
        cov = cov + ridge * np.eye(d)
        return cls(mu0=obs.mean(axis=0), S0=cov.copy(), nu0=d + 2.0, Delta0=cov.copy())


@dataclass
class HdpHsmmHyper:
    """Hyperparameters of the truncated sampler."""

    S: int = 20
    gamma: float = 6.0
    alpha: float = 6.0
    niw: NiwParams | None = None  # None: empirical prior from the data
    a_dur: float = 3.0
    b_dur: float = 0.01
    D_max: int = 600

    def __post_init__(self):
        if self.S < 2:
            raise DataError(f"need at least 2 truncated states, got {self.S}")
        if self.gamma <= 0 or self.alpha <= 0 or self.a_dur <= 0 or self.b_dur <= 0:
            raise DataError("concentrations and duration prior must be positive")
        if self.D_max < 1:
            raise DataError("D_max must be >= 1")


@dataclass
class HsmmState:
    """One sample of the full model state."""

    beta: np.ndarray
    pi: np.ndarray
    mus: np.ndarray
    Sigmas: np.ndarray
    lam: np.ndarray
    x: np.ndarray
    log_joint: float = -np.inf

    def check_valid(self):
        S = self.beta.size
        if abs(self.beta.sum() - 1.0) > 1e-8 or np.any(self.beta < 0):
            raise DataError("beta must lie on the simplex")
        if self.pi.shape != (S, S) or np.any(np.abs(np.diag(self.pi)) > 0):
            raise DataError("pi must be (S, S) with a zero diagonal")
        if np.any(np.abs(self.pi.sum(axis=1) - 1.0) > 1e-8) or np.any(self.pi < 0):
            raise DataError("pi rows must be stochastic")
        if np.any(self.lam <= 0):
            raise DataError("duration rates must be positive")
        for Sig in self.Sigmas:
            if not np.allclose(Sig, Sig.T, atol=1e-8):
                raise DataError("emission covariances must be symmetric")
            np.linalg.cholesky(Sig)


@dataclass
class GibbsDiagnostics:
    """Per-sweep trace of the sampler."""

    log_joint: list = field(default_factory=list)
    occupied_states: list = field(default_factory=list)
    accepted_sweep: int = -1
    trace: list | None = None

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "log_joint": [float(v) for v in self.log_joint],
            "occupied_states": [int(v) for v in self.occupied_states],
            "accepted_sweep": int(self.accepted_sweep),
        }


def duration_pmf(lam: float, d: int) -> float:
    """Shifted Poisson pmf p(d) = Poisson(d - 1; lam) over durations d >= 1."""
    if d < 1:
        raise DataError(f"duration must be >= 1, got {d}")
    if lam <= 0:
        raise DataError(f"rate must be positive, got {lam}")
    return float(np.exp((d - 1) * np.log(lam) - lam - gammaln(d)))


def truncated_duration_log_pmf(lam: np.ndarray, D_max: int) -> np.ndarray:
    """(D_max, S) log pmf over d = 1..D_max, renormalized per state."""
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    d = np.arange(1, D_max + 1, dtype=np.float64)
    logp = (d[:, None] - 1.0) * np.log(lam)[None, :] - lam[None, :] - gammaln(d)[:, None]
    mx = logp.max(axis=0)
    logp -= mx + np.log(np.exp(logp - mx).sum(axis=0))
    return logp


@njit(cache=True, fastmath={"reassoc", "contract", "arcp"})
def _backward_messages_core(log_lik, log_pi, log_dur, log_init):
    """Segment-level backward recursion in log space, O(T * S * D_max).

    B_start[t, j]: log p(y_{t:} | segment with state j starts at t).
    B_end[t, i]:   log p(y_{t:} | a segment of state i ended at t-1).
    """
    T, S = log_lik.shape
    D = log_dur.shape[0]
    cum = np.zeros((T + 1, S))
    for t in range(T):
        for j in range(S):
            cum[t + 1, j] = cum[t, j] + log_lik[t, j]
    B_start = np.full((T, S), -np.inf)
    B_end = np.full((T + 1, S), -np.inf)
    for j in range(S):
        B_end[T, j] = 0.0
    for t in range(T - 1, -1, -1):
        dmax = min(D, T - t)
        for j in range(S):
            mx = -np.inf
            for d in range(1, dmax + 1):
                val = log_dur[d - 1, j] + cum[t + d, j] + B_end[t + d, j]
                if val > mx:
                    mx = val
            if mx == -np.inf:
                B_start[t, j] = -np.inf
            else:
                s = 0.0
                for d in range(1, dmax + 1):
                    s += np.exp(log_dur[d - 1, j] + cum[t + d, j] + B_end[t + d, j] - mx)
                B_start[t, j] = np.log(s) + mx - cum[t, j]
        if t >= 1:
            for i in range(S):
                mx = -np.inf
                for j in range(S):
                    val = log_pi[i, j] + B_start[t, j]
                    if val > mx:
                        mx = val
                if mx == -np.inf:
                    B_end[t, i] = -np.inf
                else:
                    s = 0.0
                    for j in range(S):
                        s += np.exp(log_pi[i, j] + B_start[t, j] - mx)
                    B_end[t, i] = np.log(s) + mx
    return B_start, B_end, cum


@dataclass
class HsmmMessages:
    """Backward messages plus the tables forward sampling needs."""

    B_start: np.ndarray
    B_end: np.ndarray
    cum: np.ndarray
    log_init: np.ndarray
    log_pi: np.ndarray
    log_dur: np.ndarray
    log_evidence: float


def _logsumexp_vec(v: np.ndarray) -> float:
    mx = np.max(v)
    if not np.isfinite(mx):
        return float(mx)
    return float(np.log(np.exp(v - mx).sum()) + mx)


def hsmm_backward_messages(log_lik: np.ndarray, pi: np.ndarray, lam: np.ndarray,
                           D_max: int, init: np.ndarray | None = None) -> HsmmMessages:
    """Backward messages for the duration-explicit chain.

    The duration distribution is the shifted Poisson truncated and
    renormalized on [1, D_max]; the label sequence must end exactly at T
    (no censoring), matching the enumeration the tests check against.
    """
    log_lik = np.asarray(log_lik, dtype=np.float64)
    if log_lik.ndim != 2:
        raise DimensionError("log_lik must be (T, S)")
    if np.any(np.isnan(log_lik)):
        raise DataError("log_lik contains NaN")
    # clamp -inf: the cumulative-sum tables subtract entries pairwise and
    # -inf minus -inf would poison them with NaN
    log_lik = np.maximum(log_lik, -1e30)
    T, S = log_lik.shape
    pi = np.asarray(pi, dtype=np.float64)
    if pi.shape != (S, S):
        raise DimensionError(f"pi must be ({S}, {S})")
    init = np.full(S, 1.0 / S) if init is None else np.asarray(init, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_pi = np.log(np.maximum(pi, 0.0))
        log_init = np.log(np.maximum(init, BETA_FLOOR))
    log_dur = truncated_duration_log_pmf(lam, D_max)
    B_start, B_end, cum = _backward_messages_core(log_lik, log_pi, log_dur, log_init)
    log_evidence = _logsumexp_vec(log_init + B_start[0])
    return HsmmMessages(B_start, B_end, cum, log_init, log_pi, log_dur, log_evidence)


def _sample_categorical_log(rng, logp: np.ndarray) -> int:
    mx = np.max(logp)
    if not np.isfinite(mx):
        raise TrainingError("degenerate categorical: all outcomes have zero mass")
    p = np.exp(logp - mx)
    p /= p.sum()
    return int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))


def sample_states(messages: HsmmMessages, rng) -> np.ndarray:
    """Forward-sample the label sequence from its exact posterior.

    Draws alternate segment labels and durations; consecutive segments
    carry distinct labels because the transition diagonal is zero.
    """
    B_start, B_end, cum = messages.B_start, messages.B_end, messages.cum
    log_pi, log_dur, log_init = messages.log_pi, messages.log_dur, messages.log_init
    T = B_start.shape[0]
    D = log_dur.shape[0]
    if not np.isfinite(messages.log_evidence):
        raise TrainingError("no feasible segmentation under the duration truncation")
    x = np.empty(T, dtype=np.int64)
    t = 0
    prev = -1
    while t < T:
        head = log_init if prev < 0 else log_pi[prev]
        j = _sample_categorical_log(rng, head + B_start[t])
        dmax = min(D, T - t)
        logp_dur = (
            log_dur[:dmax, j]
            + cum[t + 1 : t + dmax + 1, j]
            - cum[t, j]
            + B_end[t + 1 : t + dmax + 1, j]
        )
        d = 1 + _sample_categorical_log(rng, logp_dur)
        x[t : t + d] = j
        prev = j
        t += d
    return x


def rle(x: np.ndarray):
    """Run-length encode a label sequence into (labels, durations)."""
    x = np.asarray(x)
    change = np.flatnonzero(x[1:] != x[:-1])
    starts = np.r_[0, change + 1]
    ends = np.r_[change + 1, x.size]
    return x[starts], ends - starts


def _sample_dirichlet(rng, alphas: np.ndarray) -> np.ndarray:
    draws = rng.gamma(np.maximum(alphas, 1e-12))
    draws = np.maximum(draws, BETA_FLOOR)
    return draws / draws.sum()


def _crp_table_counts(rng, counts: np.ndarray, weights: np.ndarray, alpha: float) -> np.ndarray:
    """Auxiliary table counts m_j: for each transition pair (i, j), the
    number of new tables a Chinese-restaurant seating of n_ij customers
    opens under concentration alpha * weights_j."""
    m = np.zeros(counts.shape[1])
    for i in range(counts.shape[0]):
        for j in range(counts.shape[1]):
            n = int(counts[i, j])
            if n == 0:
                continue
            conc = alpha * weights[j]
            h = np.arange(n)
            m[j] += np.count_nonzero(rng.random(n) < conc / (h + conc))
    return m


def resample_params(x: np.ndarray, obs: np.ndarray, hyper: HdpHsmmHyper, rng,
                    prev_beta: np.ndarray | None = None,
                    prev_mus: np.ndarray | None = None):
    """Conjugate parameter block of one Gibbs sweep.

    Returns (beta, pi, mus, Sigmas, lam).  States without data fall back
    to prior draws.  The previous sweep's beta drives the auxiliary table
    counts and the previous means condition the covariance draw (the
    factored prior is handled by the two-step Sigma | mu, mu | Sigma
    conditionals).
    """
    S = hyper.S
    obs = np.asarray(obs, dtype=np.float64)
    d = obs.shape[1]
    niw = hyper.niw if hyper.niw is not None else NiwParams.empirical(obs)
    if np.any(x < 0) or np.any(x >= S):
        raise DataError("labels outside [0, S)")

    labels, durs = rle(x)
    trans = np.zeros((S, S))
    for a, b in zip(labels[:-1], labels[1:]):
        trans[a, b] += 1

    beta_prev = np.full(S, 1.0 / S) if prev_beta is None else prev_beta
    m = _crp_table_counts(rng, trans, beta_prev, hyper.alpha)
    beta = _sample_dirichlet(rng, hyper.gamma / S + m)

    pi = np.empty((S, S))
    for i in range(S):
        row = _sample_dirichlet(rng, hyper.alpha * beta + trans[i])
        row[i] = 0.0
        total = row.sum()
        if total <= 0:
            row = np.full(S, 1.0 / (S - 1))
            row[i] = 0.0
        else:
            row /= total
        pi[i] = row

    S0_inv = np.linalg.inv(niw.S0)
    S0_inv_mu0 = S0_inv @ niw.mu0
    mus = np.empty((S, d))
    Sigmas = np.empty((S, d, d))
    lam = np.empty(S)
    for i in range(S):
        sel = x == i
        n_i = int(np.count_nonzero(sel))
        if n_i == 0:
            Sigmas[i] = invwishart.rvs(df=niw.nu0, scale=niw.Delta0, random_state=rng)
            mus[i] = rng.multivariate_normal(niw.mu0, niw.S0)
        else:
            Y = obs[sel]
            mu_cur = (prev_mus[i] if prev_mus is not None else Y.mean(axis=0))
            diff = Y - mu_cur
            scatter = diff.T @ diff
            Sigmas[i] = invwishart.rvs(
                df=niw.nu0 + n_i, scale=niw.Delta0 + scatter, random_state=rng
            )
            Sig_inv = np.linalg.inv(Sigmas[i])
            prec = S0_inv + n_i * Sig_inv
            cov = np.linalg.inv(prec)
            cov = 0.5 * (cov + cov.T)
            mean = cov @ (S0_inv_mu0 + Sig_inv @ Y.sum(axis=0))
            mus[i] = mean + np.linalg.cholesky(cov) @ rng.standard_normal(d)
        seg_sel = labels == i
        n_seg = int(np.count_nonzero(seg_sel))
        shape = hyper.a_dur + float(np.sum(durs[seg_sel] - 1))
        rate = hyper.b_dur + n_seg
        lam[i] = max(rng.gamma(shape, 1.0 / rate), 1e-12)
    return beta, pi, mus, Sigmas, lam


def gaussian_log_lik(obs: np.ndarray, mus: np.ndarray, Sigmas: np.ndarray) -> np.ndarray:
    """(T, S) per-frame Gaussian emission log densities."""
    T, d = obs.shape
    S = mus.shape[0]
    out = np.empty((T, S))
    const = -0.5 * d * math.log(2.0 * math.pi)
    for i in range(S):
        try:
            L = np.linalg.cholesky(Sigmas[i])
        except np.linalg.LinAlgError:
            jitter = 1e-10 * max(1.0, float(np.trace(Sigmas[i])) / d)
            L = np.linalg.cholesky(Sigmas[i] + jitter * np.eye(d))
        diff = obs - mus[i]
        z = solve_triangular(L, diff.T, lower=True)
        out[:, i] = const - np.log(np.diag(L)).sum() - 0.5 * np.sum(z * z, axis=0)
    return out


def _dirichlet_logpdf(x: np.ndarray, alphas: np.ndarray) -> float:
    x = np.maximum(x, BETA_FLOOR)
    return float(
        gammaln(alphas.sum()) - gammaln(alphas).sum() + ((alphas - 1.0) * np.log(x)).sum()
    )


def log_joint_terms(state: HsmmState, obs: np.ndarray, hyper: HdpHsmmHyper,
                    log_lik: np.ndarray | None = None) -> tuple[float, float]:
    """(parameter prior term, complete-data term) of the joint log density.

    The complete-data term scores labels and observations given the
    parameters (initial label, transitions, durations, emissions); the
    prior term adds the parameter densities.  The off-diagonal
    renormalized transition rows are scored against the Dirichlet over
    the remaining S-1 components (the aggregation property of the
    Dirichlet makes that the exact prior of the constrained row).
    """
    S = hyper.S
    niw = hyper.niw if hyper.niw is not None else NiwParams.empirical(obs)
    prior = _dirichlet_logpdf(state.beta, np.full(S, hyper.gamma / S))
    for i in range(S):
        keep = np.arange(S) != i
        prior += _dirichlet_logpdf(state.pi[i][keep], hyper.alpha * state.beta[keep])
    for i in range(S):
        prior += float(multivariate_normal.logpdf(state.mus[i], niw.mu0, niw.S0))
        prior += float(invwishart.logpdf(state.Sigmas[i], niw.nu0, niw.Delta0))
        prior += float(
            hyper.a_dur * np.log(hyper.b_dur)
            - gammaln(hyper.a_dur)
            + (hyper.a_dur - 1.0) * np.log(state.lam[i])
            - hyper.b_dur * state.lam[i]
        )
    labels, durs = rle(state.x)
    log_dur = truncated_duration_log_pmf(state.lam, hyper.D_max)
    chain = float(np.log(max(state.beta[labels[0]], BETA_FLOOR)))
    for a, b in zip(labels[:-1], labels[1:]):
        chain += float(np.log(max(state.pi[a, b], BETA_FLOOR)))
    for lab, dur in zip(labels, durs):
        if dur > hyper.D_max:
            return -np.inf, -np.inf
        chain += float(log_dur[dur - 1, lab])
    if log_lik is None:
        log_lik = gaussian_log_lik(obs, state.mus, state.Sigmas)
    chain += float(log_lik[np.arange(obs.shape[0]), state.x].sum())
    return prior, chain


def log_joint(state: HsmmState, obs: np.ndarray, hyper: HdpHsmmHyper,
              log_lik: np.ndarray | None = None) -> float:
    """Joint log density of parameters, labels and observations."""
    prior, chain = log_joint_terms(state, obs, hyper, log_lik=log_lik)
    return prior + chain


def _kmeans_labels(obs: np.ndarray, k: int, rng, iters: int = 10) -> np.ndarray:
    """Tiny seeded Lloyd iteration for the initial partition."""
    n = obs.shape[0]
    k = min(k, n)
    centers = obs[rng.choice(n, size=k, replace=False)].copy()
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        d2 = ((obs[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        for j in range(k):
            members = obs[labels == j]
            if members.shape[0]:
                centers[j] = members.mean(axis=0)
    return labels


def fit_segment(obs, hyper: HdpHsmmHyper | None = None, sweeps: int = 200,
                seed: int = 0, keep_trace: bool = False):
    """Run the blocked Gibbs sampler and extract the best segmentation.

    Initial labels come from a seeded k-means partition; parameters are
    then drawn conditionally (prior draws for states k-means left empty).
    The returned Segmentation is taken from the sweep with the highest
    joint density; boundaries sit where the label sequence switches,
    converted to seconds at 1 frame/second.
    """
    if sweeps < 1:
        raise DataError(f"sweeps must be >= 1, got {sweeps}")
    from .fusion import ObservationSequence

    data = obs.data if isinstance(obs, ObservationSequence) else np.asarray(obs, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise DimensionError("observations must be (T >= 2, d)")
    hyper = hyper or HdpHsmmHyper()
    if hyper.niw is None:
        hyper = HdpHsmmHyper(
            S=hyper.S, gamma=hyper.gamma, alpha=hyper.alpha,
            niw=NiwParams.empirical(data), a_dur=hyper.a_dur,
            b_dur=hyper.b_dur, D_max=hyper.D_max,
        )
    rng = np.random.default_rng(seed)
    T = data.shape[0]

    x = _kmeans_labels(data, hyper.S, rng)
    beta, pi, mus, Sigmas, lam = resample_params(x, data, hyper, rng)
    log_lik = gaussian_log_lik(data, mus, Sigmas)

    diagnostics = GibbsDiagnostics(trace=[] if keep_trace else None)
    best_x = None
    best_score = -np.inf
    for sweep in range(sweeps):
        messages = hsmm_backward_messages(log_lik, pi, lam, hyper.D_max, init=beta)
        x = sample_states(messages, rng)
        beta, pi, mus, Sigmas, lam = resample_params(
            x, data, hyper, rng, prev_beta=beta, prev_mus=mus
        )
        log_lik = gaussian_log_lik(data, mus, Sigmas)
        state = HsmmState(beta=beta, pi=pi, mus=mus, Sigmas=Sigmas, lam=lam, x=x)
        prior_term, chain_term = log_joint_terms(state, data, hyper, log_lik=log_lik)
        state.log_joint = prior_term + chain_term
        diagnostics.log_joint.append(state.log_joint)
        diagnostics.occupied_states.append(int(np.unique(x).size))
        if keep_trace:
            diagnostics.trace.append({"x": x.copy(), "lam": lam.copy()})
        # Selection uses the complete-data term only: the Dirichlet prior
        # densities are unbounded near the simplex boundary, so the full
        # joint is dominated by where beta/pi happened to land, not by the
        # quality of the segmentation.
        if best_x is None or chain_term > best_score:
            best_x = x.copy()
            best_score = chain_term
            diagnostics.accepted_sweep = sweep
    segmentation = Segmentation.from_frame_labels(best_x, fps=1.0)
    return segmentation, diagnostics
