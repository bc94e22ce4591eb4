"""Canonical correlation transforms: closed-form linear CCA and a deep
variant trained by gradient ascent on the total canonical correlation.

The deep branch networks are small tanh MLPs with a linear output layer;
their gradients are hand-derived (no autodiff) for this fixed family.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import datamodel
from .errors import DataError, DimensionError, NotFittedError, TrainingError

EIG_FLOOR = 1e-10


@dataclass
class MlpParams:
    """Weights of one branch network; layer l maps d_l -> d_{l+1}.

    Hidden layers apply tanh; the output layer applies tanh only when
    ``apply_final_activation`` is set (the deep-CCA branches leave the
    output linear).
    """

    weights: list
    biases: list
    activation: str = "tanh"
    apply_final_activation: bool = True

    def __post_init__(self):
        if self.activation != "tanh":
            raise DataError(f"unsupported activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionError("weights and biases must pair up, one per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise DimensionError(f"layer {i}: W {w.shape} / b {b.shape} mismatch")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise DimensionError(f"layer {i - 1}->{i} dimensions do not chain")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DataError(f"layer {i}: non-finite parameters")

    @property
    def layer_sizes(self) -> tuple:
        return (self.weights[0].shape[0], *(w.shape[1] for w in self.weights))


@dataclass
class CcaModel:
    """Fitted linear CCA: projections A, B, correlations and centering means."""

    k: int
    A: np.ndarray | None = None
    B: np.ndarray | None = None
    rho: np.ndarray | None = None
    mean_x: np.ndarray | None = None
    mean_y: np.ndarray | None = None
    r: float = 1e-4

    @property
    def fitted(self) -> bool:
        return self.A is not None


@dataclass
class DccaConfig:
    """Training configuration for the deep branch networks.

    hidden sizes of None derive from the input dimension: the reference
    raw sizes get the reference architectures (2048 -> 1024 -> 512 and
    384 -> 256 -> 128), anything else a halving ramp floored at k.
    """

    hidden_v: tuple | None = None
    hidden_l: tuple | None = None
    k: int = 128
    r: float = 1e-4
    lr: float = 1e-3
    epochs: int = 100
    batch: int | None = None  # None = full-sequence gradient ascent
    seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.r <= 0 or self.lr <= 0 or self.epochs < 0:
            raise DataError("DccaConfig fields must be positive (epochs >= 0)")
        for hidden in (self.hidden_v, self.hidden_l):
            if hidden is not None and any(h < 1 for h in hidden):
                raise DataError("hidden sizes must be positive")
        if self.batch is not None and self.batch <= self.k:
            raise DataError("batch size must exceed k")


def default_hidden(d_in: int, k: int) -> tuple:
    if d_in == 2048:
        return (1024, 512)
    if d_in == 384:
        return (256, 128)
    return (max(2 * k, d_in // 2, 1), max(k, d_in // 4, 1))


def init_mlp(layer_sizes, rng, apply_final_activation=False) -> MlpParams:
    """Symmetric uniform init in +-sqrt(6/(fan_in+fan_out))."""
    weights, biases = [], []
    for d_in, d_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = np.sqrt(6.0 / (d_in + d_out))
        weights.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
        biases.append(np.zeros(d_out))
    return MlpParams(weights, biases, apply_final_activation=apply_final_activation)


def mlp_apply(params: MlpParams, X: np.ndarray) -> np.ndarray:
    """Apply the network row-wise to an (n, d_in) matrix."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.weights[0].shape[0]:
        raise DimensionError(
            f"input has shape {X.shape}, expected (n, {params.weights[0].shape[0]})"
        )
    h = X
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last or params.apply_final_activation:
            h = np.tanh(h)
    if not np.all(np.isfinite(h)):
        raise DataError("network output is non-finite")
    return h


def _mlp_forward(params: MlpParams, X):
    """Forward pass keeping per-layer activations for backprop."""
    acts = [X]
    last = len(params.weights) - 1
    h = X
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last or params.apply_final_activation:
            h = np.tanh(h)
        acts.append(h)
    return acts


def _mlp_backward(params: MlpParams, acts, grad_out):
    """Gradients of a scalar objective w.r.t. every weight and bias.

    ``grad_out`` is the objective gradient w.r.t. the network output.
    """
    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.biases)
    last = len(params.weights) - 1
    delta = grad_out
    for i in range(last, -1, -1):
        if i < last or params.apply_final_activation:
            delta = delta * (1.0 - acts[i + 1] ** 2)
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i:
            delta = delta @ params.weights[i].T
    return grads_w, grads_b


def _inv_sqrt_psd(M: np.ndarray) -> np.ndarray:
    """Inverse matrix square root via symmetric eigendecomposition."""
    w, V = np.linalg.eigh(M)
    w = np.maximum(w, EIG_FLOOR)
    return (V * (w ** -0.5)) @ V.T


def correlation_objective(H1: np.ndarray, H2: np.ndarray, r: float):
    """Total canonical correlation of two projected views, with gradients.

    Returns (corr, G1, G2) where corr is the sum of the singular values of
    T = S11^(-1/2) S12 S22^(-1/2) with ridge-regularized within-view
    covariances, and G1/G2 are d(corr)/dH1, d(corr)/dH2.
    """
    n = H1.shape[0]
    H1c = H1 - H1.mean(axis=0)
    H2c = H2 - H2.mean(axis=0)
    denom = n - 1
    S11 = H1c.T @ H1c / denom + r * np.eye(H1.shape[1])
    S22 = H2c.T @ H2c / denom + r * np.eye(H2.shape[1])
    S12 = H1c.T @ H2c / denom
    R1 = _inv_sqrt_psd(S11)
    R2 = _inv_sqrt_psd(S22)
    T = R1 @ S12 @ R2
    U, S, Vt = np.linalg.svd(T, full_matrices=False)
    corr = float(S.sum())
    D12 = R1 @ U @ Vt @ R2
    D11 = -0.5 * R1 @ (U * S) @ U.T @ R1
    D22 = -0.5 * R2 @ (Vt.T * S) @ Vt @ R2
    G1 = (2.0 * H1c @ D11 + H2c @ D12.T) / denom
    G2 = (2.0 * H2c @ D22 + H1c @ D12) / denom
    return corr, G1, G2


def linear_cca_fit(X: np.ndarray, Y: np.ndarray, k: int, r: float) -> CcaModel:
    """Closed-form linear CCA with ridge-regularized covariances.

    The correlations are the top-k singular values of
    T = S11^(-1/2) S12 S22^(-1/2); the projection matrices map centered
    inputs onto the canonical directions.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise DimensionError(f"paired matrices required, got {X.shape} / {Y.shape}")
    n = X.shape[0]
    if k < 1 or k > min(X.shape[1], Y.shape[1]):
        raise DimensionError(f"k={k} must be in [1, min(d_x, d_y)]")
    if n <= k:
        raise DimensionError(f"need n > k, got n={n}, k={k}")
    if r <= 0:
        raise DataError(f"ridge r must be > 0, got {r}")
    mean_x = X.mean(axis=0)
    mean_y = Y.mean(axis=0)
    Xc = X - mean_x
    Yc = Y - mean_y
    S11 = Xc.T @ Xc / (n - 1) + r * np.eye(X.shape[1])
    S22 = Yc.T @ Yc / (n - 1) + r * np.eye(Y.shape[1])
    S12 = Xc.T @ Yc / (n - 1)
    R1 = _inv_sqrt_psd(S11)
    R2 = _inv_sqrt_psd(S22)
    U, S, Vt = np.linalg.svd(R1 @ S12 @ R2, full_matrices=False)
    if not np.all(np.isfinite(S)):
        raise DataError("singular values of the correlation matrix are non-finite")
    return CcaModel(
        k=k,
        A=R1 @ U[:, :k],
        B=R2 @ Vt[:k].T,
        rho=S[:k].copy(),
        mean_x=mean_x,
        mean_y=mean_y,
        r=r,
    )


def cca_signal(model: CcaModel, v2_t: np.ndarray, l2_t: np.ndarray) -> float:
    """Cosine similarity of the canonical projections of one paired frame.

    Returns 0.0 when either projection is the zero vector.
    """
    if not model.fitted:
        raise NotFittedError("cca_signal requires a fitted CcaModel")
    v2_t = np.asarray(v2_t, dtype=np.float64)
    l2_t = np.asarray(l2_t, dtype=np.float64)
    if v2_t.shape != model.mean_x.shape or l2_t.shape != model.mean_y.shape:
        raise DimensionError("frame vectors do not match the fitted dimensions")
    pv = model.A.T @ (v2_t - model.mean_x)
    pl = model.B.T @ (l2_t - model.mean_y)
    nv = np.linalg.norm(pv)
    nl = np.linalg.norm(pl)
    if nv == 0.0 or nl == 0.0:
        return 0.0
    return float(np.clip(pv @ pl / (nv * nl), -1.0, 1.0))


def dcca_train(V1: np.ndarray, L1: np.ndarray, cfg: DccaConfig):
    """Train the two branch networks by gradient ascent on total correlation.

    Returns (f_params, g_params, trace) where trace[e] is the full-data
    total correlation at the start of epoch e.  Deterministic per seed.
    """
    V1 = np.asarray(V1, dtype=np.float64)
    L1 = np.asarray(L1, dtype=np.float64)
    if V1.ndim != 2 or L1.ndim != 2 or V1.shape[0] != L1.shape[0]:
        raise DimensionError(f"paired sequences required, got {V1.shape} / {L1.shape}")
    n = V1.shape[0]
    if cfg.batch is not None and not (cfg.k < cfg.batch < n):
        raise DimensionError(f"need n > batch > k, got n={n}, batch={cfg.batch}, k={cfg.k}")
    if n <= cfg.k:
        raise DimensionError(f"need n > k, got n={n}, k={cfg.k}")

    rng = np.random.default_rng(cfg.seed)
    hidden_v = cfg.hidden_v if cfg.hidden_v is not None else default_hidden(V1.shape[1], cfg.k)
    hidden_l = cfg.hidden_l if cfg.hidden_l is not None else default_hidden(L1.shape[1], cfg.k)
    f = init_mlp((V1.shape[1], *hidden_v, cfg.k), rng, apply_final_activation=False)
    g = init_mlp((L1.shape[1], *hidden_l, cfg.k), rng, apply_final_activation=False)

    trace = []
    for epoch in range(cfg.epochs):
        corr, _, _ = correlation_objective(mlp_apply(f, V1), mlp_apply(g, L1), cfg.r)
        if not np.isfinite(corr):
            raise TrainingError(f"non-finite correlation at epoch {epoch}")
        trace.append(corr)

        if cfg.batch is None:
            batches = [np.arange(n)]
        else:
            perm = rng.permutation(n)
            batches = [perm[i:i + cfg.batch] for i in range(0, n, cfg.batch)]
            batches = [b for b in batches if b.size > cfg.k]
        for idx in batches:
            acts_f = _mlp_forward(f, V1[idx])
            acts_g = _mlp_forward(g, L1[idx])
            corr_b, G1, G2 = correlation_objective(acts_f[-1], acts_g[-1], cfg.r)
            if not np.isfinite(corr_b):
                raise TrainingError(f"non-finite correlation at epoch {epoch}")
            gw_f, gb_f = _mlp_backward(f, acts_f, G1)
            gw_g, gb_g = _mlp_backward(g, acts_g, G2)
            for params, gws, gbs in ((f, gw_f, gb_f), (g, gw_g, gb_g)):
                for w, b, gw, gb in zip(params.weights, params.biases, gws, gbs):
                    w += cfg.lr * gw
                    b += cfg.lr * gb
    return f, g, trace


def save_transforms(out_dir, f: MlpParams, g: MlpParams, cca: CcaModel, meta=None):
    """Checkpoint the branch networks and CCA model.

    Layout: header.json plus one binary feature-format payload per matrix.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    arrays = {}
    header = {"format_version": 1, "activation": "tanh", "meta": meta or {}}
    for tag, params in (("f", f), ("g", g)):
        header[tag] = {
            "layer_sizes": list(params.layer_sizes),
            "apply_final_activation": params.apply_final_activation,
        }
        for i, (w, b) in enumerate(zip(params.weights, params.biases)):
            arrays[f"{tag}_w{i}"] = w
            arrays[f"{tag}_b{i}"] = b.reshape(1, -1)
    header["cca"] = {"k": cca.k, "r": cca.r, "fitted": cca.fitted}
    if cca.fitted:
        arrays["cca_A"] = cca.A
        arrays["cca_B"] = cca.B
        arrays["cca_rho"] = cca.rho.reshape(1, -1)
        arrays["cca_mean_x"] = cca.mean_x.reshape(1, -1)
        arrays["cca_mean_y"] = cca.mean_y.reshape(1, -1)
    header["arrays"] = sorted(arrays)
    with open(out / "header.json", "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
    for name, arr in arrays.items():
        datamodel.write_feature_file(out / f"{name}.lsg1", arr)


def load_transforms(in_dir):
    """Load a checkpoint written by save_transforms."""
    src = Path(in_dir)
    with open(src / "header.json") as fh:
        header = json.load(fh)
    arrays = {name: datamodel.load_feature_file(src / f"{name}.lsg1").data
              for name in header["arrays"]}
    nets = {}
    for tag in ("f", "g"):
        sizes = header[tag]["layer_sizes"]
        weights = [arrays[f"{tag}_w{i}"] for i in range(len(sizes) - 1)]
        biases = [arrays[f"{tag}_b{i}"][0] for i in range(len(sizes) - 1)]
        nets[tag] = MlpParams(
            weights, biases,
            apply_final_activation=header[tag]["apply_final_activation"],
        )
    cca = CcaModel(k=header["cca"]["k"], r=header["cca"]["r"])
    if header["cca"]["fitted"]:
        cca.A = arrays["cca_A"]
        cca.B = arrays["cca_B"]
        cca.rho = arrays["cca_rho"][0]
        cca.mean_x = arrays["cca_mean_x"][0]
        cca.mean_y = arrays["cca_mean_y"][0]
    return nets["f"], nets["g"], cca
