import numpy as np
import pytest
import scipy.linalg

from topicseg.dcca import (
    CcaModel,
    DccaConfig,
    cca_signal,
    correlation_objective,
    dcca_train,
    init_mlp,
    linear_cca_fit,
    load_transforms,
    mlp_apply,
    save_transforms,
    _mlp_backward,
    _mlp_forward,
)
from topicseg.errors import DataError, DimensionError, NotFittedError


def coupled_pair(n=400, dv=6, dl=4, noise=0.01, seed=42):
    """Synthetic views with known nonlinear coupling L = tanh(V W^T) + eps."""
    rng = np.random.default_rng(seed)
    V = rng.normal(size=(n, dv))
    W = rng.normal(size=(dl, dv)) / np.sqrt(dv)
    L = np.tanh(V @ W.T) + noise * rng.normal(size=(n, dl))
    return V, L


def eigenproblem_rho(X, Y, k, r):
    """Oracle: canonical correlations from the generalized eigenproblem
    S12 S22^-1 S21 a = rho^2 S11 a, solved by a dense eigensolver."""
    n = X.shape[0]
    Xc = X - X.mean(axis=0)
    Yc = Y - Y.mean(axis=0)
    S11 = Xc.T @ Xc / (n - 1) + r * np.eye(X.shape[1])
    S22 = Yc.T @ Yc / (n - 1) + r * np.eye(Y.shape[1])
    S12 = Xc.T @ Yc / (n - 1)
    M = S12 @ np.linalg.solve(S22, S12.T)
    vals = scipy.linalg.eigh(M, S11, eigvals_only=True)
    vals = np.sqrt(np.clip(vals, 0.0, None))
    return np.sort(vals)[::-1][:k]


class TestLinearCca:
    def test_self_correlation(self, rng):
        X = rng.normal(size=(100, 4))
        model = linear_cca_fit(X, X, k=2, r=1e-6)
        assert np.all(np.abs(model.rho - 1.0) < 1e-3)

    def test_orthogonal_invariance(self, rng):
        X = rng.normal(size=(100, 4))
        Q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
        base = linear_cca_fit(X, X, k=2, r=1e-6)
        rotated = linear_cca_fit(X, X @ Q, k=2, r=1e-6)
        np.testing.assert_allclose(rotated.rho, base.rho, atol=1e-6)

    def test_matches_generalized_eigenproblem_oracle(self, rng):
        X = rng.normal(size=(200, 2))
        Y = 0.6 * X @ rng.normal(size=(2, 2)) + 0.4 * rng.normal(size=(200, 2))
        model = linear_cca_fit(X, Y, k=2, r=1e-4)
        np.testing.assert_allclose(model.rho, eigenproblem_rho(X, Y, 2, 1e-4), atol=1e-8)

    def test_rho_range_and_order(self, rng):
        for _ in range(5):
            X = rng.normal(size=(60, 5))
            Y = rng.normal(size=(60, 3))
            model = linear_cca_fit(X, Y, k=3, r=1e-4)
            assert np.all(model.rho >= 0.0) and np.all(model.rho <= 1.0 + 1e-8)
            assert np.all(np.diff(model.rho) <= 1e-12)

    def test_dimension_errors(self, rng):
        X = rng.normal(size=(3, 4))
        with pytest.raises(DimensionError):
            linear_cca_fit(X, X, k=3, r=1e-4)  # n <= k
        with pytest.raises(DataError):
            linear_cca_fit(rng.normal(size=(10, 2)), rng.normal(size=(10, 2)), k=1, r=0.0)


class TestMlp:
    def test_zero_params(self):
        from topicseg.dcca import MlpParams
        p = MlpParams([np.zeros((3, 2))], [np.zeros(2)])
        out = mlp_apply(p, np.ones((4, 3)))
        np.testing.assert_array_equal(out, np.zeros((4, 2)))

    def test_identity_layer_is_tanh(self, rng):
        from topicseg.dcca import MlpParams
        p = MlpParams([np.eye(3)], [np.zeros(3)])
        X = rng.normal(size=(5, 3))
        np.testing.assert_allclose(mlp_apply(p, X), np.tanh(X), rtol=0, atol=0)

    def test_matches_per_row_oracle(self, rng):
        p = init_mlp((4, 6, 3), rng, apply_final_activation=False)
        X = rng.normal(size=(7, 4))
        got = mlp_apply(p, X)
        for i, row in enumerate(X):
            h = np.tanh(row @ p.weights[0] + p.biases[0])
            h = h @ p.weights[1] + p.biases[1]
            np.testing.assert_allclose(got[i], h, atol=1e-12)

    def test_dimension_mismatch(self, rng):
        p = init_mlp((4, 2), rng)
        with pytest.raises(DimensionError):
            mlp_apply(p, np.zeros((3, 5)))


class TestCcaSignal:
    def model2d(self):
        return CcaModel(
            k=2,
            A=np.eye(2),
            B=np.eye(2),
            rho=np.array([0.9, 0.8]),
            mean_x=np.zeros(2),
            mean_y=np.zeros(2),
        )

    def test_equal_projections(self):
        got = cca_signal(self.model2d(), np.array([1.0, 2.0]), np.array([1.0, 2.0]))
        assert abs(got - 1.0) < 1e-12

    def test_zero_projection(self):
        assert cca_signal(self.model2d(), np.zeros(2), np.array([1.0, 0.0])) == 0.0

    def test_hand_computed_cosine(self):
        # projections (1, 0) and (1, 1): cos = 1/sqrt(2)
        got = cca_signal(self.model2d(), np.array([1.0, 0.0]), np.array([1.0, 1.0]))
        assert abs(got - 1.0 / np.sqrt(2.0)) < 1e-12

    def test_unfitted(self):
        with pytest.raises(NotFittedError):
            cca_signal(CcaModel(k=2), np.zeros(2), np.zeros(2))


class TestDccaTrain:
    CFG = dict(hidden_v=(8,), hidden_l=(8,), k=2, r=1e-3, lr=1e-2, seed=1)

    def test_zero_epochs_returns_init(self):
        V, L = coupled_pair()
        cfg = DccaConfig(epochs=0, **self.CFG)
        f, g, trace = dcca_train(V, L, cfg)
        assert trace == []
        rng = np.random.default_rng(cfg.seed)
        f0 = init_mlp((V.shape[1], 8, 2), rng, apply_final_activation=False)
        g0 = init_mlp((L.shape[1], 8, 2), rng, apply_final_activation=False)
        for a, b in zip(f.weights + g.weights, f0.weights + g0.weights):
            np.testing.assert_array_equal(a, b)

    def test_coupled_pair_reaches_high_correlation(self):
        V, L = coupled_pair()
        cfg = DccaConfig(epochs=300, **self.CFG)
        f, g, trace = dcca_train(V, L, cfg)
        corr, _, _ = correlation_objective(mlp_apply(f, V), mlp_apply(g, L), cfg.r)
        assert corr >= 0.9 * cfg.k

    def test_permutation_null_low_correlation(self):
        V, L = coupled_pair(n=1500)
        rng = np.random.default_rng(3)
        Lshuf = L[rng.permutation(len(L))]
        cfg = DccaConfig(epochs=100, **self.CFG)
        f, g, _ = dcca_train(V, Lshuf, cfg)
        corr, _, _ = correlation_objective(mlp_apply(f, V), mlp_apply(g, Lshuf), cfg.r)
        assert corr / cfg.k <= 0.3

    def test_monotone_trend(self):
        V, L = coupled_pair()
        cfg = DccaConfig(epochs=150, **self.CFG)
        _, _, trace = dcca_train(V, L, cfg)
        assert trace[-1] >= trace[0]
        peak = 0.0
        for prev, cur in zip(trace, trace[1:]):
            peak = max(peak, prev)
            assert cur >= prev - 0.05 * max(peak, 1e-9)

    def test_deterministic(self):
        V, L = coupled_pair(n=80)
        cfg = DccaConfig(epochs=5, **self.CFG)
        f1, g1, t1 = dcca_train(V, L, cfg)
        f2, g2, t2 = dcca_train(V, L, cfg)
        assert t1 == t2
        for a, b in zip(f1.weights + g1.weights, f2.weights + g2.weights):
            np.testing.assert_array_equal(a, b)

    def test_gradient_check(self):
        # Central finite differences over every weight and bias.  Output-layer
        # biases have exactly zero gradient (the objective centers its inputs),
        # so the error ratio needs an absolute floor against fp noise.
        rng = np.random.default_rng(7)
        V = rng.normal(size=(10, 3))
        L = rng.normal(size=(10, 3))
        f = init_mlp((3, 4, 2), rng, apply_final_activation=False)
        g = init_mlp((3, 4, 2), rng, apply_final_activation=False)
        r = 1e-2

        def objective():
            return correlation_objective(mlp_apply(f, V), mlp_apply(g, L), r)[0]

        acts_f = _mlp_forward(f, V)
        acts_g = _mlp_forward(g, L)
        _, G1, G2 = correlation_objective(acts_f[-1], acts_g[-1], r)
        gw_f, gb_f = _mlp_backward(f, acts_f, G1)
        gw_g, gb_g = _mlp_backward(g, acts_g, G2)

        h = 1e-5
        worst = 0.0
        for params, gws, gbs in ((f, gw_f, gb_f), (g, gw_g, gb_g)):
            for arrs, grads in ((params.weights, gws), (params.biases, gbs)):
                for arr, grad in zip(arrs, grads):
                    it = np.nditer(arr, flags=["multi_index"])
                    for _ in it:
                        ix = it.multi_index
                        orig = arr[ix]
                        arr[ix] = orig + h
                        cp = objective()
                        arr[ix] = orig - h
                        cm = objective()
                        arr[ix] = orig
                        num = (cp - cm) / (2 * h)
                        rel = abs(grad[ix] - num) / max(abs(grad[ix]) + abs(num), 1e-6)
                        worst = max(worst, rel)
        assert worst < 1e-4

    def test_precondition_errors(self):
        V, L = coupled_pair(n=30)
        with pytest.raises(DimensionError):
            dcca_train(V[:10], L, DccaConfig(epochs=1, **self.CFG))
        with pytest.raises(DimensionError):
            dcca_train(V, L, DccaConfig(hidden_v=(8,), hidden_l=(8,), k=2, r=1e-3,
                                        lr=1e-2, epochs=1, seed=0, batch=30))


class TestCheckpoint:
    def test_roundtrip(self, tmp_path, rng):
        V, L = coupled_pair(n=60)
        cfg = DccaConfig(hidden_v=(5,), hidden_l=(5,), k=2, r=1e-3, lr=1e-2,
                         epochs=3, seed=9)
        f, g, _ = dcca_train(V, L, cfg)
        cca = linear_cca_fit(mlp_apply(f, V), mlp_apply(g, L), k=2, r=cfg.r)
        save_transforms(tmp_path / "ckpt", f, g, cca, meta={"seed": 9})
        f2, g2, cca2 = load_transforms(tmp_path / "ckpt")
        x = rng.normal(size=(4, V.shape[1]))
        np.testing.assert_allclose(mlp_apply(f2, x), mlp_apply(f, x), atol=1e-6)
        np.testing.assert_allclose(cca2.rho, cca.rho, atol=1e-6)
        v, l = mlp_apply(f, V)[0], mlp_apply(g, L)[0]
        assert abs(cca_signal(cca2, v, l) - cca_signal(cca, v, l)) < 1e-6
