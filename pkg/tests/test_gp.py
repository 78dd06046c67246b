import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rivaldoe.exceptions import ContractError
from rivaldoe.gp import (
    GaussianProcess,
    GPTrainingSet,
    KernelParams,
    gp_fit,
    gp_predict,
    gp_predict_derivatives,
    kernel_derivatives,
    kernel_eval,
    kernel_matrix,
    log_marginal_likelihood,
    predict_batch,
    sparse_fit,
)


def _fd_grad(f, z, h):
    g = np.zeros(len(z))
    for i in range(len(z)):
        e = np.zeros(len(z))
        e[i] = h
        g[i] = (f(z + e) - f(z - e)) / (2 * h)
    return g


def _fd_hess(f, z, h):
    n = len(z)
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = h
            ej[j] = h
            H[i, j] = (f(z + ei + ej) - f(z + ei - ej) - f(z - ei + ej)
                       + f(z - ei - ej)) / (4 * h * h)
    return H


def _rel(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


class TestKernel:
    def test_zero_distance_gives_signal_variance(self):
        k = KernelParams(1.0, [0.3, 2.0])
        assert kernel_eval(k, [0.4, -1.0], [0.4, -1.0]) == 1.0

    def test_hand_value(self):
        k = KernelParams(2.0, [1.0])
        assert kernel_eval(k, [0.0], [np.sqrt(2.0)]) == pytest.approx(2 * np.exp(-1), abs=1e-12)
        assert kernel_eval(k, [0.0], [np.sqrt(2.0)]) == pytest.approx(0.735759, abs=1e-6)

    @settings(max_examples=50, deadline=None)
    @given(arrays(float, 3, elements=st.floats(-5, 5)), arrays(float, 3, elements=st.floats(-5, 5)),
           arrays(float, 3, elements=st.floats(0.05, 5)))
    def test_symmetry(self, z, z2, ls):
        k = KernelParams(1.7, ls)
        assert kernel_eval(k, z, z2) == kernel_eval(k, z2, z)

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            kernel_eval(KernelParams(1.0, [1.0, 1.0]), [0.0], [1.0])

    def test_gradient_zero_and_hessian_at_reference(self):
        k = KernelParams(1.5, [0.5, 2.0])
        g, H = kernel_derivatives(k, [0.1, 0.2], [0.1, 0.2])
        np.testing.assert_array_equal(g, 0.0)
        np.testing.assert_allclose(H, -1.5 * np.diag(1 / np.array([0.25, 4.0])))

    def test_derivatives_vs_finite_differences(self):
        k = KernelParams(1.0, [1.0])
        g, _ = kernel_derivatives(k, [0.0], [1.0])
        fd = _fd_grad(lambda z: kernel_eval(k, [0.0], z), np.array([1.0]), 1e-6)
        assert _rel(g, fd) < 1e-5
        assert g[0] == pytest.approx(-np.exp(-0.5))
        rng = np.random.default_rng(0)
        for _ in range(10):
            k = KernelParams(rng.uniform(0.5, 2), rng.uniform(0.3, 2, 3))
            zr, z = rng.normal(size=3), rng.normal(size=3)
            g, H = kernel_derivatives(k, zr, z)
            f = lambda v: kernel_eval(k, zr, v)
            assert _rel(g, _fd_grad(f, z, 1e-6)) < 1e-5
            assert _rel(H, _fd_hess(f, z, 1e-4)) < 1e-5
            np.testing.assert_allclose(H, H.T)

    def test_gram_psd_on_random_inputs(self):
        rng = np.random.default_rng(3)
        k = KernelParams(1.0, [0.4, 0.7], 1e-6)
        X = rng.uniform(size=(60, 2))
        K = kernel_matrix(k, X, X) + k.noise_variance * np.eye(60)
        assert np.linalg.eigvalsh(K).min() >= -1e-12


def _sine_training(n=20, seed=0):
    z = np.linspace(0, 2 * np.pi, n)[:, None]
    return GPTrainingSet(z, np.sin(z[:, 0]))


class TestFit:
    def test_single_point_interpolation(self):
        tr = GPTrainingSet([[0.3]], [1.7])
        gp = gp_fit(tr, KernelParams(1.0, [0.5], 0.0),
                    {"signal_variance": "fixed", "length_scales": "fixed",
                     "noise_variance": "fixed"}, input_bounds=[[0, 1]], normalize_y=False)
        m, v = gp_predict(gp, [0.3])
        assert m == pytest.approx(1.7, abs=1e-8)
        assert abs(v) < 1e-8

    def test_optimisation_improves_marginal_likelihood(self):
        tr = _sine_training()
        init = KernelParams(1.0, [0.5], 1e-2)
        before = log_marginal_likelihood(tr, init)
        gp = gp_fit(tr, init, random_state=0)
        assert gp.log_marginal_likelihood > before

    def test_calibration_on_held_out_points(self):
        gp = gp_fit(_sine_training(), random_state=1)
        zt = np.random.default_rng(5).uniform(0, 2 * np.pi, 100)
        m, v = predict_batch(gp, zt[:, None])
        inside = np.abs(m - np.sin(zt)) <= 2 * np.sqrt(np.maximum(v, 0)) + 1e-12
        assert inside.mean() >= 0.95

    def test_init_outside_bounds_rejected(self):
        with pytest.raises(ContractError):
            gp_fit(_sine_training(), KernelParams(100.0, [0.5], 1e-3),
                   {"signal_variance": (0.1, 10), "length_scales": [(0.01, 1)],
                    "noise_variance": (1e-8, 1)})

    def test_duplicate_rows_rejected(self):
        with pytest.raises(ContractError):
            gp_fit(GPTrainingSet([[0.1], [0.1], [0.5]], [1.0, 1.0, 2.0]))


def _fixed_gp(X, y, kernel, **kw):
    fixed = {"signal_variance": "fixed", "length_scales": "fixed", "noise_variance": "fixed"}
    return gp_fit(GPTrainingSet(X, y, kw.pop("prior_mean", 0.0)), kernel, fixed, **kw)


class TestPredict:
    def test_noiseless_interpolation_at_training_inputs(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(size=(15, 2))
        y = np.cos(3 * X[:, 0]) + X[:, 1] ** 2
        gp = _fixed_gp(X, y, KernelParams(1.0, [0.4, 0.4], 0.0), input_bounds=[[0, 1]] * 2)
        m, v = predict_batch(gp, X)
        np.testing.assert_allclose(m, y, atol=1e-6)
        np.testing.assert_allclose(v, 0.0, atol=1e-8)

    def test_far_point_reverts_to_prior(self):
        X = np.array([[0.1], [0.4], [0.9]])
        gp = _fixed_gp(X, [1.0, -2.0, 0.5], KernelParams(1.3, [0.2], 1e-3),
                       input_bounds=[[0, 1]], normalize_y=False, prior_mean=0.7)
        m, v = gp_predict(gp, [0.9 + 20 * 0.2 + 1.0])
        assert m == pytest.approx(0.7, rel=1e-6)
        assert v == pytest.approx(1.3, rel=1e-6)

    def test_single_pair_closed_form(self):
        k = KernelParams(1.4, [0.3], 0.2)
        gp = _fixed_gp([[0.2]], [2.0], k, input_bounds=[[0, 1]], normalize_y=False)
        for z in (0.0, 0.35, 0.9):
            expected = kernel_eval(k, [z], [0.2]) * 2.0 / (1.4 + 0.2)
            # baseline jitter perturbs the solve at the 1e-10 level
            assert gp_predict(gp, [z])[0] == pytest.approx(expected, rel=1e-9)

    def test_variance_bounds(self):
        gp = gp_fit(_sine_training(), random_state=0)
        z = np.linspace(-1, 8, 300)[:, None]
        _, v = predict_batch(gp, z)
        prior = gp.kernel.signal_variance * gp.y_scale**2
        assert v.min() >= -1e-9
        assert v.max() <= prior + 1e-9

    def test_dimension_mismatch(self):
        gp = gp_fit(_sine_training(), random_state=0)
        with pytest.raises(ContractError):
            gp_predict(gp, [0.1, 0.2])


def _random_gp(rng, D=3, N=12, noise=1e-3):
    X = rng.uniform(-1, 2, size=(N, D))
    y = np.sin(X @ rng.normal(size=D)) + 0.3 * X[:, 0] ** 2
    k = KernelParams(rng.uniform(0.5, 2), rng.uniform(0.4, 1.0, D), noise)
    return _fixed_gp(X, y, k, input_bounds=[[-1, 2]] * D)


class TestDerivatives:
    def test_against_finite_differences(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            gp = _random_gp(rng)
            z = rng.uniform(-1, 2, 3)
            dm, dv, d2m, d2v = gp_predict_derivatives(gp, z)
            mean = lambda v: gp_predict(gp, v)[0]
            var = lambda v: gp_predict(gp, v)[1]
            assert _rel(dm, _fd_grad(mean, z, 1e-5)) < 1e-5
            assert _rel(dv, _fd_grad(var, z, 1e-5)) < 1e-5
            assert _rel(d2m, _fd_hess(mean, z, 1e-4)) < 1e-5
            assert _rel(d2v, _fd_hess(var, z, 1e-4)) < 1e-5
            np.testing.assert_allclose(d2m, d2m.T)
            np.testing.assert_allclose(d2v, d2v.T)

    def test_active_dims_subset(self):
        gp = _random_gp(np.random.default_rng(2))
        z = np.array([0.3, 0.1, 1.2])
        full = gp_predict_derivatives(gp, z)
        sub = gp_predict_derivatives(gp, z, active_dims=[2, 0])
        np.testing.assert_allclose(sub[0], full[0][[2, 0]])
        np.testing.assert_allclose(sub[3], full[3][np.ix_([2, 0], [2, 0])])

    def test_variance_gradient_vanishes_at_training_input(self):
        X = np.array([[0.1, 0.2], [0.5, 0.9], [0.8, 0.3]])
        gp = _fixed_gp(X, [1.0, 0.0, -1.0], KernelParams(1.0, [0.5, 0.5], 0.0),
                       input_bounds=[[0, 1]] * 2)
        _, dv, _, _ = gp_predict_derivatives(gp, X[1])
        np.testing.assert_allclose(dv, 0.0, atol=1e-7)

    def test_zero_targets_give_zero_mean_derivatives(self):
        X = np.random.default_rng(0).uniform(size=(6, 2))
        gp = _fixed_gp(X, np.zeros(6), KernelParams(1.0, [0.5, 0.5], 1e-3),
                       input_bounds=[[0, 1]] * 2, normalize_y=False)
        dm, _, d2m, _ = gp_predict_derivatives(gp, [0.3, 0.4])
        np.testing.assert_array_equal(dm, 0.0)
        np.testing.assert_array_equal(d2m, 0.0)


class TestSparse:
    def test_full_inducing_set_matches_full_gp(self):
        rng = np.random.default_rng(4)
        X = rng.uniform(size=(30, 2))
        tr = GPTrainingSet(X, np.sin(4 * X[:, 0]) * X[:, 1])
        k = KernelParams(1.0, [0.3, 0.4], 1e-3)
        fixed = {"signal_variance": "fixed", "length_scales": "fixed", "noise_variance": "fixed"}
        full = gp_fit(tr, k, fixed, input_bounds=[[0, 1]] * 2)
        sp = sparse_fit(tr, k, 30, fixed, input_bounds=[[0, 1]] * 2)
        Zt = rng.uniform(size=(20, 2))
        mf, vf = predict_batch(full, Zt)
        ms, vs = predict_batch(sp, Zt)
        np.testing.assert_allclose(ms, mf, rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(vs, vf, rtol=1e-6, atol=1e-9)

    def test_half_inducing_set_accuracy(self):
        rng = np.random.default_rng(8)
        f = lambda X: np.sin(3 * X[:, 0]) + np.cos(2 * X[:, 1])
        X = rng.uniform(size=(200, 2))
        tr = GPTrainingSet(X, f(X))
        full = gp_fit(tr, input_bounds=[[0, 1]] * 2, random_state=0)
        sp = sparse_fit(tr, None, 100, input_bounds=[[0, 1]] * 2, random_state=0)
        Zt = rng.uniform(size=(100, 2))
        mf, _ = predict_batch(full, Zt)
        ms, vs = predict_batch(sp, Zt)
        full_rmse = np.sqrt(np.mean((mf - f(Zt)) ** 2))
        diff_rmse = np.sqrt(np.mean((ms - mf) ** 2))
        assert diff_rmse <= 5 * full_rmse
        assert vs.min() >= -1e-9

    def test_sparse_derivatives_vs_finite_differences(self):
        rng = np.random.default_rng(6)
        X = rng.uniform(size=(40, 2))
        tr = GPTrainingSet(X, np.sin(3 * X[:, 0]) + X[:, 1])
        sp = sparse_fit(tr, KernelParams(1.0, [0.4, 0.5], 1e-2), 12,
                        {"signal_variance": "fixed", "length_scales": "fixed",
                         "noise_variance": "fixed"}, input_bounds=[[0, 1]] * 2)
        z = np.array([0.4, 0.6])
        dm, dv, d2m, d2v = gp_predict_derivatives(sp, z)
        var = lambda v: gp_predict(sp, v)[1]
        mean = lambda v: gp_predict(sp, v)[0]
        assert _rel(dm, _fd_grad(mean, z, 1e-5)) < 1e-5
        assert _rel(dv, _fd_grad(var, z, 1e-5)) < 1e-5
        assert _rel(d2v, _fd_hess(var, z, 1e-4)) < 1e-5

    def test_too_many_inducing_points(self):
        with pytest.raises(ContractError):
            sparse_fit(GPTrainingSet([[0.0], [1.0]], [0.0, 1.0]), None, 3)


class TestEstimator:
    def test_fit_predict_and_params(self):
        X = np.linspace(0, 1, 15)[:, None]
        est = GaussianProcess(random_state=0, n_restarts=2).fit(X, np.sin(6 * X[:, 0]))
        assert est.get_params()["n_restarts"] == 2
        m, s = est.predict([[0.5]], return_std=True)
        assert abs(m[0] - np.sin(3.0)) < 0.05
        assert est.score(X, np.sin(6 * X[:, 0])) > 0.99

    def test_clone_compatible(self):
        from sklearn.base import clone
        est = GaussianProcess(n_inducing=5, noise_variance=1e-3)
        c = clone(est)
        assert c.get_params() == est.get_params()
