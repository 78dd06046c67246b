import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.stats import multivariate_normal, norm

from rivaldoe.criteria import (
    PredictiveSet,
    akaike_design_weights,
    d_aw,
    d_bf,
    d_bh,
    d_hr,
    d_jr,
    evaluate,
    renyi_entropy_gaussian,
    renyi_entropy_mixture,
)
from rivaldoe.exceptions import ContractError


# Straight-line transcriptions used as oracles. They loop over every pair and
# invert matrices explicitly, sharing no code with the implementation.

def oracle_bh(mu, S, w):
    M, E = mu.shape
    total = 0.0
    for i in range(M - 1):
        for j in range(i + 1, M):
            Si, Sj = np.linalg.inv(S[i]), np.linalg.inv(S[j])
            d = mu[i] - mu[j]
            total += w[i] * w[j] * (np.trace(S[i] @ Sj + S[j] @ Si - 2 * np.eye(E))
                                    + d @ (Si + Sj) @ d)
    return total


def oracle_bf(mu, S, noise):
    M = mu.shape[0]
    total = 0.0
    for i in range(M - 1):
        for j in range(i + 1, M):
            A = np.linalg.inv(S[i] + S[j])
            d = mu[i] - mu[j]
            total += np.trace(2 * noise @ A) + d @ A @ d
    return total


def oracle_akaike(mu, S, D):
    M = mu.shape[0]
    w = np.zeros(M)
    for i in range(M):
        Si = np.linalg.inv(S[i])
        w[i] = 1.0 / sum(np.exp(-0.5 * (mu[i] - mu[j]) @ Si @ (mu[i] - mu[j]) + D[i] - D[j])
                         for j in range(M))
    return w


def oracle_phi(fi, fj, Si, Sj):
    Ai, Aj = np.linalg.inv(Si), np.linalg.inv(Sj)
    ft = Ai @ fi + Aj @ fj
    return (fi @ Ai @ fi + fj @ Aj @ fj - ft @ np.linalg.inv(Ai + Aj) @ ft
            + np.log(np.linalg.det(Si)) + np.log(np.linalg.det(Sj))
            + np.log(np.linalg.det(Ai + Aj)))


def oracle_mixture_entropy(mu, S, w):
    # full double sum, no diagonal shortcut
    M, E = mu.shape
    s = sum(w[i] * w[j] / (2 * np.pi) ** (E / 2) * np.exp(-0.5 * oracle_phi(mu[i], mu[j], S[i], S[j]))
            for i in range(M) for j in range(M))
    return -np.log(s)


def oracle_jr(mu, S, w):
    E = mu.shape[1]
    comp = [E / 2 * np.log(4 * np.pi) + 0.5 * np.log(np.linalg.det(S[i])) for i in range(len(w))]
    return oracle_mixture_entropy(mu, S, w) - np.dot(w, comp)


def _random_instance(rng, M, E):
    mu = rng.normal(scale=2.0, size=(M, E))
    A = rng.normal(size=(M, E, E))
    S = A @ np.swapaxes(A, 1, 2) + 0.3 * np.eye(E)
    w = rng.dirichlet(np.ones(M))
    D = rng.integers(1, 5, size=M).astype(float)
    return mu, S, w, D


def _quad_h2(mu, s2, w):
    """-log of the integral of the squared 1-D mixture density."""
    sd = np.sqrt(s2)
    lo, hi = np.min(mu - 12 * sd), np.max(mu + 12 * sd)
    f = lambda g: np.sum(w * norm.pdf(g, mu, sd)) ** 2
    breaks = np.sort(mu)
    val, _ = integrate.quad(f, lo, hi, points=breaks, limit=400, epsabs=1e-14, epsrel=1e-12)
    return -np.log(val)


class TestHunterReiner:
    def test_equal_means(self):
        assert d_hr(PredictiveSet(np.ones((3, 2)), np.tile(np.eye(2), (3, 1, 1)))) == 0.0

    def test_hand_value(self):
        ps = PredictiveSet([[2.0], [0.0]], [[[1.0]], [[5.0]]])
        assert d_hr(ps) == pytest.approx(4.0)

    def test_permutation(self):
        rng = np.random.default_rng(0)
        mu, S, w, D = _random_instance(rng, 4, 2)
        p = rng.permutation(4)
        Q = np.diag([1.0, 3.0])
        assert d_hr(PredictiveSet(mu, S, hr_scaling=Q)) == pytest.approx(
            d_hr(PredictiveSet(mu[p], S[p], hr_scaling=Q)), rel=1e-12)


class TestBoxHill:
    def test_identical(self):
        assert d_bh(PredictiveSet(np.zeros((3, 2)), np.tile(np.eye(2), (3, 1, 1)))) == pytest.approx(0.0, abs=1e-14)

    def test_hand_value(self):
        ps = PredictiveSet([[1.0], [0.0]], [[[1.0]], [[1.0]]], weights=[0.5, 0.5])
        assert d_bh(ps) == pytest.approx(0.5)

    def test_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            mu, S, w, _ = _random_instance(rng, 3, 2)
            ref = oracle_bh(mu, S, w)
            assert d_bh(PredictiveSet(mu, S, weights=w)) == pytest.approx(ref, rel=1e-9, abs=1e-12)

    def test_singular_covariance(self):
        S = np.array([[[1.0, 1.0], [1.0, 1.0]], np.eye(2)])
        with pytest.raises(ContractError):
            d_bh(PredictiveSet(np.zeros((2, 2)), S))


class TestBuzziFerraris:
    def test_baseline_is_one(self):
        s2 = 0.7
        ps = PredictiveSet([[0.0], [0.0]], [[[s2]], [[s2]]])
        assert d_bf(ps, [[s2]]) == pytest.approx(1.0)

    def test_separated_means(self):
        s2, d = 0.7, 1.3
        ps = PredictiveSet([[d], [0.0]], [[[s2]], [[s2]]])
        assert d_bf(ps, [[s2]]) == pytest.approx(1 + d ** 2 / (2 * s2))

    def test_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            mu, S, _, _ = _random_instance(rng, 4, 2)
            noise = np.diag(rng.uniform(0.1, 1.0, 2))
            assert d_bf(PredictiveSet(mu, S), noise) == pytest.approx(
                oracle_bf(mu, S, noise), rel=1e-9)

    def test_consensus_value(self):
        M, S = 4, np.array([[2.0, 0.3], [0.3, 1.0]])
        noise = np.diag([0.5, 0.2])
        ps = PredictiveSet(np.zeros((M, 2)), np.tile(S, (M, 1, 1)))
        expected = M * (M - 1) / 2 * np.trace(noise @ np.linalg.inv(S))
        assert d_bf(ps, noise) == pytest.approx(expected, rel=1e-12)


class TestAkaike:
    def test_uniform_for_identical(self):
        w = akaike_design_weights(PredictiveSet(np.zeros((4, 1)), np.ones((4, 1, 1))))
        np.testing.assert_allclose(w, 0.25)

    def test_parameter_penalty(self):
        ps = PredictiveSet(np.zeros((2, 1)), np.ones((2, 1, 1)), param_counts=[4, 2])
        assert akaike_design_weights(ps)[0] == pytest.approx(1 / (1 + np.e ** 2), abs=1e-5)
        assert akaike_design_weights(ps)[0] == pytest.approx(0.11920, abs=1e-5)

    def test_far_separation(self):
        ps = PredictiveSet([[0.0], [1e4], [-1e4]], np.ones((3, 1, 1)))
        np.testing.assert_allclose(akaike_design_weights(ps), 1.0)

    def test_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            mu, S, w, D = _random_instance(rng, 3, 2)
            ps = PredictiveSet(mu, S, param_counts=D)
            np.testing.assert_allclose(akaike_design_weights(ps), oracle_akaike(mu, S, D), rtol=1e-9)
            assert d_aw(ps, w) == pytest.approx(oracle_akaike(mu, S, D) @ w, rel=1e-12)

    def test_aw_simple_values(self):
        ps = PredictiveSet(np.zeros((3, 1)), np.ones((3, 1, 1)))
        assert d_aw(ps) == pytest.approx(1 / 3)
        assert d_aw(ps, np.zeros(3)) == 0.0


class TestRenyi:
    def test_gaussian_hand_values(self):
        assert renyi_entropy_gaussian([[1 / (4 * np.pi)]]) == pytest.approx(0.0, abs=1e-14)
        assert renyi_entropy_gaussian(np.eye(2)) == pytest.approx(np.log(4 * np.pi))
        assert renyi_entropy_gaussian(np.eye(2)) == pytest.approx(2.53102, abs=1e-5)

    @given(st.floats(0.01, 100.0), st.integers(1, 3))
    def test_scaling(self, c, E):
        S = np.eye(E) + 0.2 * np.ones((E, E))
        diff = renyi_entropy_gaussian(c * S) - renyi_entropy_gaussian(S)
        assert diff == pytest.approx(E / 2 * np.log(c), abs=1e-10)

    def test_non_pd(self):
        with pytest.raises(ContractError):
            renyi_entropy_gaussian([[1.0, 2.0], [2.0, 1.0]])

    def test_mixture_single_component(self):
        S = np.array([[[1.5, 0.2], [0.2, 0.4]]])
        ps = PredictiveSet(np.array([[0.3, 1.0]]), S)
        assert renyi_entropy_mixture(ps) == pytest.approx(renyi_entropy_gaussian(S[0]), abs=1e-12)

    def test_mixture_identical_components(self):
        S = np.tile([[1.5, 0.2], [0.2, 0.4]], (2, 1, 1))
        ps = PredictiveSet(np.ones((2, 2)), S, weights=[0.5, 0.5])
        assert renyi_entropy_mixture(ps) == pytest.approx(renyi_entropy_gaussian(S[0]), abs=1e-10)

    def test_mixture_vs_quadrature(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            mu = rng.normal(scale=3.0, size=3)
            s2 = rng.uniform(0.2, 2.0, 3)
            w = rng.dirichlet(np.ones(3))
            ps = PredictiveSet(mu[:, None], s2[:, None, None], weights=w)
            assert renyi_entropy_mixture(ps) == pytest.approx(_quad_h2(mu, s2, w), abs=1e-6)

    def test_mixture_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            mu, S, w, _ = _random_instance(rng, 3, 2)
            assert renyi_entropy_mixture(PredictiveSet(mu, S, weights=w)) == pytest.approx(
                oracle_mixture_entropy(mu, S, w), rel=1e-9)

    def test_far_apart_components_do_not_underflow(self):
        ps = PredictiveSet([[0.0], [1e5]], [[[1e-3]], [[1e-3]]])
        val = renyi_entropy_mixture(ps)
        # cross term vanishes; entropy is that of the diagonal terms only
        expected = 0.5 * np.log(2 * np.pi) - np.log(2 * 0.25 / (np.sqrt(2) * np.sqrt(1e-3)))
        assert val == pytest.approx(expected, rel=1e-12)


class TestJensenRenyi:
    def test_identical_components(self):
        S = np.tile([[1.0, 0.1], [0.1, 0.5]], (3, 1, 1))
        assert d_jr(PredictiveSet(np.zeros((3, 2)), S)) == pytest.approx(0.0, abs=1e-10)

    def test_degenerate_weights(self):
        rng = np.random.default_rng(6)
        mu, S, _, _ = _random_instance(rng, 3, 2)
        assert d_jr(PredictiveSet(mu, S, weights=[1.0, 0.0, 0.0])) == pytest.approx(0.0, abs=1e-9)

    def test_two_unit_gaussians_vs_quadrature(self):
        mu, s2, w = np.array([0.0, 4.0]), np.ones(2), np.array([0.5, 0.5])
        ref = _quad_h2(mu, s2, w) - 0.5 * np.log(4 * np.pi)
        ps = PredictiveSet(mu[:, None], s2[:, None, None], weights=w)
        assert d_jr(ps) == pytest.approx(ref, abs=1e-6)

    def test_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            mu, S, w, _ = _random_instance(rng, 4, 2)
            assert d_jr(PredictiveSet(mu, S, weights=w)) == pytest.approx(
                oracle_jr(mu, S, w), rel=1e-9, abs=1e-12)

    def test_two_dimensional_quadrature(self):
        rng = np.random.default_rng(8)
        mu, S, w, _ = _random_instance(rng, 3, 2)
        S = S * 0.5
        comps = [multivariate_normal(mu[i], S[i]) for i in range(3)]
        sd = np.sqrt(np.max(np.diagonal(S, axis1=1, axis2=2)))
        lo, hi = mu.min(0) - 9 * sd, mu.max(0) + 9 * sd
        n = 801
        g1, g2 = np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n)
        G = np.stack(np.meshgrid(g1, g2, indexing="ij"), axis=-1)
        dens = sum(w[i] * comps[i].pdf(G) for i in range(3))
        integral = integrate.simpson(integrate.simpson(dens ** 2, x=g2, axis=1), x=g1)
        comp_h = [renyi_entropy_gaussian(S[i]) for i in range(3)]
        ref = -np.log(integral) - np.dot(w, comp_h)
        assert d_jr(PredictiveSet(mu, S, weights=w)) == pytest.approx(ref, abs=1e-5)

    def test_nonnegative_on_random_suite(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            M, E = rng.integers(2, 5), rng.integers(1, 3)
            mu, S, w, _ = _random_instance(rng, M, E)
            assert d_jr(PredictiveSet(mu, S, weights=w)) >= -1e-8


@st.composite
def instances(draw):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    M = draw(st.integers(2, 4))
    E = draw(st.integers(1, 3))
    return _random_instance(np.random.default_rng(seed), M, E)


class TestProperties:
    @settings(max_examples=50, deadline=None)
    @given(instances(), st.randoms(use_true_random=False))
    def test_permutation_symmetry(self, inst, rnd):
        mu, S, w, D = inst
        p = np.array(rnd.sample(range(len(w)), len(w)))
        noise = 0.1 * np.eye(mu.shape[1])
        a = PredictiveSet(mu, S, weights=w, param_counts=D)
        b = PredictiveSet(mu[p], S[p], weights=w[p], param_counts=D[p])
        for name in ("HR", "BH", "BF", "JR"):
            assert evaluate(name, a, noise) == pytest.approx(evaluate(name, b, noise), rel=1e-9, abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(instances())
    def test_batch_matches_single(self, inst):
        mu, S, w, D = inst
        mu2 = mu + 1.0
        noise = 0.1 * np.eye(mu.shape[1])
        batch = PredictiveSet(np.stack([mu, mu2]), np.stack([S, S]), weights=w, param_counts=D)
        for name in ("HR", "BH", "BF", "AW", "JR"):
            got = evaluate(name, batch, noise)
            for k, m in enumerate((mu, mu2)):
                single = evaluate(name, PredictiveSet(m, S, weights=w, param_counts=D), noise)
                assert got[k] == pytest.approx(single, rel=1e-12, abs=1e-14)

    @settings(max_examples=30, deadline=None)
    @given(instances())
    def test_inactive_model_is_dropped(self, inst):
        mu, S, w, D = inst
        M = len(w)
        mask = np.ones(M, dtype=bool)
        mask[0] = False
        masked = PredictiveSet(mu, S, weights=w, param_counts=D, active=mask)
        rest = w[1:] / w[1:].sum()
        reduced = PredictiveSet(mu[1:], S[1:], weights=rest, param_counts=D[1:])
        for name in ("HR", "BH", "JR", "AW"):
            assert evaluate(name, masked) == pytest.approx(evaluate(name, reduced), rel=1e-12, abs=1e-14)


class TestAggregation:
    """Four-model construction with two aggregated pairs at low u."""

    @staticmethod
    def _grid_predictions(u, k=3.0):
        f1 = np.zeros_like(u)
        f2 = 4 * k * u * (1 - u)
        f3 = 4 * k * (1 - u)
        f4 = f3 + f2
        mu = np.stack([f1, f2, f3, f4], axis=1)[..., None]
        S = np.ones((len(u), 4, 1, 1))
        return PredictiveSet(mu, S)

    def test_argmax_ordering(self):
        u = np.linspace(0.0, 1.0, 401)
        ps = self._grid_predictions(u)
        noise = np.ones((1, 1))
        arg = {name: u[np.argmax(evaluate(name, ps, noise))] for name in ("BH", "BF", "AW", "JR")}
        assert arg["BH"] < 0.1 and arg["BF"] < 0.1
        for name in ("AW", "JR"):
            assert 0.2 < arg[name] < 0.8
            assert arg[name] > max(arg["BH"], arg["BF"])


class TestValidation:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ContractError):
            PredictiveSet(np.zeros((2, 1)), np.ones((2, 1, 1)), weights=[0.3, 0.3])

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            PredictiveSet(np.zeros((2, 2)), np.ones((2, 1, 1)))

    def test_unknown_name(self):
        with pytest.raises(ContractError):
            evaluate("XX", PredictiveSet(np.zeros((2, 1)), np.ones((2, 1, 1))))
