import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hpm.assembly import JointCovariance, assemble
from hpm.datagen.fields import make_pair
from hpm.datagen.solvers import solve_burgers
from hpm.errors import InvalidInputError, TrainingFailedError
from hpm.inference import (
    Objective,
    ParamLayout,
    ParamVector,
    TrainConfig,
    nlml,
    nlml_grad,
    nlml_terms,
    train,
)
from hpm.kernels import ArdSeKernelParams
from hpm.models import FAMILIES, ModelSpec, SnapshotPair

LOG2PI = math.log(2 * math.pi)


def random_spd(rng, n):
    A = rng.normal(size=(n, n))
    return A @ A.T + n * 0.1 * np.eye(n)


# ---------------------------------------------------------------- nlml

def test_nlml_scalar_closed_form():
    g2, s2, h0 = 1.7, 0.2, 0.9
    cov = JointCovariance(np.array([[g2 + s2]]), [("u", 0, 1)])
    expect = 0.5 * h0**2 / (g2 + s2) + 0.5 * math.log(g2 + s2) + 0.5 * LOG2PI
    assert nlml(cov, [h0]) == pytest.approx(expect, rel=1e-9)


def test_nlml_against_dense_inverse():
    rng = np.random.default_rng(0)
    for _ in range(50):
        K = random_spd(rng, 5)
        h = rng.normal(size=5)
        ref = 0.5 * h @ np.linalg.inv(K) @ h + 0.5 * math.log(np.linalg.det(K)) + 2.5 * LOG2PI
        got = nlml(JointCovariance(K, [("u", 0, 5)]), h)
        assert abs(got - ref) <= 1e-10


def test_nlml_zero_data_is_complexity_only():
    K = random_spd(np.random.default_rng(1), 4)
    cov = JointCovariance(K, [("u", 0, 4)])
    fit, cplx, const = nlml_terms(cov, np.zeros(4))
    assert fit == 0.0
    assert cplx == pytest.approx(0.5 * math.log(np.linalg.det(K)), rel=1e-8)
    assert const == pytest.approx(2 * LOG2PI)


def test_nlml_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        nlml(JointCovariance(np.eye(3), [("u", 0, 3)]), np.zeros(2))


def test_nlml_degenerate_is_infinite():
    assert nlml(JointCovariance(-np.eye(2), [("u", 0, 2)]), np.zeros(2)) == math.inf


def test_inflating_gamma_increases_complexity():
    rng = np.random.default_rng(2)
    x = np.sort(rng.uniform(-2, 2, 8))
    pair = SnapshotPair(x, np.sin(x), x + 0.05, np.sin(x + 0.05), 0.1)
    model = ModelSpec("burgers", (1.0, 0.1))
    for g in (0.3, 1.0, 2.0):
        small = nlml_terms(assemble(model, [ArdSeKernelParams(g, (1.0,))], 1e-3, pair), pair.stacked())
        big = nlml_terms(assemble(model, [ArdSeKernelParams(10 * g, (1.0,))], 1e-3, pair), pair.stacked())
        assert big[1] > small[1]
        assert sum(small) == pytest.approx(nlml(assemble(model, [ArdSeKernelParams(g, (1.0,))], 1e-3, pair), pair.stacked()))


# ---------------------------------------------------------------- parameters

def test_layouts():
    lay = ParamLayout.for_model(ModelSpec("ns2d", (1.0, 0.01)))
    assert lay.names == ("gamma0", "w0_0", "w0_1", "gamma1", "w1_0", "w1_1", "lambda1", "lambda2", "sigma2")
    lay = ParamLayout.for_model(ModelSpec("fractional_rl", (0.5, 2.0)))
    assert lay.tags[3] == "bounded_sigmoid(0,2.5)"
    assert lay.tags[2] == "identity"


@pytest.mark.parametrize("family", sorted(FAMILIES))
@given(data=st.data())
def test_param_round_trip(family, data):
    model = ModelSpec(family, FAMILIES[family].true_lambda)
    lay = ParamLayout.for_model(model)
    pos = st.floats(1e-3, 1e3)
    thetas = [ArdSeKernelParams(data.draw(pos), tuple(data.draw(pos) for _ in range(model.dim)))
              for _ in range(2 if family in ("nls", "ns2d") else 1)]
    bound = 2.5 if family == "fractional_rl" else 2.0
    lam = [data.draw(st.floats(0.01, bound - 0.01)) if i in model.info.order_indices
           else data.draw(st.floats(-50, 50)) for i in range(model.info.n_lambda)]
    s2 = data.draw(pos)
    pv = ParamVector.encode(lay, thetas, lam, s2)
    th2, lam2, s22 = ParamVector(pv.entries, lay).decode()
    assert s22 == pytest.approx(s2, rel=1e-12) and s22 > 0
    np.testing.assert_allclose(lam2, lam, rtol=1e-10, atol=1e-12)
    for a, b in zip(th2, thetas):
        assert a.gamma == pytest.approx(b.gamma, rel=1e-12)
        np.testing.assert_allclose(a.weights, b.weights, rtol=1e-12)


@given(st.lists(st.floats(-30, 30), min_size=5, max_size=5))
def test_decoded_positives_positive(z):
    lay = ParamLayout.for_model(ModelSpec("burgers", (1.0, 0.1)))
    thetas, lam, s2 = ParamVector(np.array(z), lay).decode()
    assert thetas[0].gamma > 0 and thetas[0].weights[0] > 0 and s2 > 0


# ---------------------------------------------------------------- gradient

def _burgers_pair(rng, n=12):
    x = np.sort(rng.uniform(-3, 3, n))
    return SnapshotPair(x, np.exp(-x**2), x + 0.03, np.exp(-(x + 0.03) ** 2), 0.1)


def test_gradient_step_halving_agreement():
    rng = np.random.default_rng(3)
    pair = _burgers_pair(rng)
    model = ModelSpec("burgers", (1.0, 0.1))
    lay = ParamLayout.for_model(model)
    obj = Objective(model, pair)
    for _ in range(5):
        z = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.normal(), rng.normal(0, 0.1), rng.uniform(-8, -4)])
        g = nlml_grad(model, pair, ParamVector(z, lay))
        # same central scheme with half the step
        g_half = np.empty_like(z)
        for i in range(z.size):
            h = 0.5 * max(1e-4 * abs(z[i]), 1e-6)
            e = np.zeros_like(z)
            e[i] = h
            g_half[i] = (obj(z + e) - obj(z - e)) / (2 * h)
        np.testing.assert_allclose(g, g_half, rtol=1e-3, atol=1e-6 * (1 + np.abs(g).max()))


def test_gradient_zero_for_inert_coordinate():
    # with a vanishing previous field the advection coefficient has no effect
    x = np.linspace(-2, 2, 7)
    pair = SnapshotPair(x, np.zeros(7), x, np.exp(-x**2), 0.1)
    model = ModelSpec("burgers", (1.0, 0.1))
    z = np.array([0.1, 0.2, 0.7, -1.5, -6.0])
    g, flags = Objective(model, pair).grad(z)
    assert g[2] == 0.0
    assert not flags.any()


def test_gradient_one_sided_fallback_and_flags():
    class Wall(Objective):
        def __call__(self, z):
            return math.inf if z[0] > 0.5 else float(np.sum(np.asarray(z) ** 2))

    x = np.linspace(-1, 1, 3)
    obj = Wall(ModelSpec("burgers", (1.0, 0.1)), SnapshotPair(x, x, x, x, 0.1))
    z = np.array([0.5, 1.0, 1.0, 1.0, 1.0])
    g, flags = obj.grad(z)
    assert g[0] == pytest.approx(1.0, rel=1e-3)  # backward difference of z0^2
    assert not flags[0]
    z[0] = 2.0
    g, flags = obj.grad(z)
    assert flags.all() and not g.any()


# ---------------------------------------------------------------- training

@pytest.fixture(scope="module")
def burgers_solution():
    return solve_burgers()


def test_train_deterministic_and_monotone(burgers_solution):
    pair = make_pair(burgers_solution, 40, 41, 30, 30, 0.0, seed=1)
    model = ModelSpec("burgers", (1.0, 0.1))
    cfg = TrainConfig(restarts=3, seed=5)
    a, b = train(model, pair, cfg), train(model, pair, cfg)
    assert a.lam == b.lam and a.nlml == b.nlml and a.sigma2 == b.sigma2
    np.testing.assert_array_equal(a.z, b.z)
    assert a.restarts_run == 3 and len(a.iterations) == 3
    assert all(a.nlml <= v for v in a.restart_nlml)
    assert math.isfinite(a.nlml) and a.sigma2 >= 0


def test_train_gradient_small_at_optimum(burgers_solution):
    pair = make_pair(burgers_solution, 40, 41, 69, 71, 0.0, seed=40)
    model = ModelSpec("burgers", (1.0, 0.1))
    res = train(model, pair, TrainConfig(restarts=2, seed=0))
    g, _ = Objective(model, pair).grad(res.z)
    assert np.linalg.norm(g) <= 1e-3 * (1 + abs(res.nlml))


def test_train_single_point_pair_does_not_crash():
    pair = SnapshotPair([0.1], [0.5], [0.2], [0.4], 0.1)
    res = train(ModelSpec("burgers", (1.0, 0.1)), pair, TrainConfig(restarts=2, max_iters=50))
    assert math.isfinite(res.nlml)
    assert isinstance(res.converged, bool)


def test_train_all_restarts_fail():
    x = np.linspace(-1, 1, 4)
    pair = SnapshotPair(x, np.full(4, np.inf), x, x, 0.1)
    with pytest.raises(TrainingFailedError) as err:
        train(ModelSpec("burgers", (1.0, 0.1)), pair, TrainConfig(restarts=2, max_iters=5))
    assert len(err.value.diagnostics) == 2


def test_train_rejects_zero_restarts(burgers_solution):
    pair = make_pair(burgers_solution, 40, 41, 5, 5)
    with pytest.raises(InvalidInputError):
        train(ModelSpec("burgers", (1.0, 0.1)), pair, TrainConfig(restarts=0))


# ---------------------------------------------------------------- self-consistency on prior draws

PRIOR_LAM = (0.5, 1.5)
PRIOR_SIGMA2 = 1e-4


def _prior_draw(seed):
    """50 + 50 points drawn exactly from the fractional hidden-physics prior."""
    rng = np.random.default_rng(seed)
    model = ModelSpec("fractional_rl", PRIOR_LAM)
    xp, xc = np.sort(rng.uniform(-5, 5, 50)), np.sort(rng.uniform(-5, 5, 50))
    dummy = SnapshotPair(xp, np.zeros(50), xc, np.zeros(50), 0.5)
    K = assemble(model, [ArdSeKernelParams(1.0, (1.0,))], PRIOR_SIGMA2, dummy, factor=False).matrix
    h = np.linalg.cholesky(K) @ rng.standard_normal(100)
    return model, SnapshotPair(xp, h[50:], xc, h[:50], 0.5)


@pytest.fixture(scope="module")
def prior_fits():
    fits = []
    for seed in range(10):
        model, pair = _prior_draw(seed)
        fits.append(train(model, pair, TrainConfig(restarts=2, seed=seed)))
    return fits


def test_prior_draws_recover_lambda(prior_fits):
    ok = [np.all(np.abs(np.subtract(f.lam, PRIOR_LAM)) <= 0.1 * np.abs(PRIOR_LAM)) for f in prior_fits]
    assert sum(ok) >= 8, [f.lam for f in prior_fits]


def test_prior_draws_recover_noise_variance(prior_fits):
    ratios = [f.sigma2 / PRIOR_SIGMA2 for f in prior_fits]
    assert sum(1 / 3 <= r <= 3 for r in ratios) >= 8, ratios


def test_objective_total_at_extreme_hyperparameters():
    # line searches may probe absurd length scales; these score +inf, never raise
    rng = np.random.default_rng(5)
    x = np.sort(rng.uniform(0, 10, 20))
    pair = SnapshotPair(x, np.sin(x), x + 0.1, np.sin(x + 0.1), 0.4)
    obj = Objective(ModelSpec("ks", (1.0, 1.0, 1.0)), pair)
    for logw in (97.0, 300.0, -300.0):
        z = np.array([0.0, logw, 1.0, 1.0, 1.0, -5.0])
        assert obj(z) == math.inf or math.isfinite(obj(z))
