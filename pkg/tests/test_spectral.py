import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hpm.assembly import jittered_cholesky
from hpm.errors import InvalidParameterError
from hpm.kernels import ArdSeKernelParams, DerivMultiIndexPair, se_eval, se_partial
from hpm.spectral import (
    FRACTIONAL_LAPLACIAN,
    IDENTITY,
    RIEMANN_LIOUVILLE,
    FourierSymbol,
    SpectralAccuracyWarning,
    frac_laplacian_multiplier,
    gauss_hermite_rule,
    rl_multiplier,
    spectral_cross_cov,
    spectral_cross_gram,
    spectral_self_cov,
    spectral_self_gram,
)


def sp(m, n, x, xp, p):
    return se_partial(DerivMultiIndexPair((m,), (n,)), x, xp, p)


def mp_reference(symbol_fn, r, gamma, w, squared=False):
    """(1/2pi) int S(w) m(w) e^{i w r} dw by adaptive mpmath quadrature."""
    mpmath.mp.dps = 30

    def integrand(om):
        om = float(om)
        m = complex(symbol_fn(om))
        if squared:
            m = abs(m) ** 2
        s = gamma**2 * math.sqrt(2 * math.pi) / w * mpmath.e ** (-(om**2) / (2 * w**2))
        # m(-w) = conj(m(w)), so the two half-lines combine into the real part
        return s * (m.real * mpmath.cos(om * r) - m.imag * mpmath.sin(om * r))

    return float(2 * mpmath.quad(integrand, [0, 2 * w, 6 * w, mpmath.inf]) / (2 * math.pi))


# ---------------------------------------------------------------- multipliers

def test_rl_multiplier_examples():
    assert rl_multiplier(0.0, 0.5, 1.3, 0.01) == 1.0
    v = rl_multiplier(3.0, 0.5, 2.0, 0.01)
    assert v.real == pytest.approx(1.045, abs=1e-14)
    assert abs(v.imag) < 1e-14


def test_rl_multiplier_integer_order_symbols():
    om = np.linspace(-7, 7, 29)
    # operator acting on x' maps d/dx' to (-i w)
    np.testing.assert_allclose(rl_multiplier(om, 0.3, 2.0, 0.1), 1 - 0.1 * 0.3 * (-1j * om) ** 2, atol=1e-13)
    np.testing.assert_allclose(rl_multiplier(om, 0.3, 1.0, 0.1), 1 - 0.1 * 0.3 * (-1j * om), atol=1e-13)


def test_rl_multiplier_hermitian():
    om = np.linspace(0.1, 5, 11)
    np.testing.assert_allclose(rl_multiplier(-om, 0.7, 1.4, 0.2), np.conj(rl_multiplier(om, 0.7, 1.4, 0.2)))


def test_frac_laplacian_examples():
    assert frac_laplacian_multiplier(0.0, 1.2, 0.3) == 1.0
    assert frac_laplacian_multiplier(2.0, 2.0, 0.01) == pytest.approx(1.04)
    assert frac_laplacian_multiplier(-5.0, 1.0, 0.1) == pytest.approx(1.5)


@pytest.mark.parametrize("alpha", [0.0, -1.0, 2.5])
def test_frac_laplacian_rejects_order(alpha):
    with pytest.raises(InvalidParameterError):
        frac_laplacian_multiplier(1.0, alpha, 0.1)


def test_symbol_call_matches_multipliers():
    om = np.linspace(-4, 4, 17)
    rl = FourierSymbol(RIEMANN_LIOUVILLE, lambda1=0.4, order=1.3, dt=0.05)
    np.testing.assert_allclose(rl(om), rl_multiplier(om, 0.4, 1.3, 0.05))
    fl = FourierSymbol(FRACTIONAL_LAPLACIAN, order=1.5, dt=0.05)
    np.testing.assert_allclose(fl(om), frac_laplacian_multiplier(om, 1.5, 0.05))


# ---------------------------------------------------------------- covariances

P = ArdSeKernelParams(1.3, (0.9,))


def test_identity_symbol_recovers_kernel():
    ident = FourierSymbol(IDENTITY)
    for x, xp in [(0.0, 0.0), (0.3, -1.2), (2.0, 0.5)]:
        assert spectral_cross_cov(x, xp, P, ident) == pytest.approx(se_eval(x, xp, P), abs=1e-8)
        assert spectral_self_cov(x, xp, P, ident) == pytest.approx(se_eval(x, xp, P), abs=1e-8)


@pytest.mark.parametrize("x,xp", [(0.0, 0.0), (0.7, -0.4), (-1.5, 1.1)])
def test_rl_order_two_matches_diffusion_operator(x, xp):
    dt, l1 = 0.1, 0.5
    sym = FourierSymbol(RIEMANN_LIOUVILLE, lambda1=l1, order=2.0, dt=dt)
    cross = se_eval(x, xp, P) - dt * l1 * sp(0, 2, x, xp, P)
    self_ = (se_eval(x, xp, P) - dt * l1 * sp(2, 0, x, xp, P) - dt * l1 * sp(0, 2, x, xp, P)
             + (dt * l1) ** 2 * sp(2, 2, x, xp, P))
    assert spectral_cross_cov(x, xp, P, sym) == pytest.approx(cross, rel=1e-6, abs=1e-12)
    assert spectral_self_cov(x, xp, P, sym) == pytest.approx(self_, rel=1e-6, abs=1e-12)


@pytest.mark.parametrize("x,xp", [(0.0, 0.0), (0.7, -0.4), (-1.5, 1.1)])
def test_rl_order_one_matches_advection_operator(x, xp):
    dt, l1 = 0.2, 0.8
    sym = FourierSymbol(RIEMANN_LIOUVILLE, lambda1=l1, order=1.0, dt=dt)
    cross = se_eval(x, xp, P) - dt * l1 * sp(0, 1, x, xp, P)
    self_ = (se_eval(x, xp, P) - dt * l1 * sp(1, 0, x, xp, P) - dt * l1 * sp(0, 1, x, xp, P)
             + (dt * l1) ** 2 * sp(1, 1, x, xp, P))
    assert spectral_cross_cov(x, xp, P, sym) == pytest.approx(cross, rel=1e-6, abs=1e-12)
    assert spectral_self_cov(x, xp, P, sym) == pytest.approx(self_, rel=1e-6, abs=1e-12)


def test_laplacian_order_two_matches_diffusion_operator():
    dt = 0.05
    sym = FourierSymbol(FRACTIONAL_LAPLACIAN, order=2.0, dt=dt)
    for x, xp in [(0.1, 0.1), (1.0, -0.3)]:
        cross = se_eval(x, xp, P) - dt * sp(0, 2, x, xp, P)
        self_ = (se_eval(x, xp, P) - dt * sp(2, 0, x, xp, P) - dt * sp(0, 2, x, xp, P)
                 + dt**2 * sp(2, 2, x, xp, P))
        assert spectral_cross_cov(x, xp, P, sym) == pytest.approx(cross, rel=1e-6)
        assert spectral_self_cov(x, xp, P, sym) == pytest.approx(self_, rel=1e-6)


@pytest.mark.parametrize("order", [0.6, 1.3, 1.75, 2.3])
@pytest.mark.parametrize("r", [0.0, 0.8, -2.1])
def test_rl_fractional_against_adaptive_quadrature(order, r):
    gamma, w, dt, l1 = 1.1, 1.4, 0.3, 0.7
    p = ArdSeKernelParams(gamma, (w,))
    sym = FourierSymbol(RIEMANN_LIOUVILLE, lambda1=l1, order=order, dt=dt)
    ref_c = mp_reference(lambda om: rl_multiplier(om, l1, order, dt), r, gamma, w)
    ref_s = mp_reference(lambda om: rl_multiplier(om, l1, order, dt), r, gamma, w, squared=True)
    assert spectral_cross_cov(r, 0.0, p, sym) == pytest.approx(ref_c, rel=1e-9, abs=1e-11)
    assert spectral_self_cov(r, 0.0, p, sym) == pytest.approx(ref_s, rel=1e-9, abs=1e-11)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_laplacian_fractional_against_adaptive_quadrature(alpha):
    gamma, w, dt = 0.8, 2.0, 0.1
    p = ArdSeKernelParams(gamma, (w,))
    sym = FourierSymbol(FRACTIONAL_LAPLACIAN, order=alpha, dt=dt)
    for r in (0.0, 0.4, 1.7):
        ref = mp_reference(lambda om: frac_laplacian_multiplier(om, alpha, dt), r, gamma, w, squared=True)
        assert spectral_self_cov(r, 0.0, p, sym) == pytest.approx(ref, rel=1e-9, abs=1e-11)


def test_gauss_hermite_path_integer_order():
    rule = gauss_hermite_rule(120)
    assert rule.count == 120 and np.all(rule.weights > 0)
    sym = FourierSymbol(RIEMANN_LIOUVILLE, lambda1=0.5, order=2.0, dt=0.1)
    X = np.linspace(-2, 2, 7)
    ref = spectral_cross_gram(X, X, P, sym)
    with warnings.catch_warnings():
        warnings.simplefilter("error", SpectralAccuracyWarning)
        got = spectral_cross_gram(X, X, P, sym, rule=rule, check=True)
    np.testing.assert_allclose(got, ref, atol=1e-10)


def test_gauss_hermite_flags_slow_convergence_at_fractional_order():
    # |w|^nu is not smooth at 0, so Gauss-Hermite converges slowly; the check must say so
    sym = FourierSymbol(RIEMANN_LIOUVILLE, lambda1=0.5, order=1.5, dt=0.1)
    with pytest.warns(SpectralAccuracyWarning):
        spectral_cross_gram(np.zeros(1), np.zeros(1), P, sym, rule=gauss_hermite_rule(120), check=True)


def test_self_gram_psd_after_jitter():
    X = np.sort(np.random.default_rng(0).uniform(-3, 3, 50))
    for sym in (FourierSymbol(RIEMANN_LIOUVILLE, lambda1=0.5, order=1.6, dt=0.2),
                FourierSymbol(FRACTIONAL_LAPLACIAN, order=0.8, dt=0.2)):
        K = spectral_self_gram(X, X, P, sym)
        assert np.allclose(K, K.T, atol=1e-12)
        L, jitter = jittered_cholesky(K)
        assert np.all(np.isfinite(L))
        assert jitter <= 1e-6 * np.mean(np.diag(K))


@given(st.floats(-3, 3), st.floats(0.1, 2.4), st.floats(-2, 2), st.floats(0.01, 1.0))
def test_self_cov_diagonal_nonnegative(x, order, l1, dt):
    sym = FourierSymbol(RIEMANN_LIOUVILLE, lambda1=l1, order=order, dt=dt)
    assert spectral_self_cov(x, x, P, sym) >= -1e-12


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 2.4), st.floats(0.01, 1.0))
def test_self_cov_symmetric(x, xp, order, dt):
    sym = FourierSymbol(RIEMANN_LIOUVILLE, lambda1=0.6, order=order, dt=dt)
    a = spectral_self_cov(x, xp, P, sym)
    b = spectral_self_cov(xp, x, P, sym)
    assert a == pytest.approx(b, rel=1e-10, abs=1e-12)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 2.0), st.floats(0.01, 1.0))
def test_stationary_in_lag(x, shift, alpha, dt):
    sym = FourierSymbol(FRACTIONAL_LAPLACIAN, order=alpha, dt=dt)
    a = spectral_cross_cov(x, 0.3, P, sym)
    b = spectral_cross_cov(x + shift, 0.3 + shift, P, sym)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)
