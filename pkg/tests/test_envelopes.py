import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from supercrit import envelopes as env
from supercrit import specfun
from supercrit.envelopes import EnvelopeConstants, ModelParams

P3 = ModelParams(3, 1.0, 1.0)
P1 = ModelParams(1, 1.0, 1.0)
P2 = ModelParams(2, 1.0, 1.0)
UNIT = EnvelopeConstants(1.0, 1.0, 1.0)
SQRT_PI_2 = math.sqrt(math.pi / 2)

params = st.builds(ModelParams, st.integers(1, 5), st.floats(0.25, 3.0), st.floats(0.1, 9.0))


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(0, 1.0, 1.0)
    with pytest.raises(ValueError):
        ModelParams(3, 0.0, 1.0)
    with pytest.raises(ValueError):
        ModelParams(3, 1.0, -1.0)
    assert P3.nu == pytest.approx(0.5)


def test_h_examples():
    assert env.h(P3, 0.5) == pytest.approx(0.135335283236613, rel=1e-12)
    assert env.h(P3, 2.0) == pytest.approx(math.exp(-1), rel=1e-14)
    assert env.h(P1, 0.5) == pytest.approx(0.5 * math.exp(-2), rel=1e-14)
    assert env.log_h(P3, 0.5) == pytest.approx(-2.0)
    with pytest.raises(ValueError):
        env.h(P3, 0.0)


def test_h_tilde_closed_form():
    assert env.h_tilde(P3, 0.5) == pytest.approx(0.16961762375804412, rel=1e-12)
    for r in (1e-3, 0.05, 0.3, 1.0):
        assert env.log_h_tilde(P3, r) - env.log_h(P3, r) == pytest.approx(math.log(SQRT_PI_2), abs=1e-10)


def test_h_tilde_other_orders():
    # mpmath oracle: d = 2, beta = 1/2, kappa = 2 (order 0) and d = 4, beta = kappa = 1 (order 1)
    assert env.h_tilde(ModelParams(2, 0.5, 2.0), 0.3) == pytest.approx(0.0030847912356555403, rel=1e-11)
    assert env.h_tilde(ModelParams(4, 1.0, 1.0), 0.4) == pytest.approx(0.18472704086936766, rel=1e-11)


def test_h_tilde_deep_interior_log_scale():
    lv = env.log_h_tilde(P3, 1e-4)
    assert lv == pytest.approx(math.log(SQRT_PI_2) - 1e4, rel=1e-12)
    assert env.h_tilde(P3, 1e-4) == 0.0


def test_h_tilde_prime_example():
    assert env.h_tilde_prime(P3, 0.5) == pytest.approx(4 * SQRT_PI_2 * math.exp(-2), rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(p=params)
def test_h_tilde_prime_matches_finite_difference(p):
    r, step = 0.7, 1e-5
    fd = (env.h_tilde(p, r + step) - env.h_tilde(p, r - step)) / (2 * step)
    assert env.h_tilde_prime(p, r) == pytest.approx(fd, rel=1e-6)


@settings(max_examples=40, deadline=None)
@given(p=params, r=st.floats(0.05, 1.0))
def test_harmonicity_by_finite_differences(p, r):
    r = max(r, 0.1)
    # resolve the local decay scale sqrt(kappa) / r^{1+beta}
    step = 1e-3 * r / (1 + p.sqrt_kappa / r**p.beta)
    f = lambda s: env.h_tilde(p, s)
    f0, fp, fm = f(r), f(r + step), f(r - step)
    second = (fp - 2 * f0 + fm) / step**2
    first = (fp - fm) / (2 * step)
    vk = p.kappa * r ** (-2 - 2 * p.beta)
    residual = second + (p.d - 1) / r * first - vk * f0
    assert abs(residual) < 1e-5 * vk * f0


@settings(max_examples=40, deadline=None)
@given(p=params, a=st.floats(0.05, 0.95), b=st.floats(0.05, 0.95))
def test_h_tilde_increasing(p, a, b):
    lo, hi = sorted((a, b))
    if hi - lo > 1e-6:
        assert env.log_h_tilde(p, lo) < env.log_h_tilde(p, hi)


@settings(max_examples=30, deadline=None)
@given(p=params)
def test_h_comparability_finite(p):
    rs = np.geomspace(1e-3, 1.0, 200)
    ratio = np.array([env.log_h_tilde(p, r) - env.log_h(p, r) for r in rs])
    assert np.all(np.isfinite(ratio))
    # the two profiles share the exponential factor, so the log ratio stays bounded
    assert ratio.max() - ratio.min() < 10.0


def test_H_examples():
    assert env.H(P3, 7.0, 0.5) == pytest.approx(math.exp(-2))
    assert env.H(P3, 1e4, 0.5) == pytest.approx(math.exp(-2))
    assert env.H(P1, 100.0, 3.0) == pytest.approx(0.3)
    assert env.H(P2, 100.0, 5.0) == pytest.approx(math.log(math.e + 4) / math.log(math.e + 9), rel=1e-12)


def test_psi_examples():
    assert env.psi(3, 1.0, 4.0, 1.25) == pytest.approx(0.25)
    assert env.psi(1, 1.0, 1.0, 1.5) == pytest.approx(0.5)
    assert env.psi(2, 1.0, 0.5, 1.0) == 0.0
    for d in (1, 2, 3):
        assert env.psi(d, 1.0, 0.9, 2.5) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        env.psi(3, 1.0, 1.0, 0.5)


@pytest.mark.parametrize("d", [1, 2])
def test_H_psi_comparable(d):
    p = ModelParams(d, 1.0, 1.0)
    logs = [math.log(env.H(p, t, r) / env.psi(d, 1.0, t, r))
            for t in np.geomspace(1, 1e4, 25) for r in np.geomspace(2, 100, 25)]
    assert np.all(np.isfinite(logs))
    assert max(logs) - min(logs) < 5.0


def test_eta_constants():
    assert env.eta0(P3) == pytest.approx(2 ** (-13 / 9), rel=1e-14)
    assert env.eta0(ModelParams(3, 2.0, 1.0)) == pytest.approx(0.545254, rel=1e-6)
    assert env.eta1(P3) == pytest.approx(2 ** (-19 / 9), rel=1e-14)
    assert env.eta0(ModelParams(3, 1.0, 4.0)) == pytest.approx(2 ** (1 / 3) * env.eta0(P3), rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(p=params)
def test_eta1_two_forms_agree(p):
    assert env.eta1(p) == pytest.approx(env.eta1_closed_form(p), rel=1e-12)
    assert env.eta1(p) / env.eta0(p) == pytest.approx(2 ** (-2 / (2 + p.beta)), rel=1e-12)


def test_barriers():
    assert env.barrier_u("u2", P3, 0.5, 0.25) == pytest.approx((1 + 0.25**0.25) * SQRT_PI_2 * math.exp(-4), rel=1e-12)
    assert env.barrier_u("u1", P3, 0.5, 1.0) == pytest.approx(env.h_tilde(P3, 1.0))
    assert env.barrier_u("u2", P3, 0.5, 1.0) == pytest.approx(2 * env.h_tilde(P3, 1.0))
    with pytest.raises(ValueError):
        env.barrier_u("u1", P3, 1.0, 0.5)
    with pytest.raises(ValueError):
        env.barrier_u("u1", P3, 0.5, 1.5)
    with pytest.raises(ValueError):
        env.barrier_u("u3", P3, 0.5, 0.5)


@settings(max_examples=50, deadline=None)
@given(p=params, r=st.floats(1e-2, 1.0), frac=st.floats(0.05, 0.95))
def test_barriers_within_factor_two(p, r, frac):
    ht = env.h_tilde(p, r)
    for kind in ("u1", "u2"):
        u = env.barrier_u(kind, p, frac * p.beta, r)
        assert ht * (1 - 1e-12) <= u <= 2 * ht * (1 + 1e-12)


def test_small_time_example():
    v = env.small_time_envelope(P3, UNIT, 1.0, [2, 0, 0], [2, 0, 0])
    assert v.value == pytest.approx(math.exp(-1 / 16) * (4 * math.pi) ** -1.5, rel=1e-12)
    assert v.value == pytest.approx(0.021090, rel=1e-4)


def test_small_time_clamps_and_domain():
    c = EnvelopeConstants(0.7, 2.0, 1.0)
    x = [1.5, 0.0, 0.0]
    v = env.small_time_envelope(P3, c, 0.5, x, x)
    expected = math.exp(-2.0 * 0.5 / 1.5**4) * specfun.gaussian_q(3, 0.35, x, x)
    assert v.value == pytest.approx(expected, rel=1e-12)
    with pytest.raises(ValueError):
        env.small_time_envelope(P3, UNIT, 4.5, x, x)
    with pytest.raises(ValueError):
        env.small_time_envelope(P3, UNIT, 1.0, [0, 0, 0], x)


def test_small_time_boundary_rate():
    # log value ~ -1/|x| as |x| -> 0 for beta = kappa = 1
    y = [0.5, 0, 0]
    a = env.small_time_envelope(P3, UNIT, 0.1, [1e-3, 0, 0], y).log_value
    b = env.small_time_envelope(P3, UNIT, 0.1, [2e-3, 0, 0], y).log_value
    assert (a - b) / (1 / 1e-3 - 1 / 2e-3) == pytest.approx(-1.0, rel=1e-2)


def test_large_time_examples():
    v = env.large_time_envelope(P1, UNIT, 100.0, [3.0], [3.0])
    assert v.value == pytest.approx(0.09 * (400 * math.pi) ** -0.5, rel=1e-12)
    x, y = [0.5, 0, 0], [0.2, 0.3, 0]
    v3 = env.large_time_envelope(P3, UNIT, 9.0, x, y)
    expected = env.h(P3, 0.5) * env.h(P3, math.hypot(0.2, 0.3)) * specfun.gaussian_q(3, 9.0, x, y)
    assert v3.value == pytest.approx(expected, rel=1e-12)


def test_large_time_d2_product_stabilises():
    x, y = [0.5, 0.0], [0.7, 0.0]
    vals = [env.large_time_envelope(P2, UNIT, t, x, y).value * t * specfun.log_shift(math.sqrt(t)) ** 2
            for t in (1e6, 1e8, 1e10)]
    assert vals[2] == pytest.approx(vals[1], rel=1e-3)


def test_opposite_sides_in_d1_vanish():
    assert env.small_time_envelope(P1, UNIT, 1.0, [0.5], [-0.5]).value == 0.0
    assert env.large_time_envelope(P1, UNIT, 10.0, [0.5], [-0.5]).value == 0.0
    assert env.green_envelope(P1, UNIT, [0.5], [-0.5]).value == 0.0


def test_dispatcher_overlap():
    x = [0.8, 0, 0]
    assert env.heat_kernel_envelope(P3, UNIT, 4.0, x, x).value == env.small_time_envelope(P3, UNIT, 4.0, x, x).value
    assert env.heat_kernel_envelope(P3, UNIT, 4.5, x, x).value == env.large_time_envelope(P3, UNIT, 4.5, x, x).value


def test_green_pieces():
    assert env.g0(P1, [3.0], [5.0]) == 3.0
    assert env.f0(P2, [0.5, 0.0], [0.4, 0.0]) == pytest.approx(math.log(math.e - 1 + 2.5), rel=1e-12)
    assert env.green_envelope(P3, UNIT, [3, 0, 0], [5, 0, 0]).value == pytest.approx(0.5)
    assert math.isinf(env.green_envelope(P3, UNIT, [0.5, 0, 0], [0.5, 0, 0]).value)
    assert math.isfinite(env.green_envelope(P1, UNIT, [0.5], [0.5]).value)


@settings(max_examples=50, deadline=None)
@given(d=st.integers(2, 4), rx=st.floats(0.05, 3), ry=st.floats(0.05, 3))
def test_f0_lower_bound(d, rx, ry):
    p = ModelParams(d, 1.0, 1.0)
    x = np.zeros(d)
    y = np.zeros(d)
    x[0], y[0] = rx, ry
    dist = abs(rx - ry)
    if dist > 1e-6:
        assert env.f0(p, x, y) >= math.log(math.e - 1) * dist ** (2 - d) * (1 - 1e-12)


def _brute_sup(a, b, beta, r):
    k = beta / (2 + beta)
    f = lambda lt: -(-a * r**2 / math.exp(lt) + b * math.exp(-k * lt))
    res = optimize.minimize_scalar(f, bounds=(math.log(1e-6), math.log(1e6)), method="bounded",
                                   options={"xatol": 1e-12})
    return -res.fun


@pytest.mark.parametrize("a,b,beta", [(1.0, 1.0, 1.0), (0.25, 2.0, 0.5), (3.0, 0.5, 2.0)])
def test_lemma73_against_brute_force(a, b, beta):
    c = env.lemma73_const(a, b, beta)
    k = beta / (2 + beta)
    for r in (1.0, 0.5, 2.0):
        closed = (-a / c + b / c**k) / r**beta
        assert closed == pytest.approx(_brute_sup(a, b, beta, r), rel=1e-6)


def test_lemma73_depends_on_ratio_only():
    assert env.lemma73_const(2.0, 3.0, 1.0) == pytest.approx(env.lemma73_const(4.0, 6.0, 1.0), rel=1e-10)
    with pytest.raises(ValueError):
        env.lemma73_const(-1.0, 1.0, 1.0)


def test_constants_validation():
    with pytest.raises(ValueError):
        EnvelopeConstants(0.0, 1.0, 1.0)
