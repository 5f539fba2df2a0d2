import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from supercrit import envelopes as env
from supercrit import potentials as pot
from supercrit.envelopes import ModelParams

P3 = ModelParams(3, 1.0, 1.0)


def test_canonical_values_and_tags():
    V = pot.canonical(P3)
    assert V(0.5) == pytest.approx(16.0)
    assert V(1.0) == pytest.approx(1.0)
    assert V(2.0) == pytest.approx(2.0**-4)
    assert set(pot.class_tags(V)) >= {"Kloc_ge", "Kloc_le", "Kloc", "K"}
    assert V.singular


def test_perturbed():
    V = pot.perturbed(P3, 1.0, 2.0, 1)
    assert V(1.0) == pytest.approx(2.0)
    W = pot.perturbed(P3, 1.0, 2.0, -1)
    assert W(1.0) == pytest.approx(0.0)
    assert np.all(W(np.geomspace(1e-3, 1, 50)) >= 0)
    assert pot.classify(V, "Kloc").member
    assert pot.classify(V, "Kloc").constants["C1"] == 0.0
    assert pot.classify(W, "K").member
    with pytest.raises(ValueError):
        pot.perturbed(P3, 1.0, 1.0, 1)
    with pytest.raises(ValueError):
        pot.perturbed(P3, 0.0, 2.0, 1)


def test_critical():
    assert pot.critical(P3, 0.5, 1)(0.5) == pytest.approx(20.0)
    assert pot.critical(P3, 0.5, -1)(0.5) == pytest.approx(12.0)
    with pytest.raises(ValueError):
        pot.critical(P3, 2.0, -1)
    up = pot.critical(P3, 0.5, 1)
    assert not pot.classify(up, "Kloc_le").member
    assert pot.classify(up, "critical_lower").member
    assert pot.classify(pot.critical(P3, 0.5, -1), "critical_upper").member
    assert not pot.classify(pot.critical(P3, 0.5, -1), "Kloc_ge").member


def test_classify_reports_worst_point():
    rep = pot.classify(pot.critical(P3, 0.5, 1), "Kloc_le")
    assert not rep
    assert rep.worst_r is not None and 0 < rep.worst_r <= 1


def test_classify_rejects_coarse_grid_and_unknown_tag():
    V = pot.canonical(P3)
    with pytest.raises(ValueError):
        pot.classify(V, "Kloc", grid=np.geomspace(1e-3, 1, 20))
    with pytest.raises(ValueError):
        pot.classify(V, "nonsense")


def test_integrable_potential_is_not_in_any_class():
    assert not pot.classify(pot.zero(P3), "Kloc_ge").member


def test_custom_validator():
    f = lambda r: 2.0 * np.asarray(r, float) ** -4.0
    V = pot.custom(P3, f, singular=True)
    assert V(0.5) == pytest.approx(32.0)
    with pytest.raises(ValueError):
        pot.custom(P3, f, singular=False)
    with pytest.raises(ValueError):
        pot.custom(P3, lambda r: -np.ones_like(r), singular=False)
    with pytest.raises(ValueError):
        pot.Potential("custom", P3)


def test_tail_and_config_round_trip():
    V = pot.Potential.from_config({"form": "critical", "C": "0.5", "sign": "-1", "C3": "2", "gamma": "1.5"}, P3)
    assert V(4.0) == pytest.approx(2.0 * 4.0**-3.5)
    block = V.to_config()
    assert pot.Potential.from_config(block) == V
    with pytest.raises(ValueError):
        pot.Potential.from_config({"form": "spiral"}, P3)
    with pytest.raises(ValueError):
        pot.zero(P3).to_config()


def test_constant_and_zero():
    assert pot.zero(P3).is_zero
    assert pot.constant(P3, 2.5)(0.1) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        pot.constant(P3, -1.0)


@pytest.mark.parametrize("d", [1, 2, 3, 5])
def test_generator_of_quadratic(d):
    V = pot.zero(ModelParams(d, 1.0, 1.0))
    f = pot.RadialFunction(lambda r: r**2)
    assert pot.apply_generator(V, f, 0.7) == pytest.approx(2 * d, rel=1e-6)


@pytest.mark.parametrize("d,beta,kappa", [(3, 1.0, 1.0), (1, 0.5, 2.0), (2, 2.0, 0.5)])
def test_htilde_is_harmonic(d, beta, kappa):
    p = ModelParams(d, beta, kappa)
    V = pot.canonical(p)
    f = pot.htilde_power_function(p, 0.0)
    for r in (0.2, 0.5, 0.9):
        scale = float(V(r)) * env.h_tilde(p, r)
        assert abs(pot.apply_generator(V, f, r)) < 1e-5 * scale


@pytest.mark.parametrize("a", [-0.5, -0.25, 0.25, 0.5])
def test_power_identity(a):
    # L(r^a h_tilde) = a(a+d-2) r^{a-2} h_tilde + 2a r^{a-1} h_tilde'; derivatives by finite differences
    p = P3
    V = pot.canonical(p)
    f = pot.RadialFunction(lambda r: r**a * env.h_tilde(p, r))
    for r in np.linspace(0.1, 0.9, 9):
        f0, f1, f2 = f.derivs(r, rel_step=1e-4)
        lhs = f2 + (p.d - 1) / r * f1 - float(V(r)) * f0
        rhs = a * (a + p.d - 2) * r ** (a - 2) * env.h_tilde(p, r) + 2 * a * r ** (a - 1) * env.h_tilde_prime(p, r)
        assert lhs == pytest.approx(rhs, rel=1e-4)


def test_generator_over_htilde_matches_direct():
    p = P3
    V = pot.critical(p, 0.5, 1)
    g = pot.power_multiplier(0.3)
    direct = pot.apply_generator(V, pot.htilde_power_function(p, 0.3), 0.4) / env.h_tilde(p, 0.4)
    assert pot.generator_over_htilde(V, g[0](0.4), g[1](0.4), g[2](0.4), 0.4) == pytest.approx(direct, rel=1e-8)


def test_barrier_signs_canonical():
    p = P3
    V = pot.canonical(p)
    R1, R2 = pot.barrier_radii(V)
    assert R1 >= 0.02 and R2 >= 0.02
    for kind, R, sign in (("u1", R1, -1), ("u2", R2, 1)):
        f = pot.barrier_function(kind, p)
        for r in np.geomspace(0.05 * R, R, 7):
            assert sign * pot.apply_generator(V, f, r) >= 0


def test_counterexample_powers():
    a1 = pot.counterexample_power(pot.critical(P3, 0.5, -1), 1)
    a2 = pot.counterexample_power(pot.critical(P3, 5.0, 1), 2)
    assert a1 > 0 and a2 > 0
    assert math.isnan(pot.counterexample_power(pot.canonical(P3), 1))


@settings(max_examples=50, deadline=None)
@given(C=st.floats(0.01, 1.0), r=st.floats(1e-3, 5.0))
def test_nonnegative_and_ordered(C, r):
    lo, mid, hi = pot.critical(P3, C, -1), pot.canonical(P3), pot.critical(P3, C, 1)
    assert 0 <= lo(r) <= mid(r) <= hi(r)


def test_vectorised_evaluation():
    V = pot.canonical(P3)
    out = V(np.array([0.5, 1.0, 2.0]))
    assert out.shape == (3,)
    assert out[0] == pytest.approx(16.0)
