import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fracheat.nonlinearity import (HypothesisViolation, canonical_F_q, canonical_F_q_inv,
                                   check_inequality_lemmas, convexity_mask, eval_F, eval_F_inv,
                                   eval_F_inv_log, estimate_q, log_F, make_nonlinearity,
                                   phi_alpha, q_value, registered_names)

NAMES = ["upow:3", "upow:1.5", "exp", "powlog:3", "expupow:2", "iterexp:2"]


def direct_F(nl, u):
    """``int_u^inf dt / f`` by plain adaptive quadrature (independent route)."""
    val, _ = integrate.quad(lambda t: 1.0 / float(nl.f(t)), u, np.inf, epsrel=1e-12, limit=500)
    return val


@pytest.mark.parametrize("name", ["upow:3", "powlog:3", "expupow:2", "exp"])
@pytest.mark.parametrize("u", [0.5, 2.0, 7.0])
def test_F_matches_direct_quadrature(name, u):
    nl = make_nonlinearity(name)
    assert float(eval_F(nl, u)) == pytest.approx(direct_F(nl, u), rel=1e-8)


def test_F_closed_forms():
    u = np.array([0.3, 1.0, 4.0, 50.0])
    assert np.allclose(eval_F(make_nonlinearity("upow:3"), u), u ** -2 / 2, rtol=1e-12)
    assert np.allclose(eval_F(make_nonlinearity("exp"), u), np.exp(-u), rtol=1e-12)


@pytest.mark.parametrize("name", NAMES)
def test_F_inverse_round_trip(name):
    nl = make_nonlinearity(name)
    u = np.array([0.7, 1.5, 3.0])
    back = eval_F_inv(nl, eval_F(nl, u))
    assert np.allclose(back, u, rtol=1e-9)


def test_F_inv_log_reaches_past_float_range():
    nl = make_nonlinearity("upow:3")
    # F(u) = u^-2 / 2 = e^-800 has no float representation
    u = float(eval_F_inv_log(nl, -800.0))
    assert u == pytest.approx(math.exp(400.0) / math.sqrt(2.0), rel=1e-12)


@given(st.sampled_from(NAMES), st.floats(0.05, 30.0), st.floats(1.001, 3.0))
@settings(max_examples=60, deadline=None)
def test_F_strictly_decreasing(name, u, factor):
    nl = make_nonlinearity(name)
    assert float(log_F(nl, u * factor)) < float(log_F(nl, u))


def test_q_known_values():
    assert q_value(make_nonlinearity("upow:4")) == pytest.approx(4 / 3)
    assert q_value(make_nonlinearity("iterexp:2")) == pytest.approx(1.0, abs=1e-3)
    rep = estimate_q(make_nonlinearity("upow:3"))
    assert rep.q_upper_holds and not rep.satisfies_F2


def test_registry_and_errors():
    assert set(registered_names()) == {"upow", "exp", "powlog", "expupow", "iterexp"}
    with pytest.raises(ValueError):
        make_nonlinearity("cube")
    with pytest.raises(ValueError):
        make_nonlinearity("upow")
    with pytest.raises(ValueError):
        make_nonlinearity("upow:1")
    with pytest.raises(ValueError):
        check_inequality_lemmas(make_nonlinearity("upow:3"), "L9")


def test_lemma_needs_matching_q():
    with pytest.raises(HypothesisViolation):
        check_inequality_lemmas(make_nonlinearity("exp"), "L4_2", beta=2.0)
    with pytest.raises(HypothesisViolation):
        check_inequality_lemmas(make_nonlinearity("upow:3"), "L4_3", beta=2.0, gamma=0.5)


def test_canonical_transform_inverse_and_limits():
    u = np.array([0.1, 1.0, 10.0])
    for q in (1.0, 1.5, 3.0):
        assert np.allclose(canonical_F_q_inv(q, canonical_F_q(q, u)), u, rtol=1e-12)
    # q = 1 is e^{-u}
    assert np.allclose(canonical_F_q(1.0, u), np.exp(-u))


def test_phi_alpha_convex_above_threshold():
    nl = make_nonlinearity("upow:3")
    q = 1.5
    u = np.geomspace(2.0, 200.0, 400)
    vals = np.asarray(phi_alpha(nl, 2 * q, u), dtype=float)
    # uneven grid: convexity means nondecreasing divided differences
    dd = np.diff(np.diff(vals) / np.diff(u))
    assert np.all(dd >= -1e-9 * np.abs(vals).max())


def test_convexity_mask_detects_convex_f():
    nl = make_nonlinearity("upow:3")
    assert np.all(convexity_mask(nl, np.geomspace(0.5, 100.0, 50)))
