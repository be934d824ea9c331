import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracheat.classify import SingularDataSpec, witness_radial
from fracheat.field import Field, GridSpec, apply_semigroup, sample_radial
from fracheat.nonlinearity import make_nonlinearity
from fracheat.supersolution import (RegimeViolation, SupersolutionFamily, SupersolutionParams,
                                    check_regime, find_certificate, make_params,
                                    verify_supersolution)

CUBE = make_nonlinearity("upow:3")
EXP = make_nonlinearity("exp")


def bump(r):
    return math.exp(-1.0 / (1.0 - r * r)) if r < 1 else 0.0


def test_make_params_defaults():
    p = make_params(CUBE, "power", 0.5, N=1, theta=1.5, r=1.0)
    # q = 3/2: eps is the midpoint of (0, min{theta r/N - 1, r - q + 1, 2(q-1)}) = (0, 1/2)
    assert p.epsilon == pytest.approx(0.25)
    assert p.q0 == pytest.approx(1.5 + 0.125)
    assert p.u0 >= 1.0
    low = make_params(CUBE, "critical-power-low", 1.0, N=1, theta=2.0, r=0.5)
    assert low.alpha == pytest.approx(1.0)


def test_regime_checks():
    with pytest.raises(RegimeViolation):
        make_params(EXP, "power", 0.5, N=1, theta=1.5, r=1.0)
    with pytest.raises(RegimeViolation):
        check_regime(CUBE, make_params(EXP, "critical-exp", 1.0, N=1, theta=2.0, r=0.5), 1, 2.0)
    square = make_nonlinearity("upow:2")
    with pytest.raises(RegimeViolation):
        # p = 2 is below 1 + theta/N = 3
        check_regime(square, make_params(square, "critical-power-low", 1.0, N=1, theta=2.0,
                                          r=1.0), 1, 2.0)
    with pytest.raises(RegimeViolation):
        # r = 0.5 is not above N/theta
        bad = SupersolutionParams("power", 0.5, q0=1.625, epsilon=0.25, u0=1.0, r=0.5)
        check_regime(CUBE, bad, 1, 1.5)
    with pytest.raises(ValueError):
        make_params(CUBE, "sideways", 0.5, N=1, theta=1.5, r=1.0)


def test_critical_exp_closed_form():
    grid = GridSpec(1, 20.0, 256, 2.0)
    phi = sample_radial(grid, bump, singular=False)
    params = make_params(EXP, "critical-exp", 0.7, N=1, theta=2.0, r=0.5)
    fam = SupersolutionFamily(phi, EXP, params, symbol="lattice")
    lat = Field(grid.with_symbol("lattice"), phi.values)
    for t in (0.01, 0.3):
        assert np.allclose(fam.at(t), apply_semigroup(lat, t).values + 0.7, atol=1e-12)


def test_critical_power_high_closed_form():
    nl = make_nonlinearity("upow:3")
    grid = GridSpec(2, 10.0, 32, 1.0)
    phi = sample_radial(grid, bump, singular=False)
    params = make_params(nl, "critical-power-high", 0.5, N=2, theta=1.0, r=1.0)
    fam = SupersolutionFamily(phi, nl, params)
    want = 1.5 * np.maximum(apply_semigroup(phi.with_values(phi.values ** 3), 0.2).values,
                            0.0) ** (1 / 3)
    assert np.allclose(fam.at(0.2), want, atol=1e-12)


def test_family_dominates_datum_at_start():
    grid = GridSpec(1, 40.0, 1024, 1.5)
    phi = sample_radial(grid, lambda r: r ** -0.3 if r > 0 else math.inf)
    params = make_params(CUBE, "power", 0.5, N=1, theta=1.5, r=1.0)
    fam = SupersolutionFamily(phi, CUBE, params, symbol="lattice")
    assert np.all(fam.at(1e-12) >= phi.values * (1 - 1e-9))


SMALL = GridSpec(1, 20.0, 128, 1.5)
SMALL_PHI = sample_radial(SMALL, lambda r: r ** -0.3 if r > 0 else math.inf)


@given(st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.floats(1e-4, 1e-2))
@settings(max_examples=25, deadline=None)
def test_monotone_in_sigma(s1, s2, t):
    lo, hi = sorted((s1, s2))
    fams = [SupersolutionFamily(SMALL_PHI, CUBE,
                                make_params(CUBE, "power", s, N=1, theta=1.5, r=1.0),
                                symbol="lattice") for s in (lo, hi)]
    assert np.all(fams[1].at(t) >= fams[0].at(t) * (1 - 1e-12))


def test_out_of_regime_datum_is_invalid(tmp_path):
    # e^phi = |x|^{-2} is not locally integrable: outside the critical hypotheses
    grid = GridSpec(1, 40.0, 1024, 2.0)
    phi = sample_radial(grid, lambda r: max(-2.0 * math.log(r), 0.0) if r > 0 else math.inf)
    params = make_params(EXP, "critical-exp", 1.0, N=1, theta=2.0, r=0.5)
    cert = verify_supersolution(phi, EXP, params, 1e-2)
    assert not cert.valid and cert.verdict == "INVALID"
    assert cert.min_residual < -1.0
    cert.to_json(tmp_path / "c.json")
    data = json.loads((tmp_path / "c.json").read_text())
    assert data["verdict"] == "INVALID" and data["T"] == 1e-2
    assert data["residual_by_ns"][-1][1] == cert.min_residual


def test_in_regime_bump_is_valid_and_stable():
    grid = GridSpec(1, 40.0, 1024, 2.0)
    phi = sample_radial(grid, bump, singular=False)
    params = make_params(EXP, "critical-exp", 1.0, N=1, theta=2.0, r=0.5)
    cert = verify_supersolution(phi, EXP, params, 0.25)
    assert cert.valid
    ns_hist = [n for n, _ in cert.residual_history]
    assert ns_hist == sorted(ns_hist) and len(ns_hist) >= 2


def test_boundary_r_equals_q_minus_one_uses_unshifted_exponent():
    # f = u^2: q = 2, so r = 1 leaves no room for eps and q0 = q is used
    square = make_nonlinearity("upow:2")
    params = make_params(square, "power", 0.5, N=1, theta=1.5, r=1.0)
    assert params.q0 == 2.0 and params.epsilon == 0.0
    check_regime(square, params, 1, 1.5)
    with pytest.raises(RegimeViolation):
        make_params(square, "power", 0.5, N=1, theta=1.5, r=1.0, epsilon=0.1)
    phi = sample_radial(GridSpec(1, 40.0, 1024, 1.5), lambda r: math.exp(-r * r),
                        singular=False)
    assert verify_supersolution(phi, square, params, 0.05).valid


def test_supercritical_witness_has_no_certificate():
    # alpha = 1.8 lies in (theta, N/r) for r = 0.4; the power formula is
    # applied outside its regime and must fail at every searched T.  The
    # grid has to resolve the singularity down to the smallest T searched.
    base = make_params(CUBE, "power", 0.5, N=1, theta=1.5, r=1.0)
    params = SupersolutionParams("power", 0.5, q0=base.q0, epsilon=base.epsilon, u0=base.u0,
                                 r=0.4)
    phi = sample_radial(GridSpec(1, 10.0, 8192, 1.5), witness_radial(CUBE, SingularDataSpec(1.8)))
    search = find_certificate(phi, CUBE, params, check=False)
    assert not search.valid
    assert all(step["outcome"] == "INVALID" for step in search.trail)
    assert search.trail[-1]["T"] < 1e-5
