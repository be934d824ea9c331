import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracheat.classify import (CRITICAL, SUBCRITICAL, SUPERCRITICAL, UNCLASSIFIED, ProblemSpec,
                               SingularDataSpec, classify_regime, critical_exponent,
                               make_singular_datum, necessary_condition_scan,
                               power_witness_exponent, quasi_scaling_check, witness_integrability,
                               witness_radial)
from fracheat.field import GridSpec, sample_radial
from fracheat.nonlinearity import eval_F, make_nonlinearity

CUBE = make_nonlinearity("upow:3")
EXP = make_nonlinearity("exp")


@pytest.mark.parametrize("f,N,theta,r,regime,tag", [
    ("upow:3", 1, 2.0, 1.0, SUBCRITICAL, "A(i-2)"),
    ("upow:3", 1, 1.5, 1.0, SUBCRITICAL, "A(i-2)"),
    ("upow:3", 1, 2.0, 0.3, SUPERCRITICAL, "A(ii)"),
    ("exp", 1, 2.0, 0.5, CRITICAL, "Thm5.2(ii)"),
    ("exp", 1, 2.0, 0.8, SUBCRITICAL, "B(i)"),
    ("exp", 2, 1.0, 1.0, SUPERCRITICAL, "B(ii)"),
    ("upow:4", 1, 2.0, 0.5, CRITICAL, "Thm5.1(ii)"),
    ("upow:3", 1, 2.0, 0.5, CRITICAL, UNCLASSIFIED),
    ("powlog:3", 1, 1.5, 1.0, SUBCRITICAL, "A(i-2)"),
    ("upow:3", 1, 1.5, 0.55, SUPERCRITICAL, "A(ii)"),
])
def test_classification_table(f, N, theta, r, regime, tag):
    rep = classify_regime(ProblemSpec(make_nonlinearity(f), N, theta, r))
    assert (rep.regime, rep.theorem_tag) == (regime, tag)
    assert rep.critical_r == pytest.approx(N / theta)


def test_side_conditions_reported():
    rep = classify_regime(ProblemSpec(make_nonlinearity("upow:2"), 1, 2.0, 0.9))
    held = {c["name"]: c["holds"] for c in rep.side_conditions}
    # q = 2: r = 0.9 is above N/theta but below q - 1
    assert held["r > N/theta"] and not held["r >= q-1"]
    assert rep.theorem_tag == UNCLASSIFIED


def test_critical_exponent():
    assert critical_exponent(1, 1.5, 3.0) == pytest.approx(4 / 3)
    with pytest.raises(ValueError):
        critical_exponent(1, 1.0, 1.0)


def test_problem_spec_validation():
    with pytest.raises(ValueError):
        ProblemSpec(CUBE, 1, 0.0, 1.0)
    with pytest.raises(ValueError):
        ProblemSpec(CUBE, 1, 1.0, -1.0)


@given(st.sampled_from(["upow:2", "upow:3", "exp", "powlog:3", "expupow:2"]),
       st.sampled_from([1, 2]), st.floats(0.1, 2.0), st.floats(0.05, 5.0))
@settings(max_examples=40, deadline=None)
def test_classification_is_total(f, N, theta, r):
    rep = classify_regime(ProblemSpec(make_nonlinearity(f), N, theta, r))
    assert rep.regime in (SUBCRITICAL, CRITICAL, SUPERCRITICAL)
    want = SUBCRITICAL if r > N / theta else SUPERCRITICAL if r < N / theta else CRITICAL
    assert rep.regime == want or math.isclose(r, N / theta, rel_tol=1e-12)
    assert isinstance(rep.theorem_tag, str) and rep.to_dict()["q"] == rep.q


def test_witness_datum_inverts_F():
    phi = witness_radial(CUBE, SingularDataSpec(1.8))
    for x in (1e-3, 0.2, 0.9):
        assert float(eval_F(CUBE, phi(x))) == pytest.approx(x ** 1.8, rel=1e-12)
    assert SingularDataSpec(1.8).is_witness(1, 1.5, 0.4)
    assert not SingularDataSpec(1.8).is_witness(1, 1.5, 0.7)


def test_singular_datum_on_grid():
    grid = GridSpec(1, 20.0, 256, 1.5)
    field, radial = make_singular_datum(CUBE, SingularDataSpec(1.2), grid)
    assert np.argmax(field.values) == 128 and field.values.min() >= 0


@pytest.mark.parametrize("alpha,r", [(1.8, 0.4), (1.8, 0.5), (1.0, 0.3)])
def test_integrability_probe_power(alpha, r):
    # F(phi)^{-r} = |x|^{-alpha r}: integral over (-1, 1) is 2/(1 - alpha r)
    probe = witness_integrability(CUBE, SingularDataSpec(alpha), r, 1)
    assert probe.finite
    assert probe.limit == pytest.approx(2 / (1 - alpha * r), rel=1e-4)


def test_integrability_probe_detects_divergence():
    assert not witness_integrability(CUBE, SingularDataSpec(1.8), 0.6, 1).finite
    assert not witness_integrability(EXP, SingularDataSpec(1.0), 1.1, 1).finite


def test_integrability_two_dimensional():
    # int_{|x|<1} |x|^{-1} dx = 2 pi
    probe = witness_integrability(CUBE, SingularDataSpec(2.0), 0.5, 2)
    assert probe.limit == pytest.approx(2 * math.pi, rel=1e-4)


def test_exp_scan_ratio_exceeds_one_and_tends_to_alpha_over_theta():
    # for F^{-1}(t) = -log t the ratio approaches alpha/theta from above as t -> 0
    scan = necessary_condition_scan(EXP, witness_radial(EXP, SingularDataSpec(1.5)), 1.0, 1)
    assert np.all(scan.ratio > 1)
    assert scan.exceeds_bound and not scan.violates
    gaps = scan.ratio - 1.5
    assert np.all(gaps > 0) and np.all(np.diff(gaps) < 0)
    deep = necessary_condition_scan(EXP, witness_radial(EXP, SingularDataSpec(1.5)), 1.0, 1,
                                    t_grid=[1e-10, 1e-14])
    assert deep.ratio == pytest.approx([1.5, 1.5], rel=1e-12)


def test_scan_rejects_bad_times():
    with pytest.raises(ValueError):
        necessary_condition_scan(EXP, lambda r: 1.0, 1.0, 1, t_grid=[2.0])


def test_power_witness_exponent():
    assert power_witness_exponent(CUBE, 1.8) == pytest.approx(0.9)
    assert power_witness_exponent(EXP, 1.0) is None


@pytest.mark.parametrize("dim,box,M", [(1, 40.0, 1024), (2, 20.0, 128)])
def test_quasi_scaling_gaussian(dim, box, M):
    grid = GridSpec(dim, box, M, 2.0)
    u = sample_radial(grid, lambda r: math.exp(-r * r), mollify=False)
    for nl, lift in ((CUBE, 0.0), (EXP, 2.0)):
        for lam in (0.5, 2.0):
            chk = quasi_scaling_check(nl, u.with_values(u.values + lift), lam)
            assert chk.discrepancy <= 1e-10


def test_quasi_scaling_preconditions():
    u = sample_radial(GridSpec(1, 40.0, 256, 1.5), lambda r: math.exp(-r * r), mollify=False)
    with pytest.raises(ValueError):
        quasi_scaling_check(CUBE, u, 2.0)
    u2 = sample_radial(GridSpec(1, 40.0, 256, 2.0), lambda r: math.exp(-r * r), mollify=False)
    with pytest.raises(ValueError):
        quasi_scaling_check(CUBE, u2, 3.0)


@pytest.mark.parametrize("factor", [0.7, 0.9, 1.1, 1.5])
def test_scan_slope_sign_tracks_alpha_against_theta(factor):
    # p = 4 keeps the witness |x|^{-alpha/3} locally integrable for every alpha here
    quartic = make_nonlinearity("upow:4")
    theta = 1.5
    alpha = factor * theta
    scan = necessary_condition_scan(quartic, witness_radial(quartic, SingularDataSpec(alpha)),
                                    theta, 1,
                                    singular_exponent=power_witness_exponent(quartic, alpha))
    assert (scan.slope < -0.01) == (alpha > theta)
