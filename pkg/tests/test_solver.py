import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracheat.field import Field, GridSpec, constant_field, sample_radial
from fracheat.nonlinearity import make_nonlinearity
from fracheat.solver import (BLOWUP, CONVERGED, MAX_ITERATIONS, EvolutionConfig, clamp_level,
                             iterate_monotone, residual)

GRID = GridSpec(1, 20.0, 64, 1.5)
CUBE = make_nonlinearity("upow:3")


def test_constant_datum_follows_ode():
    # u' = u^3, u(0) = c  =>  u(t) = c / sqrt(1 - 2 c^2 t)
    c, T = 1.0, 0.1
    res = iterate_monotone(constant_field(GRID, c), CUBE, EvolutionConfig(GRID, T, 32, 128))
    assert res.status == CONVERGED
    exact = c / np.sqrt(1 - 2 * c * c * res.t_grid)
    assert np.allclose(res.sup_history, exact, rtol=2e-5)
    assert np.ptp(res.slices[-1]) < 1e-12


def test_constant_datum_exp_ode():
    # u' = e^u  =>  u(t) = -log(e^{-c} - t)
    nl = make_nonlinearity("exp")
    c, T = 0.5, 0.3
    errs = []
    for nt in (16, 32):
        res = iterate_monotone(constant_field(GRID, c), nl, EvolutionConfig(GRID, T, nt, 4 * nt))
        assert res.status == CONVERGED
        exact = -np.log(math.exp(-c) - res.t_grid)
        errs.append(float(np.max(np.abs(res.sup_history - exact))))
    # linear interpolation in time: second order
    assert errs[1] < 1e-4
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_constant_datum_blows_up_at_ode_time():
    c, T = 2.0, 0.25
    cfg = EvolutionConfig(GRID, T, 32, 128, blowup_threshold=1e6)
    res = iterate_monotone(constant_field(GRID, c), CUBE, cfg,
                           resample=lambda g: constant_field(g, c))
    t_star = 1 / (2 * c * c)
    assert res.status == BLOWUP
    assert t_star - 1e-9 <= res.blowup_time <= t_star + 2 * T / 32
    assert res.blowup_confirmed
    assert res.refined_blowup_time <= res.blowup_time + T / 32


def test_iterates_increase_and_residual_small():
    phi = sample_radial(GridSpec(1, 20.0, 256, 1.5), lambda r: math.exp(-r * r))
    cfg = EvolutionConfig(phi.spec, 0.05, 16, 64)
    res = iterate_monotone(phi, CUBE, cfg)
    assert res.status == CONVERGED
    assert all(b >= a for a, b in zip(res.iterates_supnorm, res.iterates_supnorm[1:]))
    assert residual(res, phi, CUBE) <= 10 * cfg.conv_tol * res.sup_history.max()
    assert len(res.snapshots) == 3 and res.snapshots[-1].spec.symbol == "lattice"


def test_max_iterations_status():
    cfg = EvolutionConfig(GRID, 0.1, 8, 32, max_iters=2)
    res = iterate_monotone(constant_field(GRID, 1.0), CUBE, cfg)
    assert res.status == MAX_ITERATIONS


def test_input_validation():
    with pytest.raises(ValueError):
        EvolutionConfig(GRID, 0.1, 8, 30)
    with pytest.raises(ValueError):
        EvolutionConfig(GRID, -1.0)
    with pytest.raises(ValueError):
        iterate_monotone(constant_field(GRID, -1.0), CUBE, EvolutionConfig(GRID, 0.1))
    with pytest.raises(ValueError):
        iterate_monotone(constant_field(GRID, 1.0), CUBE,
                         EvolutionConfig(GRID, 0.1, blowup_threshold=0.5))


def test_clamp_level_keeps_f_finite():
    nl = make_nonlinearity("exp")
    cap = clamp_level(nl, 1e8)
    assert cap == pytest.approx(460.0, rel=1e-12)
    assert clamp_level(CUBE, 1e8) == 1e8


def test_refined_config():
    cfg = EvolutionConfig(GRID, 0.1, 8, 32)
    fine = cfg.refined()
    assert fine.grid.resolution == 128 and fine.nt == 16 and fine.ns == 64
    assert not fine.confirm_blowup


SMALL = GridSpec(1, 10.0, 32, 1.5)


@given(st.lists(st.floats(0.0, 1.0), min_size=32, max_size=32),
       st.lists(st.floats(0.0, 0.5), min_size=32, max_size=32))
@settings(max_examples=15, deadline=None)
def test_comparison_in_data(base, bump):
    lo = np.array(base)
    hi = lo + np.array(bump)
    cfg = EvolutionConfig(SMALL, 0.05, 8, 32)
    u_lo = iterate_monotone(Field(SMALL, lo), CUBE, cfg)
    u_hi = iterate_monotone(Field(SMALL, hi), CUBE, cfg)
    assert u_lo.status == u_hi.status == CONVERGED
    assert np.min(u_hi.slices - u_lo.slices) >= -1e-10
