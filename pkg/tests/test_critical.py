import math
from dataclasses import replace

import numpy as np
import pytest

from rabiflow.critical import (
    InfeasibleBranch,
    NoConvergence,
    SingularSystem,
    constant_family,
    ellipsoid_spectrum,
    orbit_invariants,
    realize_loop,
    realized_action_gap,
    refine_full,
    solve_reduced,
    with_residual,
)
from rabiflow.functionals import action, grad_norm
from rabiflow.geometry import Coupling, Factor, ProductSystem
from rabiflow.loopspace import FlowState, Loop, TorusShift, area, random_loop, reparametrize

from conftest import SQRT2

R_GRID = [i / 10 for i in range(11)]


def test_ellipsoid_orbit(ellipsoid_orbit):
    o = ellipsoid_orbit
    assert o.h == pytest.approx((1.0, 0.0), abs=1e-13)
    assert o.tau == pytest.approx(1.0, abs=1e-13)
    assert o.action == pytest.approx(-1.0, abs=1e-13)


def test_nonlinear_orbit(nonlinear_orbit):
    o = nonlinear_orbit
    assert o.h == pytest.approx((SQRT2 - 1, SQRT2 - 1), abs=1e-13)
    assert o.tau == pytest.approx(1 / SQRT2, abs=1e-13)
    assert o.action == pytest.approx(-2 * (SQRT2 - 1), abs=1e-13)
    assert o.action == pytest.approx(-0.82843, abs=1e-5)


def test_incommensurable_frequencies_rejected():
    sys = ProductSystem.uncut(Coupling.linear([1.0, 1 / SQRT2], -1.0))
    with pytest.raises((NoConvergence, SingularSystem)):
        solve_reduced(sys, (1, 1), (0.5, 0.5))


def test_negative_winding_is_infeasible_for_positive_gradient(nonlinear):
    # tau f_i = k_i with mixed signs forces some h_i < 0 or no solution at all
    with pytest.raises((InfeasibleBranch, NoConvergence, SingularSystem)):
        solve_reduced(nonlinear, (1, -1), (0.5, 0.5))


def test_negative_orbit(ellipsoid):
    o = solve_reduced(ellipsoid, (-1, 0), (0.5, 0.0))
    assert o.tau == pytest.approx(-1.0) and o.action == pytest.approx(1.0)
    assert grad_norm(ellipsoid, realize_loop(ellipsoid, o)) <= 1e-9


def test_argument_errors(ellipsoid):
    with pytest.raises(ValueError):
        solve_reduced(ellipsoid, (1,), (0.5, 0.5))
    with pytest.raises(ValueError):
        solve_reduced(ellipsoid, (0, 0), (0.5, 0.5))


def test_cutoff_orbit_inside_flat_region():
    sys = ProductSystem((Factor(2.0), Factor(2.0)), Coupling.ellipsoid([1.0, 2.0]))
    o = solve_reduced(sys, (1, 0), (0.9, 0.0))
    assert o.tau == pytest.approx(1.0) and o.action == pytest.approx(-1.0)
    assert grad_norm(sys, realize_loop(sys, o)) <= 1e-9


def test_realize_examples(ellipsoid, nonlinear, ellipsoid_orbit, nonlinear_orbit):
    assert grad_norm(ellipsoid, realize_loop(ellipsoid, ellipsoid_orbit, 256, 0.0)) <= 1e-9
    st = realize_loop(nonlinear, nonlinear_orbit, 256, 1.0)
    assert grad_norm(nonlinear, st) <= 1e-9
    assert action(nonlinear, st) == pytest.approx(-0.82843, abs=1e-5)
    assert action(nonlinear, st) == pytest.approx(-2 * (SQRT2 - 1), abs=1e-8)
    assert with_residual(nonlinear, nonlinear_orbit).residual <= 1e-9


def test_constant_family():
    sys = ProductSystem.uncut(Coupling.pairwise([1.0, 1.0], [[0.0, 1.0], [1.0, 0.0]], 0.0))
    fam = constant_family(sys)
    assert fam is not None and fam.family
    for tau in (-3.0, 0.0, 5.0):
        st = realize_loop(sys, replace(fam, tau=tau))
        assert np.all(st.loop.samples == 0)
        assert grad_norm(sys, st) == 0.0
    assert constant_family(ProductSystem.uncut(Coupling.ellipsoid([1.0, 2.0]))) is None


@pytest.mark.parametrize("r", R_GRID)
def test_theorem_a_on_grid(ellipsoid, nonlinear, ellipsoid_orbit, nonlinear_orbit, r):
    for sys, orbit in ((ellipsoid, ellipsoid_orbit), (nonlinear, nonlinear_orbit)):
        st = realize_loop(sys, orbit, 256, r)
        assert grad_norm(sys, st) <= 1e-8
        assert action(sys, st) == pytest.approx(orbit.action, abs=1e-10)
        assert realized_action_gap(sys, st) <= 1e-9
        assert np.max(np.std(sys.H(st.loop.samples), axis=-1)) <= 1e-10


def test_torus_orbit_of_solutions(nonlinear, nonlinear_orbit):
    st = realize_loop(nonlinear, nonlinear_orbit, 256, 1.0)
    base = grad_norm(nonlinear, st)
    moved = FlowState(reparametrize(st.loop, TorusShift((0.13, 0.71))), st.tau, 1.0)
    assert grad_norm(nonlinear, moved) <= max(10 * base, 1e-12)
    for r in (0.0, 0.5):
        d = FlowState(reparametrize(st.loop, TorusShift.diagonal(0.37, 2)), st.tau, r)
        assert grad_norm(nonlinear, d) <= 1e-9


def test_orbit_invariants(nonlinear, nonlinear_orbit):
    inv = orbit_invariants(nonlinear, nonlinear_orbit)
    assert max(inv.values()) <= 1e-13


def test_refine_returns_input_below_tol(nonlinear, nonlinear_orbit):
    st = realize_loop(nonlinear, nonlinear_orbit, 64, 0.5)
    assert refine_full(nonlinear, st, tol=1e-8) is st


def test_refine_converges_back(nonlinear, nonlinear_orbit):
    st = realize_loop(nonlinear, nonlinear_orbit, 64, 0.5)
    p = random_loop(nonlinear, 3, 3.0, 1.0, 64).samples
    p = p * (1e-3 / np.max(np.abs(p)))
    sol = refine_full(nonlinear, FlowState(Loop(st.loop.samples + p), st.tau + 1e-3, 0.5), tol=1e-10)
    assert grad_norm(nonlinear, sol) <= 1e-10
    assert action(nonlinear, sol) == pytest.approx(nonlinear_orbit.action, abs=1e-7)
    assert np.max(np.std(nonlinear.H(sol.loop.samples), axis=-1)) <= 1e-9


def test_refine_far_from_critical_reports(nonlinear):
    st = FlowState(random_loop(nonlinear, 5, 2.0, 1.5, 16), 7.0, 0.5)
    try:
        sol = refine_full(nonlinear, st, tol=1e-10, max_iter=3)
    except NoConvergence as exc:
        assert exc.best is not None
        assert grad_norm(nonlinear, exc.best) <= grad_norm(nonlinear, st)
    else:
        assert grad_norm(nonlinear, sol) <= 1e-10


def test_spectrum_a12():
    entries = ellipsoid_spectrum([1.0, 2.0], 2)
    by_k = {e.k: e for e in entries}
    assert (by_k[(1, 0)].tau, by_k[(1, 0)].action) == (1.0, -1.0)
    assert (by_k[(2, 0)].tau, by_k[(2, 0)].action) == (2.0, -2.0)
    assert (by_k[(0, 1)].tau, by_k[(0, 1)].action) == (2.0, -2.0)
    fam = by_k[(2, 1)]
    assert fam.family and fam.tau == 2.0 and fam.action == -2.0
    assert by_k[(2, 0)].family and by_k[(0, 1)].family and not by_k[(1, 0)].family
    assert (-1, 0) in by_k and by_k[(-1, 0)].action == 1.0


def test_spectrum_hopf_family():
    entries = ellipsoid_spectrum([1.0, 1.0], 1)
    fam = [e for e in entries if e.k == (1, 1)]
    assert len(fam) == 1 and fam[0].family and fam[0].tau == 1.0 and fam[0].action == -1.0


def test_spectrum_empty():
    assert ellipsoid_spectrum([1.0, 2.0], 0) == []
    with pytest.raises(ValueError):
        ellipsoid_spectrum([1.0, -2.0], 1)


def test_spectrum_matches_solver():
    sys = ProductSystem.uncut(Coupling.ellipsoid([1.0, 2.0]))
    for e in ellipsoid_spectrum([1.0, 2.0], 2):
        if e.family:
            continue
        o = solve_reduced(sys, e.k, [0.5, 0.5])
        assert o.tau == pytest.approx(e.tau) and o.action == pytest.approx(e.action)
        assert area(sys, realize_loop(sys, o).loop) == pytest.approx(-e.action, abs=1e-10)
