import json
import math

import numpy as np
import pytest

from rabiflow.critical import realize_loop
from rabiflow.flow import FlowConfig, Scheme, Termination, flow_run, flow_step
from rabiflow.functionals import action, grad_norm
from rabiflow.loopspace import FlowState, Loop, l2_norm, random_loop


@pytest.fixture
def perturbed(ellipsoid, ellipsoid_orbit):
    st = realize_loop(ellipsoid, ellipsoid_orbit, 256, 0.5)
    p = random_loop(ellipsoid, 1, 3.0, 1.0, 256).samples
    return FlowState(Loop(st.loop.samples + p * (1e-2 / l2_norm(p))), st.tau, 0.5)


def test_config_validation():
    with pytest.raises(ValueError):
        FlowConfig(ds=0.0)
    with pytest.raises(ValueError):
        FlowConfig(scheme="leapfrog")
    assert FlowConfig(scheme="explicit-euler").scheme is Scheme.EXPLICIT_EULER


@pytest.mark.parametrize("scheme", list(Scheme))
def test_critical_state_is_fixed(ellipsoid, ellipsoid_orbit, nonlinear, nonlinear_orbit, scheme):
    cfg = FlowConfig(ds=1e-3, scheme=scheme)
    for sys, orbit in ((ellipsoid, ellipsoid_orbit), (nonlinear, nonlinear_orbit)):
        st = realize_loop(sys, orbit, 256, 0.5)
        nxt = flow_step(sys, st, cfg)
        assert np.max(np.abs(nxt.loop.samples - st.loop.samples)) <= 1e-8 * cfg.ds
        assert abs(nxt.tau - st.tau) <= 1e-8 * cfg.ds


def test_tau_only_dynamics(single):
    st = FlowState(Loop(np.zeros((1, 16))), 0.25, 0.3)
    cfg = FlowConfig(ds=0.01, scheme="explicit-euler")
    for _ in range(100):
        st = flow_step(single, st, cfg)
    assert st.tau == pytest.approx(1.25, abs=1e-12)
    assert np.all(st.loop.samples == 0)


@pytest.mark.parametrize("ds", [1e-3, 1e-4])
def test_euler_step_descends(ellipsoid, perturbed, ds):
    nxt = flow_step(ellipsoid, perturbed, FlowConfig(ds=ds, scheme="explicit-euler"))
    assert action(ellipsoid, nxt) < action(ellipsoid, perturbed)


def test_action_rate_is_minus_grad_squared(ellipsoid, perturbed):
    g2 = grad_norm(ellipsoid, perturbed) ** 2
    errs = []
    for ds in (1e-3, 1e-4, 1e-5):
        nxt = flow_step(ellipsoid, perturbed, FlowConfig(ds=ds, scheme="explicit-euler"))
        errs.append(abs((action(ellipsoid, nxt) - action(ellipsoid, perturbed)) / ds + g2))
    # first order: the error drops by ~10 per decade of ds
    assert 8 < errs[0] / errs[1] < 12
    assert 8 < errs[1] / errs[2] < 12


def test_run_from_critical_converges_immediately(ellipsoid, ellipsoid_orbit):
    rep = flow_run(ellipsoid, realize_loop(ellipsoid, ellipsoid_orbit, 256, 0.5), FlowConfig())
    assert rep.termination is Termination.CONVERGED
    assert rep.rows[-1][0] <= 1
    assert rep.actions[-1] == pytest.approx(-1.0, abs=1e-12)


@pytest.mark.parametrize("scheme", list(Scheme))
def test_action_trace_monotone(ellipsoid, perturbed, scheme):
    rep = flow_run(ellipsoid, perturbed, FlowConfig(ds=1e-4, max_steps=200, scheme=scheme))
    a = rep.actions
    assert len(a) == 201
    assert np.all(np.diff(a) <= 1e-12 * (1 + np.abs(a[:-1])))


def test_zero_budget(ellipsoid, perturbed):
    rep = flow_run(ellipsoid, perturbed, FlowConfig(max_steps=0))
    assert rep.termination is Termination.BUDGET_EXHAUSTED
    assert len(rep.rows) == 1 and rep.rows[0][0] == 0


def test_blowup_detected(ellipsoid, perturbed):
    with np.errstate(all="ignore"):
        rep = flow_run(ellipsoid, perturbed, FlowConfig(ds=10.0, max_steps=100, scheme="explicit-euler"))
    assert rep.termination is Termination.DIVERGED
    assert rep.rows[-1][0] < 100


def test_stride_and_exports(ellipsoid, perturbed):
    rep = flow_run(ellipsoid, perturbed, FlowConfig(ds=1e-4, max_steps=10, stride=4, snapshot_stride=5))
    assert [r[0] for r in rep.rows] == [0, 4, 8, 10]
    assert [s for s, _ in rep.snapshots] == [0, 10]
    lines = rep.to_csv().splitlines()
    assert lines[0] == "step,s,action,grad_norm,tau" and len(lines) == 5
    assert float(lines[2].split(",")[2]) == rep.rows[1][2]
    doc = json.loads(rep.to_json())
    assert doc["termination"] == "BudgetExhausted" and doc["final"]["loop"]["n_samples"] == 256


def test_tau_bounded_along_short_runs(ellipsoid, perturbed):
    """|tau| stays below c(|A| + 1) (with the nonlinear-system c scale) while the action stays in a window."""
    rep = flow_run(ellipsoid, perturbed, FlowConfig(ds=1e-4, max_steps=100))
    c = 6.0  # 6/kappa with kappa = 1 on the ellipsoid band
    assert np.all(np.abs(rep.taus) <= c * (np.abs(rep.actions) + 1))
    assert math.isfinite(rep.grad_norms[-1])
