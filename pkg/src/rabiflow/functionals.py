"""The interpolated action A_r, its L^2 gradient and finite-difference checks.

    A_r(v, tau) = -area(v) + tau * (r f(Hbar(v)) + (1 - r) mean f(H(v)))

The metric pairs loop tangents by the flat L^2 product (J is multiplication
by i on each plane, so omega(xi, J eta) = Re(conj(xi) eta)) plus the product
of the tau-slots. Tangents are pairs (complex array (m, N), float).
"""
import numpy as np

from . import kernels
from .loopspace import FlowState, Loop, area, time_derivative


def _mix(sys, state):
    """Energy trace, averages and the mixed coefficient r f_i(Hbar) + (1-r) f_i(H(t))."""
    w = state.loop.samples
    P, dP, d2P = sys.profiles(w)
    hbar = P.mean(axis=-1)
    r = state.r
    grad_bar = sys.coupling.grad(hbar)
    grad_pt = np.moveaxis(sys.coupling.grad(P.T), -1, 0)
    coef = r * grad_bar[:, None] + (1.0 - r) * grad_pt
    return P, dP, d2P, hbar, coef


def constraint(sys, state):
    """r f(Hbar(v)) + (1 - r) mean f(H(v)): the tau-slot of the gradient."""
    P = sys.H(state.loop.samples)
    hbar = P.mean(axis=-1)
    return float(state.r * sys.coupling.eval(hbar) + (1.0 - state.r) * np.mean(sys.coupling.eval(P.T)))


def action(sys, state):
    return -area(sys, state.loop) + state.tau * constraint(sys, state)


def gradient(sys, state):
    """L^2 gradient (loop slot, tau slot).

    Loop slot, per component and sample: i (dv_i/dt - tau c_i(t) X_{H_i}(v_i(t)))
    with c_i(t) = r f_i(Hbar) + (1 - r) f_i(H(v(t))).
    """
    w = state.loop.samples
    _, dP, _, _, coef = _mix(sys, state)
    G, _ = kernels.loop_residual(w, time_derivative(w), coef, dP, state.tau)
    return G, constraint(sys, state)


def pairing(a, b):
    """Metric pairing of two tangents."""
    ga, sa = a
    gb, sb = b
    N = np.shape(ga)[-1]
    return float(np.sum(np.real(np.conj(ga) * gb)) / N + sa * sb)


def tangent_norm(t):
    return float(np.sqrt(pairing(t, t)))


def grad_norm(sys, state):
    w = state.loop.samples
    _, dP, _, _, coef = _mix(sys, state)
    _, sumsq = kernels.loop_residual(w, time_derivative(w), coef, dP, state.tau)
    s = constraint(sys, state)
    return float(np.sqrt(sumsq + s * s))


def displaced(state, direction, h):
    """state + h * direction, the loop moved samplewise."""
    dv, dtau = direction
    return FlowState(Loop(state.loop.samples + h * np.asarray(dv)), state.tau + h * dtau, state.r)


def directional_derivative_fd(sys, state, direction, h=1e-5):
    """Central difference of the action along ``direction``."""
    if not h > 0:
        raise ValueError(f"step h must be positive, got {h}")
    plus = action(sys, displaced(state, direction, h))
    minus = action(sys, displaced(state, direction, -h))
    return (plus - minus) / (2.0 * h)


def gradient_jvp(sys, state, dv, dtau):
    """Derivative of the gradient along a batch of directions.

    ``dv`` has shape (B, m, N) and ``dtau`` shape (B,). Returns the loop-slot
    derivatives (B, m, N) and the tau-slot derivatives (B,).
    """
    w = state.loop.samples
    tau, r = state.tau, state.r
    dv = np.asarray(dv, dtype=np.complex128)
    dtau = np.asarray(dtau, dtype=np.float64)
    P, dP, d2P, hbar, coef = _mix(sys, state)
    f = sys.coupling
    # dH_i(t) = P'(s) ds, ds = 2 Re(conj(w) xi)
    ds = 2.0 * np.real(np.conj(w)[None] * dv)
    dH = dP[None] * ds
    dHbar = dH.mean(axis=-1)
    hess_bar = f.hess(hbar)
    hess_pt = f.hess(P.T)  # (N, m, m)
    dcoef = r * np.einsum("ij,bj->bi", hess_bar, dHbar)[:, :, None] + (1.0 - r) * np.einsum(
        "nij,bjn->bin", hess_pt, dH
    )
    X = 2j * dP * w
    dX = 2j * (d2P[None] * ds * w[None] + dP[None] * dv)
    ddw = time_derivative(dv)
    dG = 1j * (ddw - dtau[:, None, None] * (coef * X)[None] - tau * (dcoef * X[None] + coef[None] * dX))
    grad_bar = f.grad(hbar)
    grad_pt = np.moveaxis(f.grad(P.T), -1, 0)
    dS = r * dHbar @ grad_bar + (1.0 - r) * np.mean(np.sum(grad_pt[None] * dH, axis=1), axis=-1)
    return dG, dS
