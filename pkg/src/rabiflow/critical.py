"""Critical points of A_r.

Critical points have constant component energies, so for radial H_i they are
circles: v_i(t) = rho_i exp(2 pi i (k_i t + phi_i)) with H_i(rho_i) = h_i,
f(h) = 0 and tau f_i(h) = k_i whenever h_i > 0. ``solve_reduced`` solves
this algebraic system; ``refine_full`` polishes arbitrary near-critical
discretized states with Gauss-Newton on the full gradient.
"""
import logging
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
import scipy.linalg

from .functionals import action, gradient, gradient_jvp, grad_norm
from .loopspace import FlowState, Loop, area

log = logging.getLogger(__name__)


class NoConvergence(RuntimeError):
    """Iteration budget exhausted; ``best`` holds the last iterate when available."""

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


class InfeasibleBranch(RuntimeError):
    pass


class SingularSystem(RuntimeError):
    pass


@dataclass(frozen=True)
class CriticalOrbit:
    h: tuple
    tau: float
    k: tuple
    phases: tuple
    action: float
    residual: float = float("nan")
    family: bool = False

    @property
    def m(self):
        return len(self.h)


def _frequency_factor(sys, h):
    """P'(s_i)/pi at the circle radius of level h_i (1 for the uncut profile)."""
    out = np.ones(len(h))
    for i, (fac, hi) in enumerate(zip(sys.factors, h)):
        if hi > 0 and fac.cutoff_radius is not None:
            rho = fac.radius_for_level(hi)
            out[i] = float(fac.profile(rho**2)[1]) / np.pi
    return out


def _orbit_action(sys, k, h):
    # minus the enclosed area: -sum k_i pi rho_i^2 (= -sum k_i h_i when uncut)
    total = 0.0
    for fac, ki, hi in zip(sys.factors, k, h):
        if hi > 0:
            total += ki * (hi if fac.cutoff_radius is None else np.pi * fac.radius_for_level(hi) ** 2)
    return float(-total)


def solve_reduced(sys, k, h0, tol=1e-13, max_iter=100):
    """Newton on {f(h) = 0, tau f_i(h) = k_i for k_i != 0}, unknowns (h_active, tau)."""
    k = tuple(int(x) for x in k)
    if len(k) != sys.m:
        raise ValueError(f"winding vector has length {len(k)}, expected {sys.m}")
    active = [i for i, x in enumerate(k) if x != 0]
    if not active:
        raise ValueError("at least one winding number must be nonzero")
    f = sys.coupling
    h = np.zeros(sys.m)
    h0 = np.asarray(h0, dtype=np.float64)
    h[active] = h0[active]
    g = f.grad(h)
    with np.errstate(divide="ignore", invalid="ignore"):
        guesses = np.array([k[i] / g[i] for i in active])
    guesses = guesses[np.isfinite(guesses)]
    tau = float(np.mean(guesses)) if guesses.size else 1.0
    na = len(active)
    for it in range(max_iter):
        g = f.grad(h)
        fac = _frequency_factor(sys, h)
        F = np.empty(na + 1)
        F[0] = f.eval(h)
        F[1:] = tau * g[active] * fac[active] - np.array([k[i] for i in active])
        if np.max(np.abs(F)) <= tol:
            break
        J = np.zeros((na + 1, na + 1))
        J[0, :na] = g[active]
        J[1:, :na] = tau * f.hess(h)[np.ix_(active, active)] * fac[active][:, None]
        J[1:, na] = g[active] * fac[active]
        if np.linalg.cond(J) > 1e12:
            raise SingularSystem(f"singular Jacobian for k={k} at h={h.tolist()}, tau={tau}")
        step = np.linalg.solve(J, -F)
        h[active] += step[:na]
        tau += step[na]
        if not np.all(np.isfinite(h)) or not np.isfinite(tau):
            raise NoConvergence(f"Newton diverged for k={k}")
    else:
        raise NoConvergence(f"Newton did not converge for k={k} in {max_iter} iterations")
    if np.any(h[active] <= 0):
        raise InfeasibleBranch(f"solution for k={k} has nonpositive level h={h.tolist()}")
    return CriticalOrbit(
        h=tuple(float(x) for x in h),
        tau=float(tau),
        k=k,
        phases=(0.0,) * sys.m,
        action=_orbit_action(sys, k, h),
    )


def realize_loop(sys, orbit, N=256, r=0.0):
    """Sample the orbit's circles on N points and pair with its tau."""
    t = np.arange(N) / N
    w = np.zeros((sys.m, N), dtype=np.complex128)
    for i, (fac, hi, ki, phi) in enumerate(zip(sys.factors, orbit.h, orbit.k, orbit.phases)):
        if hi > 0:
            w[i] = fac.radius_for_level(hi) * np.exp(2j * np.pi * (ki * t + phi))
    return FlowState(Loop(w), orbit.tau, r)


def with_residual(sys, orbit, N=256, r=0.0):
    return replace(orbit, residual=grad_norm(sys, realize_loop(sys, orbit, N, r)))


def _jacobian(sys, state):
    """Real Jacobian of the scaled residual w.r.t. (Re v, Im v, tau)."""
    m, N = state.loop.samples.shape
    n = m * N
    eye = np.eye(n).reshape(n, m, N)
    dv = np.concatenate([eye, 1j * eye, np.zeros((1, m, N))])
    dtau = np.zeros(2 * n + 1)
    dtau[-1] = 1.0
    dG, dS = gradient_jvp(sys, state, dv, dtau)
    scale = 1.0 / np.sqrt(N)
    cols = np.concatenate([dG.real.reshape(-1, n) * scale, dG.imag.reshape(-1, n) * scale, dS[:, None]], axis=1)
    return cols.T


def _residual(sys, state):
    G, S = gradient(sys, state)
    scale = 1.0 / np.sqrt(G.shape[-1])
    return np.concatenate([G.real.ravel() * scale, G.imag.ravel() * scale, [S]])


def refine_full(sys, state, tol=1e-10, max_iter=40):
    """Damped Gauss-Newton on the discretized gradient until grad_norm <= tol.

    Least-squares steps (minimum norm) handle the kernel coming from the
    torus symmetry of the critical set. Raises NoConvergence with the best
    iterate attached when the budget runs out or no step reduces the norm.
    """
    g = grad_norm(sys, state)
    if not np.isfinite(g):
        raise ValueError("gradient norm is not finite")
    m, N = state.loop.samples.shape
    n = m * N
    for it in range(max_iter):
        if g <= tol:
            return state
        J = _jacobian(sys, state)
        R = _residual(sys, state)
        step, *_ = scipy.linalg.lstsq(J, -R, cond=1e-11, lapack_driver="gelsy")
        dv = (step[:n] + 1j * step[n : 2 * n]).reshape(m, N)
        dtau = step[-1]
        alpha = 1.0
        while alpha > 1e-6:
            trial = FlowState(Loop(state.loop.samples + alpha * dv), state.tau + alpha * dtau, state.r)
            gt = grad_norm(sys, trial)
            if np.isfinite(gt) and gt < g:
                break
            alpha *= 0.5
        else:
            raise NoConvergence(f"no descent step at grad_norm={g:.3e}", best=state)
        log.debug("refine iter %d: grad_norm %.3e -> %.3e (alpha %.3g)", it, g, gt, alpha)
        state, g = trial, gt
    if g <= tol:
        return state
    raise NoConvergence(f"grad_norm {g:.3e} > {tol:.1e} after {max_iter} iterations", best=state)


@dataclass(frozen=True)
class SpectrumEntry:
    k: tuple
    tau: float
    action: float
    family: bool
    h: tuple = ()


def _rational(x, max_den=64, tol=1e-9):
    q = Fraction(x).limit_denominator(max_den)
    return q if abs(float(q) - x) <= tol * max(1.0, abs(x)) else None


def ellipsoid_spectrum(a, k_max):
    """Closed-form critical orbits for f = sum x_i/a_i - 1.

    Single-factor orbits n e_i (1 <= |n| <= k_max) have tau = n a_i,
    h = a_i e_i and action -n a_i. When tau / a_j is an integer for several
    factors the orbits form a family parametrized by h on the face of the
    simplex {sum h_i/a_i = 1}; each family is reported once with its k and
    flagged, and single-factor orbits lying on a family are flagged too.
    """
    a = np.asarray(a, dtype=np.float64)
    if np.any(a <= 0):
        raise ValueError("axes must be positive")
    m = a.shape[0]
    entries = {}
    for i in range(m):
        for n in range(-k_max, k_max + 1):
            if n == 0:
                continue
            tau = n * a[i]
            k = [0] * m
            # every factor j whose frequency tau / a_j is a nonzero integer
            for j in range(m):
                q = _rational(tau / a[j])
                if q is not None and q.denominator == 1 and q != 0:
                    k[j] = int(q)
            support = [j for j in range(m) if k[j] != 0]
            single = [0] * m
            single[i] = n
            h = [0.0] * m
            h[i] = float(a[i])
            entries[tuple(single)] = SpectrumEntry(tuple(single), float(tau), float(-tau), len(support) > 1, tuple(h))
            if len(support) > 1 and all(abs(k[j]) <= k_max for j in support):
                entries[tuple(k)] = SpectrumEntry(tuple(k), float(tau), float(-tau), True, ())
    return sorted(entries.values(), key=lambda e: (abs(e.tau), e.tau, e.k))


def constant_family(sys):
    """The energy-zero constant loops at the origin, present iff f(0) = 0."""
    zero = np.zeros(sys.m)
    if abs(float(sys.coupling.eval(zero))) <= 1e-12:
        return CriticalOrbit(h=tuple(zero), tau=0.0, k=(0,) * sys.m, phases=(0.0,) * sys.m, action=0.0, family=True)
    return None


def orbit_invariants(sys, orbit):
    """Residuals of f(h) = 0, closedness and the action identity."""
    h = np.asarray(orbit.h)
    g = sys.coupling.grad(h) * _frequency_factor(sys, h)
    active = h > 0
    return {
        "constraint": abs(float(sys.coupling.eval(h))),
        "closedness": float(np.max(np.abs(orbit.tau * g[active] - np.asarray(orbit.k)[active]), initial=0.0)),
        "action": abs(orbit.action + float(np.dot(orbit.k, h))),
    }


def realized_action_gap(sys, state):
    """|A_r + area| at a state; zero on critical points."""
    return abs(action(sys, state) + area(sys, state.loop))
