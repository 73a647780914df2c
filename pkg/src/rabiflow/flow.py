"""Negative gradient flow of A_r in the flow time s.

    d/ds v = -i (dv/dt - tau c X(v)),    d/ds tau = -(r f(Hbar) + (1 - r) mean f(H))

Two schemes: explicit Euler on both slots, and an exponential (ETD1) scheme
that integrates the linear part -i d/dt exactly mode by mode. Note that
-i d/dt multiplies Fourier mode k by 2 pi k, so positive modes grow: the
forward flow is not parabolic, and blow-up is detected rather than assumed
away.
"""
import csv
import enum
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .functionals import _mix, action, constraint, gradient, grad_norm
from .loopspace import FlowState, Loop, loop_to_dict, mode_numbers


class Scheme(str, enum.Enum):
    EXPLICIT_EULER = "explicit-euler"
    EXPONENTIAL_SPLITTING = "exponential-splitting"


class Termination(str, enum.Enum):
    CONVERGED = "Converged"
    BUDGET_EXHAUSTED = "BudgetExhausted"
    DIVERGED = "Diverged"


@dataclass(frozen=True)
class FlowConfig:
    ds: float = 1e-3
    max_steps: int = 1000
    grad_tol: float = 1e-6
    scheme: Scheme = Scheme.EXPONENTIAL_SPLITTING
    blowup_norm: float = 1e6
    stride: int = 1
    snapshot_stride: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.ds > 0:
            raise ValueError("ds must be positive")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if not self.blowup_norm > 0:
            raise ValueError("blowup_norm must be positive")
        if self.max_steps < 0 or self.stride < 1 or self.snapshot_stride < 0:
            raise ValueError("max_steps >= 0, stride >= 1 and snapshot_stride >= 0 required")


def _etd_factors(N, ds):
    lam = 2.0 * np.pi * mode_numbers(N)
    if N % 2 == 0:
        lam[N // 2] = 0.0
    z = lam * ds
    phi1 = np.ones_like(z)
    nz = z != 0
    phi1[nz] = np.expm1(z[nz]) / z[nz]
    return np.exp(z), ds * phi1


def flow_step(sys, state, cfg):
    """One step of d/ds (v, tau) = -grad A_r(v, tau); r is held fixed."""
    w = state.loop.samples
    if cfg.scheme is Scheme.EXPLICIT_EULER:
        G, S = gradient(sys, state)
        return FlowState(Loop(w - cfg.ds * G), state.tau - cfg.ds * S, state.r)
    _, dP, _, _, coef = _mix(sys, state)
    # remaining (non-derivative) part of the gradient's loop slot
    nonlinear = 2.0 * state.tau * coef * dP * w
    S = constraint(sys, state)
    expo, phi = _etd_factors(w.shape[-1], cfg.ds)
    hat = np.fft.fft(w, axis=-1) * expo - np.fft.fft(nonlinear, axis=-1) * phi
    return FlowState(Loop(np.fft.ifft(hat, axis=-1)), state.tau - cfg.ds * S, state.r)


@dataclass
class FlowReport:
    rows: list = field(default_factory=list)
    termination: Termination = Termination.BUDGET_EXHAUSTED
    final: FlowState = None
    snapshots: list = field(default_factory=list)

    @property
    def actions(self):
        return np.array([row[2] for row in self.rows])

    @property
    def grad_norms(self):
        return np.array([row[3] for row in self.rows])

    @property
    def taus(self):
        return np.array([row[4] for row in self.rows])

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step", "s", "action", "grad_norm", "tau"])
        for step, s, a, g, tau in self.rows:
            writer.writerow([step, repr(s), repr(a), repr(g), repr(tau)])
        return buf.getvalue()

    def to_dict(self):
        return {
            "termination": self.termination.value,
            "columns": ["step", "s", "action", "grad_norm", "tau"],
            "rows": [list(row) for row in self.rows],
            "final": {
                "tau": self.final.tau,
                "r": self.final.r,
                "loop": loop_to_dict(self.final.loop),
            }
            if self.final is not None
            else None,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, allow_nan=True)


def _diverged(state, limit):
    w = state.loop.samples
    if not (np.all(np.isfinite(w)) and np.isfinite(state.tau)):
        return True
    return bool(max(np.max(np.abs(w.real)), np.max(np.abs(w.imag))) > limit or abs(state.tau) > limit)


def flow_run(sys, state, cfg):
    """Iterate ``flow_step`` until convergence, divergence or the step budget.

    Rows (step, s, action, grad_norm, tau) are recorded every ``cfg.stride``
    steps and at termination.
    """
    report = FlowReport()

    def record(step, st, g):
        report.rows.append((step, step * cfg.ds, float(action(sys, st)), float(g), st.tau))
        if cfg.snapshot_stride and step % cfg.snapshot_stride == 0:
            report.snapshots.append((step, st))

    step = 0
    g = grad_norm(sys, state)
    while True:
        if _diverged(state, cfg.blowup_norm) or not np.isfinite(g):
            report.termination = Termination.DIVERGED
            break
        if g <= cfg.grad_tol:
            report.termination = Termination.CONVERGED
            break
        if step >= cfg.max_steps:
            report.termination = Termination.BUDGET_EXHAUSTED
            break
        if step % cfg.stride == 0:
            record(step, state, g)
        state = flow_step(sys, state, cfg)
        step += 1
        g = grad_norm(sys, state)
    if not report.rows or report.rows[-1][0] != step:
        with np.errstate(all="ignore"):
            record(step, state, g)
    report.final = state
    return report
