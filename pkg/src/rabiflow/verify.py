"""Verification suites: non-bifurcation across r, torus invariance, the
gradient-bound lemma and finite-difference gradient checks.

Every suite returns a ``VerificationReport``; violations carry enough data
(seed, sample index, values, loop) to replay them.
"""
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .critical import NoConvergence, realize_loop, refine_full
from .flow import FlowConfig, Scheme, flow_step
from .functionals import action, directional_derivative_fd, gradient, pairing
from .loopspace import (
    FlowState,
    Loop,
    TorusShift,
    loop_to_dict,
    mode_numbers,
    oscillation,
    random_loop,
    reparametrize,
)

R_GRID_LEMMA = (0.0, 0.25, 0.5, 0.75, 1.0)


class HypothesisViolation(ValueError):
    """The restricted contact condition fails on the sampled band."""

    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


@dataclass
class VerificationReport:
    suite: str
    cases: int = 0
    worst_residual: float = 0.0
    violations: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return not self.violations

    def to_dict(self):
        return {
            "suite": self.suite,
            "pass": self.passed,
            "cases": self.cases,
            "worst_residual": self.worst_residual,
            "details": self.details,
            "violations": self.violations,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def to_text(self):
        lines = [
            f"suite      {self.suite}",
            f"status     {'PASS' if self.passed else 'FAIL'}",
            f"cases      {self.cases}",
            f"worst      {self.worst_residual:.6e}",
            f"violations {len(self.violations)}",
        ]
        for key in sorted(self.details):
            val = self.details[key]
            if isinstance(val, (int, float, str, bool)):
                lines.append(f"  {key:<28} {val}")
        return "\n".join(lines)


# ---------------------------------------------------------------- constants


@dataclass(frozen=True)
class LemmaConstants:
    kappa: float
    epsilon: float
    delta: float
    L_bound: float
    C_bound: float
    c: float
    region_radius: float
    grid_resolution: int
    m: int = 1

    def __post_init__(self):
        if not self.epsilon <= self.kappa / 4 * (1 + 1e-12):
            raise ValueError(f"epsilon={self.epsilon} exceeds kappa/4={self.kappa / 4}")
        expected = assemble_c(self.kappa, self.epsilon, self.delta, self.L_bound, self.C_bound, self.m)
        if self.c != expected:
            raise ValueError(f"c={self.c} differs from the assembled value {expected}")

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def assemble_c(kappa, epsilon, delta, L_bound, C_bound, m):
    """c = max{C sqrt(m)/delta, 3/(2 eps), 6/kappa, 4 eps L/kappa}."""
    return max(C_bound * math.sqrt(m) / delta, 3.0 / (2.0 * epsilon), 6.0 / kappa, 4.0 * epsilon * L_bound / kappa)


def _radius_grid(m, R, res, seed=0, cap=2_000_000):
    """Per-factor radii covering [0, R]^m: a full grid, or quasi-random samples when too large."""
    if res**m <= cap:
        axes = [np.linspace(0.0, R, res)] * m
        return np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, R, size=(cap, m))
    pts[: 2**m] = np.array(np.meshgrid(*[[0.0, R]] * m, indexing="ij")).reshape(m, -1).T
    return pts


def _levels(sys, rho):
    """(H_i, s_i P_i'(s_i)) at per-factor radii, shape (n, m) each."""
    s = rho**2
    P = np.empty_like(s)
    sdP = np.empty_like(s)
    for i, fac in enumerate(sys.factors):
        p, dp, _ = fac.profile(s[:, i])
        P[:, i] = p
        sdP[:, i] = s[:, i] * dp
    return P, sdP


def _probe_directions(m, n_random=64, seed=0):
    rng = np.random.default_rng(seed)
    dirs = [np.eye(m), -np.eye(m)]
    corners = np.array(np.meshgrid(*[[-1.0, 1.0]] * m, indexing="ij")).reshape(m, -1).T
    dirs.append(corners / np.sqrt(m))
    rand = rng.standard_normal((n_random, m))
    dirs.append(rand / np.linalg.norm(rand, axis=1, keepdims=True))
    return np.concatenate(dirs)


def estimate_constants(sys, region_radius=2.0, grid_resolution=201, epsilon_choice=0.05, delta_max_halvings=60):
    """Estimate (kappa, eps, delta, L, C, c) on K = product of discs of radius ``region_radius``.

    Radial Hamiltonians make every quantity depend on the radii only, so K is
    sampled through a grid of per-factor radii.
    """
    m, R = sys.m, float(region_radius)
    f = sys.coupling
    rho = _radius_grid(m, R, grid_resolution)
    h, sdP = _levels(sys, rho)
    hf = f.eval(h)
    margin = np.sum(f.grad(h) * sdP, axis=-1)  # lambda(X_{H_f})

    eps = float(epsilon_choice)
    while True:
        band = np.abs(hf) <= eps
        if not np.any(band):
            raise ValueError(f"no grid sample of K lies in the band |H_f| <= {eps}; refine the grid")
        if np.any(rho[band] >= R * (1 - 1e-12)):
            raise ValueError("the epsilon-band reaches the boundary of K; enlarge region_radius")
        j = int(np.argmin(np.where(band, margin, np.inf)))
        kappa = float(margin[j])
        if kappa <= 0:
            raise HypothesisViolation(
                f"lambda(X_H_f) = {kappa} <= 0 at radii {rho[j].tolist()}",
                witness={"radii": rho[j].tolist(), "h": h[j].tolist(), "H_f": float(hf[j])},
            )
        if eps <= kappa / 4:
            break
        eps = kappa / 4

    L_bound = math.sqrt(m) * R / 2.0
    C_bound = max(fac.max_differential(R) for fac in sys.factors)

    # delta: largest dyadic step with |f(h1) - f(h2)| <= eps/3 on sampled pairs in H(K)
    hmax = np.array([float(fac.hamiltonian(R)) for fac in sys.factors])
    box_res = min(grid_resolution, max(2, int(round(200_000 ** (1.0 / m)))))
    hgrid = _radius_grid(m, 1.0, box_res) * hmax
    fh = f.eval(hgrid)
    dirs = _probe_directions(m)
    delta = 2.0 ** math.ceil(math.log2(max(float(np.linalg.norm(hmax)), 1e-300)))

    def glst_ok(d):
        for u in dirs:
            # clipping keeps the partner inside H(K) at distance <= d
            h2 = np.clip(hgrid + d * u, 0.0, hmax)
            if np.max(np.abs(f.eval(h2) - fh)) > eps / 3:
                return False
        return True

    for _ in range(delta_max_halvings):
        if glst_ok(delta):
            break
        delta /= 2
    else:
        raise ValueError("could not find delta for the uniform continuity bound")
    delta /= 2  # safety factor

    # shrink until |H_f(z)| <= eps, |h - H(z)| <= delta  =>  lambda(X_{df(h)H}(z)) >= kappa/2
    hb, sb = h[np.abs(hf) <= eps], sdP[np.abs(hf) <= eps]
    for _ in range(delta_max_halvings):
        worst = min(float(np.min(np.sum(f.grad(hb + delta * u) * sb, axis=-1))) for u in dirs)
        if worst >= kappa / 2:
            break
        delta /= 2
    else:
        raise ValueError("could not shrink delta to satisfy the shifted contact condition")

    c = assemble_c(kappa, eps, delta, L_bound, C_bound, m)
    return LemmaConstants(kappa, eps, delta, L_bound, C_bound, c, R, int(grid_resolution), m)


# ------------------------------------------------------------ lemma checker


@dataclass(frozen=True)
class SamplePlan:
    n_states: int = 10_000
    n_samples: int = 64
    tau_max: float = 20.0
    r_values: tuple = R_GRID_LEMMA
    seed: int = 0
    orbits: tuple = ()
    threads: int = 1
    chunk: int = 250


def _fit_in(w, R, fraction):
    top = np.max(np.abs(w))
    return w if top == 0 else w * (fraction * R / top)


def _draw_state(sys, plan, constants, index):
    """Deterministic sample number ``index`` of the plan: (kind, FlowState)."""
    rng = np.random.default_rng([plan.seed, index])
    N, R, m = plan.n_samples, constants.region_radius, sys.m
    r = float(plan.r_values[index % len(plan.r_values)])
    tau = float(rng.uniform(-plan.tau_max, plan.tau_max))
    slot = (index // len(plan.r_values)) % 10
    orbits = [o for o in plan.orbits if abs(o.tau) <= plan.tau_max]
    t = np.arange(N) / N

    def perturbation(scale):
        p = random_loop(sys, int(rng.integers(2**63)), float(rng.uniform(2, 4)), 1.0, N).samples
        return p * (scale / max(np.max(np.abs(p)), 1e-300))

    if slot < 4 or (slot >= 6 and not orbits):
        p = random_loop(sys, int(rng.integers(2**63)), float(rng.uniform(2, 4)), 1.0, N).samples
        w = _fit_in(p, R, rng.uniform(0.05, 0.98))
        return "random", FlowState(Loop(w), tau, r)
    if slot < 6:
        # near-energy-shell circles: small oscillation, arbitrary energy
        rho = rng.uniform(0.0, 0.9 * R, size=m) * (rng.uniform(size=m) < 0.85)
        k = rng.integers(-3, 4, size=m)
        phase = rng.uniform(size=m)
        w = rho[:, None] * np.exp(2j * np.pi * (k[:, None] * t + phase[:, None]))
        w = w + perturbation(10.0 ** rng.uniform(-9, -3))
        if rng.uniform() < 0.5:
            g = sys.coupling.grad(sys.H(w).mean(axis=-1))
            tau = float(np.mean(k / np.where(g == 0, 1.0, g)))
        return "shell", FlowState(Loop(w), tau, r)
    orbit = orbits[int(rng.integers(len(orbits)))]
    base = realize_loop(sys, orbit, N, r)
    shifted = reparametrize(base.loop, TorusShift(tuple(rng.uniform(size=m))))
    w = shifted.samples + perturbation(10.0 ** rng.uniform(-13, -1))
    tau = orbit.tau + (10.0 ** rng.uniform(-13, 0)) * rng.standard_normal() if rng.uniform() < 0.85 else tau
    state = FlowState(Loop(w), tau, r)
    if slot == 9:
        cfg = FlowConfig(ds=1e-4, scheme=Scheme.EXPLICIT_EULER)
        for _ in range(int(rng.integers(1, 6))):
            state = flow_step(sys, state, cfg)
        return "flow", state
    return "critical", state


def _evaluate(sys, constants, state):
    G, S = gradient(sys, state)
    N = G.shape[-1]
    gnorm = math.sqrt(float(np.sum(G.real**2 + G.imag**2)) / N + S * S)
    A = action(sys, state)
    h = sys.H(state.loop.samples)
    hf = sys.coupling.eval(h.T)
    return {
        "grad_norm": gnorm,
        "action": A,
        "tau": state.tau,
        "r": state.r,
        "oscillation": oscillation(sys, state.loop),
        "hf_min": float(np.min(hf)),
        "hf_max": float(np.max(hf)),
        "max_radius": float(np.max(np.abs(state.loop.samples))),
    }


def lemma_checks(constants, ev):
    """Apply the implication and the step-level bounds to one evaluated sample.

    Returns {check: (qualifies, holds, slack)}; slack >= 0 when the bound holds.
    """
    kap, eps, dlt, L, C, c = (constants.kappa, constants.epsilon, constants.delta,
                              constants.L_bound, constants.C_bound, constants.c)
    g, A, tau, osc = ev["grad_norm"], ev["action"], ev["tau"], ev["oscillation"]
    hf_abs = max(abs(ev["hf_min"]), abs(ev["hf_max"]))
    out = {}
    rhs = c * (abs(A) + 1.0)
    out["main"] = (g <= 1.0 / c, abs(tau) <= rhs, rhs - abs(tau))
    bound2 = dlt / (C * math.sqrt(constants.m))
    out["step2"] = (osc > dlt, g > bound2, g - bound2)
    small = osc <= dlt
    q1b = small and hf_abs > eps
    same_sign = ev["hf_min"] > 2 * eps / 3 or ev["hf_max"] < -2 * eps / 3
    out["step1b"] = (q1b, same_sign and g > 2 * eps / 3, min(max(ev["hf_min"], -ev["hf_max"]) - 2 * eps / 3, g - 2 * eps / 3))
    rhs1a = 6.0 / kap * (abs(A) + L * g)
    out["step1a"] = (small and hf_abs <= eps, abs(tau) <= rhs1a, rhs1a - abs(tau))
    rhs1 = 6.0 / kap * (abs(A) + 2 * eps * L / 3)
    out["step1"] = (small and g <= 2 * eps / 3, abs(tau) <= rhs1, rhs1 - abs(tau))
    return out


LEMMA_CHECKS = ("main", "step2", "step1b", "step1a", "step1")


def _run_chunk(sys, constants, plan, start, stop):
    rows = []
    for index in range(start, stop):
        kind, state = _draw_state(sys, plan, constants, index)
        ev = _evaluate(sys, constants, state)
        rows.append((index, kind, state, ev, lemma_checks(constants, ev)))
    return rows


def check_fundamental_lemma(sys, constants, plan):
    """Sample states and test |grad| <= 1/c  =>  |tau| <= c(|A| + 1) plus the step bounds."""
    report = VerificationReport("lemma", details={"constants": constants.to_dict()})
    bounds = [(s, min(s + plan.chunk, plan.n_states)) for s in range(0, plan.n_states, plan.chunk)]
    if plan.threads > 1:
        with ThreadPoolExecutor(plan.threads) as pool:
            chunks = list(pool.map(lambda b: _run_chunk(sys, constants, plan, *b), bounds))
    else:
        chunks = [_run_chunk(sys, constants, plan, *b) for b in bounds]

    stats = {name: {"qualifying": 0, "violations": 0, "min_slack": None} for name in LEMMA_CHECKS}
    kinds = {}
    outside = 0
    worst = 0.0
    for rows in chunks:
        for index, kind, state, ev, checks in rows:
            report.cases += 1
            kinds[kind] = kinds.get(kind, 0) + 1
            if ev["max_radius"] > constants.region_radius:
                outside += 1
                continue
            for name, (qual, holds, slack) in checks.items():
                if not qual:
                    continue
                st = stats[name]
                st["qualifying"] += 1
                st["min_slack"] = slack if st["min_slack"] is None else min(st["min_slack"], slack)
                if not holds:
                    st["violations"] += 1
                    worst = max(worst, -slack)
                    report.violations.append(
                        {
                            "check": name,
                            "seed": plan.seed,
                            "index": index,
                            "kind": kind,
                            "values": ev,
                            "state": {"tau": state.tau, "r": state.r, "loop": loop_to_dict(state.loop, lossless=True)},
                        }
                    )
    report.worst_residual = worst
    report.details.update({"checks": stats, "kinds": kinds, "outside_region": outside, "seed": plan.seed})
    if outside:
        report.violations.append({"check": "region", "count": outside})
    return report


# ------------------------------------------------------- non-bifurcation


def _phase_match(a, b):
    """Shift s maximizing Re <a(. + s), b> for one component (Fourier Newton)."""
    N = a.shape[-1]
    k = mode_numbers(N)
    prod = np.conj(np.fft.fft(a) / N) * (np.fft.fft(b) / N)
    if np.max(np.abs(prod)) == 0:
        return 0.0
    fine = 64 * N
    dense = np.zeros(fine, dtype=np.complex128)
    idx = k.astype(int) % fine
    dense[idx] = prod
    corr = np.real(np.fft.fft(dense))  # corr[j] = sum prod_k exp(-2 pi i k j / fine)
    s = np.argmax(corr) / fine
    for _ in range(50):
        e = prod * np.exp(-2j * np.pi * k * s)
        g1 = np.real(np.sum(-2j * np.pi * k * e))
        g2 = np.real(np.sum(-((2 * np.pi * k) ** 2) * e))
        if g2 >= 0:
            break
        step = g1 / g2
        s -= step
        if abs(step) < 1e-16:
            break
    return s % 1.0


def torus_distance(x, y):
    """Distance between two states after the best per-component time shift of ``x``."""
    shifts = tuple(_phase_match(x.loop.samples[i], y.loop.samples[i]) for i in range(x.loop.m))
    xs = reparametrize(x.loop, TorusShift(shifts)).samples
    diff = xs - y.loop.samples
    N = diff.shape[-1]
    return math.sqrt(float(np.sum(np.abs(diff) ** 2)) / N + (x.tau - y.tau) ** 2), shifts


def check_theorem_a(sys, orbits, r_grid=None, tol=1e-8, N=256, refine=True, perturbation=1e-3, seed=0, oracle_actions=None):
    """Critical orbits stay critical with the same action for every r in ``r_grid``.

    With ``refine`` the suite also polishes a perturbed copy at each r and
    checks the polished states agree with the r = 0 one up to a torus shift.
    """
    r_grid = np.linspace(0.0, 1.0, 11) if r_grid is None else np.asarray(r_grid, dtype=float)
    report = VerificationReport("theorem-a", details={"tol": tol, "n_samples": N, "r_grid": [float(r) for r in r_grid]})
    worst = 0.0
    per_orbit = []
    for oi, orbit in enumerate(orbits):
        base = realize_loop(sys, orbit, N)
        actions, norms = [], []
        for r in r_grid:
            st = base.with_r(float(r))
            G, S = gradient(sys, st)
            gn = math.sqrt(pairing((G, S), (G, S)))
            norms.append(gn)
            actions.append(action(sys, st))
            report.cases += 1
        spread = max(actions) - min(actions)
        worst = max(worst, max(norms), spread)
        entry = {
            "k": list(orbit.k),
            "tau": orbit.tau,
            "h": list(orbit.h),
            "max_grad_norm": max(norms),
            "action_spread": spread,
            "action": actions[0],
        }
        if max(norms) > tol:
            report.violations.append({"check": "grad_norm", "orbit": oi, "values": entry, "grad_norms": norms})
        if spread > tol:
            report.violations.append({"check": "action_spread", "orbit": oi, "values": entry, "actions": actions})
        if oracle_actions is not None and abs(actions[0] - oracle_actions[oi]) > tol:
            report.violations.append({"check": "oracle_action", "orbit": oi, "values": entry, "oracle": oracle_actions[oi]})
        if refine:
            rng = np.random.default_rng([seed, oi])
            p = random_loop(sys, int(rng.integers(2**63)), 3.0, 1.0, N).samples
            p = p * (perturbation / max(np.max(np.abs(p)), 1e-300))
            dtau = perturbation * float(rng.standard_normal())
            polished, dists, energy_sd = None, [], []
            for r in r_grid:
                start = FlowState(Loop(base.loop.samples + p), orbit.tau + dtau, float(r))
                try:
                    sol = refine_full(sys, start, tol=tol * 1e-2)
                except NoConvergence as exc:
                    report.violations.append({"check": "refine", "orbit": oi, "r": float(r), "error": str(exc)})
                    continue
                energy_sd.append(float(np.max(np.std(sys.H(sol.loop.samples), axis=-1))))
                if polished is None:
                    polished = sol
                d, _ = torus_distance(sol, polished)
                dists.append(d)
                if d > 10 * tol:
                    report.violations.append({"check": "refined_match", "orbit": oi, "r": float(r), "distance": d})
            entry["refined_max_distance"] = max(dists, default=float("nan"))
            entry["refined_max_energy_std"] = max(energy_sd, default=float("nan"))
        per_orbit.append(entry)
    report.worst_residual = worst
    report.details["orbits"] = per_orbit
    return report


# -------------------------------------------------------------- invariance


def witness_loop(N=256):
    """Both components with H_i(v_i(t)) = 2 + cos(2 pi t), one positive turn each."""
    t = np.arange(N) / N
    comp = np.sqrt((2.0 + np.cos(2 * np.pi * t)) / np.pi) * np.exp(2j * np.pi * t)
    return Loop(np.stack([comp, comp]))


def is_linear(coupling):
    return coupling.descriptor.get("kind") in ("linear", "ellipsoid")


def check_invariance(sys, v, tau, shift_set, witness_shift=None, r_values=R_GRID_LEMMA, tol=1e-10, witness_min=0.5):
    """A_1 invariant under every torus shift, A_r under diagonal shifts.

    For a linear coupling A_0 must be torus invariant too; otherwise, when
    ``witness_shift`` is given, |A_0(shifted) - A_0(v)| >= ``witness_min`` is
    required.
    """
    report = VerificationReport("invariance", details={"tol": tol})
    base = {r: action(sys, FlowState(v, tau, r)) for r in r_values}
    a1, diag, a0 = 0.0, 0.0, 0.0
    for s in shift_set:
        s = s if isinstance(s, TorusShift) else TorusShift(tuple(s))
        moved = reparametrize(v, s)
        a1 = max(a1, abs(action(sys, FlowState(moved, tau, 1.0)) - base[1.0]))
        a0 = max(a0, abs(action(sys, FlowState(moved, tau, 0.0)) - base[0.0]))
        dshift = TorusShift.diagonal(s.shifts[0], v.m)
        dmoved = reparametrize(v, dshift)
        for r in r_values:
            diag = max(diag, abs(action(sys, FlowState(dmoved, tau, r)) - base[r]))
        report.cases += 1
    report.details.update({"a1_residual": a1, "diagonal_residual": diag, "a0_max_change": a0})
    report.worst_residual = max(a1, diag)
    if a1 > tol:
        report.violations.append({"check": "a1_torus", "residual": a1})
    if diag > tol:
        report.violations.append({"check": "diagonal", "residual": diag})
    if is_linear(sys.coupling):
        report.worst_residual = max(report.worst_residual, a0)
        if a0 > tol:
            report.violations.append({"check": "a0_linear", "residual": a0})
    if witness_shift is not None:
        moved = reparametrize(v, TorusShift(tuple(witness_shift)))
        change = action(sys, FlowState(moved, tau, 0.0)) - base[0.0]
        report.details["witness_shift"] = list(witness_shift)
        report.details["witness_a0_change"] = change
        report.details["witness_a1_change"] = action(sys, FlowState(moved, tau, 1.0)) - base[1.0]
        if abs(change) < witness_min:
            report.violations.append({"check": "a0_witness", "change": change})
    return report


# ---------------------------------------------------------------- gradient


def gradient_suite(sys, n_states=20, n_dirs=5, seed=0, N=128, r_values=(0.0, 0.5, 1.0), h=1e-5, tol=1e-6, gradient_fn=None):
    """Central differences of the action against the metric pairing with the gradient."""
    gradient_fn = gradient if gradient_fn is None else gradient_fn
    report = VerificationReport("gradient", details={"n_samples": N, "h": h, "tol": tol})
    worst = 0.0
    for j in range(n_states):
        rng = np.random.default_rng([seed, j])
        v = random_loop(sys, int(rng.integers(2**63)), float(rng.uniform(2.5, 4)), float(rng.uniform(0.2, 1.0)), N)
        tau = float(rng.uniform(-3, 3))
        dirs = []
        for _ in range(n_dirs):
            d = random_loop(sys, int(rng.integers(2**63)), 3.0, 1.0, N).samples
            dirs.append((d, float(rng.standard_normal())))
        for r in r_values:
            st = FlowState(v, tau, float(r))
            g = gradient_fn(sys, st)
            for d in dirs:
                fd = directional_derivative_fd(sys, st, d, h)
                rel = abs(fd - pairing(g, d)) / (1.0 + abs(fd))
                worst = max(worst, rel)
                report.cases += 1
                if rel > tol:
                    report.violations.append({"state": j, "r": float(r), "tau": tau, "fd": fd, "pairing": pairing(g, d), "rel": rel})
    report.worst_residual = worst
    return report
