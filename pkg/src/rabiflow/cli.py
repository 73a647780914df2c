"""Command line: ``rabiflow orbits|flow|verify --config FILE --out FILE``.

Exit codes: 0 success / all suites pass, 1 a suite failed, 2 usage or
configuration error.
"""
import argparse
import csv
import io
import json
import logging
import os
import sys as _sys

import numpy as np

from . import config as cfgmod
from .config import ConfigError
from .critical import (
    InfeasibleBranch,
    NoConvergence,
    SingularSystem,
    constant_family,
    ellipsoid_spectrum,
    realize_loop,
    solve_reduced,
    with_residual,
)
from .flow import FlowConfig, flow_run
from .loopspace import FlowState, Loop, l2_norm, random_loop
from .verify import (
    SamplePlan,
    check_fundamental_lemma,
    check_invariance,
    check_theorem_a,
    estimate_constants,
    gradient_suite,
    is_linear,
    witness_loop,
)

log = logging.getLogger("rabiflow")

SUITES = ("theorem-a", "lemma", "invariance", "gradient")


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _k_list(table, key, m, where):
    ks = table.get(key, [])
    for k in ks:
        if not isinstance(k, list) or len(k) != m or not all(isinstance(x, int) for x in k):
            raise ConfigError(f"[{where}] every entry of '{key}' must be a list of {m} integers")
    return [tuple(k) for k in ks]


def _h0(table, m):
    h0 = table.get("h0", [0.5] * m)
    if len(h0) != m:
        raise ConfigError(f"h0 must have {m} entries")
    return [float(x) for x in h0]


# ------------------------------------------------------------------ orbits


def cmd_orbits(config_path, out_path, fmt="csv"):
    doc = cfgmod.load(config_path)
    system = cfgmod.build_system(doc)
    N = cfgmod.n_samples(doc)
    tab = cfgmod.section(doc, "orbits")
    rows = []
    for k in _k_list(tab, "k", system.m, "orbits"):
        row = {"source": "reduced", "k": list(k), "tau": None, "action": None, "h": None, "family_flag": False}
        try:
            orbit = with_residual(system, solve_reduced(system, k, _h0(tab, system.m)), N)
            row.update(tau=orbit.tau, action=orbit.action, h=list(orbit.h), residual=orbit.residual, status="ok")
        except (NoConvergence, InfeasibleBranch, SingularSystem) as exc:
            row.update(status=type(exc).__name__, message=str(exc))
        rows.append(row)
    if "ellipsoid_k_max" in tab:
        axes = cfgmod.ellipsoid_axes(system.coupling)
        if axes is None:
            raise ConfigError("[orbits] ellipsoid_k_max needs a coupling of the form sum x_i/a_i - 1")
        for e in ellipsoid_spectrum(axes, int(tab["ellipsoid_k_max"])):
            rows.append(
                {"source": "ellipsoid", "k": list(e.k), "tau": e.tau, "action": e.action,
                 "h": list(e.h) if e.h else None, "family_flag": e.family, "status": "ok"}
            )
    const = constant_family(system)
    if const is not None:
        rows.append({"source": "constant", "k": [0] * system.m, "tau": None, "action": 0.0,
                     "h": [0.0] * system.m, "family_flag": True, "status": "ok"})
    if fmt == "json":
        _write(out_path, json.dumps({"orbits": rows}, indent=1, sort_keys=True))
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["source", "k", "tau", "action", "h", "family_flag", "status"])
        for r in rows:
            w.writerow([
                r["source"],
                " ".join(str(x) for x in r["k"]),
                "" if r["tau"] is None else repr(r["tau"]),
                "" if r["action"] is None else repr(r["action"]),
                "" if r["h"] is None else " ".join(repr(x) for x in r["h"]),
                str(r["family_flag"]).lower(),
                r["status"],
            ])
        _write(out_path, buf.getvalue())
    print(f"{len(rows)} orbit rows -> {out_path}")
    return 0


# -------------------------------------------------------------------- flow


def flow_setup(doc, seed=None):
    system = cfgmod.build_system(doc)
    N = cfgmod.n_samples(doc)
    tab = cfgmod.section(doc, "flow")
    seed = int(tab.get("seed", 0)) if seed is None else seed
    r = float(tab.get("r", 0.5))
    start = tab.get("start", "orbit")
    if start == "orbit":
        k = tuple(_need_list(tab, "k", system.m))
        orbit = solve_reduced(system, k, _h0(tab, system.m))
        state = realize_loop(system, orbit, N, r)
    elif start == "origin":
        state = FlowState(Loop(np.zeros((system.m, N))), float(tab.get("tau", 0.0)), r)
    else:
        raise ConfigError(f"[flow] unknown start '{start}' (orbit, origin)")
    eps = float(tab.get("perturbation", 0.0))
    if eps > 0:
        p = random_loop(system, seed, 3.0, 1.0, N).samples
        state = FlowState(Loop(state.loop.samples + p * (eps / l2_norm(p))), state.tau, r)
    try:
        fc = FlowConfig(
            ds=float(tab.get("ds", 1e-3)),
            max_steps=int(tab.get("max_steps", 1000)),
            grad_tol=float(tab.get("grad_tol", 1e-6)),
            scheme=tab.get("scheme", "exponential-splitting"),
            blowup_norm=float(tab.get("blowup_norm", 1e6)),
            stride=int(tab.get("stride", 1)),
        )
    except ValueError as exc:
        raise ConfigError(f"[flow] {exc}") from exc
    return system, state, fc


def _need_list(tab, key, m):
    val = tab.get(key)
    if not isinstance(val, list) or len(val) != m:
        raise ConfigError(f"[flow] '{key}' must be a list of {m} integers")
    return val


def cmd_flow(config_path, out_path, fmt="csv", seed=None):
    doc = cfgmod.load(config_path)
    system, state, fc = flow_setup(doc, seed)
    with np.errstate(all="ignore"):
        report = flow_run(system, state, fc)
    _write(out_path, report.to_json() if fmt == "json" else report.to_csv())
    last = report.rows[-1]
    print(f"{report.termination.value}: {last[0]} steps, action {last[2]!r}, grad_norm {last[3]!r} -> {out_path}")
    return 0


# ------------------------------------------------------------------ verify


def _verify_orbits(system, tab, key, default):
    entries = tab.get(key)
    orbits, oracle = [], []
    if entries is None:
        entries = [{"k": list(k)} for k in default]
    for ent in entries:
        if not isinstance(ent, dict) or "k" not in ent:
            raise ConfigError(f"[verify] each '{key}' entry needs k")
        k = tuple(ent["k"])
        try:
            orbit = solve_reduced(system, k, ent.get("h0", [0.5] * system.m))
        except (NoConvergence, InfeasibleBranch, SingularSystem) as exc:
            log.warning("skipping orbit k=%s: %s", k, exc)
            continue
        off = float(ent.get("h_offset", 0.0))
        if off:
            from dataclasses import replace

            orbit = replace(orbit, h=tuple(h + off if h > 0 else h for h in orbit.h))
        orbits.append(orbit)
        oracle.append(float(ent["action"]) if "action" in ent else orbit.action)
    return orbits, oracle


def _default_ks(m):
    ks = [tuple([1] * m), tuple([2] * m), tuple([-1] * m)]
    for i in range(m):
        for n in (1, 3):
            k = [0] * m
            k[i] = n
            ks.append(tuple(k))
    return ks


def run_suites(doc, suites, seed=None, threads=None):
    system = cfgmod.build_system(doc)
    tab = cfgmod.section(doc, "verify")
    seed = int(tab.get("seed", 0)) if seed is None else seed
    threads = int(tab.get("threads", 1)) if threads is None else threads
    N = cfgmod.n_samples(doc)
    reports = {}
    if "gradient" in suites:
        reports["gradient"] = gradient_suite(
            system,
            int(tab.get("gradient_states", 20)),
            int(tab.get("gradient_directions", 5)),
            seed,
            N=int(tab.get("gradient_n_samples", 128)),
        )
    if "theorem-a" in suites:
        orbits, oracle = _verify_orbits(system, tab, "orbits", [tuple([1] * system.m)])
        reports["theorem-a"] = check_theorem_a(
            system,
            orbits,
            np.linspace(0.0, 1.0, int(tab.get("r_grid_points", 11))),
            float(tab.get("tol", 1e-8)),
            N,
            refine=bool(tab.get("refine", True)),
            seed=seed,
            oracle_actions=oracle,
        )
    if "invariance" in suites:
        rng = np.random.default_rng([seed, 7])
        shifts = [tuple(rng.uniform(size=system.m)) for _ in range(int(tab.get("shifts", 32)))]
        if system.m == 2 and not is_linear(system.coupling) and tab.get("witness", True):
            v, wshift = witness_loop(N), (0.0, 0.5)
        else:
            v, wshift = random_loop(system, seed, 3.0, 0.5, N), None
        reports["invariance"] = check_invariance(system, v, float(tab.get("witness_tau", 1.0)), shifts, wshift)
    if "lemma" in suites:
        constants = estimate_constants(
            system,
            float(tab.get("region_radius", 2.0)),
            int(tab.get("grid_resolution", 201)),
            float(tab.get("epsilon", 0.05)),
        )
        lemma_orbits, _ = _verify_orbits(system, tab, "lemma_orbits", _default_ks(system.m))
        plan = SamplePlan(
            n_states=int(tab.get("lemma_states", 10_000)),
            n_samples=int(tab.get("lemma_n_samples", 64)),
            tau_max=float(tab.get("tau_max", 20.0)),
            seed=seed,
            orbits=tuple(lemma_orbits),
            threads=threads,
        )
        reports["lemma"] = check_fundamental_lemma(system, constants, plan)
    return reports


def cmd_verify(config_path, suite, out_path, seed=None, threads=None, fmt="json"):
    doc = cfgmod.load(config_path)
    suites = SUITES if suite == "all" else (suite,)
    reports = run_suites(doc, suites, seed, threads)
    passed = all(r.passed for r in reports.values())
    if fmt == "csv":
        # one summary row per suite; the JSON form carries the violation bundles
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["suite", "pass", "cases", "worst_residual", "violations"])
        for name, rep in reports.items():
            w.writerow([name, str(rep.passed).lower(), rep.cases, repr(rep.worst_residual), len(rep.violations)])
        _write(out_path, buf.getvalue())
    else:
        bundle = {"pass": passed, "suites": {name: rep.to_dict() for name, rep in reports.items()}}
        _write(out_path, json.dumps(bundle, indent=1, sort_keys=True))
    for rep in reports.values():
        print(rep.to_text())
    return 0 if passed else 1


# -------------------------------------------------------------------- main


def _threads(value):
    if value is not None:
        return value
    env = os.environ.get("RABIFLOW_THREADS")
    return int(env) if env else None


def build_parser():
    p = argparse.ArgumentParser(prog="rabiflow", description="Critical orbits, gradient flow and verification suites.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("orbits", "flow", "verify"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", required=True)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--format", choices=("csv", "json"), default="csv" if name != "verify" else "json")
        if name == "verify":
            sp.add_argument("--suite", choices=SUITES + ("all",), default="all")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "orbits":
            return cmd_orbits(args.config, args.out, args.format)
        if args.command == "flow":
            return cmd_flow(args.config, args.out, args.format, args.seed)
        return cmd_verify(args.config, args.suite, args.out, args.seed, _threads(args.threads), args.format)
    except ConfigError as exc:
        print(exc.diagnostic(args.config), file=_sys.stderr)
        return 2
    except (NoConvergence, InfeasibleBranch, SingularSystem) as exc:
        print(f"{args.config}: {type(exc).__name__}: {exc}", file=_sys.stderr)
        return 2


if __name__ == "__main__":
    _sys.exit(main())
