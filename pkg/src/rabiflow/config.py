"""TOML experiment configuration.

One document fully determines an experiment::

    [system]
    m = 2
    cutoffs = [0.0, 0.0]          # optional, 0 = no cutoff
    [system.coupling]
    kind = "pairwise"             # linear | ellipsoid | pairwise
    a = [1.0, 1.0]
    beta = [[0.0, 1.0], [1.0, 0.0]]
    b = -1.0

    [discretization]
    n_samples = 256

    [orbits]   [flow]   [verify]   # see README
"""
import re

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .geometry import Coupling, Factor, ProductSystem


class ConfigError(ValueError):
    def __init__(self, msg, line=None, col=None):
        super().__init__(msg)
        self.line = line
        self.col = col

    def diagnostic(self, path):
        where = f"{path}:{self.line}:{self.col}" if self.line is not None else str(path)
        return f"{where}: {self}"


_POS = re.compile(r"\(at line (\d+), column (\d+)\)")
_AT = re.compile(r"\(at (line \d+, column \d+|end of document)\)")


def load(path):
    try:
        with open(path, "rb") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}") from exc
    try:
        return tomllib.loads(text.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ConfigError(f"config is not UTF-8: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        msg = str(exc)
        line, col = getattr(exc, "lineno", None), getattr(exc, "colno", None)
        if line is None:
            pos = _POS.search(msg)
            if pos:
                line, col = int(pos.group(1)), int(pos.group(2))
        msg = _AT.sub("", msg).strip()
        raise ConfigError(msg, line, col) from exc


def _need(table, key, where, kind=None):
    if key not in table:
        raise ConfigError(f"[{where}] missing required key '{key}'")
    val = table[key]
    if kind is not None and not isinstance(val, kind):
        raise ConfigError(f"[{where}] key '{key}' has the wrong type ({type(val).__name__})")
    return val


def section(doc, name):
    val = doc.get(name, {})
    if not isinstance(val, dict):
        raise ConfigError(f"'{name}' must be a table")
    return val


def build_system(doc):
    sys_t = section(doc, "system")
    if not sys_t:
        raise ConfigError("missing [system] table")
    m = _need(sys_t, "m", "system", int)
    if m < 1:
        raise ConfigError("[system] m must be >= 1")
    cutoffs = sys_t.get("cutoffs", [0.0] * m)
    if len(cutoffs) != m:
        raise ConfigError(f"[system] cutoffs has {len(cutoffs)} entries, expected {m}")
    try:
        factors = tuple(Factor(float(c) if c else None) for c in cutoffs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[system] bad cutoff: {exc}") from exc
    cp = sys_t.get("coupling")
    if not isinstance(cp, dict):
        raise ConfigError("missing [system.coupling] table")
    kind = _need(cp, "kind", "system.coupling", str)
    try:
        if kind == "linear":
            coupling = Coupling.linear(_need(cp, "a", "system.coupling"), cp.get("b", 0.0))
        elif kind == "ellipsoid":
            coupling = Coupling.ellipsoid(_need(cp, "a", "system.coupling"))
        elif kind == "pairwise":
            coupling = Coupling.pairwise(
                _need(cp, "a", "system.coupling"), _need(cp, "beta", "system.coupling"), cp.get("b", 0.0)
            )
        else:
            raise ConfigError(f"[system.coupling] unknown kind '{kind}' (linear, ellipsoid, pairwise)")
        return ProductSystem(factors, coupling)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[system.coupling] {exc}") from exc


def n_samples(doc, default=256):
    n = section(doc, "discretization").get("n_samples", default)
    if not isinstance(n, int) or n < 2 or n & (n - 1):
        raise ConfigError("[discretization] n_samples must be a power of two >= 2")
    return n


def ellipsoid_axes(coupling):
    """Axes a with f = sum x_i/a_i - 1, or None when f is not of that form."""
    d = coupling.descriptor
    if d.get("kind") == "ellipsoid":
        return np.asarray(d["a"])
    if d.get("kind") == "linear" and d["b"] < 0 and all(x > 0 for x in d["a"]):
        return -d["b"] / np.asarray(d["a"])
    return None
