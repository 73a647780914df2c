"""Pointwise symplectic data on a product of planes.

Each factor is R^2 identified with C via (x, y) -> x + iy, with
omega = dx^dy, lambda = (x dy - y dx)/2 and the radial Hamiltonian
H(z) = P(|z|^2), P(s) = pi*s away from an optional cutoff. The Hamiltonian
vector field follows dH = omega(., X_H), which gives X_H(z) = 2 P'(|z|^2) i z,
i.e. (-2 pi y, 2 pi x) for the uncut profile.

Product points are complex arrays whose first axis runs over factors.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels


def as_plane(z):
    """Coerce a plane point given as complex or (x, y) pair to complex."""
    if isinstance(z, (tuple, list)) and len(z) == 2 and not isinstance(z[0], (tuple, list)):
        return complex(z[0], z[1])
    arr = np.asarray(z)
    if np.iscomplexobj(arr):
        return arr.astype(np.complex128)
    if arr.shape and arr.shape[-1] == 2:
        return arr[..., 0] + 1j * arr[..., 1]
    return arr.astype(np.complex128)


@dataclass(frozen=True)
class Factor:
    """One symplectic plane with moment map pi|z|^2, optionally flattened past a radius."""

    cutoff_radius: Optional[float] = None

    def __post_init__(self):
        if self.cutoff_radius is not None and not self.cutoff_radius > 0:
            raise ValueError(f"cutoff_radius must be positive, got {self.cutoff_radius}")

    @property
    def _s0(self):
        return -1.0 if self.cutoff_radius is None else float(self.cutoff_radius) ** 2

    def profile(self, s):
        """(P, P', P'') at squared radius ``s``."""
        return kernels.radial_profile(np.asarray(s, dtype=np.float64), self._s0)

    def hamiltonian(self, z):
        return self.profile(np.abs(z) ** 2)[0]

    def vector_field(self, z):
        z = np.asarray(z, dtype=np.complex128)
        dP = self.profile(np.abs(z) ** 2)[1]
        return 2j * dP * z

    def max_differential(self, radius):
        """max ||dH(z)|| over |z| <= radius (||dH|| = 2|z| P'(|z|^2))."""
        rho = np.linspace(0.0, radius, 4097)
        return float(np.max(2.0 * rho * self.profile(rho**2)[1]))

    def radius_for_level(self, h):
        """Smallest radius with H = h; raises if h exceeds the plateau."""
        if h < 0:
            raise ValueError(f"negative energy level {h}")
        if self.cutoff_radius is None or h <= np.pi * self._s0:
            return float(np.sqrt(h / np.pi))
        plateau = kernels.PLATEAU * np.pi * self._s0
        if h >= plateau:
            raise ValueError(f"level {h} not below the cutoff plateau {plateau}")
        from scipy.optimize import brentq

        s = brentq(lambda s: float(self.profile(s)[0]) - h, self._s0, 4.0 * self._s0, xtol=1e-15)
        return float(np.sqrt(s))


@dataclass(frozen=True)
class Coupling:
    """The coupling f: R^m -> R with its gradient and Hessian.

    ``eval``, ``grad`` and ``hess`` act on arrays whose last axis has length m
    and return shapes (...), (..., m) and (..., m, m).
    """

    m: int
    eval: Callable
    grad: Callable
    hess: Callable
    descriptor: dict = field(default_factory=lambda: {"kind": "custom"})

    @classmethod
    def linear(cls, a, b):
        a = np.asarray(a, dtype=np.float64)
        b = float(b)
        m = a.shape[0]
        return cls(
            m=m,
            eval=lambda x: np.asarray(x, dtype=np.float64) @ a + b,
            grad=lambda x: np.broadcast_to(a, np.shape(x)).copy(),
            hess=lambda x: np.zeros(np.shape(x) + (m,)),
            descriptor={"kind": "linear", "a": a.tolist(), "b": b},
        )

    @classmethod
    def ellipsoid(cls, axes):
        """f(x) = sum x_i / a_i - 1."""
        axes = np.asarray(axes, dtype=np.float64)
        if np.any(axes <= 0):
            raise ValueError("ellipsoid axes must be positive")
        c = cls.linear(1.0 / axes, -1.0)
        return cls(c.m, c.eval, c.grad, c.hess, {"kind": "ellipsoid", "a": axes.tolist()})

    @classmethod
    def pairwise(cls, a, beta, b):
        """f(x) = a.x + x^T beta x / 2 + b with beta symmetric."""
        a = np.asarray(a, dtype=np.float64)
        beta = np.asarray(beta, dtype=np.float64)
        m = a.shape[0]
        if beta.shape != (m, m) or not np.allclose(beta, beta.T, rtol=0, atol=0):
            raise ValueError("beta must be a symmetric m x m matrix")
        b = float(b)

        def f(x):
            x = np.asarray(x, dtype=np.float64)
            return x @ a + 0.5 * np.einsum("...i,ij,...j->...", x, beta, x) + b

        return cls(
            m=m,
            eval=f,
            grad=lambda x: a + np.asarray(x, dtype=np.float64) @ beta,
            hess=lambda x: np.broadcast_to(beta, np.shape(x) + (m,)).copy(),
            descriptor={"kind": "pairwise", "a": a.tolist(), "beta": beta.tolist(), "b": b},
        )

    @classmethod
    def custom(cls, m, eval, grad, hess=None, step=1e-5):
        """Wrap user callables. Without ``hess``, central differences of ``grad`` are used."""
        if hess is None:

            def hess(x):
                x = np.asarray(x, dtype=np.float64)
                cols = []
                for j in range(m):
                    e = np.zeros(m)
                    e[j] = step
                    cols.append((grad(x + e) - grad(x - e)) / (2 * step))
                return np.stack(cols, axis=-1)

        return cls(m=m, eval=eval, grad=grad, hess=hess, descriptor={"kind": "custom"})


@dataclass(frozen=True)
class ProductSystem:
    """M = R^2 x ... x R^2 with H_f = f(H_1, ..., H_m)."""

    factors: tuple
    coupling: Coupling

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if len(self.factors) < 1:
            raise ValueError("need at least one factor")
        if self.coupling.m != len(self.factors):
            raise ValueError(f"coupling expects m={self.coupling.m}, got {len(self.factors)} factors")

    @classmethod
    def uncut(cls, coupling):
        return cls(tuple(Factor() for _ in range(coupling.m)), coupling)

    @property
    def m(self):
        return len(self.factors)

    def _check_index(self, i):
        if not (isinstance(i, (int, np.integer)) and 0 <= i < self.m):
            raise IndexError(f"factor index {i} out of range for m={self.m}")

    def profiles(self, z):
        """Stacked (P, P', P'') for a product array z of shape (m, ...)."""
        z = np.asarray(z, dtype=np.complex128)
        s = z.real**2 + z.imag**2
        cutoffs = {f.cutoff_radius for f in self.factors}
        if len(cutoffs) == 1:
            return self.factors[0].profile(s)
        out = [f.profile(s[i]) for i, f in enumerate(self.factors)]
        return tuple(np.stack([o[k] for o in out]) for k in range(3))

    def H(self, z):
        """Vector of factor Hamiltonians, shape (m, ...)."""
        return self.profiles(z)[0]

    def H_f(self, z):
        return self.coupling.eval(np.moveaxis(self.H(z), 0, -1))


def factor_h(sys, i, z_i):
    """H_i at a plane point (0-based factor index)."""
    sys._check_index(i)
    return float(sys.factors[i].hamiltonian(as_plane(z_i)))


def hamiltonian_vf(sys, i, z_i):
    """X_{H_i}(z_i) as an (x, y) pair."""
    sys._check_index(i)
    X = complex(sys.factors[i].vector_field(as_plane(z_i)))
    return np.array([X.real, X.imag])


def total_vf(sys, coeffs, z):
    """Product vector with i-th component coeffs[i] * X_{H_i}(z_i).

    With coeffs = grad f(H(z)) this is X_{H_f}(z). ``z`` is complex of shape (m,)
    or (m, N); the result has the same shape.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    z = np.asarray(z, dtype=np.complex128)
    if coeffs.shape[0] != sys.m or z.shape[0] != sys.m:
        raise ValueError(f"expected length {sys.m}, got coeffs {coeffs.shape}, z {z.shape}")
    dP = sys.profiles(z)[1]
    c = coeffs.reshape(coeffs.shape + (1,) * (z.ndim - coeffs.ndim))
    return 2j * c * dP * z


def hamiltonian_field(sys, z):
    """X_{H_f}(z)."""
    z = np.asarray(z, dtype=np.complex128)
    h = np.moveaxis(sys.H(z), 0, -1)
    coeffs = np.moveaxis(sys.coupling.grad(h), -1, 0)
    return total_vf(sys, coeffs, z)


def liouville_eval(sys, z, xi):
    """lambda_z(xi) = sum_i (x_i dy_i - y_i dx_i)/2, summed over the first axis."""
    z = np.asarray(z, dtype=np.complex128)
    xi = np.asarray(xi, dtype=np.complex128)
    return np.sum(0.5 * np.imag(np.conj(z) * xi), axis=0)


def liouville_field(z):
    """Y(z) = z/2, the vector field with lambda = omega(Y, .)."""
    return 0.5 * np.asarray(z, dtype=np.complex128)


def omega(xi, eta):
    """Standard symplectic form summed over factors: Im(conj(xi) eta)."""
    return np.sum(np.imag(np.conj(np.asarray(xi)) * np.asarray(eta)), axis=0)


def contact_margin(sys, z):
    """lambda(X_{H_f}(z)); positive on the energy surface under restricted contact type."""
    return liouville_eval(sys, z, hamiltonian_field(sys, z))
