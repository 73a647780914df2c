"""Numpy implementations of the hot pointwise kernels.

These are the reference versions; ``_ckernels`` must agree with them to
rounding. Arrays are float64 / complex128.
"""
import numpy as np

PLATEAU = 2.5


def radial_profile(s, s0):
    """Profile P(s) of a radial Hamiltonian H(z) = P(|z|^2) and its s-derivatives.

    ``s0 <= 0`` means no cutoff, P(s) = pi*s. Otherwise P follows pi*s up to
    s0, is flat (= PLATEAU*pi*s0) beyond 4*s0 and is a C^2 quintic in between.
    """
    s = np.asarray(s, dtype=np.float64)
    if s0 <= 0.0:
        return np.pi * s, np.full_like(s, np.pi), np.zeros_like(s)
    u = np.clip((s - s0) / (3.0 * s0), 0.0, 1.0)
    inner = s <= s0
    P = np.where(inner, np.pi * s, np.pi * s0 + 3.0 * np.pi * s0 * (u - u**3 + 0.5 * u**4))
    dP = np.where(inner, np.pi, np.pi * (1.0 - 3.0 * u**2 + 2.0 * u**3))
    d2P = np.where(inner, 0.0, np.pi * (6.0 * u**2 - 6.0 * u) / (3.0 * s0))
    return P, dP, d2P


def hamiltonian_diameter(points):
    """Largest Euclidean distance between two rows of ``points`` (n, m)."""
    pts = np.ascontiguousarray(points, dtype=np.float64)
    n = pts.shape[0]
    best = 0.0
    for j in range(n - 1):
        d = pts[j + 1:] - pts[j]
        best = max(best, float(np.max(np.einsum("ij,ij->i", d, d))))
    return float(np.sqrt(best))


def loop_residual(w, dw, coef, dP, tau):
    """Loop slot i*dw + 2*tau*coef*dP*w of the gradient and its mean square sum.

    The mean square is summed over components and averaged over samples.
    """
    G = 1j * dw + (2.0 * tau) * coef * dP * w
    N = w.shape[-1]
    sumsq = float(np.sum(G.real**2 + G.imag**2)) / N
    return G, sumsq
