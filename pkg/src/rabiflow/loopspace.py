"""Band-limited loops in a product of planes.

A loop is stored as a complex array of shape (m, N): row i holds the samples
v_i(j/N), j = 0..N-1, of the i-th component. Fourier modes are indexed in
(-N/2, N/2] with the convention v(t) = sum_k c_k exp(2 pi i k t).
"""
import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from . import kernels

DEFAULT_N = 256


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


def mode_numbers(N):
    """Integer modes in (-N/2, N/2] in numpy FFT order."""
    k = np.fft.fftfreq(N, d=1.0 / N)
    if N % 2 == 0:
        k[N // 2] = N // 2
    return k


@dataclass(frozen=True, eq=False)
class Loop:
    samples: np.ndarray

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.complex128, copy=True)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2:
            raise ValueError(f"loop samples must be (m, N), got shape {arr.shape}")
        if not _is_pow2(arr.shape[1]):
            raise ValueError(f"n_samples must be a power of two, got {arr.shape[1]}")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @classmethod
    def from_xy(cls, components):
        """Build from nested [[[x, y], ...], ...] data."""
        arr = np.asarray(components, dtype=np.float64)
        return cls(arr[..., 0] + 1j * arr[..., 1])

    @classmethod
    def from_fourier(cls, coeffs):
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        return cls(np.fft.ifft(coeffs, axis=-1) * coeffs.shape[-1])

    @property
    def m(self):
        return self.samples.shape[0]

    @property
    def n_samples(self):
        return self.samples.shape[1]

    @property
    def components(self):
        """Real array (m, N, 2) of (x, y) samples."""
        return np.stack([self.samples.real, self.samples.imag], axis=-1)

    def fourier(self):
        return np.fft.fft(self.samples, axis=-1) / self.n_samples

    def times(self):
        return np.arange(self.n_samples) / self.n_samples

    def __add__(self, other):
        other = other.samples if isinstance(other, Loop) else other
        return Loop(self.samples + other)

    def __sub__(self, other):
        other = other.samples if isinstance(other, Loop) else other
        return Loop(self.samples - other)

    def scaled(self, c):
        return Loop(c * self.samples)


@dataclass(frozen=True)
class TorusShift:
    """Per-component reparametrization v_i(t) -> v_i(t + s_i), entries mod 1."""

    shifts: tuple

    def __post_init__(self):
        object.__setattr__(self, "shifts", tuple(float(s) % 1.0 for s in self.shifts))

    @classmethod
    def diagonal(cls, sigma, m):
        return cls((sigma,) * m)

    def __add__(self, other):
        return TorusShift(tuple(a + b for a, b in zip(self.shifts, other.shifts)))

    def __neg__(self):
        return TorusShift(tuple(-a for a in self.shifts))


@dataclass(frozen=True)
class FlowState:
    """A point (v, tau) of the loop space times R, with the interpolation parameter r."""

    loop: Loop
    tau: float
    r: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "r", float(self.r))
        if not 0.0 <= self.r <= 1.0:
            raise ValueError(f"r must lie in [0, 1], got {self.r}")

    def with_r(self, r):
        return FlowState(self.loop, self.tau, r)


def time_derivative(v):
    """Spectral t-derivative, shape (m, N); the Nyquist mode is dropped."""
    w = v.samples if isinstance(v, Loop) else np.asarray(v)
    N = w.shape[-1]
    k = mode_numbers(N)
    mult = 2j * np.pi * k
    if N % 2 == 0:
        mult[N // 2] = 0.0
    return np.fft.ifft(np.fft.fft(w, axis=-1) * mult, axis=-1)


def _shift_array(w, shifts):
    N = w.shape[-1]
    out = np.empty_like(w)
    k = None
    for i, s in enumerate(shifts):
        j = s * N
        if abs(j - round(j)) <= 1e-12 * N:
            out[i] = np.roll(w[i], -(int(round(j)) % N))
        else:
            if k is None:
                k = mode_numbers(N)
            out[i] = np.fft.ifft(np.fft.fft(w[i]) * np.exp(2j * np.pi * k * s))
    return out


def reparametrize(v, s):
    """r_* v: component i becomes t -> v_i(t + s_i)."""
    if not isinstance(s, TorusShift):
        s = TorusShift(tuple(s))
    if len(s.shifts) != v.m:
        raise ValueError(f"shift has {len(s.shifts)} entries for m={v.m}")
    return Loop(_shift_array(v.samples, s.shifts))


def energy_trace(sys, v):
    """H(v(t)) on the grid, shape (m, N)."""
    return sys.H(v.samples)


def average_H(sys, v):
    return np.mean(energy_trace(sys, v), axis=-1)


def average_fH(sys, v):
    h = energy_trace(sys, v)
    return float(np.mean(sys.coupling.eval(h.T)))


def area(sys, v):
    """Integral of v^*lambda (the symplectic area enclosed, counted per component)."""
    w = v.samples
    return float(np.sum(np.mean(0.5 * np.imag(np.conj(w) * time_derivative(w)), axis=-1)))


def diameter(points):
    """Euclidean diameter of a point cloud (n, m)."""
    pts = np.asarray(points, dtype=np.float64)
    n, m = pts.shape
    if n < 2:
        return 0.0
    if m == 1:
        return float(pts.max() - pts.min())
    if n > 4096:
        from scipy.spatial import ConvexHull

        pts = pts[ConvexHull(pts).vertices]
    return float(kernels.hamiltonian_diameter(pts))


def oscillation(sys, v):
    """Diameter of the sampled image t -> H(v(t)) in R^m."""
    return diameter(energy_trace(sys, v).T)


def random_loop(sys, seed, decay_p=3.0, amplitude=1.0, n_samples=DEFAULT_N):
    """Deterministic random band-limited loop.

    Mode k of each component is a standard complex normal scaled by
    amplitude * (1 + |k|)^(-decay_p); the Nyquist mode is left empty.
    """
    if decay_p < 2:
        raise ValueError("decay_p must be >= 2")
    rng = np.random.default_rng(seed)
    m, N = sys.m, n_samples
    k = mode_numbers(N)
    z = rng.standard_normal((m, N)) + 1j * rng.standard_normal((m, N))
    coeffs = amplitude * z * (1.0 + np.abs(k)) ** (-decay_p) / np.sqrt(2.0)
    if N % 2 == 0:
        coeffs[:, N // 2] = 0.0
    return Loop.from_fourier(coeffs)


def l2_norm(tangent):
    """L^2 norm of a loop tangent (m, N) under the flat metric, trapezoid rule."""
    t = np.asarray(tangent)
    return float(np.sqrt(np.sum(t.real**2 + t.imag**2) / t.shape[-1]))


def loop_to_dict(v, lossless=False):
    if lossless:
        c = v.fourier()
        return {"n_samples": v.n_samples, "fourier": np.stack([c.real, c.imag], -1).tolist()}
    return {"n_samples": v.n_samples, "components": v.components.tolist()}


def loop_from_dict(doc):
    if "fourier" in doc:
        c = np.asarray(doc["fourier"], dtype=np.float64)
        v = Loop.from_fourier(c[..., 0] + 1j * c[..., 1])
    else:
        v = Loop.from_xy(doc["components"])
    if v.n_samples != doc["n_samples"]:
        raise ValueError(f"n_samples {doc['n_samples']} does not match data ({v.n_samples})")
    return v


def loop_to_json(v, lossless=False):
    return json.dumps(loop_to_dict(v, lossless))


def loop_from_json(text):
    return loop_from_dict(json.loads(text))


def energy_trace_csv(sys, v):
    """CSV text with columns t, H_1..H_m, H_f for plotting."""
    h = energy_trace(sys, v)
    hf = sys.coupling.eval(h.T)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t"] + [f"H_{i + 1}" for i in range(sys.m)] + ["H_f"])
    for j, t in enumerate(v.times()):
        writer.writerow([repr(float(t))] + [repr(float(x)) for x in h[:, j]] + [repr(float(hf[j]))])
    return buf.getvalue()
