"""Horizontal controls on [0, 1] and their endpoints.

A ``SampledControl`` holds samples on a uniform odd grid, in horizontal
coordinates. It may carry jump points (``breaks``, even grid indices) where
the stored row is the left limit and ``right`` holds the right limit; all
quadratures then run piecewise so that concatenations stay fourth order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .algebra import bracket, multiply, multiply_many

DEFAULT_GRID = 2049


@dataclass(frozen=True, eq=False)
class SampledControl:
    values: np.ndarray
    breaks: tuple = ()
    right: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values)
        if v.ndim == 1:
            v = v[:, None]
        if not np.issubdtype(v.dtype, np.complexfloating):
            v = v.astype(float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        n = v.shape[0]
        if n < 3 or n % 2 == 0:
            raise ValueError(f"grid size must be odd and >= 3, got {n}")
        if not np.all(np.isfinite(v)):
            raise ValueError("control samples must be finite")
        br = tuple(int(b) for b in self.breaks)
        if any(b % 2 or b <= 0 or b >= n - 1 for b in br) or list(br) != sorted(set(br)):
            raise ValueError("breaks must be sorted interior even grid indices")
        object.__setattr__(self, "breaks", br)
        if br:
            r = np.array(self.right).reshape(len(br), v.shape[1])
            r.setflags(write=False)
            object.__setattr__(self, "right", r)
        else:
            object.__setattr__(self, "right", None)

    @property
    def N(self):
        return self.values.shape[0]

    @property
    def k(self):
        return self.values.shape[1]

    @property
    def grid(self):
        return np.linspace(0.0, 1.0, self.N)

    @property
    def h(self):
        return 1.0 / (self.N - 1)

    @classmethod
    def from_function(cls, f, N=DEFAULT_GRID):
        t = np.linspace(0.0, 1.0, N)
        return cls(np.asarray(f(t)))

    @classmethod
    def constant(cls, c, N=DEFAULT_GRID):
        c = np.asarray(c, dtype=float)
        return cls(np.tile(c, (N, 1)))

    def pieces(self):
        """Smooth pieces as (start index, values) with the right limit at each break."""
        edges = (0,) + self.breaks + (self.N - 1,)
        out = []
        for idx, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
            vals = np.array(self.values[a:b + 1])
            if idx > 0:
                vals[0] = self.right[idx - 1]
            out.append((a, vals))
        return out

    def __add__(self, other):
        if not isinstance(other, SampledControl):
            return NotImplemented
        if self.N != other.N or self.breaks != other.breaks:
            raise ValueError("controls must share the grid and break points")
        right = None if not self.breaks else self.right + other.right
        return SampledControl(self.values + other.values, self.breaks, right)

    def scaled(self, c):
        right = None if not self.breaks else c * self.right
        return SampledControl(c * self.values, self.breaks, right)

    def reversed(self):
        """Time reversal with sign change, t -> -u(1 - t): the control of the reversed path."""
        n = self.N
        vals = -self.values[::-1].copy()
        if not self.breaks:
            return SampledControl(vals)
        br = tuple(n - 1 - b for b in reversed(self.breaks))
        # after reversal the stored row must be the left limit, i.e. the old right limit
        right = []
        for j, b in enumerate(reversed(self.breaks)):
            i = len(self.breaks) - 1 - j
            vals[n - 1 - b] = -self.right[i]
            right.append(-self.values[b])
        return SampledControl(vals, br, np.array(right))

    def to_json(self):
        d = {"grid": self.N, "values": self.values.tolist()}
        if self.breaks:
            d["breaks"] = list(self.breaks)
            d["right"] = self.right.tolist()
        return d

    @classmethod
    def from_json(cls, d):
        return cls(np.array(d["values"], dtype=float), tuple(d.get("breaks", ())), d.get("right"))


def simpson_weights(n, h):
    w = np.full(n, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * h / 3.0


def cumulative_simpson(f, h):
    """Running integral at every grid point: composite Simpson at even points,
    the quadratic panel interpolant at midpoints (fourth order overall)."""
    f = np.asarray(f)
    n = f.shape[0]
    out = np.zeros_like(f)
    f0, f1, f2 = f[0:-2:2], f[1:-1:2], f[2::2]
    panel = h / 3.0 * (f0 + 4.0 * f1 + f2)
    half = h / 12.0 * (5.0 * f0 + 8.0 * f1 - f2)
    acc = np.cumsum(panel, axis=0)
    out[2::2] = acc
    out[1::2] = half
    out[3::2] += acc[:-1]
    return out


def _piecewise(u, fn):
    """Apply fn(vals, h) -> scalar/array integral over each piece and sum."""
    return sum(fn(vals, u.h) for _, vals in u.pieces())


def integrate(u, g=None):
    """Simpson integral of g(values) (default: the values themselves)."""
    def piece(vals, h):
        y = vals if g is None else g(vals)
        return np.tensordot(simpson_weights(len(vals), h), y, axes=(0, 0))
    return _piecewise(u, piece)


def endpoint_step2_values(S, u):
    """Endpoint of a (possibly complex) sampled control, step-2 closed formula."""
    first = 0.0
    second = 0.0
    acc = np.zeros(S.dim, dtype=u.values.dtype)
    for _, vals in u.pieces():
        w = vals @ S.horizontal.T
        wts = simpson_weights(len(w), u.h)
        U = acc + cumulative_simpson(w, u.h)
        br = bracket(S.algebra, U, w)
        first = first + wts @ w
        second = second + wts @ br
        acc = U[-1]
    return first + 0.5 * second


def endpoint_step2(S, u):
    """Endpoint int u + 1/2 int [int_0^t u, u(t)] dt by composite Simpson."""
    if S.step != 2:
        raise ValueError("endpoint_step2 requires a step-2 algebra")
    if u.k != S.k:
        raise ValueError("control dimension does not match the horizontal space")
    return endpoint_step2_values(S, u)


def endpoint_product(S, u, scheme="magnus4"):
    """Endpoint as an ordered product of exact group elements, one per step.

    ``scheme="magnus4"`` uses one exponent per Simpson panel,
    2h/6 (u0 + 4u1 + u2) + (2h)^2/12 [u0, u2], which is fourth order for
    step <= 3; ``scheme="euler"`` uses exp(h u(t_j)) and is first order.
    """
    if u.k != S.k:
        raise ValueError("control dimension does not match the horizontal space")
    h = u.h
    factors = []
    for _, vals in u.pieces():
        w = vals @ S.horizontal.T
        if scheme == "euler":
            factors.append(h * w[:-1])
        elif scheme == "magnus4":
            w0, w1, w2 = w[0:-2:2], w[1:-1:2], w[2::2]
            H = 2.0 * h
            omega = H / 6.0 * (w0 + 4.0 * w1 + w2) + H * H / 12.0 * bracket(S.algebra, w0, w2)
            factors.append(omega)
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
    return multiply_many(S.algebra, np.vstack(factors))


def energy(S, u):
    return float(np.real(integrate(u, lambda v: np.real(np.einsum("ti,ij,tj->t", v, S.metric, np.conj(v))))))


def length(S, u):
    return float(integrate(u, lambda v: np.sqrt(np.maximum(np.real(np.einsum("ti,ij,tj->t", v, S.metric, np.conj(v))), 0.0))))


def l2_inner(S, u, v):
    """int rho(u, v) dt."""
    if u.breaks != v.breaks or u.N != v.N:
        raise ValueError("controls must share the grid")
    total = 0.0
    for (_, a), (_, b) in zip(u.pieces(), v.pieces()):
        y = np.einsum("ti,ij,tj->t", a, S.metric, b)
        total = total + simpson_weights(len(y), u.h) @ y
    return float(np.real(total))


@dataclass(frozen=True, eq=False)
class FourierControl:
    """Finite Fourier control: n -> complex coefficient vector (horizontal coords)."""

    coefficients: dict = field(default_factory=dict)

    def __post_init__(self):
        coeffs = {int(n): np.asarray(c, dtype=complex) for n, c in self.coefficients.items()}
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def support(self):
        return sorted(self.coefficients)

    def coefficient(self, n, k):
        return self.coefficients.get(n, np.zeros(k, dtype=complex))

    def real_form_coefficients(self):
        """Symmetric complex coefficients {n: c_n/2, -n: conj(c_n)/2} of sum Re(c_n f_n)."""
        out = {}
        for n, c in self.coefficients.items():
            if n <= 0:
                raise ValueError("real form needs positive frequencies")
            out[n] = out.get(n, 0) + c / 2.0
            out[-n] = out.get(-n, 0) + np.conj(c) / 2.0
        return FourierControl(out)

    def to_json(self):
        return {"fourier": {str(n): [[float(z.real), float(z.imag)] for z in c] for n, c in self.coefficients.items()}}

    @classmethod
    def from_json(cls, d):
        return cls({int(n): np.array([complex(a, b) for a, b in c]) for n, c in d["fourier"].items()})


def complex_bracket(alg, a, b):
    """Complex-bilinear extension of the bracket."""
    return bracket(alg, np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def hermitian(S, a, b):
    """rho(a, b), linear in a and conjugate-linear in b."""
    return np.einsum("...i,ij,...j->...", a, S.metric, np.conj(b))


def fourier_endpoint_complex(S, v):
    """Closed-form endpoint sum 1/(4 pi i n) [c_n, c_-n] and Hermitian energy sum rho(c_n, c_n)."""
    if S.step != 2:
        raise ValueError("closed-form Fourier endpoint requires step 2")
    if 0 in v.coefficients:
        raise ValueError("Fourier control must not contain the n = 0 mode")
    k = S.k
    end = np.zeros(S.dim, dtype=complex)
    en = 0.0
    for n, c in v.coefficients.items():
        cm = v.coefficient(-n, k)
        end = end + complex_bracket(S.algebra, S.to_algebra(c), S.to_algebra(cm)) / (4j * np.pi * n)
        en += float(np.real(hermitian(S, c, c)))
    return end, en


def fourier_real_endpoint(S, v):
    """Endpoint and energy of the real control sum_{n>0} Re(c_n f_n)."""
    end = np.zeros(S.dim)
    en = 0.0
    for n, c in v.coefficients.items():
        if n <= 0:
            raise ValueError("real form needs positive frequencies")
        re = S.to_algebra(np.real(c))
        im = S.to_algebra(np.imag(c))
        end = end + bracket(S.algebra, im, re) / (4 * np.pi * n)
        en += 0.5 * float(np.real(hermitian(S, c, c)))
    return end, en


def fourier_to_sampled(v, N=DEFAULT_GRID, complex_form=False):
    """Evaluate sum Re(c_n f_n) on the grid (or sum c_n f_n when complex_form)."""
    t = np.linspace(0.0, 1.0, N)
    if not v.coefficients:
        raise ValueError("empty Fourier control")
    k = len(next(iter(v.coefficients.values())))
    out = np.zeros((N, k), dtype=complex)
    for n, c in v.coefficients.items():
        if not complex_form and n <= 0:
            raise ValueError("real form needs positive frequencies")
        out += np.exp(2j * np.pi * n * t)[:, None] * c[None, :]
    return SampledControl(out if complex_form else out.real)


def horizontal_split(S, u):
    """Split u = u_inf + drift with u_inf in V and drift in the horizontal part of [g,g]."""
    if S.step != 2:
        raise ValueError("horizontal_split requires step 2")
    d = S.drift_basis
    proj_w = d @ d.T @ S.metric

    def split(vals):
        w = vals @ proj_w.T
        return vals - w, w

    inf, drift = split(u.values)
    if u.breaks:
        ri, rd = split(u.right)
        return SampledControl(inf, u.breaks, ri), SampledControl(drift, u.breaks, rd)
    return SampledControl(inf), SampledControl(drift)


def concat(u1, u2):
    """Follow u1 then u2, each at double speed, on a grid of size N1 + N2 - 1."""
    if u1.k != u2.k:
        raise ValueError("controls live on different horizontal spaces")
    if u1.N != u2.N:
        raise ValueError("controls must use the same grid size")
    n = u1.N
    vals = np.vstack([2.0 * u1.values, 2.0 * u2.values[1:]])
    breaks = list(u1.breaks) + [n - 1] + [b + n - 1 for b in u2.breaks]
    right = []
    if u1.breaks:
        right.extend(2.0 * u1.right)
    right.append(2.0 * u2.values[0])
    if u2.breaks:
        right.extend(2.0 * u2.right)
    # the joined grid has 2n - 1 points; keep it odd and breaks even
    return SampledControl(vals, tuple(breaks), np.array(right))


def resample(u, N):
    """Cubic-spline resampling of a smooth (break-free) control onto a new grid."""
    from scipy.interpolate import CubicSpline

    if u.breaks:
        raise ValueError("resampling a control with jumps is not supported")
    cs = CubicSpline(u.grid, u.values, axis=0)
    return SampledControl(cs(np.linspace(0.0, 1.0, N)))


def control_from_json(d):
    if "fourier" in d:
        return FourierControl.from_json(d)
    return SampledControl.from_json(d)


def dump_control(u):
    return json.dumps(u.to_json())
