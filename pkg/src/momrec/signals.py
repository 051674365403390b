"""Test-signal synthesis and their moments / Fourier coefficients.

This module is the independent oracle for the solvers: polynomial pieces
get closed-form moments, everything else goes through adaptive quadrature.
"""

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as npoly

from . import convdual
from .errors import SchemaError, UnsupportedPiece
from .moments import MomentSequence
from .quadrature import integrate, moment_integrand

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class PolynomialPiece:
    coeffs: tuple

    def __call__(self, x):
        return npoly.polyval(x, np.asarray(self.coeffs, dtype=float))

    def moments(self, lo, hi, kmax):
        c = np.asarray(self.coeffs, dtype=float)
        out = np.zeros(kmax + 1)
        for k in range(kmax + 1):
            e = np.arange(k + 1, k + 1 + c.size)
            out[k] = np.sum(c * (hi ** e - lo ** e) / e)
        return out

    def to_json(self):
        return {"kind": "polynomial", "coeffs": [float(c) for c in self.coeffs]}


@dataclass(frozen=True)
class SinusoidPiece:
    """``amplitude * sin(frequency * x + phase)``."""

    amplitude: float = 1.0
    frequency: float = 1.0
    phase: float = 0.0

    def __call__(self, x):
        return self.amplitude * np.sin(self.frequency * np.asarray(x) + self.phase)

    def to_json(self):
        return {"kind": "sinusoid", "amplitude": self.amplitude,
                "frequency": self.frequency, "phase": self.phase}


@dataclass(frozen=True)
class RationalPiece:
    numerator: tuple
    denominator: tuple

    def __call__(self, x):
        return (npoly.polyval(x, np.asarray(self.numerator, dtype=float))
                / npoly.polyval(x, np.asarray(self.denominator, dtype=float)))

    def to_json(self):
        return {"kind": "rational", "numerator": [float(c) for c in self.numerator],
                "denominator": [float(c) for c in self.denominator]}


@dataclass(frozen=True)
class CallablePiece:
    func: Callable

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    def to_json(self):
        raise SchemaError("sampled callables cannot be serialized")


@dataclass(frozen=True)
class PiecewiseSpec:
    """Piecewise signal on ``[a, b]`` with strictly increasing interior breakpoints.

    ``pieces[n]`` lives on ``[xi_n, xi_(n+1))``; at a breakpoint the
    right-hand piece applies.
    """

    interval: tuple
    breakpoints: tuple
    pieces: tuple

    def __post_init__(self):
        a, b = (float(t) for t in self.interval)
        bp = tuple(float(t) for t in self.breakpoints)
        if not a < b:
            raise ValueError("interval must satisfy a < b")
        if any(not a < t < b for t in bp) or any(u >= v for u, v in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing inside (a, b)")
        if len(self.pieces) != len(bp) + 1:
            raise ValueError(f"{len(bp)} breakpoints need {len(bp) + 1} pieces")
        object.__setattr__(self, "interval", (a, b))
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "pieces", tuple(self.pieces))
        for lo, hi, piece in self.segments():
            if isinstance(piece, RationalPiece):
                den = np.asarray(piece.denominator, dtype=float)
                r = npoly.polyroots(den) if den.size > 1 else []
                if any(abs(z.imag) < 1e-12 and lo <= z.real <= hi for z in np.atleast_1d(r)):
                    raise ValueError("rational denominator vanishes on its piece")

    def segments(self):
        edges = (self.interval[0], *self.breakpoints, self.interval[1])
        return [(edges[n], edges[n + 1], p) for n, p in enumerate(self.pieces)]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breakpoints, x, side="right")
        out = np.zeros_like(x)
        for n, piece in enumerate(self.pieces):
            sel = idx == n
            if np.any(sel):
                out[sel] = piece(x[sel])
        a, b = self.interval
        return np.where((x >= a) & (x <= b), out, 0.0)


@dataclass(frozen=True)
class ShiftSpec:
    """``F(x) = sum_j sum_l a[j][l] f^(l)(x + x_j)`` for a known kernel ``f``."""

    kernel: object
    shifts: tuple
    amplitudes: tuple
    interval: tuple = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shifts = tuple(float(s) for s in self.shifts)
        amps = tuple(tuple(float(v) for v in np.atleast_1d(a)) for a in self.amplitudes)
        if len(amps) != len(shifts):
            raise ValueError("one amplitude list per shift is required")
        if len(set(shifts)) != len(shifts):
            raise ValueError("shifts must be distinct")
        object.__setattr__(self, "shifts", shifts)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def max_derivative(self):
        return max(len(a) for a in self.amplitudes) - 1

    def __call__(self, x):
        if self.kernel.density is None:
            raise UnsupportedPiece(f"kernel {self.kernel.name!r} cannot be evaluated pointwise")
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for s, amps in zip(self.shifts, self.amplitudes):
            for l, a in enumerate(amps):
                if a:
                    out = out + a * self.kernel.density(x + s, l)
        return out

    def support_edges(self):
        lo, hi = self.kernel.support
        edges = set()
        for s in self.shifts:
            edges.update((lo - s, hi - s, -s))
        return sorted(edges)


def pp_moments(spec, kmax):
    """Closed-form moments of a piecewise polynomial signal."""
    out = np.zeros(kmax + 1)
    for lo, hi, piece in spec.segments():
        if not isinstance(piece, PolynomialPiece):
            raise UnsupportedPiece(f"{type(piece).__name__} has no closed-form moments")
        out += piece.moments(lo, hi, kmax)
    return MomentSequence(out, spec.interval, "analytic", "poly")


def quad_moments(spec, kmax, tol=1e-12):
    """Moments by adaptive Gauss-Legendre quadrature, split at every breakpoint."""
    if isinstance(spec, ShiftSpec):
        edges = spec.support_edges()
        lo, hi = edges[0], edges[-1]
        vals = integrate(moment_integrand(spec, kmax), lo, hi, tol=tol, breakpoints=edges)
        return MomentSequence(np.atleast_1d(vals), (lo, hi) if lo < hi else None,
                              "quadrature", "poly")
    out = np.zeros(kmax + 1)
    for lo, hi, piece in spec.segments():
        out += np.atleast_1d(integrate(moment_integrand(piece, kmax), lo, hi, tol=tol))
    return MomentSequence(out, spec.interval, "quadrature", "poly")


def shift_model_moments(spec, kmax):
    """Exact moments of a shift model from the kernel's own moments.

    ``m_n = sum_{j,l} a_jl sum_q binom(n,q) (-x_j)^(n-q) int u^q f^(l)(u) du``.
    """
    dmom = [spec.kernel.derivative_moments(kmax, l) for l in range(spec.max_derivative + 1)]
    out = np.zeros(kmax + 1, dtype=np.result_type(*dmom))
    for s, amps in zip(spec.shifts, spec.amplitudes):
        for l, a in enumerate(amps):
            if not a:
                continue
            for n in range(kmax + 1):
                q = np.arange(n + 1)
                binoms = np.array([math.comb(n, int(t)) for t in q], dtype=float)
                out[n] += a * np.sum(binoms * (-s) ** (n - q) * dmom[l][: n + 1])
    lo, hi = spec.kernel.support
    interval = (lo - max(spec.shifts), hi - min(spec.shifts))
    ok = np.all(np.isfinite(interval)) and interval[0] < interval[1]
    return MomentSequence(out, interval if ok else None, "analytic", "poly")


def fourier_coefficients(spec, k_range, domain=(0.0, TWO_PI), tol=1e-12):
    """``mu_k = int F(t) exp(i k t) dt`` over one period, ``|k| <= k_range``.

    Shift models are periodized over ``domain`` first, so that ``mu_k``
    equals the transform of the unperiodized signal at integer ``k``.
    """
    lo, hi = (float(t) for t in domain)
    period = hi - lo
    ks = np.arange(-k_range, k_range + 1)
    if isinstance(spec, ShiftSpec):
        klo, khi = spec.kernel.support
        reach = int(math.ceil(max(abs(klo), abs(khi)) / period)) + 1

        def signal(t):
            return sum(spec(t + n * period) for n in range(-reach - 1, reach + 2))

        breaks = sorted({(e - lo) % period + lo for e in spec.support_edges()
                         if np.isfinite(e)})
    else:
        signal = spec
        breaks = [spec.interval[0], *spec.breakpoints, spec.interval[1]]

    def integrand(t):
        ft = signal(t)
        return ft[:, None] * np.exp(1j * t[:, None] * (2 * math.pi / period) * ks[None, :])

    vals = integrate(integrand, lo, hi, tol=tol, breakpoints=breaks)
    return {int(k): complex(v) for k, v in zip(ks, np.atleast_1d(vals))}


def evaluate(obj, grid):
    """Pointwise samples of a spec or reconstructed model (right-limit at breakpoints)."""
    return np.asarray(obj(np.asarray(grid, dtype=float)))


# Seeded random instances ---------------------------------------------------

def separated_points(rng, count, lo, hi, sep, max_tries=10000):
    """``count`` sorted uniform points in ``[lo, hi]`` with pairwise gaps ``>= sep``."""
    for _ in range(max_tries):
        pts = np.sort(rng.uniform(lo, hi, count))
        if count < 2 or np.min(np.diff(pts)) >= sep:
            return pts
    raise ValueError(f"cannot place {count} points with separation {sep} in [{lo}, {hi}]")


def nonzero_uniform(rng, count, bound, floor=1e-3):
    """Uniform values in ``[-bound, bound]`` with ``|v| >= floor``."""
    out = rng.uniform(-bound, bound, count)
    while np.any(np.abs(out) < floor):
        bad = np.abs(out) < floor
        out[bad] = rng.uniform(-bound, bound, int(bad.sum()))
    return out


def random_shift_spec(rng, s=None, kernel=None, lo=0.1, hi=0.9, sep=0.05, amp=5.0, s_max=5):
    """A random plain shift model; ``s`` defaults to a uniform draw in ``1..s_max``."""
    s = int(rng.integers(1, s_max + 1)) if s is None else s
    kernel = convdual.dirac() if kernel is None else kernel
    shifts = separated_points(rng, s, lo, hi, sep)
    amps = nonzero_uniform(rng, s, amp)
    return ShiftSpec(kernel, tuple(shifts), tuple((float(a),) for a in amps))


def random_step_spec(rng, p=1, interval=(0.0, 1.0), levels=2.0, margin=0.15, sep=0.15):
    """Piecewise-constant signal with ``p`` jumps and distinct neighbouring levels."""
    a, b = interval
    w = b - a
    bps = separated_points(rng, p, a + margin * w, b - margin * w, sep * w) if p else []
    vals = [float(rng.uniform(-levels, levels))]
    for _ in range(p):
        v = float(rng.uniform(-levels, levels))
        while abs(v - vals[-1]) < 0.25:
            v = float(rng.uniform(-levels, levels))
        vals.append(v)
    return PiecewiseSpec(interval, tuple(bps), tuple(PolynomialPiece((v,)) for v in vals))


# JSON round trip ---------------------------------------------------------

def piece_from_json(obj):
    kind = obj.get("kind")
    try:
        if kind == "polynomial":
            return PolynomialPiece(tuple(float(c) for c in obj["coeffs"]))
        if kind == "sinusoid":
            extra = set(obj) - {"kind", "amplitude", "frequency", "phase"}
            if extra:
                raise SchemaError(f"unknown sinusoid fields {sorted(extra)}")
            return SinusoidPiece(float(obj.get("amplitude", 1.0)),
                                 float(obj.get("frequency", 1.0)), float(obj.get("phase", 0.0)))
        if kind == "rational":
            return RationalPiece(tuple(float(c) for c in obj["numerator"]),
                                 tuple(float(c) for c in obj["denominator"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad {kind} piece: {exc}") from None
    raise SchemaError(f"unknown piece kind {kind!r}")


def spec_from_json(obj):
    """Build a PiecewiseSpec or ShiftSpec from its JSON object."""
    kind = obj.get("type")
    try:
        if kind == "piecewise":
            return PiecewiseSpec(tuple(obj["interval"]), tuple(obj.get("breakpoints", ())),
                                 tuple(piece_from_json(p) for p in obj["pieces"]))
        if kind == "shift":
            kernel = convdual.kernel_from_json(obj["kernel"])
            amps = obj["amplitudes"]
            interval = tuple(obj["interval"]) if obj.get("interval") is not None else None
            return ShiftSpec(kernel, tuple(obj["shifts"]), tuple(amps), interval)
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"invalid {kind} signal: {exc}") from None
    raise SchemaError(f"unknown signal type {kind!r}")


def spec_to_json(spec):
    if isinstance(spec, PiecewiseSpec):
        return {"schema_version": 1, "type": "piecewise", "interval": list(spec.interval),
                "breakpoints": list(spec.breakpoints),
                "pieces": [p.to_json() for p in spec.pieces]}
    out = {"schema_version": 1, "type": "shift", "kernel": spec.kernel.to_json(),
           "shifts": list(spec.shifts), "amplitudes": [list(a) for a in spec.amplitudes]}
    if spec.interval is not None:
        out["interval"] = list(spec.interval)
    return out
