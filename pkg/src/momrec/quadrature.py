"""Globally adaptive Gauss-Legendre quadrature for vector-valued integrands."""

import heapq
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

from .errors import QuadratureFailure

EPS = np.finfo(float).eps


@lru_cache(maxsize=16)
def _rule(n):
    x, w = legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _panel(func, lo, hi, n):
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    out = []
    for m in (n, 2 * n):
        x, w = _rule(m)
        fx = np.asarray(func(mid + half * x))
        if fx.ndim == 1:
            fx = fx[:, None]
        out.append((half * (w @ fx), half * (np.abs(w) @ np.abs(fx))))
    (coarse, _), (fine, absfine) = out
    return fine, np.abs(fine - coarse), absfine


def integrate(func, a, b, tol=1e-12, order=16, max_panels=4000, breakpoints=()):
    """Integrate ``func`` over ``[a, b]``.

    ``func`` maps an array of abscissae of shape ``(n,)`` to values of shape
    ``(n,)`` or ``(n, m)``; vector-valued integrands share one set of panels.
    Each panel is estimated with ``order`` and ``2*order`` point rules, and
    the panel with the worst error-to-tolerance ratio is bisected until
    every component satisfies ``err <= tol * max(1, |I|)``, or until the
    error is at the rounding floor of the integrand magnitude.

    Returns
    -------
    value : float, complex or ndarray
        Scalar for scalar integrands.
    """
    edges = sorted({float(a), float(b), *[float(p) for p in breakpoints if a < p < b]})
    scalar = np.asarray(func(np.array([0.5 * (float(a) + float(b))]))).ndim == 1
    panels = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, e, ab = _panel(func, lo, hi, order)
        panels.append((lo, hi, val, e, ab))
    if not panels:
        return 0.0 if scalar else np.zeros(np.asarray(func(np.array([float(a)]))).shape[1:])

    def summarize():
        tot = sum(p[2] for p in panels)
        er = sum(p[3] for p in panels)
        ab = sum(p[4] for p in panels)
        target = np.maximum(tol * np.maximum(1.0, np.abs(tot)), 64 * EPS * ab)
        return tot, er, ab, target

    total, err, absint, target = summarize()

    def ratio(e):
        # targets move as panels are split; a slightly stale priority is harmless
        return -float(np.max(e / target))

    heap = [(ratio(p[3]), i) for i, p in enumerate(panels)]
    heapq.heapify(heap)
    while np.any(err > target):
        if len(panels) >= max_panels:
            raise QuadratureFailure(
                f"tolerance {tol:g} not reached with {max_panels} panels "
                f"(error estimate {np.max(err):.3e})",
                error=float(np.max(err)),
            )
        _, i = heapq.heappop(heap)
        lo, hi, val, e, ab = panels[i]
        mid = 0.5 * (lo + hi)
        left = (lo, mid, *_panel(func, lo, mid, order))
        right = (mid, hi, *_panel(func, mid, hi, order))
        panels[i] = left
        panels.append(right)
        heapq.heappush(heap, (ratio(left[3]), i))
        heapq.heappush(heap, (ratio(right[3]), len(panels) - 1))
        # incremental update keeps the loop linear in the panel count
        total = total - val + left[2] + right[2]
        err = err - e + left[3] + right[3]
        absint = absint - ab + left[4] + right[4]
        target = np.maximum(tol * np.maximum(1.0, np.abs(total)), 64 * EPS * absint)
        if mid == lo or mid == hi:
            raise QuadratureFailure("panel width underflow", error=float(np.max(err)))
    return total[0] if scalar else total


def moment_integrand(func, kmax, weight=None):
    """Vector integrand ``x -> [x^k func(x)]_{k=0..kmax}`` (times ``weight``)."""
    powers = np.arange(kmax + 1)

    def g(x):
        fx = np.asarray(func(x))
        if weight is not None:
            fx = fx * weight(x)
        return fx[:, None] * x[:, None] ** powers[None, :]

    return g
