"""Convolution-dual coefficient tables and generalized moments.

For a kernel ``f`` with Fourier transform ``fhat(w) = int f(x) exp(-i w x) dx``
the polynomials ``psi_n(t) = sum_k C[n, k] t^k`` satisfy
``int f(t + x) psi_n(t) dt = x^n``. Applying the same triangular table to raw
moments of a signal ``F = sum_j a_j f(x + x_j)`` produces generalized moments
``M_n = sum_j a_j x_j^n``.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import LengthMismatch, SchemaError, VanishingFhat, ZeroAtOrigin
from .moments import MomentSequence, as_values

ZERO_TOL = 1e-14
REAL_TOL = 1e-10


def _real_if_close(arr, tol=REAL_TOL):
    arr = np.asarray(arr)
    if np.iscomplexobj(arr):
        scale = max(np.max(np.abs(arr)), 1e-300) if arr.size else 1.0
        if np.all(np.abs(arr.imag) <= tol * scale):
            return arr.real.copy()
    return arr


@dataclass(frozen=True)
class KernelSpec:
    """A known convolution kernel.

    Attributes
    ----------
    name : str
        ``gaussian``, ``box``, ``dirac`` or ``custom``.
    params : dict
        ``sigma`` for the Gaussian, ``half_width`` for the box.
    taylor : callable
        ``taylor(order)`` returns the Taylor coefficients of ``fhat`` at 0.
    fhat_eval : callable, optional
        ``fhat(w)`` at arbitrary (integer) frequencies.
    density : callable, optional
        ``density(x, l)`` evaluates the ``l``-th derivative of ``f`` itself.
    support : tuple
        Interval outside which ``f`` is negligible.
    convention_scale : float
        Multiplies every dual coefficient.
    """

    name: str
    params: dict = field(default_factory=dict)
    taylor: Callable = None
    fhat_eval: Optional[Callable] = None
    density: Optional[Callable] = None
    support: tuple = (-np.inf, np.inf)
    convention_scale: float = 1.0

    def fhat_taylor(self, order):
        return np.asarray(self.taylor(order))

    def fhat(self, w):
        if self.fhat_eval is None:
            raise ValueError(f"kernel {self.name!r} has no closed-form transform")
        return self.fhat_eval(w)

    def moments(self, order):
        """Raw moments ``int x^l f(x) dx`` for ``l = 0 .. order``.

        Read off the transform: ``fhat^(l)(0) = (-i)^l mu_l``.
        """
        t = self.fhat_taylor(order)
        mu = np.array([(1j) ** l * math.factorial(l) * t[l] for l in range(order + 1)])
        return _real_if_close(mu)

    def derivative_moments(self, order, l):
        """Moments of ``f^(l)``: ``int t^n f^(l)(t) dt = (-1)^l (n)_l mu_(n-l)``."""
        mu = self.moments(order)
        out = np.zeros(order + 1, dtype=mu.dtype)
        for n in range(l, order + 1):
            out[n] = (-1) ** l * math.perm(n, l) * mu[n - l]
        return out

    def to_json(self):
        if self.name == "custom":
            t = self.fhat_taylor(len(self.params["taylor"]) - 1)
            return {"name": "custom", "taylor": [[float(np.real(c)), float(np.imag(c))] for c in t],
                    "convention_scale": self.convention_scale}
        out = {"name": self.name, **self.params}
        if self.convention_scale != 1.0:
            out["convention_scale"] = self.convention_scale
        return out


def gaussian(sigma=1.0, convention_scale=1.0):
    """Unit-mass Gaussian ``exp(-x^2 / 2 sigma^2) / (sigma sqrt(2 pi))``."""
    sigma = float(sigma)
    if sigma <= 0:
        raise ValueError("sigma must be positive")

    def taylor(order):
        c = np.zeros(order + 1)
        for m in range(order // 2 + 1):
            c[2 * m] = (-sigma ** 2 / 2) ** m / math.factorial(m)
        return c

    def density(x, l=0):
        x = np.asarray(x, dtype=float)
        z = x / sigma
        base = np.exp(-0.5 * z * z) / (sigma * math.sqrt(2 * math.pi))
        # d^l/dx^l phi = (-1)^l He_l(z) phi / sigma^l
        he = np.polynomial.hermite_e.hermeval(z, [0] * l + [1])
        return (-1) ** l * he * base / sigma ** l

    return KernelSpec("gaussian", {"sigma": sigma}, taylor,
                      lambda w: np.exp(-0.5 * (sigma * np.asarray(w)) ** 2),
                      density, (-40 * sigma, 40 * sigma), convention_scale)


def box(half_width=0.5, convention_scale=1.0):
    """Unit-mass box ``1 / (2 h)`` on ``[-h, h]``; ``fhat(w) = sin(w h) / (w h)``."""
    h = float(half_width)
    if h <= 0:
        raise ValueError("half_width must be positive")

    def taylor(order):
        c = np.zeros(order + 1)
        for m in range(order // 2 + 1):
            c[2 * m] = (-1) ** m * h ** (2 * m) / math.factorial(2 * m + 1)
        return c

    def density(x, l=0):
        if l:
            raise ValueError("box kernel derivatives are distributions")
        x = np.asarray(x, dtype=float)
        return np.where((x >= -h) & (x <= h), 0.5 / h, 0.0)

    return KernelSpec("box", {"half_width": h}, taylor,
                      lambda w: np.sinc(np.asarray(w) * h / np.pi),
                      density, (-h, h), convention_scale)


def dirac(convention_scale=1.0):
    """Point-mass surrogate: ``fhat == 1``; moments are ``(1, 0, 0, ...)``."""

    def taylor(order):
        c = np.zeros(order + 1)
        c[0] = 1.0
        return c

    return KernelSpec("dirac", {}, taylor, lambda w: np.ones_like(np.asarray(w, dtype=float)),
                      None, (0.0, 0.0), convention_scale)


def custom(taylor_coeffs, convention_scale=1.0):
    coeffs = np.asarray(taylor_coeffs)

    def taylor(order):
        if order + 1 > coeffs.size:
            raise ValueError(f"custom kernel has only {coeffs.size} Taylor coefficients")
        return coeffs[: order + 1]

    return KernelSpec("custom", {"taylor": coeffs}, taylor, None, None,
                      (-np.inf, np.inf), convention_scale)


BUILTINS = {"gaussian": gaussian, "box": box, "dirac": dirac}


def kernel_from_json(obj):
    """Build a KernelSpec from a name string or a JSON object."""
    if isinstance(obj, str):
        obj = {"name": obj}
    if not isinstance(obj, dict) or "name" not in obj:
        raise SchemaError("kernel must be a name or an object with a 'name' field")
    obj = dict(obj)
    name = obj.pop("name")
    scale = float(obj.pop("convention_scale", 1.0))
    if name == "custom":
        raw = obj.pop("taylor", None)
        if raw is None or obj:
            raise SchemaError("custom kernel takes exactly 'taylor' and 'convention_scale'")
        vals = [complex(*c) if isinstance(c, (list, tuple)) else complex(c) for c in raw]
        return custom(_real_if_close(np.array(vals)), scale)
    if name not in BUILTINS:
        raise SchemaError(f"unknown kernel {name!r}")
    try:
        return BUILTINS[name](**obj, convention_scale=scale)
    except TypeError as exc:
        raise SchemaError(f"bad parameters for kernel {name!r}: {exc}") from None


def inverse_taylor(fhat_taylor, order):
    """Taylor coefficients of ``1 / fhat`` from those of ``fhat``.

    Standard power-series reciprocal: ``g_0 = 1 / f_0`` and
    ``g_s = -(1 / f_0) sum_{t<s} g_t f_(s-t)``.
    """
    f = np.asarray(fhat_taylor)
    if f.size < order + 1:
        raise ValueError(f"need {order + 1} Taylor coefficients, got {f.size}")
    if abs(f[0]) <= ZERO_TOL:
        raise ZeroAtOrigin("fhat(0) vanishes; no convolution dual exists")
    dtype = np.result_type(f, float)
    g = np.zeros(order + 1, dtype=dtype)
    g[0] = 1.0 / f[0]
    for s in range(1, order + 1):
        g[s] = -np.dot(g[:s], f[s:0:-1]) / f[0]
    return g


@dataclass(frozen=True, eq=False)
class DualCoefficients:
    """Lower-triangular table ``C[n, k]``, zero for ``k > n``."""

    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table)
        t[np.triu_indices(t.shape[0], 1)] = 0
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def order(self):
        return self.table.shape[0] - 1

    def __getitem__(self, nk):
        n, k = nk
        return self.table[n, k] if k <= n else 0.0

    def dual_polynomial(self, n):
        """Ascending coefficients of ``psi_n``."""
        return self.table[n, : n + 1]


def dual_coefficients(spec, order):
    """Dual table ``C[n,k] = s * binom(n,k) * (-i)^(n+k) * (n-k)! * g_(n-k)``.

    ``g`` are the Taylor coefficients of ``1 / fhat`` and ``s`` is the
    kernel's ``convention_scale``; ``(n-k)! g_(n-k)`` is the
    ``(n-k)``-th derivative of ``1 / fhat`` at the origin.
    """
    g = inverse_taylor(spec.fhat_taylor(order), order)
    C = np.zeros((order + 1, order + 1), dtype=complex)
    for n in range(order + 1):
        for k in range(n + 1):
            C[n, k] = ((-1j) ** ((n + k) % 4) * math.comb(n, k)
                       * math.factorial(n - k) * g[n - k])
    return DualCoefficients(_real_if_close(spec.convention_scale * C))


def generalized_poly_moments(m, C):
    """``M_n = sum_{k<=n} C[n,k] m_k`` for ``n = 0 .. C.order``."""
    vals = as_values(m)
    if vals.size < C.order + 1:
        raise LengthMismatch(f"need {C.order + 1} moments, got {vals.size}")
    M = C.table @ vals[: C.order + 1]
    meta = dict(getattr(m, "meta", {}))
    return MomentSequence(_real_if_close(M), None, "generalized", "poly", meta)


def fourier_generalized_moments(mu, spec, k_range, tol=1e-12):
    """Generalized Fourier moments ``M_k = mu_k / fhat(-k)``, ``k = 0 .. k_range``.

    With ``mu_k = int F(t) exp(i k t) dt`` and ``F = sum_j a_j f(t + x_j)``
    this gives ``M_k = sum_j a_j exp(-i k x_j)``.
    """
    fhat0 = abs(spec.fhat(0.0))
    out = np.zeros(k_range + 1, dtype=complex)
    for k in range(k_range + 1):
        if k not in mu:
            raise LengthMismatch(f"Fourier coefficient mu_{k} is missing")
        fk = spec.fhat(-float(k))
        if abs(fk) <= tol * fhat0:
            raise VanishingFhat(f"fhat vanishes at frequency {k}; drop this equation", k=k)
        out[k] = mu[k] / fk
    return MomentSequence(out, None, "generalized", "fourier")
