"""Dense univariate polynomials and the small linear-algebra kernels built on them.

Coefficients are always stored in ascending order of powers, the same
convention as :mod:`numpy.polynomial.polynomial`.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import IllConditioned, SingularHankel, ZeroPolynomial

LOG = logging.getLogger(__name__)

TRIM_TOL = 1e-12
RANK_TOL = 1e-10


def _as_array(values):
    arr = np.asarray(values)
    if arr.dtype.kind not in "fc":
        arr = arr.astype(float)
    return arr


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Dense polynomial with ascending coefficients.

    Trailing coefficients with ``|c| <= trim_tol * max|c|`` are dropped on
    construction, so ``degree == len(coeffs) - 1`` always holds. The zero
    polynomial has no coefficients and degree -1.
    """

    coeffs: np.ndarray
    trim_tol: float = field(default=TRIM_TOL, repr=False, compare=False)

    def __post_init__(self):
        c = _as_array(self.coeffs).ravel().copy()
        if not np.all(np.isfinite(c)):
            raise ValueError("polynomial coefficients must be finite")
        scale = np.max(np.abs(c)) if c.size else 0.0
        if scale == 0.0:
            c = c[:0]
        else:
            keep = np.nonzero(np.abs(c) > self.trim_tol * scale)[0]
            c = c[: keep[-1] + 1]
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_roots(cls, roots, lead=1.0):
        c = npoly.polyfromroots(np.asarray(roots)) if len(roots) else np.ones(1)
        if np.iscomplexobj(c) and np.allclose(c.imag, 0.0, atol=1e-14):
            c = c.real
        return cls(lead * c)

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return np.array_equal(self.coeffs, other.coeffs)

    __hash__ = None

    @property
    def degree(self):
        return len(self.coeffs) - 1

    @property
    def is_zero(self):
        return self.coeffs.size == 0

    def norm(self):
        return float(np.linalg.norm(self.coeffs)) if self.coeffs.size else 0.0

    def __call__(self, x):
        if self.is_zero:
            return np.zeros_like(np.asarray(x, dtype=float))
        return npoly.polyval(x, self.coeffs)

    def __add__(self, other):
        return Polynomial(npoly.polyadd(self._c(), _coerce(other)._c()))

    def __sub__(self, other):
        return Polynomial(npoly.polysub(self._c(), _coerce(other)._c()))

    def __mul__(self, other):
        if np.isscalar(other):
            return Polynomial(self._c() * other)
        return Polynomial(npoly.polymul(self._c(), _coerce(other)._c()))

    __rmul__ = __mul__

    def __divmod__(self, other):
        other = _coerce(other)
        if other.is_zero:
            raise ZeroPolynomial("division by the zero polynomial")
        q, r = npoly.polydiv(self._c(), other.coeffs)
        return Polynomial(q), Polynomial(r)

    def deriv(self, m=1):
        if self.degree < m:
            return Polynomial(np.zeros(1))
        return Polynomial(npoly.polyder(self.coeffs, m))

    def padded(self, length):
        """Coefficients zero-padded (or cut) to exactly ``length`` entries."""
        out = np.zeros(length, dtype=self.coeffs.dtype if self.coeffs.size else float)
        n = min(length, self.coeffs.size)
        out[:n] = self.coeffs[:n]
        return out

    def _c(self):
        return self.coeffs if self.coeffs.size else np.zeros(1)


def _coerce(p):
    if isinstance(p, Polynomial):
        return p
    if np.isscalar(p):
        return Polynomial([p])
    return Polynomial(p)


def roots(p, trim_tol=TRIM_TOL):
    """Roots of ``p`` with multiplicity, as eigenvalues of the companion matrix.

    LAPACK balances the companion matrix before the QR iteration. A
    non-zero constant has no roots and yields an empty array.
    """
    p = _coerce(p)
    if trim_tol != p.trim_tol:
        p = Polynomial(p.coeffs, trim_tol=trim_tol)
    if p.is_zero:
        raise ZeroPolynomial("cannot root the zero polynomial")
    if p.degree < 1:
        return np.zeros(0, dtype=complex)
    c = p.coeffs / p.coeffs[-1]
    n = p.degree
    comp = np.zeros((n, n), dtype=c.dtype)
    comp[1:, :-1] = np.eye(n - 1)
    comp[:, -1] = -c[:-1]
    return np.linalg.eigvals(comp).astype(complex)


def nullspace(A, rank_tol=RANK_TOL):
    """Orthonormal basis of the numerical nullspace of ``A``.

    Returns the right singular vectors whose singular value is at most
    ``rank_tol * sigma_max`` (columns beyond the row count always count as
    null). An empty list means numerically full column rank.
    """
    A = _as_array(A)
    if A.ndim != 2:
        raise ValueError("nullspace expects a 2-d array")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    n = A.shape[1]
    if A.size == 0:
        return [e for e in np.eye(n)]
    _, s, vh = np.linalg.svd(A, full_matrices=True)
    sv = np.zeros(n)
    sv[: s.size] = s
    smax = sv.max()
    mask = sv <= rank_tol * smax if smax > 0 else np.ones(n, bool)
    return [vh[i].conj() for i in np.nonzero(mask)[0]]


def singular_values(A):
    A = _as_array(A)
    n = A.shape[1]
    sv = np.zeros(n)
    s = np.linalg.svd(A, compute_uv=False)
    sv[: s.size] = s
    return sv


def hankel_recurrence(M, s, rank_tol=1e-13):
    """Monic recurrence polynomial of order ``s`` annihilating ``M``.

    Solves ``sum_t c_t M[k+t] = 0`` (``c_s = 1``) for every ``k`` with
    ``k + s < len(M)``, in the least-squares sense when more than ``2s``
    entries are supplied. Columns are equilibrated before the solve.
    """
    M = _as_array(getattr(M, "values", M))
    if s < 1:
        raise ValueError("recurrence order must be at least 1")
    if M.size < 2 * s:
        raise ValueError(f"need at least {2 * s} entries, got {M.size}")
    nrows = M.size - s
    A = np.array([M[k : k + s] for k in range(nrows)])
    rhs = -M[s : s + nrows]
    colnorm = np.linalg.norm(A, axis=0)
    if np.any(colnorm == 0):
        raise SingularHankel("Hankel matrix has a zero column", order=s)
    As = A / colnorm
    sv = np.linalg.svd(As, compute_uv=False)
    if sv[-1] <= rank_tol * sv[0]:
        raise SingularHankel(
            f"Hankel matrix of order {s} is numerically rank deficient "
            f"(sigma_min/sigma_max = {sv[-1] / sv[0]:.3e})",
            order=s,
            ratio=float(sv[-1] / sv[0]),
        )
    c, *_ = np.linalg.lstsq(As, rhs, rcond=None)
    c = c / colnorm
    return Polynomial(np.append(c, 1.0), trim_tol=0.0)


def confluent_vandermonde(nodes, nrows, confluency=None):
    """Matrix whose columns are ``d^l/dx^l x^k`` evaluated at each node.

    Column order is node-major; within a node the derivative order ``l``
    runs from 0 to ``confluency[j] - 1``.
    """
    nodes = np.asarray(nodes)
    if confluency is None:
        confluency = [1] * len(nodes)
    k = np.arange(nrows)
    cols = []
    for x, mult in zip(nodes, confluency):
        for l in range(mult):
            ff = np.ones(nrows)
            for t in range(l):
                ff = ff * (k - t)
            expo = np.maximum(k - l, 0)
            cols.append(np.where(k >= l, ff * x ** expo, 0.0))
    return np.column_stack(cols) if cols else np.zeros((nrows, 0))


def vandermonde_solve(nodes, rhs, confluency=None, cond_cap=1e12, sep_tol=1e-6):
    """Least-squares solution of the (confluent) Vandermonde system ``V a = rhs``.

    Parameters
    ----------
    nodes : sequence of scalar
        Distinct nodes.
    rhs : vector
        Right-hand side, one entry per power ``k = 0 .. len(rhs)-1``.
    confluency : sequence of int, optional
        Multiplicity per node; a node of multiplicity ``m`` contributes the
        columns ``x^k, k x^(k-1), ..., (k)_(m-1) x^(k-m+1)``.
    cond_cap : float
        Emit :class:`IllConditioned` when the 2-norm condition number
        exceeds this value.

    Returns
    -------
    ndarray
        Coefficients ordered node by node, derivative order within a node.
    """
    nodes = np.asarray(nodes)
    rhs = _as_array(getattr(rhs, "values", rhs))
    if confluency is None:
        confluency = [1] * len(nodes)
    if len(confluency) != len(nodes):
        raise ValueError("one multiplicity per node is required")
    if rhs.size < sum(confluency):
        raise ValueError("fewer equations than unknowns")
    for i in range(len(nodes)):
        for j in range(i):
            if abs(nodes[i] - nodes[j]) < sep_tol:
                raise ValueError(f"nodes {i} and {j} coincide within {sep_tol}")
    V = confluent_vandermonde(nodes, rhs.size, confluency)
    cond = np.linalg.cond(V)
    if cond > cond_cap:
        warnings.warn(f"Vandermonde condition number {cond:.2e} exceeds {cond_cap:.0e}",
                      IllConditioned, stacklevel=2)
    dtype = np.result_type(V, rhs)
    sol, *_ = np.linalg.lstsq(V.astype(dtype), rhs.astype(dtype), rcond=None)
    return sol


def _cluster(values, radius):
    """Single-linkage clusters of complex values; returns a list of index arrays."""
    n = len(values)
    labels = -np.ones(n, dtype=int)
    current = 0
    for seed in range(n):
        if labels[seed] >= 0:
            continue
        labels[seed] = current
        stack = [seed]
        while stack:
            i = stack.pop()
            near = np.nonzero((labels < 0) & (np.abs(values - values[i]) <= radius))[0]
            labels[near] = current
            stack.extend(near.tolist())
        current += 1
    return [np.nonzero(labels == c)[0] for c in range(current)]


def common_roots(polys, mult=1, tol=1e-6, zero_tol=1e-8):
    """Roots shared by every non-zero polynomial, each with multiplicity ``mult``.

    Roots of all non-zero inputs are pooled and clustered by single linkage
    with radius ``tol``. A cluster is a common root when every polynomial
    contributes at least ``mult`` members; its location is the norm-weighted
    average of the per-polynomial cluster means (the mean of a split
    multiple root is accurate to first order). Polynomials whose norm is at
    most ``zero_tol`` times the largest norm count as zero.

    Returns
    -------
    roots : list of complex
    deflated : list of Polynomial
        Each input with ``prod (x - r)^mult`` divided out.
    """
    polys = [_coerce(p) for p in polys]
    norms = np.array([p.norm() for p in polys])
    if not np.any(norms > 0):
        raise ZeroPolynomial("common_roots needs at least one non-zero polynomial")
    active = [i for i, nrm in enumerate(norms) if nrm > zero_tol * norms.max()]
    if any(polys[i].degree < mult for i in active):
        return [], list(polys)
    pooled, owner = [], []
    for i in active:
        r = roots(polys[i])
        pooled.extend(r)
        owner.extend([i] * len(r))
    pooled = np.asarray(pooled)
    owner = np.asarray(owner)
    found = []
    for members in _cluster(pooled, tol):
        counts = {i: np.sum(owner[members] == i) for i in active}
        if min(counts.values()) < mult:
            continue
        means = np.array([pooled[members][owner[members] == i].mean() for i in active])
        w = norms[active]
        found.append(complex(np.sum(w * means) / np.sum(w)))
    found.sort(key=lambda z: (z.real, z.imag))
    return found, deflate(polys, found, mult)


def deflate(polys, rts, mult):
    """Divide ``prod (x - r)^mult`` out of each polynomial, dropping remainders."""
    if not len(rts):
        return [_coerce(p) for p in polys]
    fac = Polynomial.from_roots(np.repeat(np.asarray(rts), mult))
    if np.all(np.abs(np.imag(rts)) == 0):
        fac = Polynomial(np.real(fac.coeffs))
    out = []
    for p in polys:
        p = _coerce(p)
        out.append(p if p.is_zero else divmod(p, fac)[0])
    return out
