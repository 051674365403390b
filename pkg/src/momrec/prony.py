"""Prony-type solvers for generalized moment sequences.

Plain model: ``M_n = sum_j a_j x_j^n``. Derivative model:
``M_n = sum_j sum_l a_jl (n)_l x_j^(n-l)``, where ``(n)_l`` is the falling
factorial; its generating function has poles of order ``r + 1``. Fourier
model: the plain model with nodes ``rho_j = exp(-i x_j)`` on the unit circle.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NodeAtZero, OffCircleNode, SingularHankel
from .moments import as_values
from .polyalg import confluent_vandermonde, hankel_recurrence, roots, singular_values, \
    vandermonde_solve

LOG = logging.getLogger(__name__)

SEP_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class PronySolution:
    """Recovered nodes and per-node amplitude vectors ``a[j][l]``."""

    nodes: np.ndarray
    amplitudes: tuple
    residual: float = 0.0
    r: int = 0
    pole_weights: tuple = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes))
        object.__setattr__(self, "amplitudes", tuple(np.atleast_1d(a) for a in self.amplitudes))
        if len(self.nodes) < 1:
            raise ValueError("a solution needs at least one node")
        if len(self.amplitudes) != len(self.nodes):
            raise ValueError("one amplitude vector per node is required")

    @property
    def s(self):
        return len(self.nodes)

    def moments(self, count):
        """Re-evaluate ``M_0 .. M_(count-1)`` from the model."""
        conf = [len(a) for a in self.amplitudes]
        V = confluent_vandermonde(self.nodes, count, conf)
        return V @ np.concatenate(self.amplitudes)


@dataclass(frozen=True)
class ShiftModel:
    """A solved shift model: kernel, solution and measurement domain."""

    kernel: object
    solution: PronySolution
    domain: str = "moments"

    def __post_init__(self):
        if self.domain == "fourier":
            dev = np.max(np.abs(np.abs(self.solution.nodes) - 1.0))
            if dev > 1e-6:
                raise OffCircleNode(f"Fourier node off the unit circle by {dev:.2e}")

    @property
    def shifts(self):
        nodes = self.solution.nodes
        if self.domain == "fourier":
            return wrap_angle(-np.angle(nodes))
        return np.real(nodes)


def wrap_angle(theta, tol=1e-12):
    """Map angles into ``[0, 2 pi)``; values within ``tol`` of ``2 pi`` become 0."""
    out = np.mod(theta, 2 * math.pi)
    return np.where(out >= 2 * math.pi - tol, 0.0, out)


def _real_if_close(arr, tol=1e-10):
    arr = np.asarray(arr)
    if np.iscomplexobj(arr) and arr.size:
        if np.all(np.abs(arr.imag) <= tol * max(1.0, np.max(np.abs(arr)))):
            return arr.real.copy()
    return arr


def _order_nodes(nodes, amps):
    order = np.lexsort((np.imag(nodes), np.real(nodes)))
    return nodes[order], [amps[i] for i in order]


def _residual(M, nodes, amps):
    conf = [len(a) for a in amps]
    V = confluent_vandermonde(nodes, M.size, conf)
    return float(np.max(np.abs(V @ np.concatenate(amps) - M)))


def solve_prony(M, s, sep_tol=SEP_TOL):
    """Nodes and amplitudes of ``M_n = sum_j a_j x_j^n`` (``n < len(M)``).

    Nodes are the roots of the Hankel recurrence; amplitudes come from the
    overdetermined Vandermonde system on all moments. If two recovered
    nodes coincide within ``sep_tol`` the model order is reduced by one and
    the system re-solved.
    """
    M = as_values(M)
    q = hankel_recurrence(M, s)
    nodes = _real_if_close(roots(q))
    gaps = [abs(nodes[i] - nodes[j]) for i in range(s) for j in range(i)]
    if gaps and min(gaps) < sep_tol:
        if s == 1:
            raise SingularHankel("degenerate single-node system")
        LOG.info("recovered nodes coincide within %.1e; retrying with s=%d", sep_tol, s - 1)
        return solve_prony(M, s - 1, sep_tol)
    a = _real_if_close(vandermonde_solve(nodes, M, sep_tol=sep_tol))
    nodes, amps = _order_nodes(np.asarray(nodes), [np.array([v]) for v in a])
    return PronySolution(nodes, tuple(amps), _residual(M, nodes, amps), 0)


def estimate_order(M, s_max, tol=1e-10):
    """Numerical rank of the Hankel matrix of ``M`` with ``s_max`` columns.

    Columns are equilibrated; singular values below ``tol * sigma_max``
    count as zero.
    """
    M = as_values(M)
    if M.size < 2 * s_max:
        raise ValueError(f"need at least {2 * s_max} entries")
    A = np.array([M[k : k + s_max] for k in range(M.size - s_max + 1)])
    norms = np.linalg.norm(A, axis=0)
    if not np.any(norms):
        return 0
    A = A[:, norms > 0] / norms[norms > 0]
    sv = singular_values(A)
    return int(np.sum(sv > tol * sv[0]))


def _group(rts, size):
    """Split roots into clusters of exactly ``size`` nearest neighbours."""
    left = list(range(len(rts)))
    groups = []
    while left:
        # seed from the root whose size-th neighbour is nearest: tight clusters first
        best = None
        for i in left:
            d = sorted(abs(rts[j] - rts[i]) for j in left)
            spread = d[size - 1]
            if best is None or spread < best[0]:
                best = (spread, i)
        i = best[1]
        near = sorted(left, key=lambda j: abs(rts[j] - rts[i]))[:size]
        groups.append(near)
        left = [j for j in left if j not in near]
    return groups


def pole_weights(node, amps):
    """Partial-fraction weights of one node's generating-function term.

    ``sum_n sum_l a_l (n)_l x^(n-l) z^n = sum_q b_q / (1 - x z)^(q+1)`` with
    ``b_q = sum_{l>=q} l! binom(l,q) (-1)^(q+l) a_l / x^l`` (upper triangular).
    """
    r = len(amps) - 1
    b = np.zeros(r + 1, dtype=np.result_type(node, amps[0], float))
    for q in range(r + 1):
        for l in range(q, r + 1):
            b[q] += math.factorial(l) * math.comb(l, q) * (-1) ** (q + l) * amps[l] / node ** l
    return b


def amplitudes_from_pole_weights(node, b):
    """Invert :func:`pole_weights` by back substitution."""
    r = len(b) - 1
    T = np.zeros((r + 1, r + 1))
    for q in range(r + 1):
        for l in range(q, r + 1):
            T[q, l] = math.factorial(l) * math.comb(l, q) * (-1) ** (q + l)
    T = T.astype(np.result_type(node, float)) / node ** np.arange(r + 1)[None, :]
    return solve_triangular(T, np.asarray(b), lower=False)


def solve_prony_confluent(M, s, r, node_tol=1e-8, sep_tol=SEP_TOL):
    """Nodes and amplitudes ``a_jl`` of the derivative model.

    The order-``s(r+1)`` recurrence has every node as an ``(r+1)``-fold
    root; each numerically split cluster is collapsed to its mean. Amplitudes
    solve the confluent Vandermonde system on all moments, whose columns
    ``(n)_l x^(n-l)`` are exactly the ``a_jl`` coefficients. The
    partial-fraction weights of the rational generating function are
    attached as ``pole_weights``; they require every node to be non-zero.
    """
    if r == 0:
        return solve_prony(M, s, sep_tol)
    M = as_values(M)
    q = hankel_recurrence(M, s * (r + 1))
    rts = roots(q)
    nodes = np.array([np.mean(rts[g]) for g in _group(rts, r + 1)])
    nodes = _real_if_close(nodes)
    small = np.nonzero(np.abs(nodes) < node_tol)[0]
    if small.size:
        raise NodeAtZero(f"node {nodes[small[0]]:.3g} at the origin: pole weights undefined",
                         node=complex(nodes[small[0]]))
    sol = _real_if_close(vandermonde_solve(nodes, M, [r + 1] * s, sep_tol=sep_tol))
    amps = [sol[j * (r + 1) : (j + 1) * (r + 1)] for j in range(s)]
    nodes, amps = _order_nodes(np.asarray(nodes), amps)
    weights = tuple(pole_weights(x, a) for x, a in zip(nodes, amps))
    return PronySolution(nodes, tuple(amps), _residual(M, nodes, amps), r, weights)


def solve_fourier_shifts(M, s, kernel=None, circle_tol=1e-3):
    """Shifts ``x_j`` and amplitudes from ``M_k = sum_j a_j exp(-i k x_j)``."""
    M = np.asarray(as_values(M), dtype=complex)
    sol = solve_prony(M, s)
    nodes = np.asarray(sol.nodes, dtype=complex)
    dev = np.abs(np.abs(nodes) - 1.0)
    if np.any(dev > circle_tol):
        raise OffCircleNode(f"node modulus deviates from 1 by {dev.max():.2e}",
                            deviation=float(dev.max()))
    nodes = nodes / np.abs(nodes)
    a = _real_if_close(vandermonde_solve(nodes, M))
    shifts = wrap_angle(-np.angle(nodes))
    order = np.argsort(shifts)
    nodes = nodes[order]
    amps = [np.array([a[i]]) for i in order]
    solution = PronySolution(nodes, tuple(amps), _residual(M, nodes, amps), 0)
    return ShiftModel(kernel, solution, "fourier")


def generating_series(sol, terms):
    """Taylor coefficients of the rational generating function of ``sol``.

    Plain nodes contribute ``a_j / (1 - x_j z)``; derivative-model nodes
    contribute ``sum_q b_jq / (1 - x_j z)^(q+1)`` with their pole weights.
    """
    n = np.arange(terms)
    out = np.zeros(terms, dtype=np.result_type(sol.nodes, *sol.amplitudes, float))
    for j, x in enumerate(sol.nodes):
        amps = sol.amplitudes[j]
        if len(amps) == 1:
            out = out + amps[0] * x ** n
            continue
        b = sol.pole_weights[j] if sol.pole_weights is not None else pole_weights(x, amps)
        for q, bq in enumerate(b):
            binom = np.array([math.comb(int(t) + q, q) for t in n], dtype=float)
            out = out + bq * binom * x ** n
    return _real_if_close(out)
