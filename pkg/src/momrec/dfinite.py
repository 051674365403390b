"""Piecewise D-finite reconstruction from polynomial moments.

A signal annihilated on each piece by ``D = sum_j p_j(x) d^j/dx^j`` has
moments that satisfy a linear recurrence whose coefficients are linear in
the unknown coefficients of ``p_j``. The pipeline solves that homogeneous
system for the operator (with degrees raised so that it also kills the
jump distributions), reads the jumps off as common roots of the ``p_j``,
integrates the reduced ODE for a fundamental basis and finally fits the
per-piece amplitudes to the moments.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import BarycentricInterpolator
from scipy.optimize import minimize, minimize_scalar

from .errors import EmptyNullspace, InsufficientMoments, JumpCountMismatch, MomrecError, \
    RankDeficientBasis, SchemaError, SingularLeadingCoefficient
from .moments import as_values
from .polyalg import Polynomial, common_roots, deflate, roots, singular_values
from .quadrature import integrate

LOG = logging.getLogger(__name__)

RANK_TOL = 1e-9
# below this relative singular value the structured objective is rounding noise
SIGMA_FLOOR = 1e-12
COL_FLOOR = 1e-13
MAGNITUDE_FLOOR = 1e-6


def _falling(n, j):
    out = 1
    for t in range(j):
        out *= n - t
    return out


@dataclass(frozen=True, eq=False)
class DifferentialOperator:
    """``sum_j p_j(x) d^j/dx^j`` with declared coefficient degrees ``degs[j]``.

    The stacked coefficient vector (``p_0`` ascending, then ``p_1``, ...) is
    kept at unit Euclidean norm.
    """

    coeffs: tuple
    degs: tuple
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        degs = tuple(int(d) for d in self.degs)
        if len(self.coeffs) != len(degs):
            raise ValueError("one coefficient array per derivative order is required")
        cs = []
        for c, d in zip(self.coeffs, degs):
            c = np.real_if_close(np.asarray(c, dtype=complex if np.iscomplexobj(c) else float))
            if c.size > d + 1 and np.any(c[d + 1 :]):
                raise ValueError(f"coefficient of degree {c.size - 1} exceeds declared {d}")
            full = np.zeros(d + 1, dtype=c.dtype)
            full[: min(c.size, d + 1)] = c[: d + 1]
            cs.append(full)
        vec = np.concatenate(cs)
        nrm = np.linalg.norm(vec)
        if nrm == 0:
            raise ValueError("the zero operator is not a valid annihilator")
        if not np.any(cs[-1]):
            raise ValueError("leading coefficient p_N is identically zero")
        object.__setattr__(self, "coeffs", tuple(c / nrm for c in cs))
        object.__setattr__(self, "degs", degs)

    @classmethod
    def from_vector(cls, vec, degs, meta=None):
        vec = np.asarray(vec)
        splits = np.cumsum([d + 1 for d in degs])[:-1]
        return cls(tuple(np.split(vec, splits)), tuple(degs), dict(meta or {}))

    @classmethod
    def from_polys(cls, polys, degs=None):
        """Build from ascending coefficient lists; ``degs`` defaults to their lengths."""
        polys = [np.atleast_1d(np.asarray(p, dtype=float)) for p in polys]
        if degs is None:
            degs = [max(p.size - 1, 0) for p in polys]
        return cls(tuple(polys), tuple(degs))

    @property
    def order(self):
        return len(self.degs) - 1

    @property
    def polys(self):
        return [Polynomial(c) for c in self.coeffs]

    def to_vector(self):
        return np.concatenate(self.coeffs)

    def __call__(self, derivs, x):
        """Apply to ``derivs[j] = u^(j)(x)`` sampled at ``x``."""
        return sum(np.polynomial.polynomial.polyval(x, c) * derivs[j]
                   for j, c in enumerate(self.coeffs))

    def augment(self, jumps, N=None):
        """Multiply every coefficient by ``prod (x - xi)^N``."""
        N = self.order if N is None else N
        if not len(jumps):
            return self
        fac = Polynomial.from_roots(np.repeat(np.asarray(jumps, dtype=float), N))
        extra = fac.degree
        out = [(Polynomial(c) * fac).padded(d + extra + 1) for c, d in zip(self.coeffs, self.degs)]
        return DifferentialOperator(tuple(out), tuple(d + extra for d in self.degs))

    def to_json(self):
        return {"order": self.order, "degs": list(self.degs),
                "coeffs": [[float(v) for v in np.real(c)] for c in self.coeffs]}


def pi_coefficient(i, j, k):
    """``(c, shift)`` such that ``(Pi^(i,j)(k, E) m)_k = c * m_(k+i-j)``.

    ``c = (-1)^j (i+k)_j`` (falling factorial), which is zero whenever the
    shifted index would be negative.
    """
    return (-1) ** j * _falling(i + k, j), i - j


def boundary_operator(a, b, N):
    """Ascending coefficients of ``(E - a)^N (E - b)^N`` in the shift ``E``."""
    if not a < b:
        raise ValueError("boundary operator needs a < b")
    return Polynomial.from_roots([a] * N + [b] * N).padded(2 * N + 1)


def v_entry(m, i, j, k, L):
    """``v^(i,j)_k = sum_t L_t c(i, j, k + t) m_(k+t+i-j)``.

    The boundary operator ``L(E)`` is applied outermost, to the sequence
    ``n -> Pi^(i,j)(n, E) m``; this equals the ``(i+k)``-th moment of
    ``L(x) f^(j)(x)``.
    """
    vals = as_values(m)
    total = 0.0
    for t, lt in enumerate(np.asarray(L)):
        if lt == 0:
            continue
        c, shift = pi_coefficient(i, j, k + t)
        if c == 0:
            continue
        idx = k + t + shift
        if idx >= vals.size:
            raise InsufficientMoments(f"v_entry needs moment m_{idx}, have {vals.size}",
                                      needed=idx + 1, have=vals.size)
        total = total + lt * c * vals[idx]
    return total


def columns(degs):
    """Unknown layout ``(i, j)``: ``j`` major, ``i`` ascending within each ``p_j``."""
    return [(i, j) for j, d in enumerate(degs) for i in range(d + 1)]


def moments_needed(N, degs, rows):
    """Length of ``m`` required for ``rows`` recurrence rows."""
    return rows + 2 * N + max(d - j for j, d in enumerate(degs))


def annihilator_matrix(m, N, degs, a, b, rows, absolute=False):
    """Recurrence matrix ``H[k, (i,j)] = v^(i,j)_k`` for ``k < rows``.

    Each row is one admissible recurrence relation; the null vector holds
    the operator coefficients in :func:`columns` order. With
    ``absolute=True`` the matrix of absolute term sums is returned as well.
    """
    if len(degs) != N + 1:
        raise ValueError(f"order {N} needs {N + 1} degrees, got {len(degs)}")
    cols = columns(degs)
    if rows < len(cols):
        raise ValueError(f"need at least {len(cols)} rows, got {rows}")
    return _recurrence_rows(as_values(m), N, degs, a, b, rows, absolute)


def _recurrence_rows(vals, N, degs, a, b, rows, absolute=False):
    need = moments_needed(N, degs, rows)
    if vals.size < need:
        raise InsufficientMoments(f"{rows} rows need {need} moments, have {vals.size}",
                                  needed=need, have=vals.size)
    L = boundary_operator(a, b, N)
    cols = columns(degs)
    # v^(i,j)_k only depends on i + k
    base = {}
    H = np.zeros((rows, len(cols)), dtype=np.result_type(vals, float))
    Habs = np.zeros((rows, len(cols))) if absolute else None
    for c, (i, j) in enumerate(cols):
        for k in range(rows):
            key = (i + k, j)
            if key not in base:
                base[key] = (v_entry(vals, 0, j, i + k, L),
                             v_entry(np.abs(vals), 0, j, i + k, np.abs(L)) if absolute else 0.0)
            H[k, c] = base[key][0]
            if absolute:
                Habs[k, c] = abs(base[key][1])
    return (H, Habs) if absolute else H


def _column_norms(A, floor=COL_FLOOR):
    """Column norms, floored at ``floor`` times the largest.

    A column made of rounding noise only (for instance an odd term on a
    symmetric interval) must not be blown up to unit size: it belongs to
    the nullspace, and scaling would hide that.
    """
    cn = np.linalg.norm(A, axis=0)
    top = np.max(cn) if cn.size else 0.0
    return np.maximum(cn, floor * top) if top > 0 else np.ones_like(cn)


def _equilibrate(H, magnitude=None, floor=MAGNITUDE_FLOOR):
    """Row- then column-normalize ``H``.

    ``magnitude`` holds the sums of absolute terms behind each entry; a
    column norm is floored at ``floor`` times the matching norm of the
    magnitudes, so a column that cancels to rounding level stays small.
    """
    rn = np.linalg.norm(H, axis=1)
    rn[rn == 0] = 1.0
    A = H / rn[:, None]
    cn = _column_norms(A)
    if magnitude is not None:
        cn = np.maximum(cn, floor * np.linalg.norm(magnitude / rn[:, None], axis=0))
    return A / cn[None, :], cn


def solve_annihilator(H, degs=None, rank_tol=RANK_TOL, magnitude=None):
    """Unit-norm null vector of ``H`` as a :class:`DifferentialOperator`.

    Rows and columns are equilibrated before the SVD (see
    :func:`_equilibrate` for ``magnitude``); singular values below
    ``rank_tol * sigma_max`` count as zero. When the nullspace has more
    than one dimension the smallest-singular-value vector is returned and
    ``meta['nullity']`` and ``meta['basis']`` expose the ambiguity.
    """
    H = np.asarray(H)
    ncol = H.shape[1]
    if degs is None:
        degs = (0, ncol - 1)
    if sum(d + 1 for d in degs) != ncol:
        raise ValueError("degrees do not match the column count")
    if not np.any(H):
        raise EmptyNullspace("recurrence matrix is zero: every operator annihilates the data",
                             nullity=ncol, ambiguous=True)
    A, cn = _equilibrate(H, magnitude)
    _, sv, Vh = np.linalg.svd(A, full_matrices=True)
    full = np.zeros(ncol)
    full[: sv.size] = sv
    rel = full / full[0]
    null = np.nonzero(rel <= rank_tol)[0]
    if null.size == 0:
        raise EmptyNullspace(f"no annihilator at degrees {tuple(degs)}: smallest relative "
                             f"singular value {rel[-1]:.2e}", smallest=float(rel[-1]))
    vecs = []
    for idx in null[::-1]:
        v = np.real_if_close(Vh[idx].conj()) / cn
        vecs.append(v / np.linalg.norm(v))
    meta = {"nullity": int(null.size), "singular_values": rel.tolist(), "basis": vecs}
    for v in vecs:
        try:
            return DifferentialOperator.from_vector(v, degs, meta)
        except ValueError:
            continue
    raise EmptyNullspace("every null vector has a vanishing leading coefficient",
                         nullity=int(null.size))


def extract_jumps(op, N, p, a, b, tol=None, extra_ops=(), zero_tol=1e-6):
    """Jumps as ``p`` common roots of multiplicity ``N`` inside ``(a, b)``.

    The roots of every non-negligible ``p_j`` are pooled (together with
    those of ``extra_ops``, the rest of a multi-dimensional nullspace) and
    clustered with radius ``tol``. Complex roots and roots outside the
    interval are rejected and listed in the returned report.

    Returns
    -------
    jumps : ndarray
    reduced : DifferentialOperator
        ``op`` with ``prod (x - xi)^N`` divided out of each coefficient.
    report : dict
    """
    if p == 0:
        return np.zeros(0), op, {"rejected": []}
    tol = 1e-3 * (b - a) if tol is None else tol
    polys = [q for o in (op, *extra_ops) for q in o.polys]
    found, _ = common_roots(polys, mult=N, tol=tol, zero_tol=zero_tol)
    inside, rejected = [], []
    for r in found:
        if abs(r.imag) <= tol and a < r.real < b:
            inside.append(r.real)
        else:
            rejected.append(r)
    report = {"rejected": rejected, "candidates": found}
    if len(inside) != p:
        raise JumpCountMismatch(f"found {len(inside)} common roots of multiplicity {N} "
                                f"inside ({a}, {b}), expected {p}",
                                found=inside, rejected=[complex(r) for r in rejected])
    jumps = np.sort(np.array(inside))
    report["jump_residuals"] = jump_residuals(op, jumps, N)
    return jumps, _deflate_operator(op, jumps, N), report


def _deflate_operator(op, jumps, N):
    """``op`` with ``prod (x - xi)^N`` divided out of every coefficient."""
    extra = len(jumps) * N
    if not extra:
        return op
    polys = deflate(op.polys, jumps, N)
    return DifferentialOperator(tuple(q.padded(d - extra + 1) for q, d in zip(polys, op.degs)),
                                tuple(d - extra for d in op.degs))


def _lead_margin(vec, degs, x):
    """``min |leading coefficient|`` over ``x`` for a unit-normalized coefficient vector."""
    lead = vec[-(degs[-1] + 1):]
    return float(np.min(np.abs(np.polynomial.polynomial.polyval(x, lead)))) / np.linalg.norm(vec)


def _singular_points(lead, a, b):
    """Real roots of ``lead`` in ``[a, b]`` (the ODE cannot be integrated across them)."""
    if lead.degree < 1:
        return []
    return [r.real for r in roots(lead) if abs(r.imag) <= 1e-9 * (b - a) and a <= r.real <= b]


def _regular_member(ops, a, b, grid=201, angles=72):
    """Combination of ``ops`` whose leading coefficient stays away from zero on ``[a, b]``.

    With a nullspace of dimension above one every combination annihilates the
    data, but some have a leading coefficient that vanishes inside the
    interval, where the fundamental basis cannot be integrated. The first
    operator is kept when it is already regular; otherwise the best pairwise
    combination (scanned over ``angles`` directions) on a ``grid``-point mesh
    wins.
    """
    degs = ops[0].degs
    x = np.linspace(a, b, grid)
    vecs = [o.to_vector() for o in ops]
    if len(vecs) == 1 or not _singular_points(ops[0].polys[-1], a, b):
        return ops[0]
    cands = list(vecs)
    for i in range(len(vecs)):
        for j in range(i + 1, len(vecs)):
            for th in np.pi * np.arange(1, angles) / angles:
                cands.append(np.cos(th) * vecs[i] + np.sin(th) * vecs[j])
    best = max(cands, key=lambda v: _lead_margin(v, degs, x))
    return DifferentialOperator.from_vector(best / np.linalg.norm(best), degs)


def jump_residuals(op, jumps, N):
    """``max_j max_(l<N) |p_j^(l)(xi)| / ||p_j||`` at each jump (zero for exact jumps)."""
    out = []
    for xi in jumps:
        worst = 0.0
        for q in op.polys:
            if q.is_zero:
                continue
            d = q
            for _ in range(N):
                worst = max(worst, abs(d(xi)) / q.norm())
                d = d.deriv()
        out.append(float(worst))
    return out


def _jump_factor(jumps, N):
    """Ascending coefficients of ``prod (x - xi)^N``."""
    k = np.arange(N + 1)
    binom = np.array([math.comb(N, int(i)) for i in k], dtype=float)
    fac = np.ones(1)
    for xi in np.atleast_1d(jumps):
        fac = np.convolve(fac, binom * (-float(xi)) ** (N - k))
    return fac


class _Structured:
    """``Hr @ B(xi)`` for a fixed row-normalized ``Hr``, with normalized columns.

    Column ``i`` of coefficient block ``j`` is a window of ``extra + 1``
    consecutive columns of ``Hr`` contracted with the jump factor, so no
    factor map is built per evaluation. Column norms are taken after the
    equilibration of ``Hr``; scaling ``Hr @ B`` directly would inflate a
    column that is itself a null vector.
    """

    def __init__(self, Hr, base_degs, p, N):
        extra = p * N
        self.N = N
        cn = _column_norms(Hr)
        self.blocks = []
        r0 = 0
        for d in base_degs:
            idx = r0 + np.arange(d + 1)[:, None] + np.arange(extra + 1)[None, :]
            self.blocks.append((Hr[:, idx], cn[idx]))
            r0 += d + extra + 1

    def __call__(self, jumps):
        """``(A, bn)``: the system and the column norms that map its null vector back."""
        fac = _jump_factor(jumps, self.N)
        cols = [Hw @ fac for Hw, _ in self.blocks]
        bn = np.concatenate([np.linalg.norm(cw * fac, axis=1) for _, cw in self.blocks])
        return np.concatenate(cols, axis=1) / bn, bn

    def sigma(self, jumps):
        sv = singular_values(self(jumps)[0])
        return sv[-1] / sv[0]


def _structured_system(Hr, base_degs, jumps, N):
    """Structured matrix and the column scaling that maps its null vector back."""
    return _Structured(Hr, base_degs, len(np.atleast_1d(jumps)), N)(jumps)


GRID = {1: 400, 2: 60, 3: 25}


def refine_jumps(m, N, degs, p, a, b, init=None, rows=None, accept_tol=1e-6, contrast_min=10.0):
    """Jumps that minimize the smallest singular value of the structured system.

    The augmented unknowns are constrained to ``prod (x - xi)^N p_j`` with
    ``p_j`` of the base degrees ``degs``, which leaves only the ``p`` jump
    locations as nonlinear parameters. Candidates come from ``init`` or a
    grid scan and are polished with a bounded scalar or Nelder-Mead search.

    Fewer recurrence rows carry less rounding error but also less
    information, so several row counts are tried (unless ``rows`` is given)
    and the one with the sharpest minimum wins. Sharpness is the contrast
    ``sigma(xi +- 1e-2 (b - a)) / max(sigma(xi), SIGMA_FLOOR)``; a flat
    direction means a spurious jump and the candidate is rejected.

    Returns
    -------
    jumps : ndarray
    reduced : DifferentialOperator
    info : dict
        ``sigma``, ``contrast`` and ``rows`` of the accepted candidate.
    """
    vals = as_values(m)
    degs = tuple(degs)
    nb = sum(d + 1 for d in degs)
    aug = tuple(d + p * N for d in degs)
    avail = vals.size - moments_needed(N, aug, 0)
    if rows is not None:
        options = [rows]
    else:
        options = sorted({r for r in (nb + 2, 2 * nb, 3 * nb, 4 * nb, 6 * nb) if r <= avail})
    if not options or options[0] <= nb:
        raise InsufficientMoments(f"structured refinement needs {nb + 1} recurrence rows",
                                  needed=moments_needed(N, aug, nb + 1), have=vals.size)
    width = b - a
    if init is not None and len(init) == p:
        starts = [np.sort(np.asarray(init, dtype=float))]
    else:
        nunk = sum(d + 1 for d in aug)
        tall = min(avail, 2 * nunk)
        points = candidate_points(_recurrence_rows(vals, N, aug, a, b, tall), aug, N, a, b)
        n = GRID.get(p, 100)
        if p == 1:
            starts = None  # scanned per row count below
        else:
            mid = options[len(options) // 2]
            Hmid = _recurrence_rows(vals, N, aug, a, b, mid)
            obj = _sigma_objective(Hmid, degs, N, a, b, p)
            pool = _starts(points, p, a, b, obj, n, keep=None)
            pool += _prony_starts(vals, N, degs, p, a, b, Hmid, obj)
            starts = _short_polish(obj, pool, width, keep=3)
    best, failure = None, None
    for r in options:
        H = _recurrence_rows(vals, N, aug, a, b, r)
        here = starts
        if here is None:
            here = _starts(points, p, a, b, _sigma_objective(H, degs, N, a, b, 1), GRID[1], keep=8)
        try:
            if not here:
                raise JumpCountMismatch(f"no candidate locations for {p} jumps")
            cand = _refine_at(H, degs, N, p, a, b, here, accept_tol, contrast_min)
        except JumpCountMismatch as exc:
            failure = exc
            continue
        LOG.debug("refinement rows=%d sigma=%.2e contrast=%.2e", r, cand["sigma"], cand["contrast"])
        if best is None or cand["contrast"] > best["contrast"]:
            best = dict(cand, rows=r)
    if best is None:
        raise failure
    reduced = DifferentialOperator.from_vector(best.pop("vector"), degs)
    jumps = best.pop("jumps")
    return jumps, reduced, best


def _sigma_objective(H, degs, N, a, b, p):
    """Squared relative smallest singular value of the structured system at given jumps."""
    rn = np.linalg.norm(H, axis=1)
    rn[rn == 0] = 1.0
    system = _Structured(H / rn[:, None], degs, p, N)

    def obj(x):
        x = np.sort(np.atleast_1d(x))
        if np.any(x <= a) or np.any(x >= b):
            return 1.0
        return system.sigma(x) ** 2

    return obj


def _short_polish(obj, starts, width, keep, budget=40, limit=150, rel_step=1e-4):
    """Rank start tuples by ``obj`` after a brief Nelder-Mead from each.

    Rough jump estimates sit on the rim of a narrow basin, where they look no
    better than spurious combinations; a few local steps separate the two.
    """
    starts = sorted(starts, key=obj)[:limit]
    out = []
    for x in starts:
        step = rel_step * width
        simplex = [x] + [x + step * e for e in np.eye(x.size)]
        res = minimize(obj, x, method="Nelder-Mead",
                       options={"initial_simplex": simplex, "maxfev": budget * x.size,
                                "xatol": 1e-13 * width, "fatol": 1e-32})
        out.append((res.fun, np.sort(res.x)))
    out.sort(key=lambda t: t[0])
    return [x for _, x in out[:keep]]


def _refine_at(H, degs, N, p, a, b, starts, accept_tol, contrast_min):
    width = b - a
    obj = _sigma_objective(H, degs, N, a, b, p)
    rn = np.linalg.norm(H, axis=1)
    Hr = H / np.where(rn == 0, 1.0, rn)[:, None]
    h = width / GRID.get(p, 100)
    jumps, fbest = None, np.inf
    for start in starts:
        if p == 1:
            # nested brackets: narrow basins sit inside a flat, noisy background
            best = None
            for half in (2 * h, 0.2 * h, 0.02 * h):
                lo, hi = max(a, start[0] - half), min(b, start[0] + half)
                res = minimize_scalar(obj, bounds=(lo, hi), method="bounded",
                                      options={"xatol": 1e-14 * max(1.0, abs(start[0]))})
                if best is None or res.fun < best.fun:
                    best = res
            x = _brent_polish(obj, float(best.x), h)
        else:
            # starts arrive polished; a wide simplex would step out of the basin
            simplex = [start] + [start + 1e-5 * width * e for e in np.eye(p)]
            res = minimize(obj, start, method="Nelder-Mead",
                           options={"initial_simplex": simplex, "xatol": 1e-13 * width,
                                    "fatol": 1e-32, "maxfev": 100 * p})
            x = np.sort(res.x)
        # the unpolished start competes too: exact inputs can beat the optimizer
        for cand in (x, start):
            fx = obj(cand)
            if fx < fbest:
                jumps, fbest = np.array(cand, dtype=float), fx
    sigma = math.sqrt(obj(jumps))
    if sigma > accept_tol:
        raise JumpCountMismatch(f"no structured annihilator with {p} jumps: smallest relative "
                                f"singular value {sigma:.2e}", sigma=sigma)
    probe = 1e-2 * width
    contrast = np.inf
    for k in range(p):
        for step in (-probe, probe):
            x = jumps.copy()
            x[k] += step
            contrast = min(contrast, math.sqrt(obj(x)) / max(sigma, SIGMA_FLOOR))
    if contrast < contrast_min:
        raise JumpCountMismatch(f"jump locations {jumps} are not identifiable "
                                f"(contrast {contrast:.1f})", contrast=float(contrast))
    A, bn = _structured_system(Hr, degs, jumps, N)
    _, _, Vh = np.linalg.svd(A)
    v = np.real_if_close(Vh[-1]) / bn
    return {"jumps": jumps, "sigma": sigma, "contrast": float(contrast),
            "vector": v / np.linalg.norm(v)}


def _brent_polish(obj, x0, h):
    """Tighten a bounded-search result; Brent's bounded variant stops near sqrt(eps)."""
    f0 = obj(x0)
    for step in (1e-6 * h, 1e-4 * h, 1e-2 * h):
        lo, hi = x0 - step, x0 + step
        if obj(lo) > f0 and obj(hi) > f0:
            try:
                res = minimize_scalar(obj, bracket=(lo, x0, hi), method="brent", tol=1e-15)
            except ValueError:
                break
            return np.array([float(res.x)]) if res.fun <= f0 else np.array([x0])
    return np.array([x0])


def candidate_points(H, aug, N, a, b):
    """Rough jump locations from the unstructured system ``H`` (augmented degrees).

    Real roots of the coefficients of the two smallest right singular
    vectors cluster near the jumps even when no exact null vector exists;
    a split ``N``-fold root is represented by the mean of its ``N``
    members, which is first-order accurate.
    """
    width = b - a
    A, cn = _equilibrate(np.asarray(H))
    _, _, Vh = np.linalg.svd(A)
    cands = []
    for vec in Vh[-2:]:
        v = np.real(vec) / cn
        for c in np.split(v, np.cumsum([d + 1 for d in aug])[:-1]):
            q = Polynomial(c)
            if q.degree < 1:
                continue
            rts = roots(q)
            for r in rts:
                if abs(r.imag) <= 0.05 * width and a < r.real < b:
                    cands.append(r.real)
            if N > 1 and rts.size >= N:
                for r in rts:
                    near = rts[np.argsort(np.abs(rts - r))[:N]]
                    mu = near.mean()
                    if np.max(np.abs(near - mu)) <= 0.1 * width and abs(mu.imag) <= 1e-3 * width \
                            and a < mu.real < b:
                        cands.append(mu.real)
    merged = []
    for c in np.sort(np.array(cands)):
        if not merged or c - merged[-1][-1] > 1e-3 * width:
            merged.append([c])
        else:
            merged[-1].append(c)
    return [float(np.mean(g)) for g in merged]


def _starts(points, p, a, b, obj, n, keep=8):
    """Starting jump tuples: candidate-point combinations, plus grid minima for ``p = 1``."""
    width = b - a
    tuples = [np.array(t) for t in _increasing_tuples(np.array(points), p)] \
        if math.comb(len(points), p) <= 2000 else []
    if p == 1:
        pts = a + width * (np.arange(n) + 0.5) / n
        vals = np.array([obj(x) for x in pts])
        loc = [i for i in range(n) if (i == 0 or vals[i] <= vals[i - 1])
               and (i == n - 1 or vals[i] <= vals[i + 1])]
        tuples += [np.array([pts[i]]) for i in loc]
    elif p in GRID and not tuples:
        pts = a + width * (np.arange(n) + 0.5) / n
        tuples = [np.array(t) for t in _increasing_tuples(pts, p)]
    tuples.sort(key=obj)
    return tuples if keep is None else tuples[:keep]


def _prony_starts(vals, N, degs, p, a, b, H, obj, iters=8):
    """Jump tuples from alternating between base coefficients and a Prony fit.

    For base coefficients ``c`` the sequence ``w = W c`` (``W`` the recurrence
    rows of the base degrees) satisfies the recurrence whose characteristic
    polynomial is ``prod (x - xi)^N``. Its roots, clustered in groups of
    ``N``, give jump estimates; the structured null vector at those jumps
    gives the next ``c``. Starts are the unit vectors and the right singular
    vectors of ``W``.
    """
    K = p * N
    nb = sum(d + 1 for d in degs)
    W = _recurrence_rows(vals, N, degs, a, b, H.shape[0] + K)
    rn = np.linalg.norm(H, axis=1)
    system = _Structured(H / np.where(rn == 0, 1.0, rn)[:, None], degs, p, N)
    cn = _column_norms(W)
    _, _, Vh = np.linalg.svd(W / cn)
    inits = list(np.eye(nb)) + [v / cn for v in Vh[::-1]]
    out = []
    for c in inits:
        for _ in range(iters):
            w = W @ c
            A = np.array([w[k : k + K + 1] for k in range(w.size - K)])
            s = np.linalg.norm(A, axis=0)
            s[s == 0] = 1.0
            q = np.linalg.svd(A / s)[2][-1] / s
            if not np.any(q[1:]):
                break
            rts = roots(Polynomial(q))
            if rts.size < K:
                break
            means = np.array([np.mean(rts[g]) for g in _group(rts, N)])
            keep = (np.abs(means.imag) <= 0.05 * (b - a)) & (means.real > a) & (means.real < b)
            if np.count_nonzero(keep) < p:
                break
            combos = [np.array(t) for t in _increasing_tuples(np.sort(means[keep].real), p)]
            x = min(combos, key=obj)
            out.append(x)
            A, bn = system(x)
            c = np.linalg.svd(A)[2][-1] / bn
    return out


def _group(rts, size):
    """Split roots into clusters of ``size`` nearest neighbours, tightest first."""
    left = list(range(len(rts)))
    groups = []
    while len(left) >= size:
        spread, i = min((sorted(abs(rts[j] - rts[i]) for j in left)[size - 1], i) for i in left)
        near = sorted(left, key=lambda j: abs(rts[j] - rts[i]))[:size]
        groups.append(near)
        left = [j for j in left if j not in near]
    return groups


def _increasing_tuples(pts, p):
    if p == 1:
        for x in pts:
            yield (x,)
        return
    for i, x in enumerate(pts):
        for rest in _increasing_tuples(pts[i + 1 :], p - 1):
            yield (x, *rest)


@dataclass(frozen=True, eq=False)
class FundamentalBasis:
    """``N`` solutions of the reduced ODE, one interpolant per continuity interval."""

    edges: tuple
    nodes: tuple
    values: tuple  # values[n] has shape (N, n_nodes)
    order: int
    rtol: float = 1e-13

    def __post_init__(self):
        # closed-form weights: scipy would otherwise draw a random node permutation
        interps = tuple(tuple(BarycentricInterpolator(x, v, wi=_cheb_weights(x.size)) for v in vals)
                        for x, vals in zip(self.nodes, self.values))
        object.__setattr__(self, "_interps", interps)

    @property
    def jumps(self):
        return self.edges[1:-1]

    def piece(self, n, x):
        """All basis functions on interval ``n`` at ``x``: shape ``(N, len(x))``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.array([f(x) for f in self._interps[n]])

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.clip(np.searchsorted(self.jumps, x, side="right"), 0, len(self.nodes) - 1)
        out = np.zeros((self.order, x.size))
        for n in range(len(self.nodes)):
            sel = idx == n
            if np.any(sel):
                out[:, sel] = self.piece(n, x[sel])
        return out


def _cheb_nodes(lo, hi, n):
    """Chebyshev points of the first kind on ``[lo, hi]``, ascending."""
    t = np.cos((2 * np.arange(n) + 1) * np.pi / (2 * n))[::-1]
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * t


def _cheb_weights(n):
    """Barycentric weights matching :func:`_cheb_nodes` (ascending order)."""
    j = np.arange(n)
    return ((-1.0) ** j * np.sin((2 * j + 1) * np.pi / (2 * n)))[::-1]


def fundamental_basis(op, interval, n_nodes=48, jumps=(), rtol=1e-13, atol=None):
    """Integrate ``op u = 0`` from the identity Wronskian at the midpoint.

    The order-``N`` equation is divided by ``p_N`` and written as a
    first-order system for the ``N x N`` Wronskian matrix, integrated in
    both directions with an explicit Runge-Kutta method (DOP853). The
    solutions are sampled on Chebyshev nodes of every continuity interval
    ``(xi_n, xi_(n+1))`` and carried as barycentric interpolants.
    """
    a, b = (float(t) for t in interval)
    N = op.order
    polys = op.polys
    lead = polys[N]
    for r in _singular_points(lead, a, b)[:1]:
        raise SingularLeadingCoefficient(
            f"leading coefficient vanishes at x={r:.6g} inside [{a}, {b}]; "
            f"integration would stop there", truncated_at=float(r))
    edges = (a, *[float(t) for t in jumps], b)
    nodes = [_cheb_nodes(lo, hi, n_nodes) for lo, hi in zip(edges[:-1], edges[1:])]
    scale = max(abs(lead(t)) for t in np.linspace(a, b, 33))
    for x in nodes:
        if np.min(np.abs(lead(x))) < 1e-12 * scale:
            raise SingularLeadingCoefficient("leading coefficient vanishes on the node grid")
    coef = [q.coeffs if not q.is_zero else np.zeros(1) for q in polys]

    def rhs(x, y):
        Y = y.reshape(N, N)
        pv = np.array([np.polynomial.polynomial.polyval(x, c) for c in coef])
        top = -(pv[:N] @ Y) / pv[N]
        return np.vstack([Y[1:], top[None, :]]).ravel()

    mid = 0.5 * (a + b)
    allx = np.concatenate(nodes)
    out = np.zeros((N, allx.size))
    y0 = np.eye(N).ravel()
    for sel, end in ((allx > mid, b), (allx < mid, a)):
        if not np.any(sel):
            continue
        order = np.argsort(allx[sel])
        if end < mid:
            order = order[::-1]
        xs = allx[sel][order]
        sol = solve_ivp(rhs, (mid, end), y0, method="DOP853", t_eval=xs, rtol=rtol,
                        atol=rtol * 1e-2 if atol is None else atol)
        if not sol.success:
            raise SingularLeadingCoefficient(f"ODE integration failed: {sol.message}")
        # row 0 of the Wronskian holds the solution values
        vals = sol.y.reshape(N, N, -1)[0]
        idx = np.nonzero(sel)[0][order]
        out[:, idx] = vals
    out[:, allx == mid] = 1.0 * (np.arange(N) == 0)[:, None]
    splits = np.cumsum([x.size for x in nodes])[:-1]
    values = tuple(np.split(out, splits, axis=1))
    return FundamentalBasis(edges, tuple(nodes), values, N, rtol)


def basis_moment_matrix(basis, jumps=None, k_max=0, tol=1e-12, absolute=False):
    """``C[k, n*N + i] = int_(xi_n)^(xi_(n+1)) x^k u_i(x) dx`` for ``k <= k_max``.

    With ``absolute=True`` also return ``int |x^k u_i(x)| dx``, the magnitude
    against which the rounding error of each entry is measured. Those
    integrands have kinks, and a loose tolerance is enough for a scale.
    """
    if jumps is not None and tuple(float(t) for t in jumps) != tuple(basis.jumps):
        raise ValueError("jumps do not match the basis continuity intervals")
    N = basis.order
    powers = np.arange(k_max + 1)
    cols, abscols = [], []
    for n, (lo, hi) in enumerate(zip(basis.edges[:-1], basis.edges[1:])):

        def g(x, n=n):
            u = basis.piece(n, x)  # (N, len(x))
            xp = x[:, None] ** powers[None, :]
            return (xp[:, :, None] * u.T[:, None, :]).reshape(x.size, -1)

        cols.append(np.asarray(integrate(g, lo, hi, tol=tol)).reshape(k_max + 1, N))
        if absolute:
            vals = integrate(lambda x, g=g: np.abs(g(x)), lo, hi, tol=1e-3)
            abscols.append(np.asarray(vals).reshape(k_max + 1, N))
    if absolute:
        return np.hstack(cols), np.hstack(abscols)
    return np.hstack(cols)


def solve_amplitudes(C, m, rank_tol=1e-13, row_scale=None, row_floor=1e-12):
    """Least-squares amplitudes ``alpha`` with ``C alpha ~ m``.

    Rows are scaled by their norm and columns equilibrated before solving.
    ``row_scale[k]`` (typically the norm of the absolute moments
    ``int |x^k u_i|``) bounds the scaling from below by ``row_floor`` times
    its value, so rows that vanish by cancellation are not inflated.

    Returns
    -------
    alpha : ndarray
    residual : float
        ``max |C alpha - m| / max |m|``.
    """
    C = np.asarray(C)
    vals = as_values(m)[: C.shape[0]]
    if vals.size < C.shape[0]:
        raise InsufficientMoments(f"need {C.shape[0]} moments, have {vals.size}")
    if C.shape[0] < C.shape[1]:
        raise ValueError("amplitude system needs at least as many rows as columns")
    rn = np.maximum(np.linalg.norm(C, axis=1), np.abs(vals))
    if row_scale is not None:
        rn = np.maximum(rn, row_floor * np.asarray(row_scale)[: C.shape[0]])
    rn[rn == 0] = 1.0
    A = C / rn[:, None]
    cn = np.linalg.norm(A, axis=0)
    if np.any(cn == 0):
        raise RankDeficientBasis("a basis function has vanishing moments")
    A = A / cn
    sv = singular_values(A)
    if sv[-1] <= rank_tol * sv[0]:
        raise RankDeficientBasis(f"basis moment matrix is rank deficient "
                                 f"(relative singular value {sv[-1] / sv[0]:.2e})")
    y, *_ = np.linalg.lstsq(A, vals / rn, rcond=None)
    alpha = y / cn
    scale = np.max(np.abs(vals))
    resid = np.max(np.abs(C @ alpha - vals)) / scale if scale else float(np.max(np.abs(C @ alpha)))
    return alpha, float(resid)


@dataclass(frozen=True, eq=False)
class PiecewiseDFiniteModel:
    """``f(x) = sum_i alpha[n, i] u_i(x)`` on the ``n``-th continuity interval."""

    interval: tuple
    jumps: np.ndarray
    operator: DifferentialOperator
    basis: FundamentalBasis
    alpha: np.ndarray  # shape (p + 1, N)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        a, b = self.interval
        j = np.asarray(self.jumps, dtype=float)
        if j.size and (j[0] <= a or j[-1] >= b or np.any(np.diff(j) <= 0)):
            raise ValueError("jumps must be strictly increasing inside (a, b)")
        object.__setattr__(self, "jumps", j)
        object.__setattr__(self, "alpha", np.asarray(self.alpha).reshape(j.size + 1, -1))

    @property
    def p(self):
        return self.jumps.size

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.clip(np.searchsorted(self.jumps, x, side="right"), 0, self.p)
        out = np.zeros(x.size)
        for n in range(self.p + 1):
            sel = idx == n
            if np.any(sel):
                out[sel] = self.alpha[n] @ self.basis.piece(n, x[sel])
        a, b = self.interval
        return np.where((x >= a) & (x <= b), out, 0.0)

    def augmented_operator(self):
        return self.operator.augment(self.jumps, self.operator.order)

    def moments(self, kmax):
        C = basis_moment_matrix(self.basis, None, kmax)
        return C @ self.alpha.ravel()

    def to_json(self):
        return {"schema_version": 1, "type": "dfinite", "interval": list(self.interval),
                "jumps": [float(t) for t in self.jumps], "operator": self.operator.to_json(),
                "alpha": [[float(v) for v in row] for row in self.alpha],
                "basis": {"n_nodes": int(self.basis.nodes[0].size), "ode_rtol": self.basis.rtol}}

    @classmethod
    def from_json(cls, obj):
        """Rebuild a model (re-integrating its basis) from :meth:`to_json` output."""
        try:
            op = obj["operator"]
            operator = DifferentialOperator(tuple(np.asarray(c, dtype=float) for c in op["coeffs"]),
                                            tuple(op["degs"]))
            interval = tuple(float(t) for t in obj["interval"])
            jumps = np.asarray(obj["jumps"], dtype=float)
            settings = obj.get("basis", {})
            alpha = np.asarray(obj["alpha"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"invalid dfinite model: {exc}") from None
        basis = fundamental_basis(operator, interval, int(settings.get("n_nodes", 48)), jumps,
                                  float(settings.get("ode_rtol", 1e-13)))
        return cls(interval, jumps, operator, basis, alpha)


def _stage(name, func, *args, **kwargs):
    try:
        return func(*args, **kwargs)
    except MomrecError as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
        raise


def reconstruct(m, N, degs, p, a=None, b=None, rows=None, rank_tol=RANK_TOL, jump_tol=None,
                refine="always", n_nodes=48, ode_rtol=1e-13):
    """Recover a piecewise D-finite signal from its moments on ``[a, b]``.

    Parameters
    ----------
    m : MomentSequence or array_like
    N : int
        Operator order.
    degs : sequence of int
        Degrees of ``p_0 .. p_N`` for the operator annihilating each piece.
    p : int
        Number of jumps.
    rows : int, optional
        Recurrence rows. By default starts at twice the unknown count and
        grows by 1.5 until the nullspace dimension is stable.
    refine : {"off", "fallback", "always"}
        Structured jump refinement (:func:`refine_jumps`): never, only when
        the linear jump extraction fails, or always, polishing the linear
        estimate and keeping it if the refinement is rejected.

    Raises
    ------
    MomrecError
        Any stage failure; ``exc.stage`` names the stage.
    """
    if refine not in ("off", "fallback", "always"):
        raise ValueError(f"unknown refine mode {refine!r}")
    if a is None or b is None:
        if getattr(m, "interval", None) is None:
            raise ValueError("interval [a, b] is required")
        a, b = m.interval
    a, b = float(a), float(b)
    degs = tuple(int(d) for d in degs)
    if len(degs) != N + 1:
        raise ValueError(f"order {N} needs {N + 1} degrees")
    vals = as_values(m)
    aug = tuple(d + p * N for d in degs)
    nunk = sum(d + 1 for d in aug)
    avail = vals.size - moments_needed(N, aug, 0)
    if avail < nunk:
        raise _tag(InsufficientMoments(
            f"{nunk} unknowns need at least {moments_needed(N, aug, nunk)} moments, "
            f"have {vals.size}", needed=moments_needed(N, aug, nunk), have=vals.size),
            "annihilator_matrix")
    diag = {"augmented_degs": list(aug), "unknowns": nunk}

    if rows is None:
        size = min(2 * nunk, avail)
        history = []
        while True:
            H, Habs = _stage("annihilator_matrix", annihilator_matrix, vals, N, aug, a, b, size,
                             absolute=True)
            try:
                dim = solve_annihilator(H, aug, rank_tol, Habs).meta["nullity"]
            except EmptyNullspace:
                dim = 0
            history.append((size, dim))
            if len(history) >= 2 and history[-1][1] == history[-2][1] or size >= avail:
                break
            size = min(int(math.ceil(1.5 * size)), avail)
        diag["row_history"] = history
        rows = size
    else:
        H, Habs = _stage("annihilator_matrix", annihilator_matrix, vals, N, aug, a, b, rows,
                         absolute=True)
    diag["rows"] = rows

    jumps = reduced = None
    extra = []
    linear_error = None
    try:
        op = _stage("solve_annihilator", solve_annihilator, H, aug, rank_tol, Habs)
        diag["nullity"] = op.meta["nullity"]
        diag["singular_values"] = op.meta["singular_values"][-min(4, nunk):]
        extra = [DifferentialOperator.from_vector(v, aug) for v in op.meta["basis"][1:]
                 if np.any(v[-(aug[-1] + 1):])]
        if jump_tol is None:
            # an N-fold root perturbed by sigma splits by about sigma^(1/N)
            sig = max(op.meta["singular_values"][-1], 1e-16)
            jump_tol = (b - a) * min(0.05, max(1e-3, 10 * sig ** (1.0 / N)))
        diag["jump_tol"] = jump_tol
        jumps, reduced, rep = _stage("extract_jumps", extract_jumps, op, N, p, a, b,
                                     jump_tol, extra)
        diag["linear_jumps"] = jumps.tolist()
        diag["jump_residuals"] = rep.get("jump_residuals", [])
        diag["rejected_roots"] = [[float(r.real), float(r.imag)] for r in rep["rejected"]]
    except (EmptyNullspace, JumpCountMismatch) as exc:
        if refine == "off" or p == 0:
            raise
        linear_error = exc
        LOG.info("linear jump extraction failed (%s); trying structured refinement", exc)
    if p > 0 and (linear_error is not None or refine == "always"):
        try:
            rj, rr, info = refine_jumps(vals, N, degs, p, a, b, init=jumps)
        except MomrecError as exc:
            if linear_error is not None:
                raise _tag(linear_error, "extract_jumps")
            LOG.info("structured refinement failed (%s); keeping linear jumps", exc)
            diag["refine_error"] = str(exc)
        else:
            jumps, reduced = rj, rr
            diag["refined"] = True
            diag["refine"] = info
    diag["stage_path"] = "refined" if diag.get("refined") else "linear"
    if extra:
        # the nullspace is ambiguous; any member annihilates, so pick a regular one
        others = [_deflate_operator(o, jumps, N) for o in extra]
        reduced = _regular_member([reduced, *others], a, b)

    basis = _stage("fundamental_basis", fundamental_basis, reduced, (a, b), n_nodes,
                   jumps, ode_rtol)
    C, Cabs = _stage("basis_moment_matrix", basis_moment_matrix, basis, jumps, vals.size - 1,
                     absolute=True)
    alpha, resid = _stage("solve_amplitudes", solve_amplitudes, C, vals,
                          row_scale=np.linalg.norm(Cabs, axis=1))
    diag["moment_residual"] = resid
    model = PiecewiseDFiniteModel((a, b), jumps, reduced, basis, alpha.reshape(p + 1, N), diag)
    try:
        diag["recurrence_residual"] = recurrence_residual(vals, model.augmented_operator(), a, b)
    except InsufficientMoments:
        diag["recurrence_residual"] = None
    return model


def _tag(exc, stage):
    if not hasattr(exc, "stage"):
        exc.stage = stage
    return exc


def recurrence_residual(m, op, a, b):
    """``max_k |sum a_ij v^(i,j)_k| / max |m|`` over every admissible row.

    Returns ``nan`` for an all-zero moment sequence.
    """
    vals = as_values(m)
    N = op.order
    rows = vals.size - moments_needed(N, op.degs, 0)
    if rows < 1:
        raise InsufficientMoments(f"no admissible recurrence row with {vals.size} moments",
                                  needed=moments_needed(N, op.degs, 1), have=vals.size)
    scale = np.max(np.abs(vals))
    if scale == 0:
        return float("nan")
    H = _recurrence_rows(vals, N, op.degs, a, b, rows)
    return float(np.max(np.abs(H @ op.to_vector())) / scale)


def pade_hermite_residual(op, m, T=30, a=None, b=None):
    """Check the polynomial dependence of ``h_j(z) = sum_k v^(0,j)_k z^k``.

    Forms ``sum_j h_j(z) z^D p_j(1/z)`` truncated at degree ``T`` (with
    ``D = max d_j``); every coefficient of ``z^n`` for ``D <= n <= T`` equals
    a recurrence row and must vanish.

    Returns
    -------
    residual : float
        Largest such coefficient divided by ``max |m|`` (``nan`` for zero
        moments).
    Q : ndarray
        The low-order coefficients (degree below ``D``).
    """
    if a is None or b is None:
        a, b = m.interval
    vals = as_values(m)
    N = op.order
    L = boundary_operator(a, b, N)
    D = max(op.degs)
    need = T + 1 + 2 * N
    if vals.size < need:
        raise InsufficientMoments(f"truncation {T} needs {need} moments, have {vals.size}",
                                  needed=need, have=vals.size)
    series = np.zeros(T + 1, dtype=np.result_type(vals, float))
    for j, c in enumerate(op.coeffs):
        h = np.array([v_entry(vals, 0, j, k, L) for k in range(T + 1)])
        rev = np.zeros(D + 1)
        rev[D - np.arange(c.size)] = np.real(c)
        series += np.convolve(h, rev)[: T + 1]
    scale = np.max(np.abs(vals))
    if scale == 0:
        return float("nan"), series[:D]
    return float(np.max(np.abs(series[D:])) / scale), series[:D]
