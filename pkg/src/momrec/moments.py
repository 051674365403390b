"""The measurement container passed between every stage."""

from dataclasses import dataclass, field

import numpy as np

PROVENANCES = ("analytic", "quadrature", "external", "generalized")


@dataclass(frozen=True, eq=False)
class MomentSequence:
    """Ordered measurements ``m_0 .. m_K`` with provenance metadata.

    ``interval`` is the support ``[a, b]`` for polynomial moments; it is
    ``None`` for derived sequences such as generalized moments.
    """

    values: np.ndarray
    interval: tuple = None
    provenance: str = "external"
    kind: str = "poly"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values)
        if v.dtype.kind not in "fc":
            v = v.astype(float)
        if v.ndim != 1:
            raise ValueError("moment values must be one-dimensional")
        if not np.all(np.isfinite(v)):
            raise ValueError("moment values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.interval is not None:
            a, b = (float(t) for t in self.interval)
            if not a < b:
                raise ValueError(f"interval must satisfy a < b, got [{a}, {b}]")
            object.__setattr__(self, "interval", (a, b))
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def __len__(self):
        return self.values.size

    def __getitem__(self, k):
        return self.values[k]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def K(self):
        return self.values.size - 1

    def scaled(self, factor):
        return MomentSequence(self.values * factor, self.interval, self.provenance,
                              self.kind, dict(self.meta))

    def truncated(self, n):
        return MomentSequence(self.values[:n], self.interval, self.provenance,
                              self.kind, dict(self.meta))


def as_values(m):
    """Plain ndarray view of a MomentSequence or array-like."""
    if isinstance(m, MomentSequence):
        return m.values
    v = np.asarray(m)
    return v if v.dtype.kind in "fc" else v.astype(float)
