"""Deterministic JSON for measurements, solutions and models.

Floats are written with 17 significant digits so that every value round
trips exactly; complex numbers become ``[re, im]`` pairs and non-finite
floats become ``null``. Output depends only on the value, never on timing
or hash order, so repeated runs are byte-identical.
"""

import json
import math

import numpy as np

from .errors import SchemaError
from .moments import PROVENANCES, MomentSequence

SCHEMA_VERSION = 1


def _float(x):
    x = float(x)
    if not math.isfinite(x):
        return "null"
    text = "%.17g" % x
    if "e" not in text and "." not in text and "n" not in text:
        text += ".0"
    return text


def _scalar(v):
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _float(v)
    if isinstance(v, (complex, np.complexfloating)):
        return f"[{_float(v.real)}, {_float(v.imag)}]"
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    return None


def dumps(obj, indent=2):
    """Serialize ``obj``; lists of scalars stay on one line."""

    def enc(v, level):
        s = _scalar(v)
        if s is not None:
            return s
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(v, dict):
            if not v:
                return "{}"
            items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {enc(val, level + 1)}"
                     for k, val in v.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(v, np.ndarray):
            v = v.tolist()
        if isinstance(v, (list, tuple)):
            if not v:
                return "[]"
            parts = [enc(x, level + 1) for x in v]
            if all(_scalar(x) is not None for x in v):
                return "[" + ", ".join(parts) + "]"
            return "[\n" + ",\n".join(pad + p for p in parts) + "\n" + end + "]"
        raise TypeError(f"cannot serialize {type(v).__name__}")

    return enc(obj, 0) + "\n"


def loads(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed JSON: {exc}") from None


def _check_version(obj):
    if not isinstance(obj, dict):
        raise SchemaError("top-level JSON value must be an object")
    version = obj.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r}")


def _complex(v):
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise SchemaError("complex values are [re, im] pairs")
        return complex(float(v[0]), float(v[1]))
    return complex(float(v))


MEASUREMENT_FIELDS = {"schema_version", "kind", "interval", "values", "provenance",
                      "frequencies", "kernel", "domain"}


def measurement_to_json(m, kernel=None):
    """Measurement file contents for a MomentSequence.

    Fourier sequences carry ``meta['frequencies']`` and complex values.
    """
    out = {"schema_version": SCHEMA_VERSION, "kind": m.kind}
    if m.interval is not None:
        out["interval"] = list(m.interval)
    if m.kind == "fourier":
        out["frequencies"] = [int(k) for k in m.meta["frequencies"]]
        out["domain"] = list(m.meta.get("domain", (0.0, 2 * math.pi)))
        out["values"] = [complex(v) for v in m.values]
    else:
        out["values"] = [float(np.real(v)) for v in m.values]
    out["provenance"] = m.provenance
    if kernel is not None:
        out["kernel"] = kernel.to_json()
    return out


def measurement_from_json(obj):
    """``(MomentSequence, kernel JSON or None)`` from a measurement file."""
    _check_version(obj)
    extra = set(obj) - MEASUREMENT_FIELDS
    if extra:
        raise SchemaError(f"unknown measurement fields {sorted(extra)}")
    kind = obj.get("kind")
    if kind not in ("poly", "fourier"):
        raise SchemaError(f"measurement kind must be 'poly' or 'fourier', got {kind!r}")
    prov = obj.get("provenance", "external")
    if prov not in PROVENANCES:
        raise SchemaError(f"unknown provenance {prov!r}")
    try:
        interval = obj.get("interval")
        interval = tuple(float(t) for t in interval) if interval is not None else None
        if kind == "fourier":
            freqs = [int(k) for k in obj["frequencies"]]
            vals = [_complex(v) for v in obj["values"]]
            if len(freqs) != len(vals):
                raise SchemaError("frequencies and values differ in length")
            meta = {"frequencies": freqs,
                    "domain": tuple(float(t) for t in obj.get("domain", (0.0, 2 * math.pi)))}
            m = MomentSequence(np.array(vals, dtype=complex), interval, prov, "fourier", meta)
        else:
            vals = obj["values"]
            if any(isinstance(v, (list, dict)) for v in vals):
                raise SchemaError("poly measurement values must be real numbers")
            m = MomentSequence(np.array(vals, dtype=float), interval, prov, "poly")
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"invalid measurement: {exc}") from None
    if len(m) == 0:
        raise SchemaError("measurement has no values")
    return m, obj.get("kernel")


def fourier_map(m):
    """``{k: mu_k}`` from a Fourier MomentSequence."""
    return {int(k): complex(v) for k, v in zip(m.meta["frequencies"], m.values)}


def prony_to_json(sol, kind="poly", shifts=None, kernel=None):
    out = {"schema_version": SCHEMA_VERSION, "type": "prony", "kind": kind, "r": int(sol.r),
           "nodes": [_jsonable(x) for x in sol.nodes],
           "amplitudes": [[_jsonable(v) for v in a] for a in sol.amplitudes],
           "residual": float(sol.residual)}
    if shifts is not None:
        out["shifts"] = [float(t) for t in shifts]
    if sol.pole_weights is not None:
        out["pole_weights"] = [[_jsonable(v) for v in b] for b in sol.pole_weights]
    if kernel is not None:
        out["kernel"] = kernel.to_json()
    return out


def prony_from_json(obj):
    from .prony import PronySolution

    _check_version(obj)
    try:
        nodes = np.array([_complex(x) for x in obj["nodes"]])
        amps = tuple(np.array([_complex(v) for v in a]) for a in obj["amplitudes"])
        r = int(obj.get("r", 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"invalid prony solution: {exc}") from None
    if np.all(nodes.imag == 0):
        nodes = nodes.real
    amps = tuple(a.real if np.all(a.imag == 0) else a for a in amps)
    return PronySolution(nodes, amps, float(obj.get("residual", 0.0)), r)


def _jsonable(v):
    v = complex(v) if np.iscomplexobj(v) else v
    if isinstance(v, complex) and v.imag == 0:
        return float(v.real)
    return v if isinstance(v, complex) else float(v)


def plain(obj):
    """Recursively convert numpy containers and scalars into JSON-friendly values."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return _jsonable(obj)
    return obj
