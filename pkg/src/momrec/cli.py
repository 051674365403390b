"""Batch command-line front end.

Subcommands ``synth``, ``moments``, ``prony``, ``dfinite`` and ``verify``
read and write UTF-8 JSON files; ``run`` executes job files, optionally in
parallel. Exit codes: 0 success, 1 I/O, 2 schema, 3 quadrature, 4 solver.
"""

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import convdual, dfinite, prony, signals
from .errors import MomrecError, SchemaError
from .moments import MomentSequence, as_values
from .serialize import SCHEMA_VERSION, dumps, fourier_map, loads, measurement_from_json, \
    measurement_to_json, plain, prony_from_json, prony_to_json

LOG = logging.getLogger("momrec")

EXIT_OK, EXIT_IO, EXIT_SCHEMA, EXIT_QUADRATURE, EXIT_SOLVER = 0, 1, 2, 3, 4


class UsageError(SchemaError):
    pass


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def _write(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _kernel(arg, fallback=None):
    if arg is None:
        return convdual.kernel_from_json(fallback) if fallback is not None else convdual.dirac()
    text = arg.strip()
    return convdual.kernel_from_json(loads(text) if text.startswith("{") else text)


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


# commands ------------------------------------------------------------------

def cmd_synth(args):
    if args.random:
        rng = np.random.default_rng(args.seed)
        if args.random == "shift":
            spec = signals.random_shift_spec(rng, s=args.s, kernel=_kernel(args.kernel))
        else:
            spec = signals.random_step_spec(rng, p=args.jumps if args.jumps is not None else 1)
    else:
        if args.spec is None:
            raise UsageError("synth needs a spec file or --random")
        obj = _read_json(args.spec)
        if obj.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise SchemaError(f"unsupported schema_version {obj.get('schema_version')!r}")
        extra = set(obj) - {"schema_version", "type", "interval", "breakpoints", "pieces",
                            "kernel", "shifts", "amplitudes"}
        if extra:
            raise SchemaError(f"unknown signal fields {sorted(extra)}")
        spec = signals.spec_from_json(obj)
    return signals.spec_to_json(spec)


def cmd_moments(args):
    spec = signals.spec_from_json(_read_json(args.signal))
    kernel = spec.kernel if isinstance(spec, signals.ShiftSpec) else None
    if args.kind == "fourier":
        domain = tuple(args.domain) if args.domain else (0.0, 2 * math.pi)
        mu = signals.fourier_coefficients(spec, args.kmax, domain, tol=args.tol)
        ks = sorted(mu)
        m = MomentSequence(np.array([mu[k] for k in ks]), None, "quadrature", "fourier",
                           {"frequencies": ks, "domain": domain})
        return measurement_to_json(m, kernel)
    method = args.method
    if method == "auto":
        if isinstance(spec, signals.ShiftSpec):
            method = "analytic"
        elif all(isinstance(p, signals.PolynomialPiece) for p in spec.pieces):
            method = "analytic"
        else:
            method = "quadrature"
    if method == "analytic":
        if isinstance(spec, signals.ShiftSpec):
            m = signals.shift_model_moments(spec, args.kmax)
        else:
            m = signals.pp_moments(spec, args.kmax)
    else:
        m = signals.quad_moments(spec, args.kmax, tol=args.tol)
    return measurement_to_json(m, kernel)


def cmd_prony(args):
    m, kernel_json = measurement_from_json(_read_json(args.measurements))
    kernel = _kernel(args.kernel, kernel_json)
    if m.kind == "fourier":
        mu = fourier_map(m)
        K = max(k for k in mu if k >= 0)
        M = convdual.fourier_generalized_moments(mu, kernel, K)
        s = _order(M, args.s)
        model = prony.solve_fourier_shifts(M, s, kernel)
        return prony_to_json(model.solution, "fourier", model.shifts, kernel)
    C = convdual.dual_coefficients(kernel, m.K)
    M = convdual.generalized_poly_moments(m, C)
    s = _order(M, args.s, args.r)
    sol = prony.solve_prony_confluent(M, s, args.r)
    return prony_to_json(sol, "poly", None, kernel)


def _order(M, s, r=0):
    if s != "auto":
        return int(s)
    s_max = len(M) // (2 * (r + 1))
    rank = prony.estimate_order(M, s_max * (r + 1))
    LOG.info("estimated Hankel rank %d", rank)
    return max(1, rank // (r + 1))


def cmd_dfinite(args):
    m, _ = measurement_from_json(_read_json(args.measurements))
    if m.kind != "poly":
        raise SchemaError("dfinite needs polynomial moments")
    a, b = args.interval if args.interval else (m.interval or (None, None))
    if a is None:
        raise SchemaError("measurement has no interval; pass --interval")
    if len(args.degs) != args.order + 1:
        raise UsageError(f"--degs needs {args.order + 1} entries for order {args.order}")
    model = dfinite.reconstruct(m, args.order, args.degs, args.jumps, a, b, rows=args.rows,
                                refine=args.refine)
    out = model.to_json()
    out["diagnostics"] = plain(model.diagnostics)
    return out


def cmd_verify(args):
    obj = _read_json(args.model)
    m, kernel_json = measurement_from_json(_read_json(args.measurements))
    kind = obj.get("type") if isinstance(obj, dict) else None
    if kind == "prony":
        return _verify_prony(obj, m, kernel_json, args.tol)
    if kind != "dfinite":
        raise SchemaError(f"cannot verify a model of type {kind!r}")
    if obj.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {obj.get('schema_version')!r}")
    model = dfinite.PiecewiseDFiniteModel.from_json(obj)
    vals = as_values(m)
    a, b = model.interval
    report = {"schema_version": SCHEMA_VERSION, "type": "verify", "model": "dfinite",
              "tol": args.tol, "jumps": [float(t) for t in model.jumps]}
    if not np.any(vals):
        report.update(status="DEGENERATE",
                      reason="all moments vanish; every operator annihilates them")
        return report
    aug = model.augmented_operator()
    N = aug.order
    T = min(args.T, len(vals) - 1 - 2 * N)
    report["recurrence_residual"] = dfinite.recurrence_residual(vals, aug, a, b)
    ph, Q = dfinite.pade_hermite_residual(aug, vals, T, a, b)
    report["pade_hermite_residual"] = ph
    report["pade_hermite_truncation"] = T
    report["pade_hermite_Q"] = [float(v) for v in Q]
    C = dfinite.basis_moment_matrix(model.basis, None, len(vals) - 1)
    report["moment_residual"] = float(np.max(np.abs(C @ model.alpha.ravel() - vals))
                                      / np.max(np.abs(vals)))
    worst = max(report["recurrence_residual"], ph, report["moment_residual"])
    report["status"] = "PASS" if worst <= args.tol else "FAIL"
    return report


def _verify_prony(obj, m, kernel_json, tol):
    sol = prony_from_json(obj)
    kernel = _kernel(None, obj.get("kernel", kernel_json))
    if m.kind == "fourier":
        mu = fourier_map(m)
        K = max(k for k in mu if k >= 0)
        M = as_values(convdual.fourier_generalized_moments(mu, kernel, K))
    else:
        M = as_values(convdual.generalized_poly_moments(m, convdual.dual_coefficients(kernel, m.K)))
    report = {"schema_version": SCHEMA_VERSION, "type": "verify", "model": "prony", "tol": tol}
    scale = np.max(np.abs(M))
    if scale == 0:
        report.update(status="DEGENERATE", reason="all generalized moments vanish")
        return report
    report["moment_residual"] = float(np.max(np.abs(sol.moments(len(M)) - M)) / scale)
    report["status"] = "PASS" if report["moment_residual"] <= tol else "FAIL"
    return report


# argument parsing ----------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="momrec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a canonical signal file")
    p.add_argument("spec", nargs="?", help="signal spec JSON")
    p.add_argument("--random", choices=("shift", "step"), help="draw a random signal instead")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--s", type=int, help="number of shifts for --random shift")
    p.add_argument("--jumps", type=int, help="number of jumps for --random step")
    p.add_argument("--kernel", help="kernel name or JSON object for --random shift")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("moments", help="compute measurements of a signal")
    p.add_argument("signal")
    p.add_argument("--kmax", type=int, required=True)
    p.add_argument("--kind", choices=("poly", "fourier"), default="poly")
    p.add_argument("--method", choices=("auto", "analytic", "quadrature"), default="auto")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--domain", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("prony", help="solve a shift model from measurements")
    p.add_argument("measurements")
    p.add_argument("--s", default="auto", help="number of shifts or 'auto'")
    p.add_argument("--r", type=int, default=0, help="highest kernel derivative in the model")
    p.add_argument("--kernel", help="kernel name or JSON object (default: from measurements)")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_prony)

    p = sub.add_parser("dfinite", help="reconstruct a piecewise D-finite signal")
    p.add_argument("measurements")
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--degs", type=_int_list, required=True)
    p.add_argument("--jumps", type=int, default=0)
    p.add_argument("--rows", type=int)
    p.add_argument("--refine", choices=("off", "fallback", "always"), default="always")
    p.add_argument("--interval", type=float, nargs=2, metavar=("A", "B"))
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_dfinite)

    p = sub.add_parser("verify", help="check a model against measurements")
    p.add_argument("model")
    p.add_argument("measurements")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("-T", type=int, default=30, help="Pade-Hermite truncation order")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("run", help="execute JSON job files")
    p.add_argument("jobs_files", nargs="+", metavar="JOB")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p.set_defaults(func=None)
    return parser


JOB_FIELDS = {"schema_version", "command", "inputs", "options", "output"}
COMMANDS = ("synth", "moments", "prony", "dfinite", "verify")


def job_argv(job):
    """Translate a job object into command-line arguments; unknown fields are rejected."""
    if not isinstance(job, dict) or job.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError("job must be an object with schema_version 1")
    extra = set(job) - JOB_FIELDS
    if extra:
        raise SchemaError(f"unknown job fields {sorted(extra)}")
    cmd = job.get("command")
    if cmd not in COMMANDS:
        raise SchemaError(f"unknown command {cmd!r}")
    argv = [cmd, *[str(x) for x in job.get("inputs", [])]]
    for key, val in job.get("options", {}).items():
        flag = ("-" if len(key) == 1 else "--") + key.replace("_", "-")
        if isinstance(val, bool):
            if val:
                argv.append(flag)
        elif isinstance(val, list):
            argv += [flag, *(str(v) for v in val)] if key != "degs" else \
                [flag, ",".join(str(v) for v in val)]
        else:
            argv += [flag, str(val)]
    if job.get("output"):
        argv += ["-o", str(job["output"])]
    return argv


def _run_job(path):
    try:
        argv = job_argv(_read_json(path))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SchemaError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    base = os.path.dirname(os.path.abspath(path))
    cwd = os.getcwd()
    os.chdir(base)
    try:
        return main(argv)
    finally:
        os.chdir(cwd)


def _configure_logging():
    level = os.environ.get("MOMREC_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        level = "error"
    if not LOG.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        LOG.addHandler(handler)
    LOG.setLevel(levels[level])


def main(argv=None):
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_SCHEMA
    if args.command == "run":
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                codes = list(pool.map(_run_job, args.jobs_files))
        else:
            codes = [_run_job(p) for p in args.jobs_files]
        return max(codes, default=EXIT_OK)
    try:
        result = args.func(args)
        _write(dumps(result), args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except MomrecError as exc:
        stage = getattr(exc, "stage", None)
        where = f" [{stage}]" if stage else ""
        print(f"error{where}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, TypeError, KeyError) as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
