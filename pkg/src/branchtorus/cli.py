"""Command-line interface.

Subcommands: ``solve-toy``, ``construct``, ``ot``, ``norm``, ``dim``,
``sweep`` and ``verify``. JSON goes out with sorted keys, CSV with a header
row and LF line endings. Exit codes: 0 success, 1 usage error, 2 a
certificate or solver check failed.

The number of worker processes used by ``sweep`` is read from
``BRANCHTORUS_THREADS`` (default: all CPUs); it never changes the output.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import analysis, constructions, sobolev, toy1d, transport, verify
from .core_model import DiscreteMeasure, GridDensity, measure_from_dict

EXIT_OK, EXIT_USAGE, EXIT_CERT = 0, 1, 2
THREADS_ENV = "BRANCHTORUS_THREADS"


class UsageError(Exception):
    pass


class CertificationFailure(Exception):
    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _plain(obj):
    """Convert numpy scalars and arrays for JSON."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def dumps_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _emit(text: str, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _summary_path(args):
    if getattr(args, "summary", None):
        return args.summary
    if args.output in (None, "-"):
        return None
    root, _ = os.path.splitext(args.output)
    return root + ".json"


def _emit_table(args, header, rows, summary):
    """CSV to ``--output``; JSON summary to ``--summary`` (or next to the
    CSV, or stderr when the CSV goes to stdout)."""
    _emit(dumps_csv(header, rows), args.output)
    spath = _summary_path(args)
    if spath is None:
        sys.stderr.write(dumps_json(summary))
    else:
        _emit(dumps_json(summary), spath)


def _load_measure(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return measure_from_dict(json.load(fh))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot read measure from {path}: {exc}") from exc


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise UsageError(f"{THREADS_ENV} must be an integer") from exc
    return max(1, n)


def _rng(seed: int, stream: int = 0):
    return np.random.Generator(np.random.Philox(key=seed, counter=[stream, 0, 0, 0]))


# ---------------------------------------------------------------------------
# solve-toy
# ---------------------------------------------------------------------------

def toy_report(lam, T, depth=3, grid=32) -> dict:
    sol = toy1d.solve_toy(lam, T, depth=depth, grid=grid)
    bar, dev = toy1d.equipartition_residual(sol.plan, power=0.0)
    cone = toy1d.check_cone_property(sol.plan, lam)
    return {
        "lambda": lam,
        "T": T,
        "E_upper": sol.E_upper,
        "E_lower": sol.E_lower,
        "N_roots": sol.N,
        "branchings": sol.branchings,
        "N_segments_if_pure": sol.N if sol.is_pure_segments else None,
        "plan": sol.plan.to_dict(),
        "equipartition": {"lambda_bar": bar, "max_dev": dev},
        "cone_ok": not cone,
        "cone_violations": len(cone),
    }


def cmd_solve_toy(args):
    _positive(args, "lam", "T")
    rep = toy_report(args.lam, args.T, args.depth, args.grid)
    ok = rep["cone_ok"] and rep["E_upper"] >= rep["E_lower"] * (1 - 1e-9)
    if not ok:
        raise CertificationFailure("toy solution failed its checks", rep)
    return rep


# ---------------------------------------------------------------------------
# construct
# ---------------------------------------------------------------------------

def _random_endpoint(rng, n, dim):
    return DiscreteMeasure(rng.random((n, dim)), rng.random(n) + 0.1).normalized()


def build_construction(kind, T, lam=None, N=None, r=None, delta=0.3, eta=0.5, levels=2,
                       atoms=10, seed=0, certify=True):
    if kind == "uniform":
        N = N if N is not None else constructions.uniform_cell_count(T)
        return constructions.uniform_branching(N, T, levels=levels, certify=certify)
    if kind == "nonuniform":
        if N is None or r is None:
            if lam is None:
                raise UsageError("nonuniform needs --N and --r, or --lambda")
            if N is None and r is None:
                return constructions.scaling_construction(lam, T, levels=levels, certify=certify)
            raise UsageError("give both --N and --r, or neither")
        return constructions.nonuniform_branching(N, r, T, levels=levels, certify=certify)
    rng = _rng(seed)
    mu_minus, mu_plus = _random_endpoint(rng, atoms, 2), _random_endpoint(rng, atoms, 2)
    if kind == "dyadic":
        return constructions.dyadic_interpolation(mu_minus, mu_plus, T, delta=delta, eta=eta,
                                                  certify=certify)
    if kind == "block":
        side = 1.0 if r is None else r
        scaled = [DiscreteMeasure(m.positions * side, m.masses) for m in (mu_minus, mu_plus)]
        return constructions.building_block(1.0, side, T, scaled[0], scaled[1],
                                            origin=np.zeros(2), certify=certify)
    raise UsageError(f"unknown construction kind {kind!r}")


def cmd_construct(args):
    _positive(args, "T")
    if args.lam is not None and args.lam <= 0:
        raise UsageError("--lambda must be positive")
    con = build_construction(args.kind, args.T, args.lam, args.N, args.r, args.delta, args.eta,
                             args.levels, args.atoms, args.seed, certify=False)
    out = {
        "kind": args.kind,
        "seed": args.seed,
        "params": con.params,
        "plan": con.plan.to_dict(),
        "certificate": con.certificate.to_dict(),
    }
    if not con.certificate.passed:
        raise CertificationFailure("certificate failed", out)
    return out


# ---------------------------------------------------------------------------
# ot, norm
# ---------------------------------------------------------------------------

def cmd_ot(args):
    mu, nu = _load_measure(args.mu), _load_measure(args.nu)
    if not isinstance(mu, DiscreteMeasure) or not isinstance(nu, DiscreteMeasure):
        raise UsageError("ot needs two atomic measures")
    if mu.dim != nu.dim:
        raise UsageError("measures live in different dimensions")
    try:
        plan = transport.w2_periodic_discrete(mu, nu, method=args.method)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return plan.to_dict()


def cmd_norm(args):
    sigma = _load_measure(args.measure)
    gammas = _float_list(args.gamma, "--gamma")
    if any(g <= 0 for g in gammas):
        raise UsageError("--gamma values must be positive")
    tab = sobolev.fourier_of_measure(sigma, args.kmax)
    rows = []
    for g in gammas:
        value, tail = sobolev.h_negative_norm_sq(tab, g)
        rows.append((g, value, tail))
    _emit(dumps_csv(["gamma", "value", "tail"], rows), args.output)
    return None


# ---------------------------------------------------------------------------
# dim
# ---------------------------------------------------------------------------

def cmd_dim(args):
    if args.measure:
        sigma = _load_measure(args.measure)
        if isinstance(sigma, GridDensity):
            sigma = sigma.atoms()
        N = r = None
    else:
        _positive(args, "T")
        N, r, _ = constructions.choose_parameters(args.lam, args.T)
        con = constructions.nonuniform_branching(N, r, args.T, levels=1, certify=False)
        sigma = con.trace_density.atoms()
    if args.radii:
        radii = np.array(_float_list(args.radii, "--radii"))
    elif r is not None:
        radii = r * np.array([0.75, 0.875, 1.0, 1.125, 1.25])
    else:
        radii = 2.0 ** -np.arange(1, 7)
    method = args.method or ("cover" if r is not None else "ls")
    fit = analysis.box_counting_dimension(sigma, radii, method=method)
    summary = {**fit.to_dict(), "method": method, "seed": args.seed, "points": len(fit.points)}
    if N is not None:
        summary.update({"N": N, "r": r, "T": args.T, "lambda": args.lam})
    _emit_table(args, ["scale", "value"], fit.points, summary)
    return None


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _sweep_point(job):
    command, params = job
    if command == "solve-toy":
        return toy1d.solve_toy(params["lambda"], params["T"], depth=params["depth"],
                               grid=params["grid"]).E_upper
    con = build_construction(params["kind"], params["T"], params["lambda"], params["N"],
                             params["r"], params["delta"], params["eta"], params["levels"],
                             params["atoms"], params["seed"], certify=False)
    return con.certificate.value


def cmd_sweep(args):
    if args.points < 2:
        raise UsageError("--points must be at least 2")
    if not (args.start > 0 and args.stop > 0):
        raise UsageError("--from and --to must be positive")
    scales = np.geomspace(args.start, args.stop, args.points)
    base = {"lambda": args.lam, "T": args.T, "depth": args.depth, "grid": args.grid,
            "kind": args.kind, "N": args.N, "r": args.r, "delta": args.delta, "eta": args.eta,
            "levels": args.levels, "atoms": args.atoms, "seed": args.seed}
    key = {"T": "T", "lambda": "lambda"}[args.vary]
    if args.command == "solve-toy" and base["lambda" if key == "T" else "T"] is None:
        raise UsageError("solve-toy sweeps need the fixed parameter (--lambda or --T)")
    jobs = [(args.command, {**base, key: float(s)}) for s in scales]
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(_sweep_point, jobs))  # map keeps input order
    else:
        values = [_sweep_point(j) for j in jobs]
    fit = analysis.fit_power_law(scales, values)
    summary = {**fit.to_dict(), "command": args.command, "vary": args.vary, "seed": args.seed,
               "points": args.points}
    _emit_table(args, ["scale", "value"], zip(scales, values), summary)
    return None


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(args):
    try:
        records = verify.run_suite(args.suite, seed=args.seed)
    except KeyError as exc:
        raise UsageError(f"unknown suite {exc}") from exc
    out = {"suite": args.suite, "seed": args.seed, "checks": records,
           "pass": all(r["pass"] for r in records)}
    if not out["pass"]:
        raise CertificationFailure("invariant checks failed", out)
    return out


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _positive(args, *names):
    for n in names:
        v = getattr(args, n)
        if v is None or not v > 0 or not math.isfinite(v):
            raise UsageError(f"--{'lambda' if n == 'lam' else n} must be a positive number")


def _float_list(text, flag):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"{flag} expects comma-separated numbers") from exc


class _Parser(argparse.ArgumentParser):
    """Long flags only; errors become :class:`UsageError`."""

    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, add_help=False, **kwargs)
        self.add_argument("--help", action="help", help="show this message and exit")

    def error(self, message):
        raise UsageError(message)


def _common(p):
    p.add_argument("--seed", type=int, default=0, help="seed of the Philox stream")
    p.add_argument("--output", default=None, help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="branchtorus",
                     description="Branched transport on the torus: solvers and constructions.")
    sub = parser.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("solve-toy", help="solve the one-dimensional toy model")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--grid", type=int, default=32)
    _common(p)

    p = sub.add_parser("construct", help="build a certified construction")
    p.add_argument("--kind", choices=["uniform", "nonuniform", "dyadic", "block"], required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--delta", type=float, default=0.3)
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--levels", type=int, default=2)
    p.add_argument("--atoms", type=int, default=10, help="atoms per random endpoint")
    _common(p)

    p = sub.add_parser("ot", help="periodic optimal transport between two atomic measures")
    p.add_argument("--mu", required=True)
    p.add_argument("--nu", required=True)
    p.add_argument("--method", choices=["auto", "simplex", "highs"], default="auto")
    _common(p)

    p = sub.add_parser("norm", help="negative Sobolev norms of sigma - 1")
    p.add_argument("--measure", required=True)
    p.add_argument("--gamma", default="0.25,0.5,1")
    p.add_argument("--kmax", type=int, default=32)
    _common(p)

    p = sub.add_parser("dim", help="box-counting dimension")
    p.add_argument("--measure", default=None, help="measure JSON (default: nonuniform trace)")
    p.add_argument("--T", type=float, default=1e-3)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--radii", default=None)
    p.add_argument("--method", choices=["ls", "cover"], default=None)
    p.add_argument("--summary", default=None, help="path of the JSON summary")
    _common(p)

    p = sub.add_parser("sweep", help="log-spaced parameter sweep with a power-law fit")
    p.add_argument("--command", choices=["solve-toy", "construct"], required=True)
    p.add_argument("--vary", choices=["T", "lambda"], required=True)
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--points", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--grid", type=int, default=32)
    p.add_argument("--kind", choices=["uniform", "nonuniform", "dyadic", "block"], default="uniform")
    p.add_argument("--delta", type=float, default=0.3)
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--levels", type=int, default=2)
    p.add_argument("--atoms", type=int, default=10)
    p.add_argument("--summary", default=None, help="path of the JSON summary")
    _common(p)

    p = sub.add_parser("verify", help="run the invariant suites")
    p.add_argument("--suite", default="all",
                   choices=["all", *verify.SUITES])
    _common(p)
    return parser


COMMANDS = {
    "solve-toy": cmd_solve_toy, "construct": cmd_construct, "ot": cmd_ot, "norm": cmd_norm,
    "dim": cmd_dim, "sweep": cmd_sweep, "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = None
    try:
        args = build_parser().parse_args(argv)
        result = COMMANDS[args.cmd](args)
        if result is not None:
            _emit(dumps_json(result), args.output)
        return EXIT_OK
    except (UsageError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except (CertificationFailure, constructions.CertificationError) as exc:
        payload = getattr(exc, "payload", None)
        if payload is not None:
            _emit(dumps_json(payload), getattr(args, "output", None))
        sys.stderr.write(f"certification failure: {exc}\n")
        return EXIT_CERT


if __name__ == "__main__":
    sys.exit(main())
