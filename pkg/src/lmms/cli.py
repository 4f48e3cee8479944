"""Command-line interface: ``lmms <subcommand> ...``.

Every subcommand writes one JSON document ``{"result": ..., "manifest": ...}``
to stdout.  Exit codes: 0 success, 1 invalid input, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .box import solve_box
from .core import FiniteLMMS, StructuralError, disjoint_union, distance_quotient, validate
from .gh import solve_lgh
from .reconstruct import exact_matrix_law, isomorphy_test, reconstruction_experiment, sample_matrix_law
from .solvers import intrinsic_D, solve_l0, solve_linf, solve_lp
from .sprinkle import SprinkleConfig, sidecar, sprinkle_with_coordinates

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2


class InputError(Exception):
    """An input file could not be read as a valid instance."""


@dataclass
class RunManifest:
    command: list
    inputs: dict = field(default_factory=dict)
    seed: int | None = None
    version: str = __version__
    threads: int = 1
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "inputs": self.inputs,
            "seed": self.seed,
            "version": self.version,
            "threads": self.threads,
            "wall_time": self.wall_time,
        }


def _load(path: str, manifest: RunManifest) -> FiniteLMMS:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    manifest.inputs[path] = hashlib.sha256(raw).hexdigest()
    try:
        return FiniteLMMS.from_json(raw.decode("utf-8"))
    except (ValueError, KeyError, TypeError, StructuralError) as exc:
        raise InputError(f"{path}: {exc}") from None


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("LMMS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise SystemExit(f"LMMS_THREADS must be an integer, got {env!r}")
    return 1


# -- subcommands -----------------------------------------------------------------------


def cmd_validate(args, manifest):
    space = _load(args.file, manifest)
    report = validate(space, args.tol)
    return report.to_dict(), EXIT_OK if report.ok else EXIT_INVALID


def cmd_quotient(args, manifest):
    return distance_quotient(_load(args.file, manifest)).to_dict(), EXIT_OK


def _distance(a, b, args):
    metric = args.metric
    solver = args.solver or ("exact" if metric != "intrinsic" else None)
    if metric == "l0":
        res = solve_l0(a, b, q=args.q, method=solver, budget=args.budget, seed=args.seed)
    elif metric == "lp":
        if math.isinf(args.p):
            res = solve_linf(a, b, q=args.q, method=solver, budget=args.budget, seed=args.seed)
        else:
            res = solve_lp(a, b, p=args.p, q=args.q, method=solver, budget=args.budget, seed=args.seed)
    elif metric == "linf":
        res = solve_linf(a, b, q=args.q, method=solver, budget=args.budget, seed=args.seed)
    elif metric == "box":
        res = solve_box(a, b, lam=args.lam, budget=args.budget, seed=args.seed)
    elif metric == "lgh":
        res = solve_lgh(a, b, method=solver, budget=args.budget, seed=args.seed)
    else:
        value = intrinsic_D(a, b, k_max=args.kmax, seed=args.seed, samples=args.samples)
        return {"metric": "intrinsic", "value": value, "method": "exact", "certified": False,
                "iterations": args.kmax, "seed": args.seed, "witness": None}
    return res.to_dict(a, b)


def cmd_distance(args, manifest):
    manifest.seed = args.seed
    a = _load(args.a, manifest)
    rows = []
    for path in args.b:
        b = _load(path, manifest)
        out = _distance(a, b, args)
        out["a"], out["b"] = args.a, path
        rows.append(out)
    if args.csv:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["a", "b", "metric", "value", "method", "certified"])
        for r in rows:
            writer.writerow([r["a"], r["b"], r["metric"], repr(r["value"]), r["method"], r["certified"]])
        return buf.getvalue(), EXIT_OK
    return (rows[0] if len(rows) == 1 else rows), EXIT_OK


def cmd_isomorphic(args, manifest):
    res = isomorphy_test(_load(args.a, manifest), _load(args.b, manifest))
    out = {"isomorphic": res.isomorphic, "mapping": res.mapping}
    return out, EXIT_OK


def cmd_matrix_law(args, manifest):
    space = _load(args.file, manifest)
    if args.samples:
        manifest.seed = args.seed
        law = sample_matrix_law(space, args.k, args.samples, args.seed)
    else:
        law = exact_matrix_law(space, args.k)
    return law.to_dict(), EXIT_OK


def cmd_sprinkle(args, manifest):
    manifest.seed = args.seed
    config = SprinkleConfig(dim=args.dim, half_height=args.T, n=args.n, intensity=args.intensity, seed=args.seed)
    space, coords = sprinkle_with_coordinates(config)
    if args.sidecar:
        Path(args.sidecar).write_text(json.dumps(sidecar(config, coords)) + "\n")
    return space.to_dict(), EXIT_OK


def cmd_reconstruct(args, manifest):
    manifest.seed = args.seed
    report = reconstruction_experiment(_load(args.a, manifest), _load(args.b, manifest),
                                       k_max=args.kmax, samples=args.samples, seed=args.seed)
    return report.to_dict(), EXIT_OK


def cmd_union(args, manifest):
    return disjoint_union(_load(args.a, manifest), _load(args.b, manifest), args.alpha).to_dict(), EXIT_OK


# -- argument parsing -------------------------------------------------------------------


def _probability(text: str) -> float:
    x = float(text)
    if not 0.0 <= x <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return x


def _positive_int(text: str) -> int:
    x = int(text)
    if x < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return x


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmms", description="Finite Lorentzian metric measure spaces.")
    parser.add_argument("--version", action="version", version=f"lmms {__version__}")
    parser.add_argument("--threads", type=_positive_int, default=None,
                        help="worker cap (default: LMMS_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check the axioms of an instance")
    p.add_argument("file")
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("quotient", help="distance quotient of an instance")
    p.add_argument("file")
    p.set_defaults(func=cmd_quotient)

    p = sub.add_parser("distance", help="distance between A and each B")
    p.add_argument("a")
    p.add_argument("b", nargs="+")
    p.add_argument("--metric", choices=["l0", "lp", "linf", "box", "lgh", "intrinsic"], default="l0")
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--solver", choices=["exact", "frank_wolfe", "anneal", "grid", "greedy"], default=None)
    p.add_argument("--budget", type=_positive_int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kmax", type=_positive_int, default=3)
    p.add_argument("--samples", type=_positive_int, default=10_000)
    p.add_argument("--csv", action="store_true", help="print a CSV table instead of JSON")
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("isomorphic", help="decide isomorphy exactly")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_isomorphic)

    p = sub.add_parser("matrix-law", help="law of k-point distance matrices")
    p.add_argument("file")
    p.add_argument("--k", type=_positive_int, default=2)
    p.add_argument("--samples", type=_positive_int, default=None, help="sample instead of enumerating")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_matrix_law)

    p = sub.add_parser("sprinkle", help="sprinkle a causal diamond in Minkowski space")
    p.add_argument("--dim", type=_positive_int, default=1)
    p.add_argument("--T", type=float, default=1.0)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--n", type=_positive_int)
    group.add_argument("--intensity", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sidecar", help="also write the config and coordinates to this file")
    p.set_defaults(func=cmd_sprinkle)

    p = sub.add_parser("reconstruct", help="compare matrix laws with the isomorphy verdict")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--kmax", type=_positive_int, default=3)
    p.add_argument("--samples", type=_positive_int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("union", help="disjoint union glued at the spacelike boundary")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--alpha", type=_probability, default=0.5)
    p.set_defaults(func=cmd_union)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command = list(sys.argv[1:] if argv is None else argv)
    manifest = RunManifest(command=command, threads=_threads(args))
    start = time.perf_counter()
    try:
        result, code = args.func(args, manifest)
    except InputError as exc:
        print(f"lmms: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"lmms: {exc}", file=sys.stderr)
        return EXIT_USAGE
    manifest.wall_time = time.perf_counter() - start
    if isinstance(result, str):
        sys.stdout.write(f"# manifest: {json.dumps(manifest.to_dict())}\n")
        sys.stdout.write(result)
    else:
        json.dump({"result": result, "manifest": manifest.to_dict()}, sys.stdout, indent=2)
        sys.stdout.write("\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
