"""Command-line front end: ``fractal-harmonic <subcommand> ...``.

Exit codes: 0 success, 2 invalid input, 1 computation failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__
from .connectivity import prop21_check
from .embedding import DEFAULT_ANCHORS, DegenerateAnchors, certify_nondegeneracy, export_svg, parse_anchors, tutte_embed
from .fractal import FractalSpec, SpecError, fixture, load_spec, refine, spec_hash, spec_to_dict
from .harmonic import NotProportional, extension_matrices, nondegeneracy_check, renorm_factor, resolve_mode
from .linalg import LinalgError, to_rat
from .measures import (
    MissingRenormalization,
    ZeroMeasureCell,
    kusuoka_embedding_identity,
    measure_table,
    p_bound,
    ratio_table,
)

CONVENTIONS = "cells=row-major-from-q2;A[s][t]=h_t(F_i q_s);M_w=A_wm..A_w1;Q=unit-complete"


class UsageError(ValueError):
    """Bad flag value; reported with exit code 2."""

    def __init__(self, flag: str, message: str) -> None:
        super().__init__(f"{flag}: {message}")


def _vector(flag: str, text: str, n: int) -> tuple[Fraction, ...]:
    try:
        vals = tuple(to_rat(x.strip()) for x in text.split(","))
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(flag, str(exc)) from None
    if len(vals) != n:
        raise UsageError(flag, f"expected {n} comma-separated values, got {len(vals)}")
    return vals


def _p_list(text: str) -> list[float]:
    try:
        ps = [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise UsageError("--p", str(exc)) from None
    if not ps:
        raise UsageError("--p", "empty list")
    return ps


def _load(args) -> FractalSpec:
    if args.k is not None:
        if args.k < 2:
            raise UsageError("--k", "must be at least 2")
        return fixture(f"sg:{args.k}")
    if args.spec is None:
        raise UsageError("--k/--spec", "one of them is required")
    if Path(args.spec).is_file():
        try:
            return load_spec(args.spec)
        except SpecError as exc:
            raise UsageError("--spec", str(exc)) from None
    try:
        return fixture(args.spec)
    except (KeyError, SpecError) as exc:
        raise UsageError("--spec", f"not a file or fixture ({exc})") from None


def _anchors(args, spec: FractalSpec):
    if args.anchors:
        try:
            pts = parse_anchors(args.anchors)
        except (ValueError, ZeroDivisionError) as exc:
            raise UsageError("--anchors", str(exc)) from None
        if len(pts) != spec.boundary_size:
            raise UsageError("--anchors", f"expected {spec.boundary_size} points, got {len(pts)}")
        return pts
    if spec.boundary_size == 3:
        return DEFAULT_ANCHORS
    if all(b in spec.draw_coords for b in spec.boundary):
        return tuple(spec.draw_coords[b] for b in spec.boundary)
    raise UsageError("--anchors", f"required for boundary size {spec.boundary_size}")


def _mode(args, spec: FractalSpec, level: int = 1) -> str:
    interior = spec.vertex_count - spec.boundary_size
    return resolve_mode(args.mode, interior * spec.cell_count ** max(level - 1, 0))


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _rat_str(x) -> str:
    return str(x) if isinstance(x, Fraction) else repr(float(x))


def cmd_spec(args, spec):
    return _dump(spec_to_dict(spec))


def cmd_refine(args, spec):
    return _dump(refine(spec, args.level).to_dict())


def cmd_renorm(args, spec):
    mode = _mode(args, spec)
    r = renorm_factor(spec, mode, args.tol)
    return _dump({"spec": spec.name, "mode": mode, "r": _rat_str(r)})


def cmd_matrices(args, spec):
    return _dump(extension_matrices(spec, _mode(args, spec), args.tol).to_dict())


def cmd_check(args, spec):
    rep = nondegeneracy_check(spec, _mode(args, spec), args.tol)
    print(f"{spec.name}: {rep.verdict}", file=sys.stderr)
    return _dump(rep.to_dict())


def cmd_connectivity(args, spec):
    res = prop21_check(spec)
    return res.summary() + "\n" + _dump(res.to_dict())


def cmd_embed(args, spec):
    mode = "exact" if args.mode == "auto" else args.mode
    emb = tutte_embed(refine(spec, args.level), _anchors(args, spec), mode, True, args.tol)
    if args.format == "svg":
        return export_svg(emb)
    return _dump(emb.to_dict())


def cmd_certify(args, spec):
    anchors = _anchors(args, spec) if args.anchors or spec.boundary_size != 3 else None
    cert = certify_nondegeneracy(spec, anchors, args.level)
    print(f"{spec.name}: {cert.verdict}", file=sys.stderr)
    return _dump(cert.to_dict())


def cmd_measure(args, spec):
    ext = extension_matrices(spec, _mode(args, spec))
    n0 = spec.boundary_size
    h1 = _vector("--h1", args.h1, n0) if args.h1 else None
    h2 = _vector("--h2", args.h2, n0) if args.h2 else None
    if ext.mode == "float":
        h1 = None if h1 is None else tuple(float(x) for x in h1)
        h2 = None if h2 is None else tuple(float(x) for x in h2)
    table = measure_table(spec, ext, args.level, h1, h2, kusuoka=n0 >= 2)
    if args.format == "csv":
        fmt = str if table.mode == "exact" else (lambda x: f"{float(x):.17g}")
        rows = ["word," + ",".join(table.columns)]
        for w, vals in table.values.items():
            rows.append(".".join(map(str, w)) + "," + ",".join(fmt(v) for v in vals))
        return "\n".join(rows) + "\n"
    return _dump(table.to_dict())


def cmd_identity(args, spec):
    rows = {m: kusuoka_embedding_identity(spec, m) for m in range(args.level + 1)}
    return _dump({"spec": spec.name, "max_discrepancy": {str(m): v for m, v in rows.items()}})


def cmd_rn_table(args, spec):
    n0 = spec.boundary_size
    h1 = _vector("--h1", args.h1 or "0,1,1", n0)
    h2 = _vector("--h2", args.h2 or "0,1,-1", n0)
    ext = extension_matrices(spec, _mode(args, spec))
    table = ratio_table(spec, ext, h1, h2, args.m_max, _p_list(args.p), threads=args.threads)
    if args.format == "json":
        return _dump(table.to_dict())
    return table.to_csv()


def cmd_p_bound(args, spec):
    return _dump(p_bound(spec, extension_matrices(spec, _mode(args, spec))).to_dict())


COMMANDS = {
    "spec": (cmd_spec, "print the normalized structure description as JSON"),
    "refine": (cmd_refine, "build the level-m graph approximation G_m by cell substitution"),
    "renorm": (cmd_renorm, "renormalization constant from the traced level-1 energy"),
    "matrices": (cmd_matrices, "harmonic extension matrices A_i and their determinants"),
    "check": (cmd_check, "non-degeneracy test: every A_i invertible"),
    "connectivity": (cmd_connectivity, "vertex connectivity of G_1 plus a boundary clique"),
    "embed": (cmd_embed, "Tutte (rubber band) embedding of G_m with pinned boundary"),
    "certify": (cmd_certify, "exact crossing and flat-cell certificate of the G_1 embedding"),
    "measure": (cmd_measure, "energy measures and the Kusuoka measure on level-m cells"),
    "identity": (cmd_identity, "compare squared side lengths of the embedding with the Kusuoka measure"),
    "rn-table": (cmd_rn_table, "Radon-Nikodym sums S(m,p) and ratio test R(m,p)"),
    "p-bound": (cmd_p_bound, "corner decay eigenvalue and the resulting bound on p"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--k", type=int, help="use the level-k Sierpinski gasket SG_k")
    src.add_argument("--spec", help="JSON structure file or fixture name (vicsek, hexagasket3, sg:<k>)")
    common.add_argument("--mode", choices=("exact", "float", "auto"), default="auto")
    common.add_argument("--tol", type=float, default=1e-12, help="float solve tolerance (default 1e-12)")
    common.add_argument("--format", choices=("json", "csv", "svg"), default=None)
    common.add_argument("--out", help="write the artifact here instead of stdout")
    env_threads = os.environ.get("FRACTAL_THREADS", "1")
    common.add_argument(
        "--threads",
        type=int,
        default=int(env_threads) if env_threads.isdigit() else 1,
        help="worker threads for S(m,p) (default $FRACTAL_THREADS or 1)",
    )

    parser = argparse.ArgumentParser(prog="fractal-harmonic", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        if name in ("refine", "embed", "certify", "measure", "identity"):
            default = {"refine": 1, "embed": 1, "certify": 1, "measure": 1, "identity": 4}[name]
            p.add_argument("--level", type=int, default=default, help=f"level m (default {default})")
        if name in ("embed", "certify"):
            p.add_argument("--anchors", help='boundary positions "x1,y1;x2,y2;x3,y3" (exact rationals)')
        if name in ("measure", "rn-table"):
            p.add_argument("--h1", help="boundary values a,b,c of h1")
            p.add_argument("--h2", help="boundary values a,b,c of h2")
        if name == "rn-table":
            p.add_argument("--p", default="1.1,1.14,1.185", help="comma list of exponents")
            p.add_argument("--m-max", type=int, default=8)
    return parser


_FORMATS = {"embed": ("json", "svg"), "measure": ("json", "csv"), "rn-table": ("csv", "json")}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    allowed = _FORMATS.get(args.command, ("json",))
    if args.format is None:
        args.format = allowed[0]
    try:
        if args.format not in allowed:
            raise UsageError("--format", f"{args.command} supports {', '.join(allowed)}")
        if args.threads < 1:
            raise UsageError("--threads", "must be at least 1")
        if getattr(args, "level", 0) < 0:
            raise UsageError("--level", "must be non-negative")
        spec = _load(args)
        print(
            f"# fractal-harmonic {__version__} spec={spec.name} hash={spec_hash(spec)} "
            f"mode={args.mode} conventions={CONVENTIONS}",
            file=sys.stderr,
        )
        text = COMMANDS[args.command][0](args, spec)
    except (UsageError, DegenerateAnchors) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (
        LinalgError,
        NotProportional,
        MissingRenormalization,
        ZeroMeasureCell,
        ZeroDivisionError,
        ValueError,
    ) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
