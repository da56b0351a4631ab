"""Command line front end: JSON reports on stdout, diagnostics on stderr.

Exit codes: 0 success, 2 inconclusive/no-limit verdicts, 1 errors,
64 usage errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time

import numpy as np

from . import __version__
from .scene import Scene, SceneError, SceneParseError, load_scene
from .asymptotics import (PointNotOnSetError, density_at_infinity,
                          density_at_point, profile)
from .cones import (InsufficientDirectionsError, normal_set_infinity,
                    tangent_cone_at_point, tangent_cone_infinity)
from .multiplicity import EmptyShellError, kr_check, relative_multiplicity
from .metric import lne_at_infinity
from .classify import classify
from .oracles import oracle_names, oracle_values, signature

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INCONCLUSIVE = 2
EXIT_USAGE = 64

# arrays this large are summarized as counts, not dumped into the report
_SUMMARIZE_FIELDS = {"directions": "n_directions", "frames": "n_frames"}


def _f17(x: float):
    # exact round trip; 17 significant digits recover the double bit for bit
    return float(format(float(x), ".17g"))


def _jsonify(obj):
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        if obj != obj or obj in (float("inf"), float("-inf")):
            return repr(obj)
        return _f17(obj)
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return _jsonify(obj.item())
    if isinstance(obj, np.ndarray):
        return _jsonify(obj.tolist())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out = {}
        for fld in dataclasses.fields(obj):
            val = getattr(obj, fld.name)
            if fld.name in _SUMMARIZE_FIELDS and val is not None:
                out[_SUMMARIZE_FIELDS[fld.name]] = int(len(val))
            else:
                out[fld.name] = _jsonify(val)
        return out
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    return repr(obj)


def _scene_block(scene: Scene) -> dict:
    return {
        "name": scene.name,
        "ambient": scene.ambient,
        "dim": scene.dim,
        "hash": scene.scene_hash(),
        "meta": _jsonify(scene.meta),
    }


def _emit(report: dict) -> None:
    json.dump(report, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.split(",")], dtype=float)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated vector: {text!r}")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="farfield",
        description="densities, tangent cones, multiplicities and metric "
                    "regularity of unbounded scenes")
    ap.add_argument("--version", action="version", version=f"farfield {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scene", help="builtin name (e.g. alpha_cone(3)) or .scene path")
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("density", help="density at infinity or at a point")
    common(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--at-point", type=_parse_vector, metavar="P")
    g.add_argument("--at-infinity", action="store_true")

    p = sub.add_parser("profile", help="theta(r) over a radius grid")
    common(p)
    p.add_argument("--center", type=_parse_vector, required=True)
    p.add_argument("--rmin", type=float, required=True)
    p.add_argument("--rmax", type=float, required=True)
    p.add_argument("--k", type=int, default=24)
    p.add_argument("--csv", metavar="PATH")

    p = sub.add_parser("cone", help="tangent cone at infinity or at a point")
    common(p)
    p.add_argument("--at-point", type=_parse_vector, metavar="P")

    p = sub.add_parser("normal", help="limiting tangent planes at infinity")
    common(p)

    p = sub.add_parser("mult", help="relative multiplicity along a direction")
    common(p)
    p.add_argument("--dir", type=_parse_vector, required=True)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--R", type=float, default=50.0)

    p = sub.add_parser("kr-check", help="density vs multiplicity-weighted cone slices")
    common(p)

    p = sub.add_parser("lne", help="Lipschitz normal embedding at infinity")
    common(p)

    p = sub.add_parser("classify", help="Bernstein-type affine classification")
    common(p)
    p.add_argument("--deep", action="store_true",
                   help="also gather LNE, tangent planes and multiplicities")

    p = sub.add_parser("oracle", help="closed-form reference values")
    p.add_argument("name", choices=oracle_names())
    p.add_argument("--radii", type=_parse_vector, default=None)
    p.add_argument("--args", type=_parse_vector, default=None,
                   help="builtin parameters, e.g. 3 for alpha_cone(3)")

    return ap


def _run_density(scene, args):
    tol = 0.01 if args.tol is None else args.tol
    if args.at_point is not None:
        v = density_at_point(scene, args.at_point, tol, seed=args.seed,
                             threads=args.threads)
    else:
        v = density_at_infinity(scene, tol, seed=args.seed, threads=args.threads)
    code = EXIT_OK if v.kind in ("converges", "diverges") else EXIT_INCONCLUSIVE
    return v, code


def _run_profile(scene, args):
    tol = 1e-3 if args.tol is None else args.tol
    prof = profile(scene, args.center, args.rmin, args.rmax, k=args.k,
                   tol=tol, seed=args.seed, threads=args.threads)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("r,theta,err\n")
            for r, t, e in zip(prof.radii, prof.theta, prof.err):
                fh.write(f"{r:.17g},{t:.17g},{e:.17g}\n")
        print(f"wrote {len(prof.radii)} rows to {args.csv}", file=sys.stderr)
    return prof, EXIT_OK


def _run_cone(scene, args):
    tol = 0.02 if args.tol is None else args.tol
    if args.at_point is not None:
        est = tangent_cone_at_point(scene, args.at_point, tol, seed=args.seed)
    else:
        est = tangent_cone_infinity(scene, tol, seed=args.seed)
    return est, EXIT_OK


def _run_normal(scene, args):
    tol = 0.02 if args.tol is None else args.tol
    est = normal_set_infinity(scene, seed=args.seed, tol=tol)
    return est, EXIT_OK


def _run_mult(scene, args):
    rep = relative_multiplicity(scene, args.dir, eta=args.eta, R=args.R,
                                seed=args.seed)
    return rep, EXIT_OK if rep.stable else EXIT_INCONCLUSIVE


def _run_kr(scene, args):
    tol = 0.01 if args.tol is None else args.tol
    rep = kr_check(scene, tol, seed=args.seed)
    return rep, EXIT_OK if rep.agree else EXIT_INCONCLUSIVE


def _run_lne(scene, args):
    rep = lne_at_infinity(scene, seed=args.seed)
    return rep, EXIT_OK if rep.verdict in ("lne", "not_lne") else EXIT_INCONCLUSIVE


def _run_classify(scene, args):
    tol = 0.05 if args.tol is None else args.tol
    rep = classify(scene, tol, seed=args.seed, deep=args.deep)
    code = EXIT_OK if rep.verdict in ("affine_subspace", "not_affine") \
        else EXIT_INCONCLUSIVE
    return rep, code


_RUNNERS = {
    "density": _run_density,
    "profile": _run_profile,
    "cone": _run_cone,
    "normal": _run_normal,
    "mult": _run_mult,
    "kr-check": _run_kr,
    "lne": _run_lne,
    "classify": _run_classify,
}


def run(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; remap, keep 0 for --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    t0 = time.perf_counter()
    params = {k: _jsonify(v) for k, v in vars(args).items() if k != "command"}

    if args.command == "oracle":
        radii = [1.0, 10.0, 100.0, 1000.0] if args.radii is None \
            else [float(r) for r in args.radii]
        extra = () if args.args is None else tuple(float(a) for a in args.args)
        results = {
            "name": args.name,
            "signature": signature(args.name, extra),
            "values": oracle_values(args.name, radii, extra),
        }
        _emit({"tool": {"name": "farfield", "version": __version__},
               "scene": None, "command": "oracle", "parameters": params,
               "results": _jsonify(results),
               "wall_time_s": _f17(time.perf_counter() - t0)})
        return EXIT_OK

    try:
        scene = load_scene(args.scene)
    except SceneParseError as exc:
        where = f" at byte {exc.offset}" if exc.offset is not None else ""
        print(f"scene parse error{where}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (SceneError, OSError) as exc:
        print(f"scene error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    try:
        results, code = _RUNNERS[args.command](scene, args)
    except InsufficientDirectionsError as exc:
        print(f"insufficient evidence: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except (EmptyShellError, PointNotOnSetError, SceneError,
            NotImplementedError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    _emit({"tool": {"name": "farfield", "version": __version__},
           "scene": _scene_block(scene), "command": args.command,
           "parameters": params, "results": _jsonify(results),
           "wall_time_s": _f17(time.perf_counter() - t0)})
    return code


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
