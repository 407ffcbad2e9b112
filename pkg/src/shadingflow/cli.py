"""Command-line driver: render -> flow -> verify -> solve pipelines.

Single binary with subcommands.  Exit codes: 0 ok, 1 verification failure,
2 bad input, 3 I/O failure, 4 shadowed point, 5 integration singularity.
Set SFS_LOG to quiet/info/debug to control logging.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import figures
from .exceptions import (BadInputError, DegenerateGradient, Inconsistent,
                         NoBracket, ShadingFlowError, ShadowedPoint,
                         SingularityEncountered)
from .flow import (find_critical_points, flow_field_from_raster,
                   frame_from_jet, write_flow_csv, write_flow_svg)
from .geometry import LightSource, MongePatch2, MongePatch3
from .imaging import (ImageJet2, RasterImage, _atomic_write_text, analytic_jet,
                      fd_jet, read_pgm, render_raster, write_pgm)
from .shading_eqs import residuals_geometric, residuals_pde
from .solvers import (IntensityCurve, QuadricTriple, Solve1DOptions,
                      SolveOptions, frontal_solutions_to_image, solve_1d,
                      solve_critical_point, solve_frontal_parallel,
                      solve_second_order, sweep_tangent_planes,
                      write_curve_csv, write_sweep_csv)

log = logging.getLogger("shadingflow")

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_BAD_INPUT = 2
EXIT_IO = 3
EXIT_SHADOWED = 4
EXIT_SINGULARITY = 5


def _configure_logging():
    level = {"quiet": logging.ERROR, "info": logging.INFO,
             "debug": logging.DEBUG}.get(os.environ.get("SFS_LOG", "quiet"), logging.ERROR)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _read_spec(text: str) -> str:
    """Inline JSON, or the contents of a file when the value names one."""
    t = text.strip()
    if t.startswith("{") or t.startswith("["):
        return t
    with open(t) as fh:
        return fh.read()


def _parse_patch(text: str) -> MongePatch3:
    obj = json.loads(_read_spec(text))
    if "c" in obj and isinstance(obj["c"], list):
        return MongePatch3(tuple(obj["c"]))
    keys = ("a", "b", "c", "d", "e")
    if all(k in obj for k in keys):
        return MongePatch2(*(float(obj[k]) for k in keys)).to_cubic()
    raise BadInputError("patch spec needs {'c': [c1..c9]} or {'a'..'e'}")


def _parse_lights(text: str):
    obj = json.loads(_read_spec(text))
    if isinstance(obj, dict):
        obj = [obj]
    if not isinstance(obj, list) or not obj:
        raise BadInputError("lights spec must be a nonempty object or list")
    return [LightSource.from_dict(o) for o in obj]


def _parse_floats(text: str, n: int, what: str):
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != n:
        raise BadInputError(f"{what} needs {n} comma-separated values, got {len(parts)}")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise BadInputError(f"bad {what}: {exc}") from exc


def _parse_window(text: str):
    cx, cy, extent = _parse_floats(text, 3, "--window (cx,cy,extent)")
    if extent <= 0:
        raise BadInputError("window extent must be positive")
    return np.array([cx, cy]), extent


def _parse_jet(text: str) -> ImageJet2:
    obj = json.loads(_read_spec(text))
    try:
        return ImageJet2(*(float(obj[k]) for k in ("I", "Ix", "Iy", "Ixx", "Ixy", "Iyy")))
    except (KeyError, TypeError, ValueError) as exc:
        raise BadInputError(f"jet spec needs I, Ix, Iy, Ixx, Ixy, Iyy: {exc}") from exc


def _solve_options(args) -> SolveOptions:
    return SolveOptions(box=args.box, seeds_per_axis=args.seeds,
                        verify_tol=args.tol)


def _write_json(path: str, obj) -> None:
    _atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_render(args) -> int:
    patch = _parse_patch(args.patch)
    lights = _parse_lights(args.lights)
    center, extent = _parse_window(args.window)
    img = render_raster(patch, lights, center, extent, args.res)
    write_pgm(img, args.out, binary=not args.ascii, center=center)
    if args.fig:
        figures.save_raster_figure(img, args.fig)
    log.info("wrote %s (%dx%d, spacing %g)", args.out, img.width, img.height, img.spacing)
    return EXIT_OK


def cmd_flow(args) -> int:
    img, _center = read_pgm(args.raster)
    field = flow_field_from_raster(img, grad_eps=args.tol_grad)
    write_flow_csv(field, args.out + ".csv")
    write_flow_svg(field, args.out + ".svg")
    if args.fig:
        figures.save_flow_figure(field, args.fig)
    log.info("wrote %s.csv and %s.svg (%d masked of %d)",
             args.out, args.out, int(field.mask.sum()), field.mask.size)
    return EXIT_OK


def cmd_verify(args) -> int:
    patch = _parse_patch(args.patch)
    lights = _parse_lights(args.lights)
    center, extent = _parse_window(args.window)
    n = args.grid_n
    coords = np.linspace(-extent / 2, extent / 2, n)
    records = []
    worst = 0.0
    shadowed = 0
    for y in coords:
        for x in coords:
            point = center + np.array([x, y])
            rec = {"point": [float(point[0]), float(point[1])]}
            try:
                jet = analytic_jet(patch, lights, point)
                geo = residuals_geometric(patch, jet, point,
                                          grad_eps=args.tol_grad,
                                          hess_eps=args.tol_hess)
                pde = residuals_pde(patch, jet, point,
                                    grad_eps=args.tol_grad, hess_eps=args.tol_hess)
                rec.update(geo.to_dict())
                rec["pde"] = pde.to_dict()
                worst = max(worst, geo.max_abs_normalized(), pde.max_abs_normalized())
            except ShadowedPoint as exc:
                rec["error"] = "shadowed"
                rec["light_index"] = exc.light_index
                shadowed += 1
            except (DegenerateGradient, ShadingFlowError) as exc:
                rec["error"] = type(exc).__name__
                rec["detail"] = str(exc)
            records.append(rec)
    report = {"max_normalized_residual": worst, "tolerance": args.tol,
              "n_points": len(records), "n_shadowed": shadowed,
              "points": records}
    if args.out:
        _write_json(args.out, report)
    print(f"max normalized residual {worst:.3e} over {len(records)} points "
          f"({shadowed} shadowed), tolerance {args.tol:.1e}")
    if shadowed:
        return EXIT_SHADOWED
    return EXIT_OK if worst <= args.tol else EXIT_VERIFY_FAIL


def _frame_from_args(args):
    if args.jet:
        return frame_from_jet(_parse_jet(args.jet), grad_eps=args.tol_grad)
    if args.raster:
        img, _ = read_pgm(args.raster)
        if not args.pixel:
            raise BadInputError("--pixel i,j is required with --raster")
        i, j = (int(v) for v in _parse_floats(args.pixel, 2, "--pixel"))
        return frame_from_jet(fd_jet(img, (i, j)), grad_eps=args.tol_grad)
    raise BadInputError("provide --jet or --raster/--pixel")


def _local_quadratic_jet(img: RasterImage, point) -> ImageJet2:
    """Least-squares quadratic fit of the raster on the 5x5 neighborhood of
    an image point; used to evaluate a jet at a sub-pixel location."""
    j0 = int(round(point[0] / img.spacing + (img.width - 1) / 2.0))
    i0 = int(round((img.height - 1) / 2.0 - point[1] / img.spacing))
    i0 = min(max(i0, 2), img.height - 3)
    j0 = min(max(j0, 2), img.width - 3)
    rows = []
    vals = []
    for i in range(i0 - 2, i0 + 3):
        for j in range(j0 - 2, j0 + 3):
            dx, dy = img.pixel_center(i, j) - point
            rows.append([1.0, dx, dy, dx * dx / 2, dx * dy, dy * dy / 2])
            vals.append(img.values[i, j])
    coef, *_ = np.linalg.lstsq(np.array(rows), np.array(vals), rcond=None)
    return ImageJet2(coef[0], coef[1], coef[2], coef[3], coef[4], coef[5])


def cmd_solve(args) -> int:
    opts = _solve_options(args)
    if args.mode == "frontal":
        if args.q:
            q1, q2, q3 = _parse_floats(args.q, 3, "--q")
            result = solve_frontal_parallel(QuadricTriple(q1, q2, q3), tolerance=args.tol)
        else:
            frame = _frame_from_args(args)
            result = solve_frontal_parallel(QuadricTriple.from_frame(frame),
                                            tolerance=args.tol)
            result = frontal_solutions_to_image(result, frame)
        payload = result.to_dict()
    elif args.mode == "second-order":
        frame = _frame_from_args(args)
        ab = _parse_floats(args.ab, 2, "--ab") if args.ab else (0.0, 0.0)
        result = solve_second_order(frame, ab, opts)
        payload = result.to_dict()
    elif args.mode == "sweep":
        frame = _frame_from_args(args)
        grid = _parse_floats(args.grid, 6, "--grid") if args.grid else \
            [-1.5, 1.5, 21, -1.5, 1.5, 21]
        a_values = np.linspace(grid[0], grid[1], int(grid[2]))
        b_values = np.linspace(grid[3], grid[4], int(grid[5]))
        results = sweep_tangent_planes(frame, a_values, b_values, opts)
        write_sweep_csv(results, args.out + ".csv")
        counts = [len(r) for r in results]
        empty = [list(r.tangent_plane) for r in results if len(r) == 0]
        payload = {"cells": [r.to_dict() for r in results],
                   "empty_region_cells": empty,
                   "a_values": [float(v) for v in a_values],
                   "b_values": [float(v) for v in b_values]}
        if args.fig:
            figures.save_sweep_figure(a_values, b_values, counts, args.fig)
    elif args.mode == "critical":
        if args.patch:
            patch = _parse_patch(args.patch)
            lights = _parse_lights(args.lights)
            center, extent = _parse_window(args.window)
            pts = find_critical_points(
                lambda p: analytic_jet(patch, lights, p), window=(center, extent))
            if not pts:
                raise BadInputError("no critical point found in the window")
            point = pts[0]
            jet = analytic_jet(patch, lights, point)
            ab = patch.gradient(point)
        else:
            img, _ = read_pgm(args.raster) if args.raster else (None, None)
            if img is None:
                raise BadInputError("critical mode needs --patch/--lights or --raster")
            pts = find_critical_points(img)
            if not pts:
                raise BadInputError("no critical point found in the raster")
            point = pts[0]
            jet = _local_quadratic_jet(img, point)
            if not args.ab:
                raise BadInputError("--ab a,b (tangent plane) is required with --raster")
            ab = _parse_floats(args.ab, 2, "--ab")
        # the measured gradient at a detected zero is only finite-difference
        # small; widen the acceptance accordingly
        crit_eps = max(2.0 * float(np.hypot(jet.Ix, jet.Iy)),
                       args.tol_crit * max(abs(jet.I), 1e-12))
        result = solve_critical_point(jet, ab, crit_eps=crit_eps, tolerance=args.tol)
        payload = result.to_dict()
        payload["critical_point"] = [float(point[0]), float(point[1])]
    else:
        raise BadInputError(f"unknown mode {args.mode!r}")

    if args.out:
        _write_json(args.out if args.mode != "sweep" else args.out + ".json", payload)
    if args.fig and args.mode in ("frontal", "second-order", "critical"):
        figures.save_solutions_figure(result, args.fig)
    if "cells" in payload:
        n = sum(len(c["solutions"]) for c in payload["cells"])
    else:
        n = len(payload.get("solutions", []))
    print(f"mode {args.mode}: {n} solution(s) written")
    return EXIT_OK


def _curve_from_expr(expr: str):
    import sympy

    x = sympy.Symbol("x")
    try:
        f = sympy.sympify(expr, locals={"x": x})
    except (sympy.SympifyError, SyntaxError) as exc:
        raise BadInputError(f"cannot parse curve expression: {exc}") from exc
    if f.free_symbols - {x}:
        raise BadInputError(f"curve expression may only use x, got {f.free_symbols}")
    fns = [sympy.lambdify(x, sympy.diff(f, x, k), "numpy") for k in range(4)]

    def curve(t: float):
        return tuple(float(fn(t)) for fn in fns)

    return curve


def cmd_solve1d(args) -> int:
    x0, x1 = _parse_floats(args.domain, 2, "--domain")
    truth = None
    if args.curve:
        truth = _curve_from_expr(args.curve)
        light = np.array(_parse_floats(args.light1d, 2, "--light1d"))
        light = light / np.linalg.norm(light)
        intensity = IntensityCurve.from_profile(truth, light, albedo=args.albedo)
    elif args.samples:
        data = np.loadtxt(args.samples, delimiter=",", skiprows=1)
        intensity = IntensityCurve.from_samples(data[:, 0], data[:, 1])
    else:
        raise BadInputError("provide --curve or --samples")

    if args.bc == "auto":
        if truth is None:
            raise BadInputError("--bc auto requires --curve ground truth")
        bc = (truth(x0)[0], truth(x1)[0], truth(x0)[1])
    else:
        bc = tuple(_parse_floats(args.bc, 3, "--bc (f0,f1,fp0)"))

    options = Solve1DOptions(sing_eps=args.tol_sing)
    solution = solve_1d(intensity, (x0, x1), bc, options)
    write_curve_csv(solution, args.out)
    if args.fig:
        figures.save_curve1d_figure(solution, args.fig,
                                    truth=(lambda t: truth(t)[0]) if truth else None,
                                    intensity=intensity)
    line = f"max residual {solution.max_residual:.3e}"
    if truth is not None:
        err = max(abs(f - truth(t)[0]) for t, f in zip(solution.xs, solution.f))
        line += f", max error vs truth {err:.3e}"
    print(line)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common_tolerances(p: argparse.ArgumentParser):
    p.add_argument("--tol", type=float, default=1e-8,
                   help="normalized residual / verification tolerance")
    p.add_argument("--tol-grad", dest="tol_grad", type=float, default=1e-9,
                   help="gradient degeneracy threshold")
    p.add_argument("--tol-crit", dest="tol_crit", type=float, default=1e-6,
                   help="critical-point threshold factor")
    p.add_argument("--tol-hess", dest="tol_hess", type=float, default=1e-9,
                   help="singular-Hessian threshold")
    p.add_argument("--tol-sing", dest="tol_sing", type=float, default=1e-6,
                   help="|f_xx| integration threshold (1D)")
    p.add_argument("--seed", type=int, default=0, help="recorded for reproducibility")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shadingflow",
                                 description="shading-flow rendering, verification, and inversion")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a patch to a 16-bit PGM raster")
    p.add_argument("--patch", required=True)
    p.add_argument("--lights", required=True)
    p.add_argument("--window", required=True, help="cx,cy,extent")
    p.add_argument("--res", type=int, default=65)
    p.add_argument("--out", required=True)
    p.add_argument("--ascii", action="store_true", help="write P2 instead of P5")
    p.add_argument("--fig", default=None)
    _add_common_tolerances(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("flow", help="extract the isophote flow field from a raster")
    p.add_argument("--raster", required=True)
    p.add_argument("--out", required=True, help="basename for .csv/.svg outputs")
    p.add_argument("--fig", default=None)
    _add_common_tolerances(p)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("verify", help="check the shading relations on a grid")
    p.add_argument("--patch", required=True)
    p.add_argument("--lights", required=True)
    p.add_argument("--window", required=True, help="cx,cy,extent")
    p.add_argument("--grid", dest="grid_n", type=int, default=5,
                   help="points per axis")
    p.add_argument("--out", default=None, help="JSON report path")
    _add_common_tolerances(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("solve", help="invert a shading frame")
    p.add_argument("--mode", required=True,
                   choices=["frontal", "second-order", "sweep", "critical"])
    p.add_argument("--q", default=None, help="q1,q2,q3 for frontal mode")
    p.add_argument("--jet", default=None, help="inline jet JSON")
    p.add_argument("--raster", default=None)
    p.add_argument("--pixel", default=None, help="i,j for --raster")
    p.add_argument("--ab", default=None, help="tangent plane a,b")
    p.add_argument("--grid", default=None,
                   help="amin,amax,na,bmin,bmax,nb for sweep mode")
    p.add_argument("--box", type=float, default=10.0, help="search box half-width")
    p.add_argument("--seeds", type=int, default=17, help="Newton seeds per axis")
    p.add_argument("--patch", default=None, help="critical mode: analytic patch")
    p.add_argument("--lights", default=None)
    p.add_argument("--window", default="0,0,1")
    p.add_argument("--out", required=True)
    p.add_argument("--fig", default=None)
    _add_common_tolerances(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("solve1d", help="reconstruct a 1D profile from intensity")
    p.add_argument("--curve", default=None, help="profile expression in x (ground truth)")
    p.add_argument("--light1d", default="0.2,0.98", help="unit 2-vector light for --curve")
    p.add_argument("--albedo", type=float, default=1.0)
    p.add_argument("--samples", default=None, help="CSV with x,I columns")
    p.add_argument("--domain", required=True, help="x0,x1")
    p.add_argument("--bc", required=True, help="f0,f1,fp0 or 'auto'")
    p.add_argument("--out", required=True)
    p.add_argument("--fig", default=None)
    _add_common_tolerances(p)
    p.set_defaults(func=cmd_solve1d)
    return ap


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ShadowedPoint as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHADOWED
    except (SingularityEncountered, NoBracket) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SINGULARITY
    except (BadInputError, Inconsistent, DegenerateGradient, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
