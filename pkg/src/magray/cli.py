"""Command-line front end.

Subcommands build a scene (builtin name or JSON file), run one piece of the
toolkit, and write JSON to stdout or CSV to a file.  Exit codes: 0 on
success, 1 when a requested check or solve misses its tolerance, 2 on bad
input or an internal failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import adjoint as ad
from . import calculus as ca
from . import expressions as ex
from . import flow
from . import geometry as geo
from . import harmonics as hm
from . import harness
from . import scene as sc
from . import transport
from .errors import MagrayError


def _build_scene(args):
    if getattr(args, "scene_file", None):
        with open(args.scene_file) as fh:
            return sc.scene_from_dict(json.load(fh))
    return sc.builtin_scene(args.scene)


def _add_scene_args(p):
    p.add_argument("--scene", default="euclidean",
                   help="builtin scene name (default: euclidean)")
    p.add_argument("--scene-file", default=None,
                   help="JSON scene description (overrides --scene)")


def _out_stream(path):
    return open(path, "w", newline="") if path else sys.stdout


def _emit_json(obj, path=None):
    text = json.dumps(obj, indent=2)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _boundary_rows(scene, data, writer):
    bg = geo.boundary_grid(scene)
    writer.writerow(["i_s", "i_phi", "s", "phi"]
                    + [f"{p}{c}" for c in range(scene.n) for p in ("re", "im")])
    for i in range(bg.ns):
        for j in range(bg.nphi):
            row = [i, j, f"{bg.s[i]:.10f}", f"{bg.phi[j]:.10f}"]
            for c in range(scene.n):
                v = data[i, j, c]
                row += [f"{v.real:.12e}", f"{v.imag:.12e}"]
            writer.writerow(row)


def _read_boundary_csv(scene, path):
    bg = geo.boundary_grid(scene)
    data = np.zeros((bg.ns, bg.nphi, scene.n), dtype=complex)
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        ncols = (len(header) - 4) // 2
        if ncols < scene.n:
            raise MagrayError(f"data file has {ncols} components, "
                              f"scene needs {scene.n}")
        for row in rd:
            i, j = int(row[0]), int(row[1])
            for c in range(scene.n):
                data[i, j, c] = float(row[4 + 2 * c]) + 1j * float(row[5 + 2 * c])
    return data


def _parse_modefn(scene, spec):
    """{"modes": {"0": ["expr", ...], ...}} -> band-limited fiber function."""
    modes = {}
    for k, comps in spec["modes"].items():
        if len(comps) != scene.n:
            raise MagrayError(f"mode {k}: expected {scene.n} components")
        modes[int(k)] = tuple(ex.parse(c) for c in comps)
    return hm.ModeFn(n=scene.n, modes=modes)


# ---------------------------------------------------------------------------
# subcommands

def cmd_trace(args):
    scn = _build_scene(args)
    res = flow._trace_to_boundary(scn, [args.x0], [args.y0], [args.theta0],
                                  sign=-1 if args.backward else 1,
                                  dt=args.dt, tmode="left",
                                  store_stride=args.stride if args.nodes else 0)
    out = {"tau": float(res["tau"][0]), "trapped": bool(res["trapped"][0]),
           "exit_x": float(res["x"][0]), "exit_y": float(res["y"][0]),
           "exit_theta": float(res["theta"][0]),
           "transport_drift": float(res["drift"])}
    if args.nodes:
        with _out_stream(args.nodes) as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "theta"])
            for (t, x, y, th, _, act) in res["snaps"]:
                if act[0]:
                    w.writerow([f"{t:.6f}", f"{x[0]:.12f}", f"{y[0]:.12f}",
                                f"{th[0]:.12f}"])
            w.writerow([f"{out['tau']:.6f}", f"{out['exit_x']:.12f}",
                        f"{out['exit_y']:.12f}", f"{out['exit_theta']:.12f}"])
    _emit_json(out, args.output)
    return 0


def cmd_scatter(args):
    scn = _build_scene(args)
    ir = flow.inflow_rays(scn)
    bg = geo.boundary_grid(scn)
    S, F = (a.ravel() for a in np.meshgrid(bg.s, bg.phi, indexing="ij"))
    with _out_stream(args.output) as fh:
        w = csv.writer(fh)
        w.writerow(["s", "phi", "tau", "exit_s", "exit_phi"])
        for k in range(S.size):
            w.writerow([f"{S[k]:.10f}", f"{F[k]:.10f}",
                        f"{ir.tau.ravel()[k]:.10f}",
                        f"{ir.exit_s.ravel()[k]:.10f}",
                        f"{ir.exit_phi.ravel()[k]:.10f}"])
    return 0


def cmd_transform(args):
    scn = _build_scene(args)
    with open(args.field) as fh:
        spec = json.load(fh)
    data = transport.ray_transform(scn, _parse_modefn(scn, spec))
    with _out_stream(args.output) as fh:
        _boundary_rows(scn, data, csv.writer(fh))
    return 0


def cmd_scatterdata(args):
    scn = _build_scene(args)
    sd = transport.scattering_data(scn)
    bg = geo.boundary_grid(scn)
    n = scn.n
    with _out_stream(args.output) as fh:
        w = csv.writer(fh)
        head = ["i_s", "i_phi", "s", "phi"]
        for i in range(n):
            for j in range(n):
                head += [f"C{i}{j}_re", f"C{i}{j}_im"]
        w.writerow(head)
        for i in range(bg.ns):
            for j in range(bg.nphi):
                row = [i, j, f"{bg.s[i]:.10f}", f"{bg.phi[j]:.10f}"]
                for a in range(n):
                    for b in range(n):
                        v = sd.C[i, j, a, b]
                        row += [f"{v.real:.12e}", f"{v.imag:.12e}"]
                w.writerow(row)
    return 0


def cmd_adjoint(args):
    scn = _build_scene(args)
    data = _read_boundary_csv(scn, args.data)
    g = geo.sm_grid(scn)
    gx, gy = g.meshgrid()
    xm, ym = gx[g.mask], gy[g.mask]
    with _out_stream(args.output) as fh:
        w = csv.writer(fh)
        if args.which == "order0":
            f = ad.adjoint_transform(scn, data, "order0")
            w.writerow(["x", "y"] + [f"{p}{c}" for c in range(scn.n)
                                     for p in ("re", "im")])
            for p in range(xm.size):
                row = [f"{xm[p]:.10f}", f"{ym[p]:.10f}"]
                for c in range(scn.n):
                    row += [f"{f[p, c].real:.12e}", f"{f[p, c].imag:.12e}"]
                w.writerow(row)
        else:
            om = ad.adjoint_transform(scn, data, "order1")
            w.writerow(["x", "y"]
                       + [f"{nm}{c}_{p}" for c in range(scn.n)
                          for nm in ("ax", "ay") for p in ("re", "im")])
            for p in range(xm.size):
                row = [f"{xm[p]:.10f}", f"{ym[p]:.10f}"]
                for c in range(scn.n):
                    for comp in (om.ax, om.ay):
                        row += [f"{comp[p, c].real:.12e}",
                                f"{comp[p, c].imag:.12e}"]
                w.writerow(row)
    return 0


def cmd_probe_symbol(args):
    scn = _build_scene(args)
    kx, ky = (float(v) for v in args.kappa.split(","))
    res = ad.normal_probe(scn, (kx, ky), args.block, width=args.width)
    res["kappa"] = [kx, ky]
    _emit_json(res, args.output)
    return 0


def cmd_solve_adjoint(args):
    scn = _build_scene(args)
    with open(args.targets) as fh:
        spec = json.load(fh)
    f = tuple(ex.parse(c) for c in spec["f"])
    omega = ca.oneform(tuple(ex.parse(c) for c in spec["omega"]["ax"]),
                       tuple(ex.parse(c) for c in spec["omega"]["ay"]),
                       n=scn.n)
    basis = None
    if args.basis:
        basis = tuple(int(v) for v in args.basis.split(","))
    w, rep = ad.solve_adjoint_pair(scn, f, omega, maxiter=args.maxiter,
                                   rtol=args.rtol,
                                   phi_factor=args.phi_factor, basis=basis)
    if args.solution:
        with open(args.solution, "w", newline="") as fh:
            _boundary_rows(scn, w, csv.writer(fh))
    if args.history:
        harness._write_history_csv(args.history, rep["history"])
    out = {k: rep[k] for k in ("relres", "iterations", "compatibility",
                               "converged")}
    _emit_json(out, args.output)
    return 0 if rep["converged"] else 1


def cmd_range(args):
    scn = _build_scene(args)
    if args.data:
        w = _read_boundary_csv(scn, args.data)
    else:
        rng = np.random.default_rng(args.seed)
        w = harness.random_boundary_data(rng, scn, jmax=2, kmax=1,
                                         envelope_pow=4)
    rel, compat = harness.range_identity_residual(scn, w)
    out = {"residual": rel,
           "compatibility": {str(k): v for k, v in compat.items()}}
    _emit_json(out, args.output)
    return 0 if rel < args.tol else 1


def cmd_verify(args):
    names = args.checks.split(",") if args.checks else None
    if names:
        unknown = [n for n in names if n not in harness.CHECKS]
        if unknown:
            raise MagrayError(f"unknown checks: {', '.join(unknown)}")
    rep = harness.run_suite(names=names, report_dir=args.report_dir)
    if rep.had_error:
        return 2
    return 0 if rep.passed else 1


# ---------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(
        prog="magray",
        description="Attenuated ray transforms on magnetic disk geometries.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trace", help="trace a single ray to the rim")
    _add_scene_args(p)
    p.add_argument("--x0", type=float, required=True)
    p.add_argument("--y0", type=float, required=True)
    p.add_argument("--theta0", type=float, required=True)
    p.add_argument("--backward", action="store_true")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--stride", type=int, default=10,
                   help="node-storage stride for --nodes")
    p.add_argument("--nodes", default=None, help="CSV path for ray nodes")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(fn=cmd_trace)

    p = sub.add_parser("scatter", help="exit time and scattering map table")
    _add_scene_args(p)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(fn=cmd_scatter)

    p = sub.add_parser("transform", help="ray transform of a fiber function")
    _add_scene_args(p)
    p.add_argument("--field", required=True,
                   help='JSON file: {"modes": {"0": ["expr", ...], ...}}')
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(fn=cmd_transform)

    p = sub.add_parser("scatterdata", help="attenuation scattering data table")
    _add_scene_args(p)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(fn=cmd_scatterdata)

    p = sub.add_parser("adjoint", help="adjoint transform of boundary data")
    _add_scene_args(p)
    p.add_argument("--data", required=True, help="boundary-data CSV")
    p.add_argument("--which", choices=("order0", "order1"), default="order0")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(fn=cmd_adjoint)

    p = sub.add_parser("probe-symbol",
                       help="normal-operator block amplitude at a frequency")
    _add_scene_args(p)
    p.add_argument("--kappa", required=True, help="kx,ky")
    p.add_argument("--block", choices=("00", "01", "10", "11"), default="00")
    p.add_argument("--width", type=float, default=0.25)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(fn=cmd_probe_symbol)

    p = sub.add_parser("solve-adjoint",
                       help="boundary data with prescribed adjoint outputs")
    _add_scene_args(p)
    p.add_argument("--targets", required=True,
                   help='JSON file: {"f": [...], "omega": {"ax": [...], '
                        '"ay": [...]}}')
    p.add_argument("--maxiter", type=int, default=500)
    p.add_argument("--rtol", type=float, default=1e-3)
    p.add_argument("--phi-factor", type=float, default=1.0)
    p.add_argument("--basis", default=None,
                   help="jmax,mmax smooth-subspace restriction")
    p.add_argument("--solution", default=None, help="CSV path for w")
    p.add_argument("--history", default=None, help="CSV path for residuals")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(fn=cmd_solve_adjoint)

    p = sub.add_parser("range", help="boundary range-identity residual")
    _add_scene_args(p)
    p.add_argument("--data", default=None,
                   help="boundary-data CSV (default: random smooth data)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-2)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(fn=cmd_range)

    p = sub.add_parser("verify", help="run the verification suite")
    p.add_argument("--checks", default=None,
                   help="comma-separated check names (default: all)")
    p.add_argument("--report-dir", default=None)
    p.set_defaults(fn=cmd_verify)

    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except MagrayError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
