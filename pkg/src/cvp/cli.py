"""Command-line driver: minimize / certify / bounds / scan / exact / flag-check.

Single artifacts are emitted as JSON (sorted keys, stable float repr), scans
as CSV, so identical configuration and seed give byte-identical output.
Exit codes: 0 success, 2 invalid configuration or violated hypothesis,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import analysis, exact, measure as measure_mod, optimize
from .manifold import ManifoldModel
from .measure import action, density_action, measure_to_dict
from .optimize import AnnealSchedule


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_or_print(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _model_from_args(args) -> ManifoldModel:
    if args.manifold == "flag":
        if args.f is None:
            raise ValueError("--f is required for the flag manifold")
        return ManifoldModel.flag(args.f, args.tau)
    if getattr(args, "f", None) is not None:
        raise ValueError("--f is only valid for the flag manifold")
    return ManifoldModel(args.manifold, args.tau)


def _schedule_from_args(model: ManifoldModel, args) -> AnnealSchedule:
    overrides = {}
    for name in ("t_start", "t_end", "cooling", "steps_per_temp", "restarts"):
        val = getattr(args, name, None)
        if val is not None:
            overrides[name] = val
    return AnnealSchedule.default(model, seed=args.seed, **overrides)


def _add_model_args(p, manifolds=("circle", "sphere", "flag")):
    p.add_argument("--manifold", required=True, choices=manifolds)
    p.add_argument("--tau", required=True, type=float)
    p.add_argument("--f", type=int, default=None, help="flag manifold dimension")


def _add_schedule_args(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t-start", dest="t_start", type=float, default=None)
    p.add_argument("--t-end", dest="t_end", type=float, default=None)
    p.add_argument("--cooling", type=float, default=None)
    p.add_argument("--steps-per-temp", dest="steps_per_temp", type=int, default=None)
    p.add_argument("--restarts", type=int, default=None)


def _certificate_payload(model, meas, tol, grid_size) -> dict:
    report = analysis.certify(model, meas, test_grid_size=grid_size, tol=tol)
    payload = report.to_dict()
    if model.kind != "flag":
        payload["antipodal_obstruction"] = analysis.antipodal_obstruction(model)
        payload["obstruction_conflict"] = analysis.gt_obstruction_conflict(model, report)
    return payload


def cmd_minimize(args) -> int:
    model = _model_from_args(args)
    sched = _schedule_from_args(model, args)
    meas = optimize.anneal(model, args.m, sched)
    merged = optimize.merge_clusters(model, meas, args.merge_radius).measure.pruned()
    measure_doc = measure_to_dict(model, merged)
    cert_doc = _certificate_payload(model, merged, args.tol, args.test_grid)
    if args.out_measure is not None:
        _write_or_print(_dump(measure_doc), args.out_measure)
    if args.out_certificate is not None:
        _write_or_print(_dump(cert_doc), args.out_certificate)
    sys.stdout.write(_dump({"measure": measure_doc, "certificate": cert_doc}))
    return 0


def cmd_certify(args) -> int:
    model, meas = measure_mod.load_measure(args.measure)
    payload = _certificate_payload(model, meas, args.tol, args.test_grid)
    _write_or_print(_dump(payload), args.output)
    return 0


def cmd_bounds(args) -> int:
    model = ManifoldModel.sphere(args.tau)
    packings = [analysis.load_packing(p) for p in args.packing]
    best_found = None
    if args.measure is not None:
        mmodel, meas = measure_mod.load_measure(args.measure)
        if mmodel.kind != "sphere" or mmodel.tau != args.tau:
            raise ValueError("--measure must hold a sphere measure at the same tau")
        best_found = action(model, meas)
    t_grid = np.geomspace(args.t_min, args.t_max, args.t_count)
    report = analysis.bounds_report(
        model, packings=packings, best_found=best_found, t_grid=t_grid
    )
    payload = report.to_dict()
    gap = report.sandwich_gap()
    payload["sandwich_gap"] = None if gap == float("inf") else gap
    _write_or_print(_dump(payload), args.output)
    return 0


def cmd_scan(args) -> int:
    if args.tau_step <= 0:
        raise ValueError("--tau-step must be positive")
    n = int(np.floor((args.tau_max - args.tau_min) / args.tau_step + 1e-9)) + 1
    grid = [args.tau_min + i * args.tau_step for i in range(max(n, 0))]
    grid = [t for t in grid if t <= args.tau_max + 1e-12]
    rows = optimize.tau_scan(
        args.manifold,
        grid,
        args.m,
        f=args.f,
        seed=args.seed,
        cooling=args.cooling if args.cooling is not None else 0.93,
        steps_per_temp=args.steps_per_temp if args.steps_per_temp is not None else 80,
        restarts=args.restarts if args.restarts is not None else 2,
        merge_radius=args.merge_radius,
    )
    text = optimize.scan_csv_string(rows)
    _write_or_print(text, args.output)
    return 0


def cmd_exact(args) -> int:
    if args.construction == "chain":
        chain = exact.circle_chain_minimizer(args.tau, force=args.force)
        model = ManifoldModel.circle(args.tau)
        payload = {
            "m0": chain.m0,
            "gamma": chain.gamma,
            "action": chain.action,
            "measure": measure_to_dict(model, chain.measure),
            "certificate": _certificate_payload(model, chain.measure, args.tol, args.test_grid),
        }
    elif args.construction == "uniform":
        model = ManifoldModel.circle(args.tau)
        meas = exact.circle_uniform(args.m)
        payload = {
            "action": action(model, meas),
            "measure": measure_to_dict(model, meas),
            "certificate": _certificate_payload(model, meas, args.tol, args.test_grid),
        }
    elif args.construction == "octahedron":
        model = ManifoldModel.sphere(args.tau)
        meas = exact.octahedron()
        payload = {
            "action": action(model, meas),
            "nu0": analysis.spectral_closed_form(model).nu0,
            "measure": measure_to_dict(model, meas),
            "certificate": _certificate_payload(model, meas, args.tol, args.test_grid),
        }
    else:  # density
        model = ManifoldModel.sphere(args.tau)
        dm = exact.three_band_density()
        grid = dm.grid
        cosn = grid.nodes[:, 2]
        p2 = 0.5 * (3.0 * cosn**2 - 1.0)
        act = density_action(model, dm)
        nu0 = analysis.spectral_closed_form(model).nu0
        payload = {
            "mass": grid.integrate(dm.values),
            "moment_cos": grid.integrate(dm.values * cosn),
            "moment_p2": grid.integrate(dm.values * p2),
            "action": act,
            "nu0": nu0,
            "action_minus_nu0": act - nu0,
        }
    _write_or_print(_dump(payload), args.output)
    return 0


def cmd_flag_check(args) -> int:
    witness = exact.flag_negative_witness(args.f, args.tau, args.eps)
    model = ManifoldModel.flag(args.f, args.tau)
    from .manifold import kernel_matrix

    kernel_gram = kernel_matrix(model, witness.points)
    payload = {
        "f": args.f,
        "tau": args.tau,
        "eps": args.eps,
        "gram": witness.gram.tolist(),
        "det": witness.det,
        "det_negative": witness.det < 0,
        "kernel_gram_max_diff": float(np.max(np.abs(kernel_gram - witness.gram))),
        "gt_threshold": analysis.flag_gt_threshold(args.f),
    }
    _write_or_print(_dump(payload), args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvp",
        description="Causal variational principles: minimize, certify and bound "
        "actions of measures on the circle, the sphere and flag manifolds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("minimize", help="anneal a weighted measure and certify it")
    _add_model_args(p)
    p.add_argument("--m", required=True, type=int, help="number of support points")
    _add_schedule_args(p)
    p.add_argument("--merge-radius", dest="merge_radius", type=float, default=1e-3)
    p.add_argument("--tol", type=float, default=1e-2, help="certification tolerance")
    p.add_argument("--test-grid", dest="test_grid", type=int, default=2048)
    p.add_argument("--out-measure", dest="out_measure", default=None)
    p.add_argument("--out-certificate", dest="out_certificate", default=None)
    p.set_defaults(func=cmd_minimize)

    p = sub.add_parser("certify", help="certify a measure loaded from JSON")
    p.add_argument("--measure", required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--test-grid", dest="test_grid", type=int, default=2048)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("bounds", help="lower/upper bounds for the sphere action")
    p.add_argument("--tau", required=True, type=float)
    p.add_argument("--packing", action="append", default=[],
                   help="packing file (repeatable)")
    p.add_argument("--measure", default=None, help="measure JSON for best_found")
    p.add_argument("--t-min", dest="t_min", type=float, default=0.01)
    p.add_argument("--t-max", dest="t_max", type=float, default=2.0)
    p.add_argument("--t-count", dest="t_count", type=int, default=14)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("scan", help="tau continuation scan, CSV output")
    p.add_argument("--manifold", required=True, choices=("circle", "sphere", "flag"))
    p.add_argument("--f", type=int, default=None)
    p.add_argument("--tau-min", dest="tau_min", required=True, type=float)
    p.add_argument("--tau-max", dest="tau_max", required=True, type=float)
    p.add_argument("--tau-step", dest="tau_step", required=True, type=float)
    p.add_argument("--m", required=True, type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cooling", type=float, default=None)
    p.add_argument("--steps-per-temp", dest="steps_per_temp", type=int, default=None)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--merge-radius", dest="merge_radius", type=float, default=1e-3)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("exact", help="closed-form constructions")
    p.add_argument("construction", choices=("chain", "uniform", "octahedron", "density"))
    p.add_argument("--tau", required=True, type=float)
    p.add_argument("--m", type=int, default=4, help="uniform construction size")
    p.add_argument("--force", action="store_true",
                   help="build the chain below the theorem's tau_d hypothesis")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--test-grid", dest="test_grid", type=int, default=2048)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("flag-check", help="negative-eigenvalue witness on the flag")
    p.add_argument("--f", required=True, type=int)
    p.add_argument("--tau", required=True, type=float)
    p.add_argument("--eps", required=True, type=float)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_flag_check)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
