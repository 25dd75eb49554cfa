"""
Command-line front end: scenarios, experiment orchestration and output files.

Subcommands
-----------
simulate   reference run; trajectory, energy drift and a JSON summary
ksep       reference and rotated runs; K-separation series and fitted rates
sweep      K-separation for several tolerances on aligned grids
poincare   fiberized section crossings of one pair vector or body
fiberviz   stereographic projections of fibers over given points
estimate   critical time or tolerance from a growth rate

Exit codes: 0 success, 2 input error, 3 integrator failure,
4 diagnostic failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from kshopf import diagnostics as dg
from kshopf import ks_core
from kshopf.csvio import format_value, write_csv
from kshopf.errors import DiagnosticError, IntegrationError, KSError, ScenarioError
from kshopf.gbs import IntegratorConfig, Plane, integrate
from kshopf.nbody_reg import BodySet, RegularizedSystem, init_state
from kshopf.svgplot import line_plot

EXIT_OK, EXIT_INPUT, EXIT_INTEGRATOR, EXIT_DIAGNOSTIC = 0, 2, 3, 4
DEFAULT_CHECKPOINTS = 2000
MIN_TOL = 1e-14

_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}

SCENARIO_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "bodies"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "bodies": {
            "type": "array",
            "minItems": 2,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["mass", "position", "velocity"],
                "properties": {
                    "mass": {"type": "number", "exclusiveMinimum": 0},
                    "position": _vec3,
                    "velocity": _vec3,
                },
            },
        },
        "theta_ref_deg": {"type": "number"},
        "vartheta_deg": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "tolerances": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "number", "minimum": 1e-15, "maximum": 1e-3},
        },
        "t_end": {"type": "number", "exclusiveMinimum": 0},
        "s_end": {"type": "number", "exclusiveMinimum": 0},
        "checkpoints": {"type": "integer", "minimum": 2},
        "output": {"type": "string"},
    },
    "not": {"required": ["t_end", "s_end"]},
}

BUILTIN = {
    "pythagorean": {
        "name": "pythagorean",
        "bodies": [
            {"mass": 3.0, "position": [1.0, 3.0, 0.0], "velocity": [0.0, 0.0, 0.0]},
            {"mass": 4.0, "position": [-2.0, -1.0, 0.0], "velocity": [0.0, 0.0, 0.0]},
            {"mass": 5.0, "position": [1.0, -1.0, 0.0], "velocity": [0.0, 0.0, 0.0]},
        ],
        "theta_ref_deg": 0.0,
        "vartheta_deg": [120.0],
        "tolerances": [1e-13],
        "t_end": 100.0,
        "checkpoints": DEFAULT_CHECKPOINTS,
    },
    "binary-scattering": {
        "name": "binary-scattering",
        "bodies": [
            {"mass": 5.0, "position": [0.6245, 0.6207, 0.0], "velocity": [-0.7873, 0.0200, -0.0100]},
            {"mass": 5.0, "position": [0.6245, -0.6207, 0.0], "velocity": [0.7873, 0.0200, 0.0100]},
            {"mass": 3.0, "position": [3.0, 3.0, 3.0], "velocity": [-0.3, -0.3, -0.3]},
            {"mass": 3.0, "position": [-5.0817, -3.0, -3.0], "velocity": [0.3, 0.2333, 0.3]},
        ],
        "theta_ref_deg": 90.0,
        "vartheta_deg": [30.0],
        "tolerances": [1e-11, 1e-13],
        "t_end": 100.0,
        "checkpoints": DEFAULT_CHECKPOINTS,
    },
}


@dataclass
class Scenario:
    name: str
    bodies: BodySet
    theta_ref: float = 0.0
    varthetas: tuple = (math.radians(30.0),)
    tolerances: tuple = (1e-13,)
    t_end: float | None = 100.0
    s_end: float | None = None
    checkpoints: int = DEFAULT_CHECKPOINTS
    output: str | None = None


def _reject_constant(name):
    raise ScenarioError(f"non-finite number {name!r} is not allowed")


def scenario_from_dict(data: dict, source: str = "<scenario>") -> Scenario:
    """Validate a decoded scenario document against the schema and build a Scenario."""
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        parts = [str(p) for p in err.absolute_path]
        if err.validator in ("required", "additionalProperties") and isinstance(err.instance, dict):
            # name the missing or unexpected key itself
            if err.validator == "required":
                names = [k for k in err.validator_value if k not in err.instance]
            else:
                names = sorted(k for k in err.instance if k not in err.schema.get("properties", {}))
            parts += names[:1]
        where = "/".join(parts) or "(root)"
        raise ScenarioError(err.message, path=f"{source}:{where}")
    for key, val in _walk_numbers(data):
        if not math.isfinite(val):
            raise ScenarioError("non-finite number", path=f"{source}:{key}")
    bodies = BodySet([b["mass"] for b in data["bodies"]],
                     [b["position"] for b in data["bodies"]],
                     [b["velocity"] for b in data["bodies"]])
    t_end = data.get("t_end")
    s_end = data.get("s_end")
    if t_end is None and s_end is None:
        t_end = 100.0
    return Scenario(
        name=data["name"],
        bodies=bodies,
        theta_ref=math.radians(data.get("theta_ref_deg", 0.0)),
        varthetas=tuple(math.radians(v) for v in data.get("vartheta_deg", [30.0])),
        tolerances=tuple(float(v) for v in data.get("tolerances", [1e-13])),
        t_end=None if t_end is None else float(t_end),
        s_end=None if s_end is None else float(s_end),
        checkpoints=int(data.get("checkpoints", DEFAULT_CHECKPOINTS)),
        output=data.get("output"),
    )


def _walk_numbers(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _walk_numbers(v, f"{prefix}/{k}" if prefix else k)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _walk_numbers(v, f"{prefix}/{i}")
    elif isinstance(obj, float):
        yield prefix, obj


def parse_scenario(source: str) -> Scenario:
    """Scenario from a built-in name or a JSON file path."""
    if source in BUILTIN:
        return scenario_from_dict(copy.deepcopy(BUILTIN[source]), source)
    path = Path(source)
    if not path.is_file():
        raise ScenarioError(f"no such scenario file or built-in name (built-ins: "
                            f"{', '.join(sorted(BUILTIN))})", path=source)
    try:
        data = json.loads(path.read_text(), parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"malformed JSON: {exc}", path=source) from exc
    return scenario_from_dict(data, source)


# ---------------------------------------------------------------- runs


@dataclass
class RunSetup:
    system: RegularizedSystem
    config: IntegratorConfig
    s_end: float
    stop: object


def _setup(sc: Scenario, tol: float, y0) -> RunSetup:
    system = RegularizedSystem(sc.bodies.masses)
    if sc.s_end is not None:
        spacing = sc.s_end / sc.checkpoints
        return RunSetup(system, IntegratorConfig(tol=tol, checkpoint_spacing=spacing), sc.s_end, None)
    # grid sized from the initial time-transformation rate; the run stops at t_end
    lam0 = system.lagrangian(y0)
    spacing = sc.t_end * lam0 / sc.checkpoints
    t_end = sc.t_end

    def stop(s, y):
        return y[-1] >= t_end

    s_bound = spacing * 1e6
    cfg = IntegratorConfig(tol=tol, checkpoint_spacing=spacing, max_steps=5_000_000)
    return RunSetup(system, cfg, s_bound, stop)


def run_pair(sc: Scenario, tol: float, vartheta: float):
    """Reference run (angle 0) and rotated run on a shared grid."""
    y_ref = init_state(sc.bodies, 0.0, sc.theta_ref).to_array()
    y_rot = init_state(sc.bodies, vartheta, sc.theta_ref).to_array()
    setup = _setup(sc, tol, y_ref)
    ref = integrate(setup.system, y_ref, setup.s_end, setup.config, stop=setup.stop)
    rot = integrate(setup.system, y_rot, setup.s_end, setup.config, stop=setup.stop)
    return setup.system, ref, rot


def _trajectory_rows(system, traj):
    for s, y in zip(traj.s, traj.y):
        q, qd = system.cartesian(y)
        row = [s, y[-1]]
        for i in range(q.shape[0]):
            row += [*q[i], *qd[i]]
        yield row


def _trajectory_header(n):
    cols = ["s", "t"]
    for i in range(1, n + 1):
        cols += [f"q{i}x", f"q{i}y", f"q{i}z", f"v{i}x", f"v{i}y", f"v{i}z"]
    return cols


def _write_json(path, data):
    def clean(v):
        if isinstance(v, float):
            return float(format_value(v)) if math.isfinite(v) else None
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, np.generic):
            return clean(v.item())
        return v

    Path(path).write_text(json.dumps(clean(data), indent=2, sort_keys=True) + "\n")


def run_simulate(sc: Scenario, tol: float, vartheta: float, out: Path) -> dict:
    """Integrate one run; write trajectory.csv, energy.csv, summary.json."""
    y0 = init_state(sc.bodies, vartheta, sc.theta_ref).to_array()
    setup = _setup(sc, tol, y0)
    system = setup.system
    traj = integrate(system, y0, setup.s_end, setup.config, stop=setup.stop)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "trajectory.csv", _trajectory_header(system.n), _trajectory_rows(system, traj))
    t, drift = dg.energy_drift(traj, system)
    write_csv(out / "energy.csv", ("s", "t", "drift"), zip(traj.s, t, drift))
    esc = dg.detect_escape(traj, system)
    upto = len(traj) if esc is None else esc.index + 1
    summary = {
        "scenario": sc.name,
        "tol": tol,
        "theta_ref_deg": round(math.degrees(sc.theta_ref), 10),
        "vartheta_deg": round(math.degrees(vartheta), 10),
        "E0": system.energy(traj.y[0]),
        "final_drift": float(drift[-1]),
        "max_drift": float(np.max(np.abs(drift))),
        "max_drift_until_escape": float(np.max(np.abs(drift[:upto]))),
        "t_final": float(traj.t[-1]),
        "s_final": float(traj.s[-1]),
        "t_esc": None if esc is None else esc.t_esc,
        "t_esc_detected": None if esc is None else esc.t_detect,
        "escaper": None if esc is None else [i + 1 for i in esc.bodies],
        "max_consistency_defect": max(system.consistency_defect(y) for y in traj.y),
        "steps": traj.n_steps,
        "rejected": traj.n_rejected,
        "checkpoints": len(traj),
    }
    _write_json(out / "summary.json", summary)
    line_plot(out / "energy.svg", [("", t, np.abs(drift))], "t", "|E - E0| / |E0|", logy=True)
    return summary


def analyze_ksep(sc: Scenario, tol: float, vartheta: float):
    """Run the pair of integrations and evaluate the K-separation with fits."""
    if vartheta == 0.0 or math.isclose(math.remainder(vartheta, 2 * math.pi), 0.0, abs_tol=1e-15):
        raise ScenarioError("vartheta must be nonzero: the rotated run would coincide with "
                            "the reference run", path="--vartheta")
    system, ref, rot = run_pair(sc, tol, vartheta)
    series = dg.k_separation(ref, rot, vartheta, theta_ref=sc.theta_ref, tol=tol)
    esc = dg.detect_escape(ref, system)
    series.t_esc = None if esc is None else esc.t_esc
    tcr = dg.detect_transition(series)
    summary = {
        "scenario": sc.name,
        "tol": tol,
        "theta_ref_deg": round(math.degrees(sc.theta_ref), 10),
        "vartheta_deg": round(math.degrees(vartheta), 10),
        "t_cr": tcr,
        "t_esc": series.t_esc,
        "gamma_t": None,
        "gamma_s": None,
        "fit_residual": None,
        "t_cr_predicted": None,
    }
    try:
        fit = dg.fit_gamma(series, t_max=series.t_esc)
        summary.update(gamma_t=fit.gamma_t, gamma_s=fit.gamma_s, fit_residual=fit.residual,
                       fit_samples=fit.n_samples,
                       t_cr_predicted=dg.estimate_tcr(fit.gamma_t, tol))
    except DiagnosticError as exc:
        summary["fit_error"] = str(exc)
    stable = tcr is None or (series.t_esc is not None and tcr > series.t_esc)
    summary["verdict"] = "no transition" if stable else "transition"
    return system, ref, rot, series, summary


def run_ksep(sc: Scenario, tol: float, vartheta: float, out: Path) -> dict:
    system, ref, rot, series, summary = analyze_ksep(sc, tol, vartheta)
    out.mkdir(parents=True, exist_ok=True)
    dg.write_series_csv(out / "ksep.csv", series)
    hdr = _trajectory_header(system.n)
    write_csv(out / "trajectory_ref.csv", hdr, _trajectory_rows(system, ref))
    write_csv(out / "trajectory_rot.csv", hdr, _trajectory_rows(system, rot))
    _write_json(out / "summary.json", summary)
    line_plot(out / "ksep.svg", [("", series.t, series.d)], "t", "d_K", logy=True,
              title=f"{sc.name}: vartheta = {math.degrees(vartheta):g} deg, tol = {tol:g}")
    return summary


def run_sweep(sc: Scenario, tols, vartheta: float, out: Path) -> list[dict]:
    tols = sorted({float(t) for t in tols}, reverse=True)
    if len(tols) < 2:
        raise ScenarioError("a sweep needs at least two distinct tolerances", path="--tol")
    for t in tols:
        if t < MIN_TOL:
            raise ScenarioError(f"tolerance {t:g} is below the double-precision floor {MIN_TOL:g}",
                                path="--tol")
    out.mkdir(parents=True, exist_ok=True)
    rows, curves, combined = [], [], []
    for tol in tols:
        _, _, _, series, summary = analyze_ksep(sc, tol, vartheta)
        dg.write_series_csv(out / f"ksep_tol{tol:.0e}.csv", series)
        combined += [(tol, s, t, d) for s, t, d in zip(series.s, series.t, series.d)]
        curves.append((f"tol = {tol:g}", series.t, series.d))
        rows.append(summary)
    write_csv(out / "sweep.csv", ("tol", "s", "t", "dK"), combined)
    write_csv(out / "sweep_summary.csv", ("tol", "gamma_t", "gamma_s", "t_cr", "t_cr_predicted"),
              ((r["tol"], *(math.nan if r[k] is None else r[k]
                            for k in ("gamma_t", "gamma_s", "t_cr", "t_cr_predicted")))
               for r in rows))
    _write_json(out / "summary.json", rows)
    line_plot(out / "sweep.svg", curves, "t", "d_K", logy=True, title=sc.name)
    return rows


def parse_plane(text: str) -> Plane:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ScenarioError(f"cannot parse plane {text!r}", path="--plane") from exc
    if len(vals) != 6 or not all(math.isfinite(v) for v in vals):
        raise ScenarioError("plane needs six finite numbers nx,ny,nz,px,py,pz", path="--plane")
    try:
        return Plane(vals[:3], vals[3:])
    except ValueError as exc:
        raise ScenarioError(str(exc), path="--plane") from exc


def run_poincare(sc: Scenario, tol: float, vartheta: float, plane: Plane, selector,
                 nodes: int, out: Path) -> dict:
    y0 = init_state(sc.bodies, vartheta, sc.theta_ref).to_array()
    setup = _setup(sc, tol, y0)
    traj = integrate(setup.system, y0, setup.s_end, setup.config, stop=setup.stop)
    crossings = dg.poincare(traj, plane, selector, system=setup.system,
                            theta_ref=sc.theta_ref, n_nodes=nodes)
    out.mkdir(parents=True, exist_ok=True)
    dg.write_crossings_csv(out / "crossings.csv", crossings)
    summary = {"scenario": sc.name, "crossings": len(crossings),
               "selector": [selector[0], selector[1] + 1],
               "max_dist_prev": max((c.dist_prev for c in crossings[1:]), default=None)}
    _write_json(out / "summary.json", summary)
    return summary


def _view(p, azimuth=math.radians(35.0), elevation=math.radians(20.0)):
    ca, sa = math.cos(azimuth), math.sin(azimuth)
    ce, se = math.cos(elevation), math.sin(elevation)
    x = ca * p[0] - sa * p[1]
    y = -se * (sa * p[0] + ca * p[1]) + ce * p[2]
    return x, y


def run_fiberviz(points, n: int, theta_ref: float, out: Path, pole_axis: int = 4) -> int:
    if n < 2:
        raise ScenarioError("need at least two samples per fiber", path="--nodes")
    out.mkdir(parents=True, exist_ok=True)
    rows, curves = [], []
    for f, x in enumerate(points):
        if not np.any(np.asarray(x) != 0.0):
            raise ScenarioError("fiber points must be nonzero", path=f"--point[{f}]")
        fr = ks_core.fiber_rows(x, n, theta_ref, pole_axis)
        fr.append(fr[0])  # close the loop
        rows += [(f, *r) for r in fr]
        xy = np.array([_view(r[5:8]) for r in fr])
        curves.append((f"fiber {f}", xy[:, 0], xy[:, 1]))
    write_csv(out / "fibers.csv", ("fiber",) + ks_core.FIBER_CSV_HEADER, rows)
    line_plot(out / "fibers.svg", curves, "view x", "view y")
    return len(points)


def arc_points(n: int, radius: float = 1.0):
    """Points on a half great circle of the sphere of given radius (x-z plane)."""
    return [radius * np.array([math.cos(a), 0.0, math.sin(a)])
            for a in np.linspace(-0.5 * math.pi, 0.5 * math.pi, n)]


# ---------------------------------------------------------------- CLI


def _tol_list(text):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad tolerance list {text!r}") from exc
    return vals


def _point(text):
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("a point needs three comma-separated numbers")
    return np.array(vals)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kshopf", description=__doc__.split("\n\n")[0].strip())
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, sweep=False):
        sp.add_argument("--scenario", required=True,
                        help="built-in name (pythagorean, binary-scattering) or JSON path")
        if sweep:
            sp.add_argument("--tol", type=_tol_list, help="comma-separated tolerances")
        else:
            sp.add_argument("--tol", type=float, help="integration tolerance")
        sp.add_argument("--theta-ref", type=float, help="reference angle of the inverse map [deg]")
        sp.add_argument("--vartheta", type=float, help="fiber angle of the rotated run [deg]")
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--t-end", type=float, help="final physical time")
        g.add_argument("--s-end", type=float, help="final fictitious time")
        sp.add_argument("--checkpoints", type=int, help="approximate number of checkpoints")
        sp.add_argument("--out", type=Path, help="output directory")

    common(sub.add_parser("simulate", help="integrate one run"))
    common(sub.add_parser("ksep", help="K-separation of a rotated run"))
    common(sub.add_parser("sweep", help="K-separation for several tolerances"), sweep=True)
    pc = sub.add_parser("poincare", help="fiberized Poincare section")
    common(pc)
    pc.add_argument("--plane", required=True, help="nx,ny,nz,px,py,pz")
    sel = pc.add_mutually_exclusive_group()
    sel.add_argument("--pair", type=int, help="pair index (1-based, lexicographic order)")
    sel.add_argument("--body", type=int, help="body index (1-based)")
    pc.add_argument("--nodes", type=int, default=64, help="quadrature nodes of the fiber metric")

    fv = sub.add_parser("fiberviz", help="stereographic projection of fibers")
    fv.add_argument("--point", type=_point, action="append", default=[],
                    help="Cartesian point x,y,z (repeatable)")
    fv.add_argument("--arc", type=int, default=0,
                    help="add this many points along a half circle of radius --radius")
    fv.add_argument("--radius", type=float, default=1.0)
    fv.add_argument("--nodes", type=int, default=256, help="samples per fiber")
    fv.add_argument("--theta-ref", type=float, default=0.0, help="[deg]")
    fv.add_argument("--out", type=Path, default=Path("out/fiberviz"))

    es = sub.add_parser("estimate", help="critical time or tolerance from a growth rate")
    es.add_argument("--gamma", type=float, required=True, help="growth rate per unit time")
    g = es.add_mutually_exclusive_group(required=True)
    g.add_argument("--tol", type=float, help="tolerance; prints the critical time")
    g.add_argument("--t-end", type=float, help="final time; prints the needed tolerance")
    return p


def _apply_overrides(sc: Scenario, args) -> Scenario:
    if args.theta_ref is not None:
        sc.theta_ref = math.radians(args.theta_ref)
    if args.vartheta is not None:
        sc.varthetas = (math.radians(args.vartheta),)
    if args.t_end is not None:
        sc.t_end, sc.s_end = args.t_end, None
    if args.s_end is not None:
        sc.s_end, sc.t_end = args.s_end, None
    if args.checkpoints is not None:
        if args.checkpoints < 2:
            raise ScenarioError("need at least two checkpoints", path="--checkpoints")
        sc.checkpoints = args.checkpoints
    for name, v in (("--t-end", sc.t_end), ("--s-end", sc.s_end)):
        if v is not None and not (math.isfinite(v) and v > 0.0):
            raise ScenarioError("must be a positive finite number", path=name)
    return sc


def _check_tol(tol):
    if not (MIN_TOL <= tol <= 1e-3):
        raise ScenarioError(f"tolerance {tol:g} outside [{MIN_TOL:g}, 1e-3]", path="--tol")
    return tol


def _out_dir(args, sc, default):
    if args.out is not None:
        return args.out
    if sc.output:
        return Path(sc.output)
    return Path("out") / sc.name / default


def dispatch(args) -> int:
    if args.command == "estimate":
        if args.tol is not None:
            print(format_value(dg.estimate_tcr(args.gamma, args.tol)))
        else:
            print(format_value(dg.estimate_tolerance(args.gamma, args.t_end)))
        return EXIT_OK
    if args.command == "fiberviz":
        pts = list(args.point) + (arc_points(args.arc, args.radius) if args.arc else [])
        if not pts:
            raise ScenarioError("give at least one --point or --arc N", path="--point")
        n = run_fiberviz(pts, args.nodes, math.radians(args.theta_ref), args.out)
        print(f"wrote {n} fibers to {args.out}")
        return EXIT_OK

    sc = _apply_overrides(parse_scenario(args.scenario), args)
    vartheta = sc.varthetas[0]
    if args.command == "sweep":
        tols = args.tol if args.tol is not None else list(sc.tolerances)
        rows = run_sweep(sc, tols, vartheta, _out_dir(args, sc, "sweep"))
        for r in rows:
            print(f"tol={r['tol']:g} t_cr={r['t_cr']} gamma_t={r['gamma_t']}")
        return EXIT_OK
    tol = _check_tol(args.tol if args.tol is not None else min(sc.tolerances))
    if args.command == "simulate":
        summary = run_simulate(sc, tol, 0.0 if args.vartheta is None else vartheta,
                               _out_dir(args, sc, "simulate"))
    elif args.command == "ksep":
        summary = run_ksep(sc, tol, vartheta, _out_dir(args, sc, "ksep"))
    else:
        plane = parse_plane(args.plane)
        if args.body is not None:
            if not 1 <= args.body <= sc.bodies.n:
                raise ScenarioError("body index out of range", path="--body")
            selector = ("body", args.body - 1)
        else:
            k = 1 if args.pair is None else args.pair
            npairs = sc.bodies.n * (sc.bodies.n - 1) // 2
            if not 1 <= k <= npairs:
                raise ScenarioError("pair index out of range", path="--pair")
            selector = ("pair", k - 1)
        if args.nodes < 1:
            raise ScenarioError("need at least one node", path="--nodes")
        summary = run_poincare(sc, tol, 0.0 if args.vartheta is None else vartheta, plane,
                               selector, args.nodes, _out_dir(args, sc, "poincare"))
    print(json.dumps(summary, sort_keys=True, default=str))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return dispatch(args)
    except IntegrationError as exc:
        t_last = None if exc.last is None else exc.last[1][-1]
        print(f"integrator failure: {exc} (last valid t = {t_last})", file=sys.stderr)
        return EXIT_INTEGRATOR
    except DiagnosticError as exc:
        print(f"diagnostic failure: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTIC
    except (ScenarioError, KSError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
