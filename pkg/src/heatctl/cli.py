"""Batch command-line front end.

    heatctl <command> --config run.json --out results/ [--seed 42]

Every command validates its JSON config against a schema, runs one family of
module operations and writes ``report.csv`` (one row per evaluation, streamed)
and ``summary.json`` (config echo, tolerances, provenance, aggregates). Output
contains no timestamps or host data, so reruns are byte-identical.

Exit status: 0 success, 1 computation or I/O error, 2 configuration error.
Times are dimensionless (unit diffusivity); lengths are in the domain's units.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import control, geometry, kernelbounds, tensorprod
from .errors import HeatctlError
from .grid import box_domain
from .systems import boundary_observation, interior_observation

COMMANDS = ("cost", "control", "tensor-check", "kernel", "distance", "gnc", "alpha-probe")
DEFAULT_SEED = 42
U64_MAX = 2**64 - 1


class ConfigError(Exception):
    """Configuration rejected before any computation (exit status 2)."""


# ---------------------------------------------------------------- schemas

_pos = {"type": "number", "exclusiveMinimum": 0}
_num = {"type": "number"}
_point = {"type": "array", "items": _num, "minItems": 1, "maxItems": 3}
_points = {"type": "array", "items": _point, "minItems": 1}
_interval = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_pos_list = {"oneOf": [_pos, {"type": "array", "items": _pos, "minItems": 1}]}

_system = {
    "type": "object",
    "required": ["kind", "L", "N"],
    "properties": {
        "kind": {"enum": ["boundary", "interior"]},
        "L": _pos,
        "N": {"type": "integer", "minimum": 1, "maximum": 400},
        "omega": {"type": "array", "items": _interval, "minItems": 1},
        "q": {"type": "integer", "minimum": 2},
    },
    "if": {"properties": {"kind": {"const": "interior"}}},
    "then": {"required": ["omega"]},
    "additionalProperties": False,
}
_precision = {"oneOf": [{"enum": ["auto", "double"]}, {"type": "integer", "minimum": 53, "maximum": 65536}]}
_profile = {
    "type": "object",
    "required": ["kind"],
    "properties": {"kind": {"enum": ["zero", "constant", "capped_inverse", "inverse_log", "exponential"]}},
}
_scenario = {"type": "object", "required": ["kind", "h"],
             "properties": {"kind": {"enum": list(geometry.SCENARIOS)}, "h": _pos}}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SCHEMAS = {
    "cost": _obj({"system": _system, "T": _pos_list, "precision": _precision}, ["system", "T"]),
    "control": _obj({
        "system": _system,
        "T": _pos,
        "zeta0": {"oneOf": [{"enum": ["worst", "random"]}, {"type": "array", "items": _num, "minItems": 1}]},
        "samples": {"type": "integer", "minimum": 2, "maximum": 100000},
        "precision": _precision,
    }, ["system", "T", "zeta0"]),
    "tensor-check": _obj({
        "instances": {"type": "integer", "minimum": 1},
        "N_range": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
        "m_range": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
        "b_min": {"type": "number", "maximum": 0},
        "T_choices": {"type": "array", "items": _pos, "minItems": 1},
        "L_range": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
        "tol": _pos,
    }),
    "kernel": _obj({
        "edges": {"type": "array", "items": _pos, "minItems": 1, "maxItems": 3},
        "t": _pos_list,
        "x": _points,
        "y": _point,
        "nterms": {"type": "integer", "minimum": 1},
        "lower_check": {"type": "boolean"},
        "variant": {"enum": list(kernelbounds.VARIANTS)},
        "window": _obj({
            "h": _pos, "omega": {"type": "array", "items": _interval, "minItems": 1},
            "T1": _pos, "T2": _pos, "epsilon": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "fit_times": {"type": "array", "items": _pos, "minItems": 1},
            "fit_points": {"type": "integer", "minimum": 2, "maximum": 64},
        }, ["h", "omega", "T1", "T2", "epsilon"]),
    }, ["edges", "t", "x", "y"]),
    "distance": _obj({
        "scenario": _scenario,
        "points": _points,
        "T": _pos,
        "metric": {"enum": ["geodesic", "euclidean"]},
        "export_field": {"type": "boolean"},
    }, ["scenario", "points", "T"]),
    "gnc": {
        "type": "object",
        "required": ["mode"],
        "properties": {"mode": {"enum": ["evaluate", "rod-iii", "shrinkrod"]}},
        "allOf": [
            {"if": {"properties": {"mode": {"const": "evaluate"}}},
             "then": _obj({
                 "mode": {}, "scenario": _scenario, "points": _points, "Tbar": _pos,
                 "kappa": {"type": "number", "exclusiveMinimum": 1},
                 "variant": {"enum": list(geometry.GNC_CONSTANTS)},
                 "epsilon": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                 "control_time": _pos, "increasing_from": {"type": "integer", "minimum": 0},
                 "threshold": _num, "metric": {"enum": ["geodesic", "euclidean"]},
             }, ["scenario", "points", "Tbar", "kappa"])},
            {"if": {"properties": {"mode": {"const": "rod-iii"}}},
             "then": _obj({"mode": {}, "profile": _profile, "T": _pos,
                           "z": {"type": "array", "items": _num, "minItems": 1},
                           "truncation": _pos}, ["profile", "T", "z"])},
            {"if": {"properties": {"mode": {"const": "shrinkrod"}}},
             "then": _obj({
                 "mode": {}, "profile": _profile, "T": _pos,
                 "z": {"type": "array", "items": _num, "minItems": 1},
                 "d": {"type": "array", "items": _pos, "minItems": 1},
                 "kappa_prime": {"type": "number", "exclusiveMinimum": 1},
                 "n": {"type": "integer", "minimum": 1, "maximum": 3},
                 "scenario": _scenario, "increasing_from": {"type": "integer", "minimum": 0},
                 "threshold": _num,
             }, ["profile", "T", "z", "d", "kappa_prime"])},
        ],
    },
    "alpha-probe": _obj({"L": _pos, "T": _pos_list, "rate_cutoff_coeff": _pos}, ["L", "T"]),
}

# hypotheses named in validation messages
HYPOTHESES = {
    "kappa": "the geometric necessary condition requires kappa > 1",
    "kappa_prime": "the shrinking-rod sequence requires kappa' > 1",
}


def validate(command: str, config) -> None:
    """Raise ConfigError naming the offending field path."""
    validator = jsonschema.Draft202012Validator(SCHEMAS[command])
    err = jsonschema.exceptions.best_match(validator.iter_errors(config))
    if err is None:
        return
    path = "/".join(str(p) for p in err.absolute_path) or "<root>"
    msg = f"config field {path}: {err.message}"
    key = err.absolute_path[-1] if err.absolute_path else None
    if key in HYPOTHESES:
        msg += f" ({HYPOTHESES[key]})"
    raise ConfigError(msg)


# ---------------------------------------------------------------- output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.16e}"
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


class Report:
    """Streaming CSV writer; columns are declared as (name, unit) pairs."""

    def __init__(self, path: Path, columns):
        self.columns = [name for name, _ in columns]
        self.rows = 0
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow([f"{name}[{unit}]" for name, unit in columns])

    def write(self, row: dict) -> None:
        self._w.writerow([_fmt(row[c]) for c in self.columns])
        self.rows += 1

    def close(self) -> None:
        self._fh.close()


def emit_summary(path: Path, summary: dict) -> None:
    text = json.dumps(_jsonable(summary), sort_keys=True, indent=2, allow_nan=False)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")


# ---------------------------------------------------------------- commands


def _as_list(v) -> list:
    return list(v) if isinstance(v, list) else [v]


def _system(cfg):
    if cfg["kind"] == "boundary":
        return boundary_observation(cfg["L"], cfg["N"])
    q = cfg.get("q")
    return interior_observation(cfg["L"], cfg["N"], cfg["omega"], **({"q": q} if q else {}))


def run_cost(cfg, out, rng):
    full = _system(cfg["system"])
    precision = cfg.get("precision", "auto")
    cols = [("N", "modes"), ("T", "time"), ("kappa", "1"), ("kappa_sq", "1"), ("admissibility", "1"),
            ("gramian_min_eig", "1"), ("precision_bits", "bits")]
    rep = Report(out / "report.csv", cols)
    infinite = 0
    try:
        for T in _as_list(cfg["T"]):
            for n in range(1, full.modes + 1):
                r = control.control_cost(full.truncated(n), T, precision=precision)
                infinite += not r.finite
                rep.write({"N": n, "T": T, "kappa": r.kappa, "kappa_sq": r.kappa_sq, "admissibility": r.admissibility,
                           "gramian_min_eig": r.gramian_min_eig, "precision_bits": r.precision_bits})
    finally:
        rep.close()
    return rep.rows, {"infinite_costs": infinite}, ["control.control_cost"], {}


def run_control(cfg, out, rng):
    sys_ = _system(cfg["system"])
    T = cfg["T"]
    cost = control.control_cost(sys_, T)
    z = cfg["zeta0"]
    if z == "worst":
        if cost.worst_state is None:
            raise HeatctlError("no worst state: the cost is infinite")
        zeta0 = cost.worst_state
    elif z == "random":
        zeta0 = rng.standard_normal(sys_.modes)
    else:
        zeta0 = np.asarray(z, float)
    traj = control.min_norm_control(sys_, T, zeta0, samples=cfg.get("samples", 201),
                                    precision=cfg.get("precision", "auto"))
    q = traj.values.shape[1]
    cols = [("t", "time")] + [(f"u{i}", "control") for i in range(q)]
    rep = Report(out / "report.csv", cols)
    try:
        for t, u in zip(traj.times, traj.values):
            rep.write({"t": t, **{f"u{i}": u[i] for i in range(q)}})
    finally:
        rep.close()
    norm2 = float(zeta0 @ zeta0)
    results = {
        "energy": traj.energy,
        "energy_trapezoid": traj.energy_trapezoid,
        "energy_bound": cost.kappa_sq * norm2,
        "energy_within_bound": traj.energy <= (1 + 1e-6) * cost.kappa_sq * norm2,
        "residual": traj.residual,
        "residual_ok": traj.residual <= 1e-8 * math.sqrt(norm2),
        "zeta0": zeta0,
        "precision_bits": traj.precision_bits,
    }
    return rep.rows, results, ["control.control_cost", "control.min_norm_control"], {"energy_rel": 1e-6,
                                                                                     "residual_rel": 1e-8}


def run_tensor_check(cfg, out, rng):
    tol = cfg.get("tol", tensorprod.LEMMA_TOL)
    insts = tensorprod.random_instances(
        rng, cfg.get("instances", 100), n_range=tuple(cfg.get("N_range", (2, 40))),
        m_range=tuple(cfg.get("m_range", (1, 20))), b_min=cfg.get("b_min", -10.0),
        horizons=tuple(cfg.get("T_choices", (0.01, 0.1, 1.0))), length_range=tuple(cfg.get("L_range", (0.5, 2.0))))
    cols = [("instance", "index"), ("observation", "label"), ("L", "length"), ("N", "modes"), ("M", "fibers"),
            ("T", "time"), ("b_min", "rate"), ("kappa_product", "1"), ("kappa_factor", "1"),
            ("kappa_max_fiber", "1"), ("bound_ok", "flag"), ("fibers_ok", "flag"), ("pass", "flag")]
    rep = Report(out / "report.csv", cols)
    passed = 0
    try:
        for i, inst in enumerate(insts):
            r = tensorprod.check_lemma(inst.factor, inst.bvals, inst.horizon, tol=tol)
            passed += r.passed
            rep.write({"instance": i, "observation": inst.observation, "L": inst.length, "N": inst.factor.modes,
                       "M": inst.bvals.size, "T": inst.horizon, "b_min": float(inst.bvals.min()),
                       "kappa_product": r.kappa_product, "kappa_factor": r.kappa_factor,
                       "kappa_max_fiber": r.kappa_max_fiber, "bound_ok": r.bound_ok, "fibers_ok": r.fibers_ok,
                       "pass": r.passed})
    finally:
        rep.close()
    results = {"passed": passed, "total": len(insts), "summary": f"{passed}/{len(insts)} pass"}
    return rep.rows, results, ["tensorprod.random_instances", "tensorprod.check_lemma"], {"lemma_rel": tol}


def run_kernel(cfg, out, rng):
    edges = np.asarray(cfg["edges"], float)
    n = edges.size
    y = np.asarray(cfg["y"], float)
    xs = np.asarray(cfg["x"], float)
    if y.size != n or xs.shape[1] != n:
        raise ConfigError(f"config field x/y: points must have {n} coordinates")
    nterms = cfg.get("nterms")
    cols = ([("t", "time")] + [(f"x{k}", "length") for k in range(n)]
            + [("K", "1/length^n"), ("tail_bound", "1/length^n"), ("free", "1/length^n"), ("flagged", "flag")])
    rep = Report(out / "report.csv", cols)
    flagged = 0
    prov = ["kernelbounds.box_kernel", "kernelbounds.free_kernel"]
    try:
        for t in _as_list(cfg["t"]):
            kv = kernelbounds.box_kernel(edges, t, xs, y, nterms)
            free = kernelbounds.free_kernel(n, t, np.linalg.norm(xs - y, axis=1))
            tails = np.broadcast_to(kv.tail_bound, kv.value.shape)
            for x, k, tb, f in zip(xs, kv.value, tails, free):
                flagged += tb > kernelbounds.TAIL_FLAG
                rep.write({"t": t, **{f"x{j}": x[j] for j in range(n)}, "K": k, "tail_bound": tb, "free": f,
                           "flagged": tb > kernelbounds.TAIL_FLAG})
    finally:
        rep.close()
    results = {"flagged": flagged}
    if cfg.get("lower_check", False):
        variant = cfg.get("variant", "corrected")
        checks = []
        for t in _as_list(cfg["t"]):
            lc = kernelbounds.l2_lower_check(edges, y, t, nterms)
            checks.append({"t": t, "integral": lc.integral, "integral_modal": lc.integral_modal,
                           "principal_bound": lc.principal_bound, "holds": lc.holds})
        results["lower_check"] = checks
        if np.allclose(edges, edges[0]) and np.allclose(y, edges / 2):
            d = math.sqrt(n) * edges[0] / 2
            results["cube_rhs"] = [{"t": t, "variant": variant, "value": kernelbounds.cube_lower_rhs(t, d, n, variant)}
                                   for t in _as_list(cfg["t"])]
            prov.append("kernelbounds.cube_lower_rhs")
        prov.append("kernelbounds.l2_lower_check")
    if "window" in cfg:
        w = cfg["window"]
        dom = box_domain(edges, w["h"], w["omega"])
        fit_t = w.get("fit_times", list(np.geomspace(w["T1"], w["T2"], 5)))
        k = w.get("fit_points", 9)
        grid = np.stack(np.meshgrid(*[np.linspace(0, L, k + 2)[1:-1] for L in edges], indexing="ij"), -1)
        a_eps = kernelbounds.fit_gaussian_constant(edges, w["epsilon"], fit_t, grid.reshape(-1, n), nterms=nterms)
        wb = kernelbounds.l2_window_upper(dom, y, w["T1"], w["T2"], w["epsilon"], a_eps, nterms)
        results["window"] = {"a_eps": a_eps, "lhs": wb.lhs, "rhs": wb.rhs, "averaged_distance_sq": wb.averaged_distance_sq,
                             "simpson_error": wb.simpson_error, "tail_bound": wb.tail_bound, "holds": wb.holds}
        prov += ["kernelbounds.fit_gaussian_constant", "kernelbounds.l2_window_upper"]
    tols = {"tail_target": kernelbounds.TAIL_TARGET, "tail_flag": kernelbounds.TAIL_FLAG,
            "resolution_fraction": kernelbounds.RESOLUTION_FRACTION}
    return rep.rows, results, prov, tols


def _check_dim(dom, pts, field="points"):
    pts = np.asarray(pts, float)
    if pts.shape[1] != dom.n:
        raise ConfigError(f"config field {field}: points must have {dom.n} coordinates")
    return pts


def run_distance(cfg, out, rng):
    dom = geometry.build_scenario(cfg["scenario"])
    pts = _check_dim(dom, cfg["points"])
    T = cfg["T"]
    metric = cfg.get("metric", "geodesic")
    n = dom.n
    cols = ([(f"y{k}", "length") for k in range(n)]
            + [("boundary_distance", "length"), ("omega_distance", "length"), ("averaged_sq", "length^2"),
               ("lower_bound", "length^2"), ("omega_measure", "length^n"), ("inequality_ok", "flag")])
    rep = Report(out / "report.csv", cols)
    try:
        for p in pts:
            a = geometry.averaged_distance(dom, p, T, metric=metric)
            rep.write({**{f"y{k}": p[k] for k in range(n)}, "boundary_distance": geometry.boundary_distance(dom, p),
                       "omega_distance": a.nearest, "averaged_sq": a.value, "lower_bound": a.lower_bound,
                       "omega_measure": a.omega_measure,
                       "inequality_ok": a.empty or a.value >= a.lower_bound - 1e-3 * abs(a.lower_bound)})
    finally:
        rep.close()
    prov = ["geometry.build_scenario", "geometry.averaged_distance", "geometry.boundary_distance"]
    results = {"nodes": int(dom.mask.sum()), "measure": dom.measure, "omega_measure": dom.omega_measure}
    if cfg.get("export_field", False):
        fd = geometry.geodesic_distance_field(dom, pts[0], metric=metric)
        fcols = [(f"i{k}", "index") for k in range(n)] + [("distance", "length")]
        field = Report(out / "field.csv", fcols)
        try:
            for idx in np.argwhere(dom.mask):
                field.write({**{f"i{k}": idx[k] for k in range(n)}, "distance": fd.distance[tuple(idx)]})
        finally:
            field.close()
        results["field_rows"] = field.rows
        prov.append("geometry.geodesic_distance_field")
    return rep.rows, results, prov, {"inequality_rel": 1e-3, "tail_fraction": geometry.TAIL_FRACTION,
                                     "metrication": geometry.METRICATION[n]}


def run_gnc(cfg, out, rng):
    mode = cfg["mode"]
    if mode == "evaluate":
        dom = geometry.build_scenario(cfg["scenario"])
        pts = _check_dim(dom, cfg["points"])
        r = geometry.gnc_evaluate(dom, pts, cfg["Tbar"], cfg["kappa"], variant=cfg.get("variant", "corrected"),
                                  epsilon=cfg.get("epsilon"), control_time=cfg.get("control_time"),
                                  increasing_from=cfg.get("increasing_from", 0), threshold=cfg.get("threshold", 0.0),
                                  metric=cfg.get("metric", "geodesic"))
        n = dom.n
        cols = ([(f"y{k}", "length") for k in range(n)]
                + [("averaged_sq", "length^2"), ("boundary", "length"), ("bounded", "length"),
                   ("bounded_dbar", "length"), ("value", "length^2"), ("value_published", "length^2"),
                   ("value_corrected", "length^2"), ("s", "1")])
        rep = Report(out / "report.csv", cols)
        try:
            for i, p in enumerate(r.points):
                rep.write({**{f"y{k}": p[k] for k in range(n)}, "averaged_sq": r.averaged_sq[i],
                           "boundary": r.boundary[i], "bounded": r.bounded[i], "bounded_dbar": r.bounded_dbar[i],
                           "value": r.values[i], "value_published": r.values_published[i],
                           "value_corrected": r.values_corrected[i], "s": r.s_values[i]})
        finally:
            rep.close()
        results = {"Tbar": r.Tbar, "kappa": r.kappa, "epsilon": r.epsilon, "kappa_prime": r.kappa_prime,
                   "alpha": r.alpha, "control_time": r.control_time, "Tdbar": r.Tdbar, "variant": r.variant,
                   "satisfied": r.satisfied, "verdict": r.verdict}
        prov = ["geometry.build_scenario", "geometry.gnc_evaluate"]
        tols = {"tail_fraction": geometry.TAIL_FRACTION, "metrication": geometry.METRICATION[n]}
    elif mode == "rod-iii":
        cols = [("z", "length"), ("upper", "length^2"), ("tail_bound", "length^2")]
        rep = Report(out / "report.csv", cols)
        try:
            for z in cfg["z"]:
                u = geometry.rod_iii_upper(cfg["profile"], cfg["T"], z, cfg.get("truncation"))
                rep.write({"z": z, "upper": u.value, "tail_bound": u.tail_bound})
        finally:
            rep.close()
        results, prov, tols = {}, ["geometry.rod_iii_upper"], {"resolution_fraction": 1e-2}
    else:
        if len(cfg["z"]) != len(cfg["d"]):
            raise ConfigError("config field d: must have the same length as z")
        dom = geometry.build_scenario(cfg["scenario"]) if "scenario" in cfg else None
        r = geometry.shrinkrod_check(cfg["profile"], cfg["z"], cfg["d"], cfg["kappa_prime"], cfg["T"],
                                     n=cfg.get("n", 3), domain=dom, increasing_from=cfg.get("increasing_from", 0),
                                     threshold=cfg.get("threshold", 0.0))
        cols = [("z", "length"), ("d", "length"), ("sequence", "length^2"), ("radius_ahead", "length"),
                ("width_ok", "flag")]
        if dom is not None:
            cols += [("grid_boundary", "length"), ("grid_omega_distance", "length"), ("grid_ok", "flag")]
        rep = Report(out / "report.csv", cols)
        try:
            for i in range(r.z.size):
                row = {"z": r.z[i], "d": r.d[i], "sequence": r.sequence[i], "radius_ahead": r.radius_ahead[i],
                       "width_ok": r.width_ok[i]}
                if dom is not None:
                    row.update(grid_boundary=r.grid_boundary[i], grid_omega_distance=r.grid_omega_distance[i],
                               grid_ok=r.grid_ok[i])
                rep.write(row)
        finally:
            rep.close()
        results = {"divergent": r.divergent, "warnings": r.warnings}
        prov = ["geometry.shrinkrod_check"] + (["geometry.build_scenario"] if dom is not None else [])
        tols = {}
    return rep.rows, results, prov, tols


def run_alpha_probe(cfg, out, rng):
    rows = control.alpha_star_probe(cfg["L"], _as_list(cfg["T"]), cfg.get("rate_cutoff_coeff", 100.0))
    cols = [("T", "time"), ("N", "modes"), ("kappa", "1"), ("normalized_log_cost", "1"),
            ("precision_bits", "bits")]
    rep = Report(out / "report.csv", cols)
    try:
        for r in rows:
            rep.write({"T": r.horizon, "N": r.modes, "kappa": r.kappa, "normalized_log_cost": r.normalized_log_cost,
                       "precision_bits": r.precision_bits})
    finally:
        rep.close()
    vals = [r.normalized_log_cost for r in rows]
    results = {"values": vals, "window": [0.25, 2 * (36 / 37) ** 2]}
    return rep.rows, results, ["control.alpha_star_probe"], {}


RUNNERS = {
    "cost": run_cost,
    "control": run_control,
    "tensor-check": run_tensor_check,
    "kernel": run_kernel,
    "distance": run_distance,
    "gnc": run_gnc,
    "alpha-probe": run_alpha_probe,
}


# ---------------------------------------------------------------- entry point


def _parse_seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}")
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatctl", description="Null-controllability costs, kernel bounds and geometric checks.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON configuration file")
    p.add_argument("--out", required=True, help="output directory for report.csv and summary.json")
    p.add_argument("--seed", type=_parse_seed, default=DEFAULT_SEED, help="seed for randomized commands (default 42)")
    return p


def run(command: str, config: dict, out: Path, seed: int = DEFAULT_SEED) -> dict:
    """Validate, compute and write the report; returns the summary dict."""
    validate(command, config)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows, results, prov, tols = RUNNERS[command](config, out, rng)
    summary = {
        "command": command,
        "config": config,
        "seed": seed,
        "rows": rows,
        "report": "report.csv",
        "results": results,
        "tolerances": tols,
        "provenance": ["heatctl." + p for p in prov],
        "tool": {"name": "heatctl", "version": __version__},
    }
    emit_summary(out / "summary.json", summary)
    return summary


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"heatctl: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        summary = run(args.command, config, Path(args.out), args.seed)
    except ConfigError as exc:
        print(f"heatctl: {exc}", file=sys.stderr)
        return 2
    except HeatctlError as exc:
        print(f"heatctl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"heatctl: I/O error: {exc}", file=sys.stderr)
        return 1
    res = summary["results"]
    line = res.get("summary") or res.get("verdict") or f"{summary['rows']} rows"
    print(f"heatctl {args.command}: {line}; wrote {os.path.join(args.out, 'report.csv')}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
