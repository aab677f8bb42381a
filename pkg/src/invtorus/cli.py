"""Command-line scenario runner.

    invtorus list
    invtorus COMMAND (--scenario NAME | --config FILE) [--resolution N] [--out DIR]
                     [--tol X] [--seed S] [--sign-calibration {auto,+1,-1}]

Each run writes ``report.json`` (plus field containers / CSV traces) into the
output directory.  Exit codes: 0 success, 2 mathematical verdict failure
(obstructed equation, resonance, differing classes), 1 error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import sys
import time
import warnings
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import io as fio
from . import scenarios as sc
from . import surface3d as s3
from .cohom import obstruction_diagnostic, solve_linear_cohomological
from .errors import ConfigError, InvTorusError, ResonanceError
from .fields import Grid, ScalarField, TwoForm, standard_generators, straight_curve
from .linearise import (
    ZeroFieldResult,
    build_chart,
    full_linearise,
    semi_linearise,
    sweep_level_tori,
    trace_field_line,
    verify_linearisation,
)
from .metric import MetricField, WeightField, directional, flat
from .pharmonic import DEFAULT_TOL, pharmonic_basis, pharmonic_field_for_class
from .winding import class_distance, diophantine_report, winding_number

COMMANDS = (
    "pharmonic-basis", "winding", "diophantine", "cohom-solve", "obstruction",
    "chart", "trace", "sweep", "surface-pipeline",
)

_pair = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_int_pair = {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["scenario"],
    "properties": {
        "scenario": {"type": "string", "enum": sorted(sc.SCENARIOS)},
        "resolution": {"type": "integer", "minimum": 16, "multipleOf": 2},
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "sign_calibration": {"enum": ["auto", "+1", "-1"]},
        "out": {"type": "string"},
        "target": _pair,
        "frequency": _pair,
        "generators": {"type": "array", "items": _int_pair, "minItems": 2, "maxItems": 2},
        "orientation": {"enum": [1, -1]},
        "metric": {
            "type": "object", "additionalProperties": False,
            "properties": {"source": {"enum": ["identity", "random", "file"]}, "file": {"type": "string"}},
        },
        "weight": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "source": {"enum": ["unit", "random", "first_integral", "file"]},
                "convention": {"enum": ["theorem", "corollary"]},
                "file": {"type": "string"},
            },
        },
        "ambient": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["euclidean", "periodic_box"]},
                "periods": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                            "minItems": 2, "maxItems": 2},
            },
        },
        "trace": {
            "type": "object", "additionalProperties": False,
            "properties": {"start": _pair, "T": {"type": "number", "exclusiveMinimum": 0},
                           "dt": {"type": "number", "exclusiveMinimum": 0}},
        },
        "shell": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "R0": {"type": "number", "exclusiveMinimum": 0},
                "kappa": {"type": "number", "exclusiveMinimum": 0},
                "F0": {"type": "number"},
                "F1": {"type": "number"},
                "levels": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
            },
        },
    },
}


def validate_config(config: dict) -> None:
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {path}: {exc.message}") from None
    if config["scenario"] == "axisymmetric-shell":
        shell = sc.shell_from_config(config)
        for c in config.get("shell", {}).get("levels", []):
            if c >= shell.R0:
                raise ConfigError("shell levels must stay below R0")


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def resolve_config(scenario=None, config_file=None, **overrides) -> dict:
    """Scenario defaults, then the config file, then command-line overrides."""
    user = {}
    if config_file is not None:
        user = json.loads(Path(config_file).read_text())
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a JSON object")
    name = user.get("scenario", scenario)
    if name is None:
        raise ConfigError("need --scenario or a config with a scenario key")
    if name not in sc.SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}")
    config = _merge(sc.SCENARIOS[name].config, user)
    config = _merge(config, {k: v for k, v in overrides.items() if v is not None})
    validate_config(config)
    return config


def config_hash(config: dict) -> str:
    canonical = json.dumps({k: v for k, v in config.items() if k != "out"}, sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


# --------------------------------------------------------------------------
# scenario objects


class Context:
    def __init__(self, config: dict):
        self.config = config
        self.grid = Grid.square(config["resolution"])
        self.tol = config.get("tolerance", DEFAULT_TOL)
        self.name = config["scenario"]
        self.sign, self.sign_source = self._sign()
        self.timings = {}

    def _sign(self):
        choice = self.config.get("sign_calibration", "auto")
        if choice == "auto":
            cal = s3.calibrate_sign()
            return cal.sign, {"mode": "auto", **cal.to_dict()}
        return int(choice), {"mode": "override"}

    def timed(self, label, fn, *args, **kwargs):
        t0 = time.perf_counter()
        out = fn(*args, **kwargs)
        self.timings[label] = round(time.perf_counter() - t0, 6)
        return out

    def generators(self):
        classes = self.config.get("generators", [[1, 0], [0, 1]])
        return tuple(straight_curve(tuple(k), grid=self.grid) for k in classes)

    def shell(self):
        return sc.shell_from_config(self.config)

    def levels(self):
        return self.config.get("shell", {}).get("levels", [0.7])

    def convention(self):
        return self.config.get("weight", {}).get("convention", "theorem")

    def metric_weight(self):
        """(g, P) of the scenario's base surface."""
        name, grid = self.name, self.grid
        msrc = self.config.get("metric", {}).get("source")
        wsrc = self.config.get("weight", {}).get("source")
        if name == "axisymmetric-shell":
            geom, _, _, _, _, P = sc.shell_level(self.shell(), self.levels()[0], grid,
                                                 self.config.get("orientation", 1), self.convention())
            return geom.metric, P
        if name == "example-nonsolvable":
            geom, _ = sc.example1_geometry(grid, self.config.get("orientation", 1), self._periods())
            return geom.metric, WeightField.unit(grid)
        if name == "example-cohomologous-forms":
            return MetricField.euclidean(grid, sc.TWO_PI), WeightField.unit(grid)
        if msrc == "random" or wsrc == "random":
            g_rand, P_rand = sc.random_metric_weight(self.config.get("seed", 0), grid)
        g = {"identity": lambda: MetricField.euclidean(grid),
             "random": lambda: g_rand,
             "file": lambda: self._from_file("metric", MetricField)}[msrc or "identity"]()
        P = {"unit": lambda: WeightField.unit(grid),
             "random": lambda: P_rand,
             "file": lambda: self._from_file("weight", WeightField)}[wsrc or "unit"]()
        return g, P

    def _periods(self):
        return tuple(self.config.get("ambient", {}).get("periods", (sc.TWO_PI, sc.TWO_PI)))

    def _from_file(self, key, cls):
        fields = fio.read_fields(self.config[key]["file"])
        for obj in fields.values():
            if isinstance(obj, cls):
                if obj.grid != self.grid:
                    raise ConfigError(f"{key} file resolution differs from the configured resolution")
                return obj
        raise ConfigError(f"{key} file holds no {cls.__name__}")

    def field(self):
        """(X, g, P) for field-based commands."""
        name = self.name
        if name == "example-cohomologous-forms":
            g, W, H = sc.example2_fields(self.grid)
            return H, g, WeightField.unit(self.grid)
        if name == "axisymmetric-shell":
            geom, _, X, _, _, P = sc.shell_level(self.shell(), self.levels()[0], self.grid,
                                                 self.config.get("orientation", 1), self.convention())
            return X, geom.metric, P
        if name == "example-nonsolvable":
            geom, B = sc.example1_geometry(self.grid, self.config.get("orientation", 1), self._periods())
            X, _ = s3.restrict_field(B, geom)
            return X, geom.metric, WeightField.unit(self.grid)
        g, P = self.metric_weight()
        basis = self.timed("pharmonic_basis", pharmonic_basis, g, P, tol=self.tol)
        return pharmonic_field_for_class(basis, self.config.get("target", [1.0, sc.GOLDEN])), g, P


# --------------------------------------------------------------------------
# commands; each returns (results, verdict_ok)


def cmd_pharmonic_basis(ctx: Context, out: Path):
    g, P = ctx.metric_weight()
    basis = ctx.timed("pharmonic_basis", pharmonic_basis, g, P, tol=ctx.tol)
    fio.export_basis(out / "basis", basis)
    return {"basis": basis.metadata()}, True


def _winding_entry(ctx, X, g, P, curves):
    return ctx.timed("winding", winding_number, X, g, P, *curves)


def cmd_winding(ctx: Context, out: Path):
    curves = ctx.generators()
    if ctx.name == "example-cohomologous-forms":
        g, W, H = sc.example2_fields(ctx.grid)
        P = WeightField.unit(ctx.grid)
        wW = _winding_entry(ctx, W, g, P, curves)
        wH = _winding_entry(ctx, H, g, P, curves)
        equal = wW.same_class(wH)
        res = {"W": wW.to_dict(), "H": wH.to_dict(), "same_class": equal,
               "class_distance": class_distance(wW.raw_vector, wH.raw_vector),
               "reference_class": [1.0, 0.0],
               "matches_reference": wW.same_class((1.0, 0.0)) and wH.same_class((1.0, 0.0))}
        return res, bool(equal)
    X, g, P = ctx.field()
    w = _winding_entry(ctx, X, g, P, curves)
    return {"winding": w.to_dict()}, True


def cmd_diophantine(ctx: Context, out: Path):
    if "frequency" in ctx.config:
        u = ctx.config["frequency"]
    else:
        X, g, P = ctx.field()
        u = winding_number(X, g, P, *standard_generators(ctx.grid)).normalized
    rep = ctx.timed("diophantine", diophantine_report, u)
    return {"diophantine": rep.to_dict()}, not rep.resonant


def cmd_cohom_solve(ctx: Context, out: Path):
    freq = tuple(ctx.config.get("frequency", (1.0, sc.GOLDEN)))
    u_true, v = sc.planted_cohomological(ctx.config.get("seed", 0), ctx.grid, freq)
    try:
        sol = ctx.timed("cohom_solve", solve_linear_cohomological, freq, v)
    except ResonanceError as exc:
        return {"cohom": {"resonant": True, "witness": list(exc.witness), "message": str(exc)}}, False
    err = float(np.max(np.abs(sol.u.values - u_true.values)) / np.max(np.abs(u_true.values)))
    fio.export_cohom(out / "cohom", sol)
    return {"cohom": {**sol.metadata(), "frequency": list(freq), "planted_relative_error": err}}, True


def _surface_obstruction(ctx, geom, B, X, area):
    v = ctx.timed("normal_derivative", s3.normal_derivative, B, geom, method="ambient")
    rep = ctx.timed("obstruction", obstruction_diagnostic, X, v, geom.metric, area)
    return v, rep


def cmd_obstruction(ctx: Context, out: Path):
    if ctx.name == "example-nonsolvable":
        geom, B = sc.example1_geometry(ctx.grid, ctx.config.get("orientation", 1), ctx._periods())
        X, _ = s3.restrict_field(B, geom)
        _, rep = _surface_obstruction(ctx, geom, B, X, geom.area)
    elif ctx.name == "axisymmetric-shell":
        geom, B, X, _, _, P = sc.shell_level(ctx.shell(), ctx.levels()[0], ctx.grid,
                                             ctx.config.get("orientation", 1), ctx.convention())
        _, rep = _surface_obstruction(ctx, geom, B, X, TwoForm(P.P * geom.area.coeff))
    else:
        X, g, P = ctx.field()
        h = ScalarField(ctx.grid, np.sin(2 * np.pi * ctx.grid.nodes()[0]) * np.cos(2 * np.pi * ctx.grid.nodes()[1]))
        v = directional(X, h)
        rep = ctx.timed("obstruction", obstruction_diagnostic, X, v, g, TwoForm(P.P * g.area().coeff))
    return {"obstruction": rep.to_dict()}, rep.verdict != "obstructed"


def cmd_chart(ctx: Context, out: Path):
    if ctx.name == "example-cohomologous-forms":
        alpha, beta = sc.example2_chart_forms(ctx.grid)
        chart = ctx.timed("build_chart", build_chart, alpha, beta)
        g, W, H = sc.example2_fields(ctx.grid)
        res = ctx.timed("verify", verify_linearisation, chart, H, ScalarField.constant(ctx.grid, 1.0))
        fio.export_chart(out / "chart", chart)
        return {"chart": {**chart.metadata(), "verify_residual": res}}, True
    X, g, P = ctx.field()
    chart = ctx.timed("semi_linearise", semi_linearise, X, g, P)
    if isinstance(chart, ZeroFieldResult):
        return {"chart": {"zero_field": True, "max_norm": chart.max_norm}}, True
    full = ctx.timed("full_linearise", full_linearise, chart, X)
    fio.export_chart(out / "chart", chart)
    return {"chart": chart.metadata(), "full_linearisation": full.metadata()}, True


def cmd_trace(ctx: Context, out: Path):
    X, g, P = ctx.field()
    tc = ctx.config.get("trace", {})
    start = tc.get("start", [0.0, 0.0])
    T = tc.get("T", 200.0)
    res = {"start": start, "T": T}
    if ctx.name == "example-cohomologous-forms":
        # start and endpoint in the physical 2pi coordinates of the example
        # chart velocity is the physical velocity over 2pi, so times agree
        tr = ctx.timed("trace", trace_field_line, X, np.asarray(start) / sc.TWO_PI, T, tc.get("dt"))
        end = tr.samples[-1] * sc.TWO_PI
        exact = sc.example2_flow(start, T)
        res.update(endpoint=end.tolist(), closed_form=exact.tolist(),
                   endpoint_error=float(np.max(np.abs(end - exact))))
    else:
        tr = ctx.timed("trace", trace_field_line, X, start, T, tc.get("dt"))
        w = winding_number(X, g, P, *standard_generators(ctx.grid))
        res.update(winding_ratio=w.ratio(), displacement_ratio=tr.displacement_ratio,
                   birkhoff_ratio=tr.birkhoff_ratio,
                   class_distance_displacement=class_distance(tr.displacement, w.raw_vector),
                   class_distance_birkhoff=class_distance(tr.birkhoff_velocity, w.raw_vector))
    out.mkdir(parents=True, exist_ok=True)
    tr.to_csv(out / "trace.csv")
    return {"trace": res}, True


def cmd_sweep(ctx: Context, out: Path):
    if ctx.name != "axisymmetric-shell":
        raise ConfigError("sweep needs a family of level tori (axisymmetric-shell)")
    shell = ctx.shell()
    family = []
    for c in ctx.levels():
        geom, _, X, _, _, P = sc.shell_level(shell, c, ctx.grid, ctx.config.get("orientation", 1), ctx.convention())
        family.append((c, X, geom.metric, P))
    prof = ctx.timed("sweep", sweep_level_tori, family)
    expected = {c: shell.frequency(c).tolist() for c in ctx.levels()}
    dev = max((float(np.max(np.abs(np.array([a, b]) - expected[z]))) for z, a, b in zip(prof.z_values, prof.a, prof.b)),
              default=float("nan"))
    return {"sweep": {"z": prof.z_values, "a": prof.a, "b": prof.b, "residuals": prof.residuals,
                      "failures": {str(k): v for k, v in prof.failures.items()},
                      "closed_form": {str(k): v for k, v in expected.items()},
                      "max_deviation": dev}}, not prof.failures


def _shell_surface(ctx, c):
    shell = ctx.shell()
    geom, B, X, normal, u, P = sc.shell_level(shell, c, ctx.grid, ctx.config.get("orientation", 1), ctx.convention())
    y = ctx.grid.nodes()[1]
    dn_a = s3.normal_derivative(B, geom, method="ambient")
    dn_s = s3.normal_derivative(B, geom, method="surface", sign=ctx.sign)
    curl = s3.curl_normal_component(B, geom)
    g1, g2 = standard_generators(ctx.grid)
    w = winding_number(X, geom.metric, P, g1, g2)
    I1, I2 = s3.advert_integrals(B, geom, u, (g1, g2))
    w_minus = winding_number(X, geom.metric, s3.weight_from_u(u, "corollary"), g1, g2)
    from .fields import TwoForm
    obs = obstruction_diagnostic(X, dn_a, geom.metric, TwoForm(P.P * geom.area.coeff))
    return {
        "level": c,
        "normal_component_max": normal.max_abs(),
        "normal_derivative_error": float(np.max(np.abs(dn_a.values - shell.normal_derivative(c, y)))),
        "method_gap": float(np.max(np.abs(dn_a.values - dn_s.values))),
        "u_error": float(np.max(np.abs(u.values - shell.u(c, y)))),
        "curl_normal_max": curl.max_abs(),
        "winding": w.to_dict(),
        "winding_closed_form": list(shell.winding_vector(c)),
        "advert_integrals": [I1, I2],
        "advert_vs_periods": float(max(abs(I2 - w_minus.raw_vector[0]), abs(-I1 - w_minus.raw_vector[1]))),
        "obstruction": obs.to_dict(),
    }, obs.verdict != "obstructed"


def cmd_surface_pipeline(ctx: Context, out: Path):
    if ctx.name == "example-nonsolvable":
        geom, B = sc.example1_geometry(ctx.grid, ctx.config.get("orientation", 1), ctx._periods())
        X, normal = s3.restrict_field(B, geom)
        omega = flat(geom.metric, X)
        dn_a = ctx.timed("normal_derivative_ambient", s3.normal_derivative, B, geom, method="ambient")
        dn_s = ctx.timed("normal_derivative_surface", s3.normal_derivative, B, geom, method="surface", sign=ctx.sign)
        curl = s3.curl_normal_component(B, geom)
        x, y = ctx.grid.nodes()
        s = np.sin(sc.TWO_PI * (x + y))
        c = np.cos(sc.TWO_PI * (x + y))
        obs = obstruction_diagnostic(X, dn_a, geom.metric, geom.area)
        res = {
            "normal_component_max": normal.max_abs(),
            "restricted_form_error": float(max(np.abs(omega.comp_dx.values - sc.TWO_PI * c).max(),
                                               np.abs(omega.comp_dy.values - sc.TWO_PI * c).max())),
            "normal_derivative_error": float(np.max(np.abs(dn_a.values - 2 * s))),
            "method_gap": float(np.max(np.abs(dn_a.values - dn_s.values))),
            "curl_normal_max": curl.max_abs(),
            "obstruction": obs.to_dict(),
        }
        return {"surface": res}, obs.verdict != "obstructed"
    if ctx.name == "axisymmetric-shell":
        rows, ok = [], True
        for c in ctx.levels():
            row, good = ctx.timed(f"level_{c}", _shell_surface, ctx, c)
            rows.append(row)
            ok = ok and good
        return {"surface": {"levels": rows}}, ok
    raise ConfigError("surface-pipeline needs an embedded scenario (example-nonsolvable, axisymmetric-shell)")


HANDLERS = {
    "pharmonic-basis": cmd_pharmonic_basis,
    "winding": cmd_winding,
    "diophantine": cmd_diophantine,
    "cohom-solve": cmd_cohom_solve,
    "obstruction": cmd_obstruction,
    "chart": cmd_chart,
    "trace": cmd_trace,
    "sweep": cmd_sweep,
    "surface-pipeline": cmd_surface_pipeline,
}


def run(command: str, config: dict, out=None) -> tuple[dict, int]:
    """Execute one command; returns (report, exit code) and writes report.json."""
    if command not in HANDLERS:
        raise ConfigError(f"unknown command {command!r}")
    validate_config(config)
    out = Path(out or config.get("out", "invtorus-out"))
    out.mkdir(parents=True, exist_ok=True)
    report = {"command": command, "scenario": config["scenario"], "config": config,
              "config_hash": config_hash(config), "version": __version__}
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            ctx = Context(config)
            results, ok = HANDLERS[command](ctx, out)
            report.update(sign={"s": ctx.sign, **ctx.sign_source},
                          tolerances={"solver": ctx.tol, "tangency": s3.TANGENCY_TOL},
                          results=results, verdict="ok" if ok else "failed")
            code = 0 if ok else 2
            timings = ctx.timings
        except InvTorusError as exc:
            report.update(error={"code": exc.code, "message": str(exc)}, verdict="error")
            code, timings = 1, {}
    report["warnings"] = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    report["timings"] = {**timings, "total": round(time.perf_counter() - t0, 6)}
    fio.write_json(out / "report.json", report)
    return report, code


def strip_timings(report: dict) -> dict:
    out = dict(report)
    out.pop("timings", None)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="invtorus", description="Invariant-torus toolkit scenario runner.")
    parser.add_argument("--version", action="version", version=f"invtorus {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="list built-in scenarios")
    sub.add_parser("schema", help="print the config JSON schema")
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run {name}")
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--scenario", choices=sorted(sc.SCENARIOS))
        src.add_argument("--config", type=Path)
        p.add_argument("--resolution", type=int)
        p.add_argument("--out", type=str)
        p.add_argument("--tol", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--sign-calibration", choices=["auto", "+1", "-1"])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for name, desc in sc.list_scenarios():
            print(f"{name}: {desc}")
        return 0
    if args.command == "schema":
        print(json.dumps(CONFIG_SCHEMA, indent=2))
        return 0
    try:
        config = resolve_config(
            args.scenario, args.config, resolution=args.resolution, tolerance=args.tol,
            seed=args.seed, sign_calibration=args.sign_calibration, out=args.out,
        )
    except (InvTorusError, OSError, json.JSONDecodeError) as exc:
        code = getattr(exc, "code", "config")
        print(json.dumps({"error": {"code": code, "message": str(exc)}}), file=sys.stderr)
        return 1
    report, code = run(args.command, config)
    summary = {"command": report["command"], "verdict": report["verdict"], "exit_code": code}
    if "error" in report:
        summary["error"] = report["error"]
    print(json.dumps(summary))
    return code


if __name__ == "__main__":
    sys.exit(main())
