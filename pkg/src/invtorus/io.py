"""Field container, curve CSV and artifact export.

Container: ``manifest.json`` with ``{resolution_x, resolution_y, fields: [{name,
kind, file}]}`` next to raw little-endian float64 files, row-major with y the
slow axis.  Multi-component kinds store their components back to back:
oneform (dx, dy), vector (x, y), metric (g11, g12, g22).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, GridError
from .fields import Curve, Grid, OneForm, ScalarField, TwoForm
from .metric import MetricField, VectorField, WeightField

DTYPE = np.dtype("<f8")
MANIFEST = "manifest.json"


def _components(obj) -> tuple[str, list[np.ndarray]]:
    if isinstance(obj, ScalarField):
        return "scalar", [obj.values]
    if isinstance(obj, OneForm):
        return "oneform", [obj.comp_dx.values, obj.comp_dy.values]
    if isinstance(obj, TwoForm):
        return "twoform", [obj.coeff.values]
    if isinstance(obj, MetricField):
        return "metric", [obj.g11.values, obj.g12.values, obj.g22.values]
    if isinstance(obj, WeightField):
        return "weight", [obj.P.values]
    if isinstance(obj, VectorField):
        return "vector", [obj.comp_x.values, obj.comp_y.values]
    raise TypeError(f"cannot store {type(obj).__name__}")


_NCOMP = {"scalar": 1, "oneform": 2, "twoform": 1, "metric": 3, "weight": 1, "vector": 2}


def _build(kind: str, grid: Grid, comps: np.ndarray):
    if kind == "scalar":
        return ScalarField(grid, comps[0])
    if kind == "oneform":
        return OneForm.from_arrays(grid, comps[0], comps[1])
    if kind == "twoform":
        return TwoForm(ScalarField(grid, comps[0]))
    if kind == "metric":
        return MetricField.from_arrays(grid, comps[0], comps[1], comps[2])
    if kind == "weight":
        return WeightField(ScalarField(grid, comps[0]))
    return VectorField.from_arrays(grid, comps[0], comps[1])


def write_fields(directory, fields: dict) -> Path:
    """Write named fields (same grid) as a container; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    grids = {(f.grid.resolution_x, f.grid.resolution_y) for f in fields.values()}
    if len(grids) != 1:
        raise GridError("all fields in a container must share one grid")
    nx, ny = grids.pop()
    entries = []
    for name, obj in fields.items():
        kind, comps = _components(obj)
        file = f"{name}.f64"
        np.ascontiguousarray(np.stack(comps), dtype=DTYPE).tofile(directory / file)
        entries.append({"name": name, "kind": kind, "file": file})
    manifest = {"resolution_x": nx, "resolution_y": ny, "fields": entries}
    path = directory / MANIFEST
    path.write_text(json.dumps(manifest, indent=2))
    return path


def read_fields(path) -> dict:
    """Read a container from its manifest (or the directory holding it)."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST
    manifest = json.loads(path.read_text())
    try:
        grid = Grid(int(manifest["resolution_x"]), int(manifest["resolution_y"]))
        entries = manifest["fields"]
    except KeyError as exc:
        raise ConfigError(f"manifest is missing {exc}") from None
    out = {}
    for entry in entries:
        kind = entry["kind"]
        if kind not in _NCOMP:
            raise ConfigError(f"unknown field kind {kind!r}")
        data = np.fromfile(path.parent / entry["file"], dtype=DTYPE)
        expected = _NCOMP[kind] * grid.resolution_x * grid.resolution_y
        if data.size != expected:
            raise GridError(f"{entry['file']}: {data.size} values, expected {expected}")
        out[entry["name"]] = _build(kind, grid, data.reshape(_NCOMP[kind], grid.resolution_y, grid.resolution_x))
    return out


def write_curve_csv(path, t, lifts) -> None:
    data = np.column_stack([np.asarray(t, dtype=float), np.asarray(lifts, dtype=float)])
    np.savetxt(path, data, delimiter=",", header="t,x_lift,y_lift", comments="", fmt="%.17g")


def read_trace_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Raw ``(t, lifts)`` of a curve CSV; open field-line traces included."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 3:
        raise ConfigError("curve CSV needs columns t, x_lift, y_lift")
    return data[:, 0], data[:, 1:]


def read_curve_csv(path) -> Curve:
    """Closed curve from a CSV; the parameter is rescaled to [0, 1]."""
    t, lifts = read_trace_csv(path)
    return Curve.from_samples((t - t[0]) / (t[-1] - t[0]), lifts)


def read_ambient_box(path):
    """Sampled ambient field from ``{origin, spacing, dims, components}``.

    ``components`` names a raw float64 file of shape (3, nx, ny, nz).
    """
    from .surface3d import SampledAmbientField

    path = Path(path)
    manifest = json.loads(path.read_text())
    dims = tuple(int(d) for d in manifest["dims"])
    data = np.fromfile(path.parent / manifest["components"], dtype=DTYPE)
    if data.size != 3 * int(np.prod(dims)):
        raise GridError("ambient components do not match dims")
    return SampledAmbientField(manifest["origin"], manifest["spacing"], data.reshape((3,) + dims))


def write_ambient_box(path, origin, spacing, components) -> None:
    path = Path(path)
    components = np.asarray(components, dtype=DTYPE)
    file = path.with_suffix(".f64").name
    np.ascontiguousarray(components).tofile(path.parent / file)
    manifest = {"origin": list(map(float, origin)), "spacing": list(map(float, spacing)),
                "dims": list(components.shape[1:]), "components": file}
    path.write_text(json.dumps(manifest, indent=2))


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=_jsonable))


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def export_basis(directory, basis) -> None:
    write_fields(directory, {"omega1": basis.omega1, "omega2": basis.omega2})
    write_json(Path(directory) / "basis.json", basis.metadata())


def export_chart(directory, chart) -> None:
    write_fields(directory, {"u1": chart.u1, "u2": chart.u2})
    write_json(Path(directory) / "chart.json", chart.metadata())


def export_cohom(directory, solution) -> None:
    write_fields(directory, {"u": solution.u})
    write_json(Path(directory) / "cohom.json", solution.metadata())
