"""Profile CSV files with JSON sidecars, JSON reports and atomic writes."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import GridError, ModelError
from .grid import Grid, Profile
from .model import ModelSpec, model_from_config

SIDECAR_SUFFIX = ".json"
FLOAT_FORMAT = "{:.17g}"


def atomic_write_text(path, text: str) -> Path:
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix="." + path.name + ".", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def to_jsonable(obj):
    """Convert numpy scalars and arrays, complex numbers and dataclass reports for JSON."""
    if hasattr(obj, "to_dict") and not isinstance(obj, type):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_finite(obj.real), _finite(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        return _finite(float(obj))
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def _finite(x: float):
    x = float(x)
    return x if math.isfinite(x) else None


def write_json(path, data) -> Path:
    return atomic_write_text(path, json.dumps(to_jsonable(data), indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def format_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([FLOAT_FORMAT.format(v) if isinstance(v, (float, np.floating)) else v
                    for v in row])
    return buf.getvalue()


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    return atomic_write_text(path, format_csv(header, rows))


def write_table(path, records: Sequence[Mapping]) -> Path:
    """CSV from a list of flat dicts; the header is the key order of the first record."""
    if not records:
        return write_csv(path, [], [])
    header = list(records[0].keys())
    return write_csv(path, header, ([r.get(k, "") for k in header] for r in records))


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise GridError(f"{path}: empty CSV")
    header = rows[0]
    # empty cells mark undefined entries such as the Fredholm index on the spectrum
    data = np.array([[float(v) if v.strip() else math.nan for v in r] for r in rows[1:] if r],
                    dtype=float)
    return header, data.reshape(-1, len(header))


def sidecar_path(path) -> Path:
    return Path(str(path) + SIDECAR_SUFFIX)


def _state_dict(state: Profile) -> dict:
    return {"grid": state.grid.to_dict(), "values": state.values.tolist()}


def _state_from(d: Mapping) -> Profile:
    return Profile(Grid.from_dict(d["grid"]), np.asarray(d["values"], dtype=float))


def profile_sidecar(profile: Profile, model: ModelSpec | None = None, extra: Mapping | None = None) -> dict:
    out = {"grid": profile.grid.to_dict(), "meta": to_jsonable(profile.meta)}
    if profile.asymptotics is not None:
        left, right = profile.asymptotics
        out["asymptotics"] = {"left": _state_dict(left), "right": _state_dict(right)}
    if model is not None:
        out["model"] = model.to_dict()
    if extra:
        out.update(to_jsonable(extra))
    return out


def write_profile(path, profile: Profile, model: ModelSpec | None = None,
                  extra: Mapping | None = None) -> list[Path]:
    """CSV ``x, u1..um`` plus ``<path>.json`` with grid, end states, model and metadata."""
    header = ["x"] + [f"u{i + 1}" for i in range(profile.dim)]
    rows = np.column_stack([profile.grid.x, profile.values.T])
    p = write_csv(path, header, rows.tolist())
    s = write_json(sidecar_path(path), profile_sidecar(profile, model, extra))
    return [p, s]


def read_profile(path) -> tuple[Profile, ModelSpec | None]:
    """Inverse of :func:`write_profile`. Without a sidecar the grid is inferred
    as a line grid from the x column."""
    header, data = read_csv(path)
    if len(header) < 2 or header[0] != "x":
        raise GridError(f"{path}: expected header 'x,u1,...'")
    x, values = data[:, 0], data[:, 1:].T
    side = sidecar_path(path)
    model = None
    if side.exists():
        meta = read_json(side)
        grid = Grid.from_dict(meta["grid"])
        if grid.n != len(x):
            raise GridError(f"{path}: sidecar grid has {grid.n} nodes, CSV has {len(x)}")
        asym = None
        if "asymptotics" in meta:
            a = meta["asymptotics"]
            asym = (_state_from(a["left"]), _state_from(a["right"]))
        if "model" in meta:
            model = load_model(meta["model"])
        return Profile(grid, values, asym, dict(meta.get("meta", {}))), model
    if len(x) < 2:
        raise GridError(f"{path}: too few rows")
    return Profile(Grid.line(float(x[0]), float(x[-1]), n=len(x)), values), None


def load_model(source) -> ModelSpec:
    """Model from a config mapping or the path of a JSON config file.

    Accepts the saved form (``potentials`` map of Fourier dicts) as well as
    the config form (single ``potential`` entry naming V).
    """
    if isinstance(source, (str, os.PathLike)):
        source = read_json(source)
    if not isinstance(source, Mapping):
        raise ModelError("model config must be a JSON object")
    return model_from_config(source)
