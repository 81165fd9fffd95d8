"""Artifact formats: curve and measure CSVs, JSON records, field dumps.

Every text artifact starts with ``# key: value`` provenance lines (spec hash,
grid spacing, schedule, package version). Floats are written with 17
significant digits so identical inputs give byte-identical files.
"""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .distfield import DistanceField, GridWindow, RegionMask
from .setspec import SetSpec, spec_to_dict

CURVE_COLUMNS = ("r", "value", "estimator", "B_tag", "h", "eps_oracle")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


def spec_hash(spec: SetSpec | dict | str | None) -> str:
    """sha256 of the canonical JSON form of a set spec (first 16 hex digits)."""
    if spec is None:
        return "none"
    if isinstance(spec, str):
        payload = spec
    else:
        doc = spec if isinstance(spec, dict) else spec_to_dict(spec)
        payload = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def provenance(spec=None, h: float | None = None, schedule: Any = None, **extra) -> dict:
    meta = {"spec_hash": spec_hash(spec), "h": "exact" if not h else fmt(h)}
    if schedule is not None:
        if hasattr(schedule, "r_max"):
            meta["schedule"] = f"r_max={fmt(schedule.r_max)} q={fmt(schedule.q)} count={schedule.count}"
        else:
            meta["schedule"] = str(schedule)
    for k in sorted(extra):
        meta[k] = fmt(extra[k])
    meta["version"] = __version__
    return meta


def _header_lines(meta: dict) -> list[str]:
    return [f"# {k}: {v}" for k, v in meta.items()]


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence], meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = _header_lines(meta or {})
    lines.append(",".join(columns))
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path: str | Path) -> tuple[dict, list[str], list[list[str]]]:
    """(provenance dict, column names, rows as strings)."""
    meta, rows, cols = {}, [], None
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition(": ")
            meta[k] = v
        elif cols is None:
            cols = line.split(",")
        elif line:
            rows.append(line.split(","))
    return meta, cols or [], rows


def write_curve_csv(path, curve, meta: dict | None = None, estimator: str | None = None) -> Path:
    """Curve rows (r, value, estimator, B_tag, h, eps_oracle), r descending."""
    est = estimator or getattr(curve, "estimator", "volume")
    order = np.argsort(-np.asarray(curve.radii))
    rows = [(curve.radii[i], curve.values[i], est, curve.tag, curve.h, curve.eps) for i in order]
    return write_csv(path, CURVE_COLUMNS, rows, meta)


def write_measure_csv(path, measures, meta: dict | None = None) -> Path:
    """One row per (radius, cell): cell index, centre coordinates, mass, mode, source, r-or-t."""
    measures = list(measures)
    if not measures:
        raise ValueError("no measures to write")
    d = measures[0].partition.dim
    cols = ["cell"] + [f"x{k}" for k in range(d)] + ["mass", "mode", "source", "param"]
    rows = []
    for m in measures:
        centers = m.partition.centers()
        for j, mass in enumerate(m.masses):
            rows.append([j, *centers[j], mass, m.mode, m.source, m.param])
    return write_csv(path, cols, rows, meta)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else fmt(x)
    return x


def write_records(path, records, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"provenance": meta or {}, "records": _jsonable(list(records))}
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def read_records(path) -> tuple[dict, list]:
    doc = json.loads(Path(path).read_text())
    return doc["provenance"], doc["records"]


# --------------------------------------------------------------------------
# binary dumps
# --------------------------------------------------------------------------


def pack_mask(mask: np.ndarray) -> dict:
    m = np.asarray(mask, dtype=bool)
    return {"shape": list(m.shape), "bits": np.packbits(m.ravel())}


def unpack_mask(shape, bits) -> np.ndarray:
    n = int(np.prod(shape))
    return np.unpackbits(np.asarray(bits, np.uint8), count=n).astype(bool).reshape(shape)


def dump_field(path, fld: DistanceField, meta: dict | None = None) -> Path:
    """Arrays to ``path`` (.npz) and geometry to a JSON sidecar ``path.json``."""
    path = Path(path).with_suffix(".npz")
    path.parent.mkdir(parents=True, exist_ok=True)
    exo = pack_mask(fld.exo)
    np.savez(path, dist=fld.dist, anchor=fld.anchor, gap=fld.gap, second_idx=fld.second_idx,
             second=fld.second, exo_bits=exo["bits"])
    side = {"window": fld.window.to_dict(), "eps": fld.eps, "tau_exo": fld.tau_exo,
            "method": fld.method, "provenance": meta or {}}
    path.with_suffix(".json").write_text(json.dumps(_jsonable(side), indent=1, sort_keys=True) + "\n")
    return path


def load_field(path) -> DistanceField:
    path = Path(path).with_suffix(".npz")
    side = json.loads(path.with_suffix(".json").read_text())
    w = side["window"]
    window = GridWindow(tuple(w["origin"]), float(w["h"]), tuple(w["shape"]))
    z = np.load(path)
    return DistanceField(window, z["dist"], z["anchor"], z["gap"], z["second_idx"], z["second"],
                         float(side["eps"]), float(side["tau_exo"]), side["method"])


def dump_mask(path, mask: RegionMask) -> Path:
    path = Path(path).with_suffix(".npz")
    path.parent.mkdir(parents=True, exist_ok=True)
    p = pack_mask(mask.cells)
    np.savez(path, bits=p["bits"], shape=np.array(p["shape"]))
    return path


def load_mask_bits(path) -> np.ndarray:
    z = np.load(Path(path).with_suffix(".npz"))
    return unpack_mask(tuple(z["shape"]), z["bits"])
