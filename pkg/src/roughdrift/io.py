"""File formats: binary+JSON containers, 17-digit CSV tables, JSON reports."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, is_dataclass

import numpy as np

from .errors import ConfigurationError

FORMAT_VERSION = 1


def _prefix(path):
    path = os.fspath(path)
    for ext in (".bin", ".json"):
        if path.endswith(ext):
            return path[: -len(ext)]
    return path


def write_container(path, values, meta):
    """Write ``values`` as little-endian float64 to ``path.bin`` with a ``path.json`` sidecar."""
    prefix = _prefix(path)
    arr = np.ascontiguousarray(values, dtype="<f8")
    side = dict(meta)
    side.update({"format_version": FORMAT_VERSION, "dtype": "<f8", "shape": list(arr.shape)})
    with open(prefix + ".bin", "wb") as fh:
        fh.write(arr.tobytes())
    write_json(prefix + ".json", side)
    return prefix


def read_container(path):
    prefix = _prefix(path)
    try:
        with open(prefix + ".json", encoding="utf-8") as fh:
            meta = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read container sidecar {prefix}.json: {exc}") from None
    shape = tuple(meta.get("shape", ()))
    try:
        raw = np.fromfile(prefix + ".bin", dtype=meta.get("dtype", "<f8"))
    except OSError as exc:
        raise ConfigurationError(f"cannot read container data {prefix}.bin: {exc.strerror}") from None
    if raw.size != int(np.prod(shape)):
        raise ConfigurationError(f"{prefix}.bin holds {raw.size} values, sidecar says {shape}")
    return raw.reshape(shape), meta


def write_paths(path, values, times, kind, hurst, master_seed, path_indices, extra=None):
    """Path container: ``values`` of shape ``(P, n+1, d)`` on a uniform grid."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 3:
        raise ValueError("path values must have shape (P, n+1, d)")
    idx = np.asarray(path_indices, dtype=np.int64)
    meta = {
        "kind": kind,
        "hurst": hurst,
        "master_seed": int(master_seed),
        "path_indices": idx.tolist(),
        "horizon": float(times[-1]),
        "n_steps": len(times) - 1,
    }
    meta.update(extra or {})
    return write_container(path, values, meta)


def read_paths(path):
    values, meta = read_container(path)
    if values.ndim != 3 or "n_steps" not in meta:
        raise ConfigurationError(f"{_prefix(path)} is not a path container")
    times = np.linspace(0.0, meta["horizon"], meta["n_steps"] + 1)
    return values, times, meta


def write_grid(path, f, extra=None):
    """Grid-function container with its lattice in the sidecar."""
    lat = f.lattice
    meta = {"kind": "grid", "dim": lat.dim, "half_width": lat.half_width, "points": lat.points}
    meta.update(extra or {})
    return write_container(path, f.values, meta)


def read_grid(path):
    from .besov import GridFunction, SpatialLattice

    values, meta = read_container(path)
    if meta.get("kind") != "grid":
        raise ConfigurationError(f"{_prefix(path)} is not a grid-function container")
    return GridFunction(SpatialLattice(meta["dim"], meta["half_width"], meta["points"]), values), meta


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_csv(path, rows, config_hash, master_seed):
    """Rows of a flat table, headed by ``# config_hash=`` and ``# master_seed=`` lines."""
    rows = list(rows)
    cols = list(rows[0].keys()) if rows else []
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        fh.write(f"# master_seed={int(master_seed)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])
    return path


def read_csv(path):
    """``(meta, header, rows)``; numeric cells stay strings."""
    meta = {}
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# ") and "=" in line and not body:
            k, v = line[2:].split("=", 1)
            meta[k] = v
        else:
            body.append(line)
    if "config_hash" not in meta or "master_seed" not in meta:
        raise ConfigurationError(f"{path} lacks the config_hash/master_seed header")
    reader = list(csv.reader(body))
    header = reader[0] if reader else []
    return meta, header, reader[1:]


def aggregate_csv(paths, out):
    """Concatenate tables that share one (config hash, seed) header and column set."""
    if not paths:
        raise ConfigurationError("nothing to aggregate")
    metas, header, rows = [], None, []
    for p in paths:
        meta, h, r = read_csv(p)
        metas.append(meta)
        if header is None:
            header = h
        elif h != header:
            raise ConfigurationError(f"column mismatch in {p}")
        rows.extend(r)
    ref = metas[0]
    for p, m in zip(paths, metas):
        if m["config_hash"] != ref["config_hash"] or m["master_seed"] != ref["master_seed"]:
            raise ConfigurationError(
                f"refusing to aggregate {p}: config hash {m['config_hash'][:12]} / seed {m['master_seed']} "
                f"differs from {ref['config_hash'][:12]} / {ref['master_seed']}"
            )
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_hash={ref['config_hash']}\n# master_seed={ref['master_seed']}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return out


def to_jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        obj = obj.to_dict() if hasattr(obj, "to_dict") else asdict(obj)
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read report {path}: {exc}") from None
