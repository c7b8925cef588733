"""Binary field dumps with JSON manifests.

A dump is a pair ``<stem>.bin`` / ``<stem>.json``. The binary file holds raw
little-endian float64 values in C (row-major) order over the array axes, with
no header. Complex arrays are written as interleaved (real, imag) float64
pairs, i.e. an extra trailing axis of length 2. The manifest records the
axis layout, grid, representation and units needed to read it back.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

__all__ = ["dump_array", "load_array", "write_json", "format_float"]

_DTYPE = np.dtype("<f8")


def format_float(value: float) -> str:
    """17 significant digits, enough to round-trip a float64."""
    return f"{float(value):.17g}"


def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_json(path: Path | str, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))


def dump_array(
    stem: Path | str,
    array: np.ndarray,
    *,
    axes: list[str],
    representation: str = "physical",
    units: str = "dimensionless",
    grid: dict | None = None,
    extra: dict | None = None,
) -> tuple[Path, Path]:
    """Write ``array`` as ``<stem>.bin`` plus ``<stem>.json``."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    arr = np.asarray(array)
    is_complex = np.iscomplexobj(arr)
    if len(axes) != arr.ndim:
        raise ValueError(f"{len(axes)} axis names for a {arr.ndim}-d array")
    raw = np.ascontiguousarray(arr, dtype=np.complex128 if is_complex else np.float64)
    if is_complex:
        raw = raw.view(np.float64).reshape(arr.shape + (2,))
    bin_path = stem.with_suffix(".bin")
    json_path = stem.with_suffix(".json")
    raw.astype(_DTYPE, copy=False).tofile(bin_path)
    manifest = {
        "file": bin_path.name,
        "dtype": "float64",
        "byte_order": "little",
        "order": "C",
        "shape": list(arr.shape),
        "axes": list(axes),
        "complex": is_complex,
        "representation": representation,
        "units": units,
    }
    if grid is not None:
        manifest["grid"] = grid
    if extra:
        manifest.update(extra)
    write_json(json_path, manifest)
    return bin_path, json_path


def load_array(stem: Path | str) -> tuple[np.ndarray, dict]:
    """Read a dump written by :func:`dump_array`; returns (array, manifest)."""
    stem = Path(stem)
    json_path = stem.with_suffix(".json")
    manifest = json.loads(json_path.read_text())
    raw = np.fromfile(stem.parent / manifest["file"], dtype=_DTYPE)
    shape = tuple(manifest["shape"])
    if manifest["complex"]:
        arr = raw.reshape(shape + (2,)).astype(np.float64)
        arr = arr[..., 0] + 1j * arr[..., 1]
    else:
        arr = raw.reshape(shape).astype(np.float64)
    return arr, manifest
