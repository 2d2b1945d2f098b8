"""Field container files: binary physical-space payload plus a JSON sidecar.

Layout: a 32-byte little-endian header (magic ``NSEF``, format version, grid
points per axis, component count, payload dtype code, 12 reserved bytes),
followed by the physical-space arrays in C order, one component after
another.  dtype code 0 is float64 (velocity/scalar fields), 1 is uint8
(boolean masks).  The sidecar ``<path>.json`` records grid, normalization,
and provenance.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from .spectral import Grid3, SpectralField, VectorField, to_physical, to_spectral

__all__ = ["write_field", "read_field", "write_mask", "read_mask", "sidecar_path"]

_MAGIC = b"NSEF"
_VERSION = 1
_HEADER = struct.Struct("<4sIIII12x")  # magic, version, n, ncomp, dtype code
_DTYPE_F64 = 0
_DTYPE_U8 = 1


def sidecar_path(path: Union[str, Path]) -> Path:
    return Path(str(path) + ".json")


def _write_payload(path: Path, arrays, dtype_code: int, grid: Grid3,
                   kind: str, provenance: Optional[dict]) -> None:
    np_dtype = "<f8" if dtype_code == _DTYPE_F64 else "u1"
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, grid.n, len(arrays), dtype_code))
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype=np_dtype).tobytes())
    sidecar = {
        "format": "NSEF",
        "version": _VERSION,
        "kind": kind,
        "components": len(arrays),
        "grid": {"n": grid.n, "length": grid.length},
        "normalization": "physical-space samples; spectral coefficients are "
                         "unit for a pure mode exp(i k.x)",
        "provenance": provenance or {},
    }
    with open(sidecar_path(path), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_field(path: Union[str, Path], field: Union[SpectralField, VectorField],
                provenance: Optional[dict] = None) -> None:
    """Write a scalar or vector field (physical-space float64 payload)."""
    path = Path(path)
    if isinstance(field, VectorField):
        arrays = [to_physical(c) for c in field.components]
        grid, kind = field.grid, "vector"
    else:
        arrays = [to_physical(field)]
        grid, kind = field.grid, "scalar"
    _write_payload(path, arrays, _DTYPE_F64, grid, kind, provenance)


def write_mask(path: Union[str, Path], mask: np.ndarray, grid: Grid3,
               provenance: Optional[dict] = None) -> None:
    """Write a boolean grid mask (uint8 payload variant)."""
    if mask.shape != (grid.n,) * 3:
        raise ValueError(f"mask shape {mask.shape} does not match grid n={grid.n}")
    _write_payload(Path(path), [mask.astype(np.uint8)], _DTYPE_U8, grid,
                   "mask", provenance)


def _read_header(path: Path) -> Tuple[int, int, int]:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
    if len(header) != _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, n, ncomp, dtype_code = _HEADER.unpack(header)
    if magic != _MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    return n, ncomp, dtype_code


def _read_sidecar(path: Path) -> dict:
    sp = sidecar_path(path)
    if not sp.exists():
        return {}
    with open(sp) as fh:
        return json.load(fh)


def read_field(path: Union[str, Path]) -> Tuple[Union[SpectralField, VectorField], dict]:
    """Read a field container; returns (field, sidecar metadata)."""
    path = Path(path)
    n, ncomp, dtype_code = _read_header(path)
    if dtype_code != _DTYPE_F64:
        raise ValueError(f"{path}: expected a float field, found a mask payload")
    if ncomp not in (1, 3):
        raise ValueError(f"{path}: unsupported component count {ncomp}")
    meta = _read_sidecar(path)
    length = meta.get("grid", {}).get("length", 2.0 * np.pi)
    grid = Grid3(n, length)
    count = n ** 3
    fields = []
    with open(path, "rb") as fh:
        fh.seek(_HEADER.size)
        for _ in range(ncomp):
            raw = np.fromfile(fh, dtype="<f8", count=count)
            if raw.size != count:
                raise ValueError(f"{path}: truncated payload")
            fields.append(to_spectral(raw.reshape(n, n, n), grid))
    if ncomp == 1:
        return fields[0], meta
    return VectorField(*fields), meta


def read_mask(path: Union[str, Path]) -> Tuple[np.ndarray, Grid3, dict]:
    """Read a boolean mask container; returns (mask, grid, sidecar metadata)."""
    path = Path(path)
    n, ncomp, dtype_code = _read_header(path)
    if dtype_code != _DTYPE_U8 or ncomp != 1:
        raise ValueError(f"{path}: not a mask container")
    meta = _read_sidecar(path)
    length = meta.get("grid", {}).get("length", 2.0 * np.pi)
    with open(path, "rb") as fh:
        fh.seek(_HEADER.size)
        raw = np.fromfile(fh, dtype="u1", count=n ** 3)
    if raw.size != n ** 3:
        raise ValueError(f"{path}: truncated payload")
    return raw.reshape(n, n, n).astype(bool), Grid3(n, length), meta
