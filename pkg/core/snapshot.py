"""Field snapshot files.

Layout: one UTF-8 JSON header line, then little-endian float64 (re, im) pairs
over the stored half-spectrum n3 >= 0 (FFT indices 0 .. N3/2), components
outermost, then n3, n2, n1 with n1 fastest. The n3 < 0 planes are rebuilt from
Hermitian symmetry on read.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ValidationError
from .torus import SpectralField, TorusSpec

FORMAT_VERSION = 1
STATE_COMPONENTS = ("v1", "v2", "v3", "theta")


@dataclass
class Snapshot:
    field: SpectralField
    time: float


def _component_names(count: int) -> Sequence[str]:
    if count == 4:
        return STATE_COMPONENTS
    return tuple(f"c{i}" for i in range(count))


def write_snapshot(path: Union[str, Path], field: SpectralField, time: float = 0.0) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torus = field.torus
    half = torus.N3 // 2 + 1
    header = {
        "format_version": FORMAT_VERSION,
        "torus": list(torus.periods),
        "grid": list(torus.grid),
        "time": float(time),
        "components": list(_component_names(field.components)),
        "zero_horizontal_average": bool(field.zero_horizontal_average),
    }
    stored = np.transpose(field.coeffs[:, :, :, :half], (0, 3, 2, 1))
    with path.open("wb") as fh:
        fh.write((json.dumps(header) + "\n").encode("utf-8"))
        fh.write(np.ascontiguousarray(stored).astype("<c16").tobytes())
    return path


def read_snapshot(path: Union[str, Path], torus: Optional[TorusSpec] = None) -> Snapshot:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Snapshot not found at {path}")
    raw = path.read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise ValidationError(f"{path}: missing snapshot header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: unreadable snapshot header ({exc})") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise ValidationError(f"{path}: unsupported snapshot format {header.get('format_version')!r}")

    grid = tuple(int(n) for n in header["grid"])
    if torus is None:
        torus = TorusSpec.build(header["torus"], grid)
    elif torus.grid != grid or tuple(float(a) for a in header["torus"]) != torus.periods:
        raise ValidationError(
            f"{path}: snapshot torus {header['torus']} / grid {list(grid)} does not match "
            f"{list(torus.periods)} / {list(torus.grid)}"
        )
    count = len(header["components"])
    N1, N2, N3 = grid
    half = N3 // 2 + 1
    payload = raw[newline + 1:]
    expected = count * half * N2 * N1 * 16
    if len(payload) != expected:
        raise ValidationError(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    stored = np.frombuffer(payload, dtype="<c16").reshape(count, half, N2, N1)

    coeffs = np.zeros((count, N1, N2, N3), dtype=complex)
    coeffs[:, :, :, :half] = np.transpose(stored, (0, 3, 2, 1))
    i1 = (-np.arange(N1)) % N1
    i2 = (-np.arange(N2)) % N2
    for j in range(half, N3):
        mirror = coeffs[:, :, :, N3 - j][:, i1][:, :, i2]
        coeffs[:, :, :, j] = np.conj(mirror)
    field = SpectralField(
        torus, coeffs, zero_horizontal_average=bool(header.get("zero_horizontal_average", False))
    )
    return Snapshot(field, float(header.get("time", 0.0)))
