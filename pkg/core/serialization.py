"""Binary and CSV persistence of fields and DN maps.

Binary layout: magic ``HSTB``, little-endian u16 version, u8 kind, u32 header
length, a UTF-8 JSON header, then the samples as little-endian complex64.
"""
import csv
import json
import logging
import struct
from pathlib import Path
from typing import IO, Any, Dict, Tuple, Union

import numpy as np

from .forward_dn import make_basis
from .models import DnMap, GridSpec, ScalarField

logger = logging.getLogger(__name__)

MAGIC = b"HSTB"
VERSION = 1
KIND_FIELD = 0
KIND_DN = 1
_PREFIX = struct.Struct("<4sHBI")
_DTYPE = np.dtype("<c8")

PathLike = Union[str, Path]


def _write(path: PathLike, kind: int, header: Dict[str, Any], data: np.ndarray) -> None:
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, kind, len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(data, dtype=_DTYPE).tobytes())


def _read(path: PathLike, kind: int) -> Tuple[Dict[str, Any], np.ndarray]:
    raw = Path(path).read_bytes()
    magic, version, found, size = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path} is not a helmstab container")
    if version != VERSION or found != kind:
        raise ValueError(f"{path}: unsupported version {version} or kind {found}")
    start = _PREFIX.size
    header = json.loads(raw[start:start + size].decode("utf-8"))
    data = np.frombuffer(raw, dtype=_DTYPE, offset=start + size)
    return header, data.astype(complex)


def save_field(field: ScalarField, path: PathLike) -> None:
    header = {"grid": field.grid.descriptor(), "support_flag": field.support_flag, "label": field.label}
    _write(path, KIND_FIELD, header, np.asarray(field.values).ravel())


def load_field(path: PathLike) -> ScalarField:
    header, data = _read(path, KIND_FIELD)
    grid = GridSpec(**header["grid"])
    return ScalarField(
        grid=grid,
        values=data.reshape(grid.shape),
        support_flag=header["support_flag"],
        label=header["label"],
    )


def save_dn(dn: DnMap, path: PathLike) -> None:
    header = {"basis": dn.basis.descriptor(), "k": dn.k, "q_id": dn.q_id}
    _write(path, KIND_DN, header, np.asarray(dn.matrix).ravel())


def load_dn(path: PathLike) -> DnMap:
    header, data = _read(path, KIND_DN)
    grid = GridSpec(**header["basis"]["grid"])
    basis = make_basis(grid, header["basis"]["modes_per_face"])
    return DnMap(basis=basis, matrix=data.reshape(basis.size, basis.size), k=header["k"], q_id=header["q_id"])


def write_field_csv(field: ScalarField, stream: IO[str]) -> None:
    """Omega nodes only: coordinates, then real and imaginary parts."""
    grid = field.grid
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow([f"x{i}" for i in range(grid.dim)] + ["re", "im"])
    coords = [c.ravel() for c in grid.coordinates(omega_only=True)]
    values = np.asarray(field.omega_values).ravel()
    for j, v in enumerate(values):
        writer.writerow([f"{c[j]:.10g}" for c in coords] + [f"{v.real:.10e}", f"{v.imag:.10e}"])


def write_dn_csv(dn: DnMap, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["row", "col", "re", "im"])
    matrix = np.asarray(dn.matrix)
    for (i, j), v in np.ndenumerate(matrix):
        writer.writerow([i, j, f"{v.real:.10e}", f"{v.imag:.10e}"])
