import json
import logging
import struct
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel

from lab_service.errors import FieldFormatError
from lab_service.spectral_core import Grid, SpectralField

logger = logging.getLogger(__name__)

MAGIC = b"LPF1FIELD\0\0\0"
VERSION = 1
HEADER = struct.Struct("<IIdB")


class FieldSidecar(BaseModel):
    format: str = "LPF1"
    version: int = VERSION
    dim: int
    n: int
    box_l: float
    mean_zero: bool
    j_min: int
    j_max: int
    seed: Optional[int] = None
    command: Optional[str] = None
    description: Optional[str] = None


def sidecar_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_field(
    path: Union[str, Path],
    field: SpectralField,
    seed: Optional[int] = None,
    command: Optional[str] = None,
    description: Optional[str] = None,
) -> Path:
    """Write ``field`` as LPF1 plus a ``<path>.json`` sidecar."""
    if field.rank:
        raise FieldFormatError("LPF1 stores scalar fields only", rank=field.rank)
    path = Path(path)
    grid = field.grid
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(HEADER.pack(grid.dim, grid.n, grid.box_l, int(field.mean_zero)))
        fh.write(np.ascontiguousarray(field.coef, dtype="<c16").tobytes(order="C"))

    sidecar = FieldSidecar(
        dim=grid.dim,
        n=grid.n,
        box_l=grid.box_l,
        mean_zero=field.mean_zero,
        j_min=grid.j_min,
        j_max=grid.j_max,
        seed=seed,
        command=command,
        description=description,
    )
    sidecar_path(path).write_text(json.dumps(sidecar.model_dump(), indent=2, sort_keys=True))
    logger.info(f"💾 Wrote field {path} ({grid.dim}-d, N={grid.n}, L={grid.box_l})")
    return path


def read_field(path: Union[str, Path]) -> Tuple[SpectralField, Optional[FieldSidecar]]:
    path = Path(path)
    if not path.exists():
        raise FieldFormatError("field file not found", path=str(path))
    raw = path.read_bytes()
    prefix = len(MAGIC) + 4
    if len(raw) < prefix + HEADER.size or raw[: len(MAGIC)] != MAGIC:
        raise FieldFormatError("not an LPF1 field file", path=str(path))
    (version,) = struct.unpack("<I", raw[len(MAGIC):prefix])
    if version != VERSION:
        raise FieldFormatError("unsupported LPF1 version", version=version)
    dim, n, box_l, mean_zero = HEADER.unpack(raw[prefix: prefix + HEADER.size])
    grid = Grid(dim, n, box_l)
    body = raw[prefix + HEADER.size:]
    expected = 16 * n ** dim
    if len(body) != expected:
        raise FieldFormatError("coefficient block has the wrong size", got=len(body), expected=expected)
    coef = np.frombuffer(body, dtype="<c16").reshape(grid.shape)
    field = SpectralField(grid, coef, bool(mean_zero))

    sidecar = None
    meta = sidecar_path(path)
    if meta.exists():
        sidecar = FieldSidecar(**json.loads(meta.read_text()))
    return field, sidecar

