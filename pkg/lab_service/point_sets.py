import json
import logging
import re
from functools import lru_cache
from pathlib import Path
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import ndimage

from lab_service.errors import ArgumentError, DegenerateSetError
from lab_service.spectral_core import Grid

logger = logging.getLogger(__name__)


class PointSet(BaseModel):
    """Closed set S on the torus, stored as samples or an analytic descriptor.

    ``point``/``line``/``plane`` carry an anchor (and an axis: the normal of a
    plane, the direction of a line); ``points`` is a plain list of samples.
    """

    model_config = ConfigDict(frozen=True)

    descriptor: Literal["points", "point", "line", "plane"] = "points"
    points: Tuple[Tuple[float, ...], ...] = ()
    axis: Optional[int] = None
    anchor: Optional[Tuple[float, ...]] = None

    @classmethod
    def point(cls, anchor) -> "PointSet":
        return cls(descriptor="point", anchor=tuple(float(a) for a in anchor))

    @classmethod
    def plane(cls, axis: int, offset: float = 0.0) -> "PointSet":
        return cls(descriptor="plane", axis=axis, anchor=(float(offset),))

    @classmethod
    def line(cls, axis: int, anchor) -> "PointSet":
        return cls(descriptor="line", axis=axis, anchor=tuple(float(a) for a in anchor))

    @classmethod
    def from_file(cls, path) -> "PointSet":
        data = json.loads(Path(path).read_text())
        return cls(points=tuple(tuple(float(c) for c in p) for p in data))

    @classmethod
    def parse(cls, text: str) -> "PointSet":
        """``point(x,y[,z])``, ``plane(axis[,offset])``, ``line(axis,a,b)``, ``pts(x y;x y)``, ``file(path)``, ``empty``."""
        text = text.strip()
        if text == "empty":
            return cls()
        match = re.fullmatch(r"(point|plane|line|pts|file)\((.*)\)", text)
        if not match:
            raise ArgumentError(f"cannot parse point set '{text}'")
        kind, body = match.groups()
        if kind == "file":
            return cls.from_file(body)
        if kind == "pts":
            try:
                points = [tuple(float(c) for c in item.split()) for item in body.split(";") if item.strip()]
            except ValueError as e:
                raise ArgumentError(f"bad coordinates in '{text}'") from e
            return cls(points=tuple(points))
        try:
            args = [float(a) for a in body.split(",") if a.strip()]
        except ValueError as e:
            raise ArgumentError(f"bad coordinates in '{text}'") from e
        if kind == "point":
            return cls.point(args)
        if kind == "plane":
            return cls.plane(int(args[0]), args[1] if len(args) > 1 else 0.0)
        return cls.line(int(args[0]), args[1:])

    def to_text(self) -> str:
        def num(x: float) -> str:
            return f"{x:.17g}"

        if self.descriptor == "point":
            return "point(" + ",".join(num(a) for a in self.anchor) + ")"
        if self.descriptor == "plane":
            return f"plane({self.axis},{num(self.anchor[0])})"
        if self.descriptor == "line":
            return f"line({self.axis}," + ",".join(num(a) for a in self.anchor) + ")"
        if not self.points:
            return "empty"
        return "pts(" + ";".join(" ".join(num(c) for c in p) for p in self.points) + ")"

    @property
    def is_empty(self) -> bool:
        return self.descriptor == "points" and not self.points

    def grid_mask(self, grid: Grid) -> np.ndarray:
        """Grid trace of S: every cell whose node is (rounded to) a point of S."""

        def cell(x: float) -> int:
            return int(round(x / grid.spacing)) % grid.n

        mask = np.zeros(grid.shape, dtype=bool)
        if self.descriptor == "points":
            for p in self.points:
                if len(p) != grid.dim:
                    raise ArgumentError("point has the wrong dimension", point=p, dim=grid.dim)
                mask[tuple(cell(c) for c in p)] = True
        elif self.descriptor == "point":
            if len(self.anchor) != grid.dim:
                raise ArgumentError("point has the wrong dimension", point=self.anchor, dim=grid.dim)
            mask[tuple(cell(c) for c in self.anchor)] = True
        elif self.descriptor == "plane":
            index = [slice(None)] * grid.dim
            index[self.axis] = cell(self.anchor[0])
            mask[tuple(index)] = True
        else:
            others = [a for a in range(grid.dim) if a != self.axis]
            if len(others) != len(self.anchor):
                raise ArgumentError("line anchor needs one coordinate per transverse axis")
            index = [slice(None)] * grid.dim
            for a, c in zip(others, self.anchor):
                index[a] = cell(c)
            mask[tuple(index)] = True
        return mask


@lru_cache(maxsize=32)
def distance_field(points: PointSet, grid: Grid) -> np.ndarray:
    """Periodic Euclidean distance d_S sampled at the grid nodes."""
    if points.is_empty:
        raise DegenerateSetError("distance to an empty set is undefined")
    mask = points.grid_mask(grid)
    tiled = np.tile(~mask, (3,) * grid.dim)
    dist = ndimage.distance_transform_edt(tiled, sampling=grid.spacing)
    centre = tuple(slice(grid.n, 2 * grid.n) for _ in range(grid.dim))
    out = np.ascontiguousarray(dist[centre])
    out.setflags(write=False)
    logger.debug(f"📐 Distance field for {points.descriptor} set on N={grid.n}: max {out.max():.4g}")
    return out
