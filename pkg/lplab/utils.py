import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from lab_service.errors import ArgumentError
from lab_service.field_io import read_field
from lab_service.initial_data import builtin_field
from lab_service.norms import DerivedBN, DerivedCN, parse_space
from lab_service.solver import SolverConfig
from lab_service.spectral_core import Grid, SpectralField

logger = logging.getLogger(__name__)

BUILTIN_PREFIX = "builtin:"


class RunConfig(BaseModel):
    """Everything a run depends on; echoed into every report."""

    model_config = ConfigDict(extra="forbid")

    dim: int = 2
    points: int = 64
    box_l: float = 1.0
    space: Optional[str] = None
    symbol: str = "scalar1"
    n_exp: int = 4
    K: int = 12
    tol: float = 1e-8
    max_iter: int = 50
    quad_nodes: int = 32
    time_refine: int = 1
    probe_pairs: int = 32
    allow_over_margin: bool = False
    seed: int = 0
    threads: Optional[int] = None
    u0: Optional[str] = None
    amplitude: Optional[float] = None
    out: Optional[str] = None
    csv: Optional[str] = None
    field_out: Optional[str] = None

    def grid(self) -> Grid:
        return Grid(self.dim, self.points, self.box_l)

    def solver_config(self) -> SolverConfig:
        base = None
        if self.space:
            spec = parse_space(self.space)
            base = spec.base if isinstance(spec, (DerivedCN, DerivedBN)) else spec
        return SolverConfig(
            n_exp=self.n_exp,
            base=base,
            symbol=self.symbol,
            quad_nodes=self.quad_nodes,
            time_refine=self.time_refine,
            probe_pairs=self.probe_pairs,
            seed=self.seed,
            tol=self.tol,
            max_iter=self.max_iter,
            K=self.K,
            allow_over_margin=self.allow_over_margin,
        )

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ArgumentError("config file not found", path=str(path))
        try:
            return cls.model_validate_json(path.read_text())
        except ValueError as e:
            raise ArgumentError(f"bad config file {path}: {e}") from e

    def merged(self, overrides: Dict[str, Any]) -> "RunConfig":
        """Flags win over file values; ``None`` means the flag was not given."""
        data = self.model_dump()
        data.update({k: v for k, v in overrides.items() if v is not None and k in data})
        return RunConfig(**data)


def load_datum(config: RunConfig, default: str = "builtin:small", vector: Optional[bool] = None) -> SpectralField:
    """``builtin:<name>`` or the path of an LPF1 field."""
    source = config.u0 or default
    vector = config.symbol.startswith("leray") if vector is None else vector
    if source.startswith(BUILTIN_PREFIX):
        return builtin_field(source[len(BUILTIN_PREFIX):], config.grid(), config.amplitude, config.seed, vector)
    field, sidecar = read_field(source)
    if sidecar is not None:
        logger.info(f"📂 Loaded {source} (created by {sidecar.command or 'unknown'})")
    if config.amplitude is not None:
        field = field * config.amplitude
    return field


def parse_int_range(text: str) -> List[int]:
    """``a:b`` (inclusive) or a comma list."""
    try:
        if ":" in text:
            lo, hi = text.split(":")
            return list(range(int(lo), int(hi) + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ArgumentError(f"cannot read integer range '{text}'") from e


def _clean(value):
    if isinstance(value, BaseModel):
        return _clean(value.model_dump(mode="json"))
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        return _clean(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    return value


def write_report(path, payload: Dict[str, Any]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")
    logger.info(f"💾 Wrote report {path}")
    return path


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    lines = [",".join(header)] + [",".join(format_cell(c) for c in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    logger.info(f"💾 Wrote table {path}")
    return path
