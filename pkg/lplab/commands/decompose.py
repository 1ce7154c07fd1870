import logging

import numpy as np

from lab_service.norms import Lebesgue, band_norms, magnitude
from lab_service.spectral_core import CUTOFF, band_decomposition, reconstruct
from lplab.utils import load_datum, write_csv

logger = logging.getLogger(__name__)


def register(subparsers, common) -> None:
    parser = subparsers.add_parser("decompose", parents=[common], help="Littlewood–Paley bands of a field")
    parser.set_defaults(handler=handle_decompose)


def handle_decompose(args, config):
    """Band sup/L² norms, telescoping reconstruction error and partition residual."""
    grid = config.grid()
    field = load_datum(config, default="builtin:random")

    bands = list(grid.data_bands)
    pieces = band_decomposition(field, bands)
    sup_norms = band_norms(field, Lebesgue(p="inf"))
    l2_norms = band_norms(field, Lebesgue(p=2.0))

    # the bands carry every mode except the mean
    mean_free = field.with_coef(field.coef, mean_zero=True)
    error = reconstruct(pieces) - mean_free
    scale = float(np.max(magnitude(mean_free.values, grid)))
    relative = float(np.max(magnitude(error.values, grid))) / scale if scale > 0 else 0.0

    lo, hi = grid.band_window
    residual = float(np.max(CUTOFF.partition_residual(grid.xi_sq[grid.xi_sq > 0], lo, hi)))

    rows = [(j, sup_norms[j], l2_norms[j]) for j in bands]
    if config.csv:
        write_csv(config.csv, ("j", "sup_norm", "l2_norm"), rows)

    top = max(sup_norms.values(), default=0.0)
    active = [j for j in bands if top > 0 and sup_norms[j] > 1e-14 * top]
    logger.info(f"📊 Active bands {active}, reconstruction error {relative:.3e}")
    return {
        "grid": grid.describe(),
        "bands": [{"j": j, "sup_norm": s, "l2_norm": l} for j, s, l in rows],
        "active_bands": active,
        "reconstruction_error": relative,
        "partition_residual": residual,
        "summary": f"bands {bands[0]}..{bands[-1]}: reconstruction error {relative:.3e}, "
        f"partition residual {residual:.3e}",
    }, 0
