from pathlib import Path
import sys

project_root = Path(__file__).parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

from lab_service.errors import (  # noqa: E402
    ArgumentError,
    FieldFormatError,
    LabError,
    MarginError,
    PreconditionError,
)
from lab_service.solver import MildSolver, SolverReport, get_solver_service  # noqa: E402
from lab_service.workers import set_thread_cap  # noqa: E402

# process status for argparse usage failures
USAGE_EXIT = 64

__all__ = [
    "ArgumentError",
    "FieldFormatError",
    "LabError",
    "MarginError",
    "PreconditionError",
    "MildSolver",
    "SolverReport",
    "get_solver_service",
    "set_thread_cap",
    "USAGE_EXIT",
]
