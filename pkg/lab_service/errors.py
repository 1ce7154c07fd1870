class LabError(Exception):
    """Base error; ``exit_code`` is what the command line returns for it."""

    exit_code = 2

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def __str__(self):
        if not self.context:
            return self.message
        details = ", ".join(f"{key}={value}" for key, value in self.context.items())
        return f"{self.message} ({details})"


class ArgumentError(LabError):
    pass


class BandRangeError(LabError):
    def __init__(self, message: str, j_lo: int, j_hi: int, **context):
        super().__init__(message, window=f"[{j_lo}, {j_hi}]", **context)
        self.j_lo = j_lo
        self.j_hi = j_hi


class AliasingError(BandRangeError):
    def __init__(self, message: str, ceiling: int, **context):
        super().__init__(message, j_lo=ceiling, j_hi=ceiling, safe_ceiling=ceiling, **context)
        self.ceiling = ceiling


class GridMismatchError(LabError):
    pass


class ShapeError(LabError):
    pass


class SpaceSpecError(LabError):
    pass


class PreconditionError(LabError):
    pass


class DegenerateSetError(LabError):
    pass


class FieldFormatError(LabError):
    pass


class MarginError(LabError):
    """Numerical refusal; the partially filled report travels with it."""

    exit_code = 3

    def __init__(self, message: str, report=None, **context):
        super().__init__(message, **context)
        self.report = report
