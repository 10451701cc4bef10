from typing import NamedTuple


class IterRecord(NamedTuple):
    """One row of a solver's metrics log."""

    iter: int
    objective: float
    primal_residual: float = 0.0
    dual_residual: float = 0.0
