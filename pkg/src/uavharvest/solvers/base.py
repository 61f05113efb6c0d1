"""Shared solver diagnostics contract."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SolverError(RuntimeError):
    """Raised for malformed programs or internal solver failures."""


@dataclass
class SolveReport:
    """Uniform solution/diagnostics record returned by every solver.

    ``status`` is one of ``optimal``, ``infeasible``, ``unbounded`` or
    ``iteration_cap``. On ``optimal`` the primal ``x`` satisfies
    ``max_violation <= feas_tol`` and ``kkt_residual <= kkt_tol`` for the
    tolerances the solve ran with.
    """

    status: str
    objective: float
    x: np.ndarray
    max_violation: float
    kkt_residual: float
    iterations: int
    wall_time: float
    dual_ineq: np.ndarray | None = None
    dual_eq: np.ndarray | None = None
    dual_lb: np.ndarray | None = None
    dual_ub: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"
