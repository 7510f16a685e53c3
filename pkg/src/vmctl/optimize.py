"""Projected gradient descent over the box |u_j| <= 1 with Armijo
backtracking, plus first-order (KKT) residual reporting.

Each gradient costs one forward plus one adjoint PDE solve, and the control
dimension is tiny, so plain projected gradient is the right tool at this
scale; a quasi-Newton upgrade would slot in behind the same step interface.

The box multipliers are reported as grid functions built from the gradient
on the active sets (the continuous theory produces measures; this is the
discrete surrogate): at u_j = +1 optimality requires grad <= 0 and the
multiplier is lambda+ = max(-grad, 0); at u_j = -1, grad >= 0 and
lambda- = max(grad, 0). Complementarity holds by construction.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError


def project_box(u, lo=-1.0, hi=1.0):
    """Pointwise clamp to [lo, hi]; idempotent and L2-nonexpansive."""
    return np.clip(u, lo, hi)


@dataclass
class KKTReport:
    lambda_plus: np.ndarray  # (N, nt), >= 0, supported on {u = +1}
    lambda_minus: np.ndarray  # (N, nt), >= 0, supported on {u = -1}
    stationarity: float  # sup-norm of the projected-gradient residual
    complementarity: float  # exact 0 by construction on the grid
    feasibility: float  # sup-norm of max(|u| - 1, 0)


def kkt_residuals(u, grad, active_tol=0.0):
    """Discrete KKT residuals for min phi s.t. |u| <= 1.

    Inactive points contribute |grad|; active points contribute the part of
    the gradient pointing out of the feasible side. Points exactly at the
    bound with zero gradient count as inactive (residual 0 either way).
    """
    upper = u >= 1.0 - active_tol
    lower = u <= -1.0 + active_tol
    lam_p = np.where(upper, np.maximum(-grad, 0.0), 0.0)
    lam_m = np.where(lower, np.maximum(grad, 0.0), 0.0)
    res = np.where(upper, np.maximum(grad, 0.0),
                   np.where(lower, np.maximum(-grad, 0.0), np.abs(grad)))
    comp = max(
        float(np.max(np.abs(lam_p * (u - 1.0)))) if lam_p.size else 0.0,
        float(np.max(np.abs(lam_m * (u + 1.0)))) if lam_m.size else 0.0,
    )
    return KKTReport(
        lambda_plus=lam_p,
        lambda_minus=lam_m,
        stationarity=float(np.max(res)),
        complementarity=comp,
        feasibility=float(np.max(np.maximum(np.abs(u) - 1.0, 0.0))),
    )


@dataclass
class OptimizerConfig:
    max_iters: int = 20
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    step0: float = 1.0
    step_floor: float = 1e-12
    tol_pg_rel: float = 1e-3  # projected-gradient norm relative to initial
    tol_decrease: float = 0.0  # absolute objective-decrease stagnation

    def __post_init__(self):
        if not 0 < self.armijo_c1 < 1:
            raise ValueError("armijo_c1 must be in (0, 1)")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must be in (0, 1)")
        if self.step0 <= 0 or self.max_iters < 0:
            raise ValueError("step0 and max_iters must be positive")


@dataclass
class HistoryRow:
    iteration: int
    objective: float
    tracking: float
    regularization: float
    step: float
    pg_norm: float
    kkt_stationarity: float
    n_backtracks: int


@dataclass
class MinimizeResult:
    u: np.ndarray
    objective: float
    history: list = field(default_factory=list)
    kkt: KKTReport = None
    status: str = "max_iters"
    pg_norm0: float = 0.0


def pg_norm(u, grad, step=1.0):
    """Norm of the projected-gradient step u - P(u - step*grad)."""
    return float(np.linalg.norm(u - project_box(u - step * grad)))


def minimize(problem, u0, cfg=None):
    """Projected gradient with Armijo backtracking on the projected path.

    problem must provide objective(u) -> (value, track, reg) and
    gradient(u) -> (grad, (value, track, reg), base_run). The accepted-step
    history is monotone by construction; a forward-solve failure inside the
    line search rejects the trial and halves the step down to a floor.
    """
    cfg = cfg or OptimizerConfig()
    u = project_box(np.array(u0, dtype=float))
    grad, (value, track, reg), _ = problem.gradient(u)
    pg0 = pg_norm(u, grad)
    history = [HistoryRow(0, value, track, reg, 0.0, pg0,
                          kkt_residuals(u, grad).stationarity, 0)]
    result = MinimizeResult(u=u, objective=value, history=history, pg_norm0=pg0)
    if pg0 == 0.0:
        result.status = "stationary"
        result.kkt = kkt_residuals(u, grad)
        return result

    step = cfg.step0
    for it in range(1, cfg.max_iters + 1):
        accepted = False
        n_back = 0
        while step >= cfg.step_floor:
            trial = project_box(u - step * grad)
            decrease_model = float(np.sum(grad * (u - trial)))
            if decrease_model <= 0.0:
                # projected step is uphill-null: stationary within round-off
                break
            try:
                trial_value, trial_track, trial_reg = problem.objective(trial)
            except NumericalError:
                step *= cfg.backtrack
                n_back += 1
                continue
            if trial_value <= value - cfg.armijo_c1 * decrease_model:
                accepted = True
                break
            step *= cfg.backtrack
            n_back += 1
        if not accepted:
            result.status = "line_search_floor"
            break
        u = trial
        last_decrease = value - trial_value
        value, track, reg = trial_value, trial_track, trial_reg
        grad, _, _ = problem.gradient(u)
        pgn = pg_norm(u, grad)
        kkt = kkt_residuals(u, grad)
        history.append(HistoryRow(it, value, track, reg, step, pgn,
                                  kkt.stationarity, n_back))
        result.u, result.objective, result.kkt = u, value, kkt
        if pgn <= cfg.tol_pg_rel * pg0:
            result.status = "pg_tolerance"
            break
        if cfg.tol_decrease > 0 and last_decrease < cfg.tol_decrease:
            result.status = "stagnation"
            break
        # gentle growth lets the line search recover after cautious steps
        step = min(step / cfg.backtrack, cfg.step0 * 1e6)
    if result.kkt is None:
        result.kkt = kkt_residuals(u, grad)
    result.u = u
    result.objective = value
    return result
