"""Minimization of the discrete objective over piecewise-constant controls.

The smooth part of the objective is differentiable in the control values and
the variation term is convex, so the workhorse is a proximal-gradient
iteration: a gradient step on the smooth part, the exact one-dimensional
total-variation proximal map (taut string) on the jump sequence, and a
projection into the control box, safeguarded by Armijo backtracking on the
full objective.  For vector controls the variation term is smoothed with a
Huber approximation instead of the prox; a derivative-free compass search
over the control values serves as fallback for kinked models.  A refinement
driver re-solves the problem on successively finer discretizations, warm
starting each level from the previous minimizer.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .control import Control
from .cost import CostSpec, CostValue, evaluate
from .ebt import Discretization, as_measure, _initial_state
from .errors import ConfigError
from .measure import DiscreteMeasure, flat_distance
from .model import ModelSpec
from .sensitivity import cost_and_gradient

__all__ = [
    "OptimizerSettings", "OptimizationResult",
    "prox_tv", "minimize",
    "RefinementLevel", "RefinementCertificate", "refine",
]


@dataclass(frozen=True)
class OptimizerSettings:
    method: str = "proximal-gradient"   # or "compass-search"
    initial_step: float = 1.0
    armijo_factor: float = 0.5
    armijo_decrease: float = 1e-4
    tv_mode: str = "auto"               # "prox", "huber" or "auto"
    huber_epsilon: float | None = None  # default 1e-3 * box diameter
    max_iterations: int = 200
    tolerance: float = 1e-6
    multistart: int = 4
    seed: int = 0
    max_backtracks: int = 50
    step_growth: float = 1.5

    def __post_init__(self):
        if self.method not in ("proximal-gradient", "compass-search"):
            raise ConfigError(f"unknown method {self.method!r}")
        if self.tv_mode not in ("auto", "prox", "huber"):
            raise ConfigError(f"unknown tv mode {self.tv_mode!r}")
        if self.tolerance <= 0 or self.initial_step <= 0:
            raise ConfigError("tolerance and initial step must be positive")
        if self.huber_epsilon is not None and self.huber_epsilon <= 0:
            raise ConfigError("huber epsilon must be positive")


@dataclass
class OptimizationResult:
    control: Control
    values: np.ndarray
    cost: CostValue
    j_history: list
    grad_norm_history: list
    termination: str
    evaluations: int


def _tv_prox_1d(y: np.ndarray, lam: float) -> np.ndarray:
    """Exact proximal map of lam * TV on a scalar sequence (taut string)."""
    n = len(y)
    x = np.empty(n)
    if n <= 1 or lam <= 0:
        return np.array(y, dtype=float)
    k = k0 = km = kp = 0
    vmin = y[0] - lam
    vmax = y[0] + lam
    umin = lam
    umax = -lam
    while True:
        while k < n - 1:
            if y[k + 1] + umin < vmin - lam:
                x[k0:km + 1] = vmin
                k = k0 = km = kp = km + 1
                vmin = y[k]
                vmax = y[k] + 2 * lam
                umin = lam
                umax = -lam
            elif y[k + 1] + umax > vmax + lam:
                x[k0:kp + 1] = vmax
                k = k0 = km = kp = kp + 1
                vmin = y[k] - 2 * lam
                vmax = y[k]
                umin = lam
                umax = -lam
            else:
                k += 1
                umin += y[k] - vmin
                umax += y[k] - vmax
                if umin >= lam:
                    vmin += (umin - lam) / (k - k0 + 1)
                    umin = lam
                    km = k
                if umax <= -lam:
                    vmax += (umax + lam) / (k - k0 + 1)
                    umax = -lam
                    kp = k
        if umin < 0:
            x[k0:km + 1] = vmin
            k = k0 = km = km + 1
            vmin = y[k]
            umin = lam
            umax = y[k] + lam - vmax
        elif umax > 0:
            x[k0:kp + 1] = vmax
            k = k0 = kp = kp + 1
            vmax = y[k]
            umax = -lam
            umin = y[k] - lam - vmin
        else:
            x[k0:] = vmin + umin / (k - k0 + 1)
            return x


def prox_tv(values, weight: float, step: float) -> np.ndarray:
    """argmin over v of 0.5 * ||v - values||^2 + step * weight * TV(v).

    Exact for scalar sequences; vector sequences are handled per component,
    which is the proximal map of the componentwise variation.
    """
    vals = np.atleast_2d(np.asarray(values, dtype=float))
    lam = weight * step
    out = np.column_stack([_tv_prox_1d(vals[:, j], lam)
                           for j in range(vals.shape[1])])
    return out.reshape(np.shape(values))


def _huber_tv(values: np.ndarray, eps: float) -> float:
    jumps = np.diff(values, axis=0)
    norms = np.sqrt((jumps ** 2).sum(axis=1) + eps ** 2) - eps
    return float(norms.sum())


def _huber_tv_grad(values: np.ndarray, eps: float) -> np.ndarray:
    grad = np.zeros_like(values)
    jumps = np.diff(values, axis=0)
    if len(jumps) == 0:
        return grad
    scale = np.sqrt((jumps ** 2).sum(axis=1) + eps ** 2)
    unit = jumps / scale[:, None]
    grad[1:] += unit
    grad[:-1] -= unit
    return grad


class _Problem:
    """Finite-dimensional view of the control problem on a fixed grid."""

    def __init__(self, model, cost, mu0, horizon, disc, pieces,
                 birth_includes_boundary=False):
        windows = disc.windows(horizon)
        if windows % pieces != 0:
            raise ConfigError(
                f"{pieces} control pieces do not align with {windows} windows")
        self.model = model
        self.cost = cost
        self.mu0 = mu0
        self.disc = disc
        self.pieces = pieces
        self.dim = model.control_box.dim
        self.birth_flag = birth_includes_boundary
        per = windows // pieces
        self.breakpoints = np.append(np.arange(pieces) * per * disc.dt,
                                     windows * disc.dt)
        self.evaluations = 0

    def control(self, values: np.ndarray) -> Control:
        return Control(self.breakpoints, values)

    def objective(self, values: np.ndarray) -> CostValue:
        self.evaluations += 1
        return evaluate(self.model, self.mu0, self.control(values), self.disc,
                        self.cost, birth_includes_boundary=self.birth_flag)

    def smooth_value_and_grad(self, values: np.ndarray):
        self.evaluations += 1
        return cost_and_gradient(self.model, self.cost, self.mu0,
                                 self.control(values), self.disc,
                                 birth_includes_boundary=self.birth_flag)


def _proximal_gradient(problem: _Problem, v0, settings: OptimizerSettings):
    box = problem.model.control_box
    use_huber = settings.tv_mode == "huber" or (
        settings.tv_mode == "auto" and problem.dim > 1 and problem.pieces > 1)
    eps = settings.huber_epsilon
    if eps is None:
        eps = max(1e-3 * box.diameter(), 1e-12)

    v = box.clamp(v0)
    cv = problem.objective(v)
    J = cv.total
    j_hist = [J]
    g_hist = []
    step = settings.initial_step
    termination = "max_iterations"

    for _ in range(settings.max_iterations):
        _, grad = problem.smooth_value_and_grad(v)
        if use_huber:
            grad = grad + _huber_tv_grad(v, eps)
        g_hist.append(float(np.linalg.norm(grad)))

        accepted = False
        for _ in range(settings.max_backtracks):
            y = v - step * grad
            if use_huber:
                w = box.clamp(y)
            else:
                w = box.clamp(prox_tv(y, 1.0, step))
            move = float(np.linalg.norm(w - v))
            cw = problem.objective(w)
            decrease = settings.armijo_decrease * move ** 2 / step
            if cw.total <= J - decrease:
                accepted = True
                break
            step *= settings.armijo_factor
            if step < 1e-16:
                break
        if not accepted:
            termination = "step_collapsed"
            break

        stationarity = move / step
        v, J, cv = w, cw.total, cw
        j_hist.append(J)
        if stationarity <= settings.tolerance:
            termination = "stationary"
            break
        step *= settings.step_growth

    return OptimizationResult(problem.control(v), v, cv, j_hist, g_hist,
                              termination, problem.evaluations)


def _compass_search(problem: _Problem, v0, settings: OptimizerSettings):
    box = problem.model.control_box
    v = box.clamp(v0)
    cv = problem.objective(v)
    J = cv.total
    j_hist = [J]
    widths = box.upper - box.lower
    step = 0.25 * float(widths.max())
    termination = "max_iterations"

    for _ in range(settings.max_iterations):
        best = None
        for k in range(problem.pieces):
            for j in range(problem.dim):
                for sign in (+1.0, -1.0):
                    w = v.copy()
                    w[k, j] += sign * step
                    w = box.clamp(w)
                    if np.array_equal(w, v):
                        continue
                    cw = problem.objective(w)
                    if cw.total < J - 1e-15 and (best is None or cw.total < best[1].total):
                        best = (w, cw)
        if best is None:
            step *= 0.5
            if step < settings.tolerance:
                termination = "stationary"
                break
        else:
            v, cv = best
            J = cv.total
            j_hist.append(J)

    return OptimizationResult(problem.control(v), v, cv, j_hist, [],
                              termination, problem.evaluations)


def minimize(model: ModelSpec, cost: CostSpec, mu0, horizon: float,
             disc: Discretization, pieces: int, settings: OptimizerSettings,
             initial_values=None,
             birth_includes_boundary: bool = False) -> OptimizationResult:
    """Minimize the discrete objective over controls on a fixed piece grid.

    Runs the configured method from the supplied start (default: the box
    projection of zero) plus ``multistart - 1`` random starts inside the
    box, and returns the best result.
    """
    problem = _Problem(model, cost, mu0, horizon, disc, pieces,
                       birth_includes_boundary=birth_includes_boundary)
    box = model.control_box
    dim = box.dim

    starts = []
    if initial_values is not None:
        vals = np.asarray(initial_values, dtype=float).reshape(pieces, dim)
        starts.append(box.clamp(vals))
    else:
        starts.append(box.clamp(np.zeros((pieces, dim))))
    rng = np.random.default_rng(settings.seed)
    for _ in range(max(0, settings.multistart - 1)):
        starts.append(rng.uniform(box.lower, box.upper, size=(pieces, dim)))

    runner = (_proximal_gradient if settings.method == "proximal-gradient"
              else _compass_search)
    best = None
    for v0 in starts:
        result = runner(problem, v0, settings)
        if best is None or result.cost.total < best.cost.total:
            best = result
    return best


@dataclass(frozen=True)
class RefinementLevel:
    n: int
    dt: float
    pieces: int
    substeps: int = 10
    dx: float | None = None
    placement: str = "grid-left"

    def discretization(self) -> Discretization:
        return Discretization(n=self.n, dt=self.dt, substeps=self.substeps,
                              dx=self.dx, placement=self.placement)


@dataclass
class CertificateRow:
    n: int
    dt: float
    pieces: int
    d0: float
    j_star: float
    control: Control


@dataclass
class RefinementCertificate:
    rows: list
    plateau: list           # |J*_k - J*_{k-1}| between consecutive levels
    increased: list         # levels whose optimum rose beyond tolerance
    results: list

    @property
    def final_control(self) -> Control:
        return self.rows[-1].control


def resample_control(control: Control, breakpoints: np.ndarray) -> Control:
    """Control values sampled at the start of each new piece.

    When the new grid refines the old one the step function is reproduced
    exactly, so the jump set and hence the variation are unchanged.
    """
    values = np.vstack([control.eval(t) for t in breakpoints[:-1]])
    return Control(breakpoints, values)


def refine(model: ModelSpec, cost: CostSpec, mu0, horizon: float,
           schedule, settings: OptimizerSettings,
           birth_includes_boundary: bool = False,
           monotonicity_tol: float = 1e-8) -> RefinementCertificate:
    """Solve the control problem on a schedule of finer discretizations.

    Levels must have strictly decreasing window lengths and nondecreasing
    cell counts.  The first level runs with the configured multistart; each
    later level warm starts from the previous minimizer resampled to its
    piece grid.  Rows report the initial-datum distance and the optimal
    value; a rise of the optimum beyond tolerance is flagged as possible
    local-minimum capture.
    """
    levels = list(schedule)
    if not levels:
        raise ConfigError("refinement schedule is empty")
    for a, b in zip(levels, levels[1:]):
        if b.dt >= a.dt:
            raise ConfigError("window lengths must strictly decrease")
        if b.n < a.n:
            raise ConfigError("cell counts must not decrease")

    rows = []
    results = []
    prev_control = None
    for idx, level in enumerate(levels):
        disc = level.discretization()
        windows = disc.windows(horizon)
        per = windows // level.pieces
        breakpoints = np.append(np.arange(level.pieces) * per * disc.dt,
                                windows * disc.dt)
        initial = None
        level_settings = settings
        if prev_control is not None:
            initial = resample_control(prev_control, breakpoints).values
            level_settings = replace(settings, multistart=1)
        result = minimize(model, cost, mu0, horizon, disc, level.pieces,
                          level_settings, initial_values=initial,
                          birth_includes_boundary=birth_includes_boundary)
        if isinstance(mu0, DiscreteMeasure):
            d0 = flat_distance(as_measure(_initial_state(mu0, disc)), mu0)
        else:
            d0 = float("nan")
        rows.append(CertificateRow(level.n, level.dt, level.pieces, d0,
                                   result.cost.total, result.control))
        results.append(result)
        prev_control = result.control

    plateau = [abs(rows[i].j_star - rows[i - 1].j_star)
               for i in range(1, len(rows))]
    increased = [i for i in range(1, len(rows))
                 if rows[i].j_star > rows[i - 1].j_star + monotonicity_tol]
    return RefinementCertificate(rows, plateau, increased, results)
