"""Running costs and the discrete objective over cohort trajectories.

The smooth part of the objective integrates a running cost
j(t, u(t), y_1..y_p, m_b) over [0, T], where y_q are moments of the cohort
measure against fixed weight functions and m_b is the boundary-cohort mass.
The full objective adds the total variation of the control.  Quadrature is
the composite trapezoid rule on the integrator's substep nodes, whose
endpoints line up with every discontinuity of the integrand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import Control, total_variation
from .ebt import Discretization, EbtState, Trajectory, as_measure, simulate
from .errors import NumericsError
from .model import ModelSpec

__all__ = [
    "RunningCost", "TimePolynomialCost", "LinearCost", "QuadraticControlCost",
    "QuadraticMomentCost", "WelfareIncomeCost", "SumCost",
    "CostSpec", "CostValue", "eval_running", "evaluate", "evaluate_trajectory",
]


class RunningCost:
    """Running cost family with closed-form partial derivatives.

    ``value`` and ``partials`` are vectorized over quadrature nodes: ``t`` is
    (k,), ``u`` is the constant control value (N,), ``y`` is (k, p) and
    ``mb`` is (k,).  ``partials`` returns (d_u, d_y, d_mb) with shapes
    (k, N), (k, p) and (k,).
    """

    def value(self, t, u, y, mb):
        raise NotImplementedError

    def partials(self, t, u, y, mb):
        raise NotImplementedError


@dataclass(frozen=True)
class TimePolynomialCost(RunningCost):
    """sum_k c_k * t^k; independent of control and state."""

    coeffs: tuple

    def value(self, t, u, y, mb):
        out = np.zeros_like(t)
        for k, c in enumerate(self.coeffs):
            out += c * t ** k
        return out

    def partials(self, t, u, y, mb):
        k = len(t)
        return np.zeros((k, len(u))), np.zeros_like(y), np.zeros(k)


@dataclass(frozen=True)
class LinearCost(RunningCost):
    const: float = 0.0
    y_coeffs: tuple = ()
    u_coeffs: tuple = ()
    mb_coeff: float = 0.0

    def value(self, t, u, y, mb):
        out = np.full_like(t, self.const)
        if self.y_coeffs:
            out = out + y @ np.asarray(self.y_coeffs)
        if self.u_coeffs:
            out = out + float(np.dot(self.u_coeffs, u))
        if self.mb_coeff:
            out = out + self.mb_coeff * mb
        return out

    def partials(self, t, u, y, mb):
        k = len(t)
        du = np.tile(np.asarray(self.u_coeffs, dtype=float)
                     if self.u_coeffs else np.zeros(len(u)), (k, 1))
        dy = np.tile(np.asarray(self.y_coeffs, dtype=float)
                     if self.y_coeffs else np.zeros(y.shape[1]), (k, 1))
        return du, dy, np.full(k, self.mb_coeff)


@dataclass(frozen=True)
class QuadraticControlCost(RunningCost):
    """sum_j weights_j * (u_j - targets_j)^2."""

    weights: tuple
    targets: tuple

    def value(self, t, u, y, mb):
        w = np.asarray(self.weights)
        r = np.asarray(self.targets)
        return np.full_like(t, float(np.dot(w, (u - r) ** 2)))

    def partials(self, t, u, y, mb):
        k = len(t)
        g = 2.0 * np.asarray(self.weights) * (u - np.asarray(self.targets))
        return np.tile(g, (k, 1)), np.zeros_like(y), np.zeros(k)


@dataclass(frozen=True)
class QuadraticMomentCost(RunningCost):
    """sum_q weights_q * (y_q - targets_q)^2."""

    weights: tuple
    targets: tuple

    def value(self, t, u, y, mb):
        w = np.asarray(self.weights)
        r = np.asarray(self.targets)
        return ((y - r) ** 2 * w).sum(axis=1)

    def partials(self, t, u, y, mb):
        dy = 2.0 * np.asarray(self.weights) * (y - np.asarray(self.targets))
        return np.zeros((len(t), len(u))), dy, np.zeros(len(t))


@dataclass(frozen=True)
class WelfareIncomeCost(RunningCost):
    """Discounted state income, negated so minimizing maximizes income.

    j = exp(-discount * t) * (u_1 * m_b - y_1): the first moment is the
    wage-weighted population (income) and the boundary-mass term charges the
    subsidy paid on newborns.
    """

    discount: float

    def value(self, t, u, y, mb):
        return np.exp(-self.discount * t) * (u[0] * mb - y[:, 0])

    def partials(self, t, u, y, mb):
        disc = np.exp(-self.discount * t)
        du = np.zeros((len(t), len(u)))
        du[:, 0] = disc * mb
        dy = np.zeros_like(y)
        dy[:, 0] = -disc
        return du, dy, disc * u[0]


@dataclass(frozen=True)
class SumCost(RunningCost):
    terms: tuple

    def value(self, t, u, y, mb):
        out = np.zeros_like(t)
        for term in self.terms:
            out = out + term.value(t, u, y, mb)
        return out

    def partials(self, t, u, y, mb):
        du = np.zeros((len(t), len(u)))
        dy = np.zeros_like(y)
        dmb = np.zeros(len(t))
        for term in self.terms:
            a, b, c = term.partials(t, u, y, mb)
            du += a
            dy += b
            dmb += c
        return du, dy, dmb


@dataclass(frozen=True)
class CostSpec:
    """Moments, running-cost family and evaluation options."""

    moments: tuple
    running: RunningCost
    boundary_channel: bool = True
    enforce_nonnegative: bool = False


@dataclass(frozen=True)
class CostValue:
    """Smooth part, control variation and their exact sum."""

    jtilde: float
    tv: float
    total: float
    tail_bound: float | None = None


def eval_running(state: EbtState, u, t: float, cost: CostSpec) -> float:
    """Running cost at one instant from an explicit state."""
    mu = as_measure(state)
    y = np.array([[mu.integrate(fn.value) for fn in cost.moments]])
    mb = state.boundary_mass if cost.boundary_channel else 0.0
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return float(cost.running.value(np.array([t]), u, y, np.array([mb]))[0])


def _window_slices(traj: Trajectory):
    per = traj.nodes_per_window
    for k in range(traj.windows):
        yield k, slice(k * per, (k + 1) * per)


def quadrature_weights(dt: float, substeps: int) -> np.ndarray:
    w = np.full(substeps + 1, dt / substeps)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def evaluate_trajectory(traj: Trajectory, cost: CostSpec) -> CostValue:
    """Objective from a trajectory that already carries the moment record."""
    if traj.node_moments is None and cost.moments:
        raise ValueError("trajectory was recorded without the cost moments")
    per = traj.nodes_per_window
    p = len(cost.moments)
    w = quadrature_weights(traj.disc.dt, traj.disc.substeps)

    jtilde = 0.0
    sup_raw = 0.0
    for k, sl in _window_slices(traj):
        t = traj.node_times[sl]
        y = traj.node_moments[sl] if p else np.zeros((per, 0))
        mb = traj.node_boundary_mass[sl]
        if not cost.boundary_channel:
            mb = np.zeros_like(mb)
        u = traj.control.eval((k + 0.5) * traj.disc.dt)
        vals = cost.running.value(t, u, y, mb)
        if cost.enforce_nonnegative and np.any(vals < -1e-12):
            raise NumericsError("running cost went negative with the "
                                "nonnegativity check enabled")
        jtilde += float(np.dot(w, vals))
        if isinstance(cost.running, WelfareIncomeCost):
            sup_raw = max(sup_raw, float(np.max(np.abs(u[0] * mb - y[:, 0]))))

    tv = total_variation(traj.control)
    tail = None
    if isinstance(cost.running, WelfareIncomeCost) and cost.running.discount > 0:
        horizon = traj.windows * traj.disc.dt
        tail = sup_raw * np.exp(-cost.running.discount * horizon) / cost.running.discount
    if not np.isfinite(jtilde):
        raise NumericsError("objective is not finite")
    return CostValue(jtilde, tv, jtilde + tv, tail)


def evaluate(model: ModelSpec, mu0, control: Control, disc: Discretization,
             cost: CostSpec, birth_includes_boundary: bool = False) -> CostValue:
    """Simulate under the control and integrate the running cost."""
    traj = simulate(model, mu0, control, control.horizon, disc,
                    save_every=max(1, disc.windows(control.horizon)),
                    moments=cost.moments,
                    birth_includes_boundary=birth_includes_boundary)
    return evaluate_trajectory(traj, cost)
