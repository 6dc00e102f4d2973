"""Forward sensitivities of the cohort system and cost gradients.

For every control degree of freedom (piece k, component j) the linearized
cohort equations are integrated alongside the state with the same
Runge-Kutta stages, so the tangents are the exact derivatives of the
discrete flow.  Tangents of a freshly internalized boundary cohort start at
zero because its initial data do not depend on the control, and a piece's
tangents stay identically zero until its time interval begins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import Control
from .cost import CostSpec, evaluate, evaluate_trajectory, quadrature_weights
from .ebt import Discretization, EbtState, Trajectory, _check_alignment, _initial_state
from .errors import ConfigError
from .model import ConstantFn, ModelSpec

__all__ = [
    "SensitivityRecord", "simulate_with_sensitivity",
    "gradient_cost", "cost_and_gradient",
    "GradientCheck", "check_gradient",
]


@dataclass
class SensitivityRecord:
    """Tangent data aligned with a trajectory's substep nodes."""

    pieces: int
    dim: int
    node_dy: np.ndarray          # (nodes, dofs, p) tangents of the moments
    node_dmb: np.ndarray         # (nodes, dofs) tangent of the boundary mass
    final_tangent_x: np.ndarray  # (dofs, cohorts)
    final_tangent_m: np.ndarray  # (dofs, cohorts)

    @property
    def dofs(self) -> int:
        return self.pieces * self.dim


def _kernel_arrays(rate, x):
    if isinstance(rate.kernel, ConstantFn):
        kv = np.full_like(x, rate.kernel.const)
        kd = np.zeros_like(x)
    else:
        kv = np.asarray(rate.kernel.value(x), dtype=float)
        kd = np.asarray(rate.kernel.deriv(x), dtype=float)
    return kv, kd


def _rate_with_tangent(rate, t, x, m, u, Sx, Sm, du):
    """Rate values and their tangent along every control dof."""
    core = rate.core
    if core.uses_population:
        kv, kd = _kernel_arrays(rate, x)
        A = float(np.dot(m, kv))
        dA = Sm @ kv + Sx @ (m * kd)
    else:
        A = 0.0
        dA = None
    vals = np.asarray(core.value(t, A, x, u), dtype=float)
    tang = Sx * np.asarray(core.d_a(t, A, x, u), dtype=float)[None, :]
    if dA is not None:
        tang += dA[:, None] * np.asarray(core.d_A(t, A, x, u), dtype=float)[None, :]
    pu = np.asarray(core.d_u(t, A, x, u), dtype=float)
    if pu.any():
        tang += du @ pu.T
    return vals, tang


def _aug_rhs(model, t, x, m, Sx, Sm, u, du, birth_flag):
    bv, Db = _rate_with_tangent(model.growth, t, x, m, u, Sx, Sm, du)
    cv, Dc = _rate_with_tangent(model.mortality, t, x, m, u, Sx, Sm, du)
    betav, Dbeta = _rate_with_tangent(model.birth, t, x, m, u, Sx, Sm, du)

    dx = bv
    dSx = Db
    dm = -cv * m
    dSm = -(Dc * m[None, :] + cv[None, :] * Sm)
    births = betav * m
    birth_tang = Dbeta * m[None, :] + betav[None, :] * Sm
    if birth_flag:
        dm[-1] += births.sum()
        dSm[:, -1] += birth_tang.sum(axis=1)
    else:
        dm[-1] += births[:-1].sum()
        dSm[:, -1] += birth_tang[:, :-1].sum(axis=1)
    return dx, dm, dSx, dSm


def _piece_of_window(control: Control, windows: int, dt: float) -> np.ndarray:
    mids = (np.arange(windows) + 0.5) * dt
    idx = np.searchsorted(control.breakpoints, mids, side="right") - 1
    return np.clip(idx, 0, control.pieces - 1)


def simulate_with_sensitivity(model: ModelSpec, mu0, control: Control,
                              disc: Discretization, moments=(),
                              birth_includes_boundary: bool = False):
    """Co-integrate the cohort system and its control tangents.

    Returns the trajectory (with dense moment record) and a
    :class:`SensitivityRecord` holding, at every substep node, the tangents
    of the recorded moments and of the boundary mass for each control dof.
    """
    horizon = control.horizon
    windows = disc.windows(horizon)
    _check_alignment(control, disc.dt, windows)
    pieces, dim = control.pieces, control.dim
    dofs = pieces * dim
    p = len(moments)

    piece_of = _piece_of_window(control, windows, disc.dt)
    state = _initial_state(mu0, disc)
    x, m = state.x, state.m
    Sx = np.zeros((dofs, len(x)))
    Sm = np.zeros((dofs, len(x)))

    nodes = windows * (disc.substeps + 1)
    node_times = np.empty(nodes)
    node_mb = np.empty(nodes)
    node_moms = np.empty((nodes, p)) if p else None
    node_dy = np.zeros((nodes, dofs, p))
    node_dmb = np.zeros((nodes, dofs))
    cursor = 0

    gamma_vals = [fn.value for fn in moments]
    gamma_ders = [fn.deriv for fn in moments]

    def record(t, x, m, Sx, Sm):
        nonlocal cursor
        node_times[cursor] = t
        node_mb[cursor] = m[-1]
        node_dmb[cursor] = Sm[:, -1]
        for q in range(p):
            g = np.asarray(gamma_vals[q](x), dtype=float)
            gd = np.asarray(gamma_ders[q](x), dtype=float)
            node_moms[cursor, q] = float(np.dot(m, g))
            node_dy[cursor, :, q] = Sm @ g + Sx @ (m * gd)
        cursor += 1

    first = EbtState(0.0, 0, x.copy(), m.copy())
    h = disc.dt / disc.substeps
    for k in range(windows):
        u = control.eval((k + 0.5) * disc.dt)
        du = np.zeros((dofs, dim))
        base = int(piece_of[k]) * dim
        for j in range(dim):
            du[base + j, j] = 1.0
        for s in range(disc.substeps):
            t = k * disc.dt + s * h
            record(t, x, m, Sx, Sm)
            k1 = _aug_rhs(model, t, x, m, Sx, Sm, u, du, birth_includes_boundary)
            k2 = _aug_rhs(model, t + 0.5 * h, x + 0.5 * h * k1[0], m + 0.5 * h * k1[1],
                          Sx + 0.5 * h * k1[2], Sm + 0.5 * h * k1[3], u, du,
                          birth_includes_boundary)
            k3 = _aug_rhs(model, t + 0.5 * h, x + 0.5 * h * k2[0], m + 0.5 * h * k2[1],
                          Sx + 0.5 * h * k2[2], Sm + 0.5 * h * k2[3], u, du,
                          birth_includes_boundary)
            k4 = _aug_rhs(model, t + h, x + h * k3[0], m + h * k3[1],
                          Sx + h * k3[2], Sm + h * k3[3], u, du,
                          birth_includes_boundary)
            x = x + (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            m = m + (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            Sx = Sx + (h / 6.0) * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            Sm = Sm + (h / 6.0) * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
        record((k + 1) * disc.dt, x, m, Sx, Sm)
        # internalization: the new boundary cohort carries zero tangents
        x = np.append(x, 0.0)
        m = np.append(m, 0.0)
        Sx = np.hstack([Sx, np.zeros((dofs, 1))])
        Sm = np.hstack([Sm, np.zeros((dofs, 1))])

    last = EbtState(windows * disc.dt, windows, x.copy(), m.copy())
    traj = Trajectory(disc=disc, control=control,
                      times=np.array([0.0, last.t]), states=[first, last],
                      windows=windows, node_times=node_times,
                      node_boundary_mass=node_mb, node_moments=node_moms,
                      birth_includes_boundary=birth_includes_boundary)
    record_out = SensitivityRecord(pieces, dim, node_dy, node_dmb, Sx, Sm)
    return traj, record_out


def cost_and_gradient(model: ModelSpec, cost: CostSpec, mu0, control: Control,
                      disc: Discretization,
                      birth_includes_boundary: bool = False):
    """Smooth objective value and its gradient over the control values.

    The gradient chains the running-cost partials through the recorded
    moment tangents with the same trapezoid weights as the evaluation; the
    variation term of the full objective is not included here.
    """
    traj, sens = simulate_with_sensitivity(
        model, mu0, control, disc, moments=cost.moments,
        birth_includes_boundary=birth_includes_boundary)
    value = evaluate_trajectory(traj, cost)

    pieces, dim = sens.pieces, sens.dim
    dofs = pieces * dim
    per = traj.nodes_per_window
    w = quadrature_weights(disc.dt, disc.substeps)
    piece_of = _piece_of_window(control, traj.windows, disc.dt)
    p = len(cost.moments)

    grad = np.zeros(dofs)
    for k in range(traj.windows):
        sl = slice(k * per, (k + 1) * per)
        t = traj.node_times[sl]
        y = traj.node_moments[sl] if p else np.zeros((per, 0))
        mb = traj.node_boundary_mass[sl]
        if not cost.boundary_channel:
            mb = np.zeros_like(mb)
        u = control.eval((k + 0.5) * disc.dt)
        ju, jy, jmb = cost.running.partials(t, u, y, mb)
        base = int(piece_of[k]) * dim
        grad[base:base + dim] += ju.T @ w
        if p:
            grad += np.einsum("kdq,kq->d", sens.node_dy[sl], jy * w[:, None])
        if cost.boundary_channel:
            grad += sens.node_dmb[sl].T @ (jmb * w)
    return value, grad.reshape(pieces, dim)


def gradient_cost(model: ModelSpec, cost: CostSpec, mu0, control: Control,
                  disc: Discretization,
                  birth_includes_boundary: bool = False) -> np.ndarray:
    """Gradient of the smooth objective, shaped (pieces, dim)."""
    _, grad = cost_and_gradient(model, cost, mu0, control, disc,
                                birth_includes_boundary=birth_includes_boundary)
    return grad


@dataclass
class GradientCheck:
    analytic: np.ndarray
    finite_difference: np.ndarray
    max_abs_error: float
    max_rel_error: float
    worst_dof: tuple


def check_gradient(model: ModelSpec, cost: CostSpec, mu0, control: Control,
                   disc: Discretization, fd_step: float = 1e-5,
                   birth_includes_boundary: bool = False) -> GradientCheck:
    """Compare the tangent gradient against central finite differences."""
    if fd_step <= 0:
        raise ConfigError("finite-difference step must be positive")
    grad = gradient_cost(model, cost, mu0, control, disc,
                         birth_includes_boundary=birth_includes_boundary)
    fd = np.zeros_like(grad)
    for k in range(control.pieces):
        for j in range(control.dim):
            for sign in (+1.0, -1.0):
                vals = control.values.copy()
                vals[k, j] += sign * fd_step
                shifted = Control(control.breakpoints, vals)
                cv = evaluate(model, mu0, shifted, disc, cost,
                              birth_includes_boundary=birth_includes_boundary)
                fd[k, j] += sign * cv.jtilde
    fd /= 2.0 * fd_step

    abs_err = np.abs(grad - fd)
    scale = np.abs(grad) + np.abs(fd) + 1e-30
    rel_err = abs_err / scale
    worst = np.unravel_index(int(np.argmax(rel_err)), rel_err.shape)
    return GradientCheck(grad, fd, float(abs_err.max()), float(rel_err.max()),
                         (int(worst[0]), int(worst[1])))
