"""Escalator Boxcar Train integrator for structured population models.

The population is a finite family of cohorts (position, mass).  Within each
time window the cohorts follow a coupled ODE system: positions move with the
growth rate, masses decay with mortality, and the youngest ("boundary")
cohort additionally collects the birth flux of all older cohorts.  At every
window boundary the current boundary cohort is frozen into the interior and
a fresh zero-mass cohort is appended at position 0.

Cohorts are stored in creation order; the boundary cohort is always the last
entry.  Cohorts are never merged or pruned during a run; zero-mass cohorts
disappear only when a state is exported as a measure.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .control import Control
from .errors import ConfigError, NumericsError
from .measure import DiscreteMeasure, flat_distance, normalize
from .model import ModelSpec

__all__ = [
    "Discretization", "EbtState", "Trajectory",
    "init_cohorts", "rhs", "step_window", "simulate", "as_measure",
    "TestFunction", "weak_residual",
    "ConvergenceRow", "ConvergenceTable", "convergence_study",
]

_TIME_TOL = 1e-9


@dataclass(frozen=True)
class Discretization:
    """Cohort/time resolution of one run.

    ``n`` initial cells of width ``dx`` (defaulting to ``dt``) discretize the
    initial measure; each window of length ``dt`` is integrated with the
    classical fourth-order Runge-Kutta scheme in ``substeps`` equal steps.
    ``placement`` puts initial cohorts at the left cell edge or at the cell
    mass centroid.
    """

    n: int
    dt: float
    substeps: int = 10
    dx: float | None = None
    placement: str = "grid-left"

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("need at least one initial cell")
        if self.dt <= 0:
            raise ConfigError("window length must be positive")
        if self.substeps < 1:
            raise ConfigError("need at least one substep per window")
        if self.placement not in ("grid-left", "centroid"):
            raise ConfigError(f"unknown placement {self.placement!r}")
        if self.dx is None:
            object.__setattr__(self, "dx", self.dt)
        elif self.dx <= 0:
            raise ConfigError("cell width must be positive")

    def windows(self, horizon: float) -> int:
        w = round(horizon / self.dt)
        if w < 1 or abs(w * self.dt - horizon) > _TIME_TOL * max(1.0, horizon):
            raise ConfigError(
                f"horizon {horizon} is not an integer number of windows of {self.dt}")
        return int(w)


@dataclass
class EbtState:
    """Cohort positions/masses at one instant; last cohort is the boundary."""

    t: float
    window: int
    x: np.ndarray
    m: np.ndarray

    def copy(self) -> "EbtState":
        return EbtState(self.t, self.window, self.x.copy(), self.m.copy())

    @property
    def cohorts(self) -> int:
        return len(self.x)

    @property
    def boundary_mass(self) -> float:
        return float(self.m[-1])


@dataclass
class Trajectory:
    """Saved states plus the dense per-substep record used for quadrature."""

    disc: Discretization
    control: Control
    times: np.ndarray
    states: list
    windows: int
    node_times: np.ndarray
    node_boundary_mass: np.ndarray
    node_moments: np.ndarray | None = None
    birth_includes_boundary: bool = False

    @property
    def nodes_per_window(self) -> int:
        return self.disc.substeps + 1

    def measures(self):
        return [as_measure(s) for s in self.states]


def init_cohorts(mu0, disc: Discretization):
    """Initial cohort positions and masses from the initial measure.

    Cell i = [i*dx, (i+1)*dx) receives the measure's mass there; mass at or
    beyond n*dx is folded into the last cell with a warning.  ``mu0`` may be
    a DiscreteMeasure or a density callable (integrated per cell with a
    fixed-node Simpson rule).
    """
    n, dx = disc.n, disc.dx
    edges = dx * np.arange(n + 1)
    if isinstance(mu0, DiscreteMeasure):
        masses = np.zeros(n)
        centroid_num = np.zeros(n)
        if len(mu0) > 0:
            cells = np.floor(mu0.points / dx).astype(int)
            if np.any(cells >= n):
                warnings.warn("initial mass beyond the last cell folded into it")
                cells = np.minimum(cells, n - 1)
            np.add.at(masses, cells, mu0.masses)
            np.add.at(centroid_num, cells, mu0.masses * mu0.points)
    else:
        # density callable: 33-node composite Simpson per cell
        nodes = 33
        masses = np.zeros(n)
        centroid_num = np.zeros(n)
        for i in range(n):
            a = np.linspace(edges[i], edges[i + 1], nodes)
            w = np.ones(nodes)
            w[1:-1:2] = 4.0
            w[2:-1:2] = 2.0
            w *= (edges[i + 1] - edges[i]) / (3.0 * (nodes - 1))
            rho = np.asarray(mu0(a), dtype=float)
            masses[i] = float(np.dot(w, rho))
            centroid_num[i] = float(np.dot(w, rho * a))

    if disc.placement == "grid-left":
        x0 = edges[:-1].copy()
    else:
        mid = 0.5 * (edges[:-1] + edges[1:])
        with np.errstate(invalid="ignore", divide="ignore"):
            x0 = np.where(masses > 0, centroid_num / np.maximum(masses, 1e-300), mid)
    return x0, masses


def _rate_values(model: ModelSpec, t, x, m, u):
    """Growth/mortality/birth values at every cohort position."""
    b = model.growth
    c = model.mortality
    beta = model.birth
    bv = np.asarray(b.value(t, b.population_stat(x, m), x, u), dtype=float)
    cv = np.asarray(c.value(t, c.population_stat(x, m), x, u), dtype=float)
    betav = np.asarray(beta.value(t, beta.population_stat(x, m), x, u), dtype=float)
    return bv, cv, betav


def _rhs_arrays(model, t, x, m, u, birth_includes_boundary):
    bv, cv, betav = _rate_values(model, t, x, m, u)
    dx = bv
    dm = -cv * m
    births = betav * m
    total = births.sum() if birth_includes_boundary else births[:-1].sum()
    dm[-1] += total
    return dx, dm


def rhs(t: float, state: EbtState, model: ModelSpec, u,
        birth_includes_boundary: bool = False):
    """Time derivative (dx, dm) of the cohort system at the given state."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return _rhs_arrays(model, t, state.x, state.m, u, birth_includes_boundary)


def _window_value(control: Control, k: int, dt: float) -> np.ndarray:
    return control.eval((k + 0.5) * dt)


def _check_alignment(control: Control, dt: float, windows: int):
    for b in control.breakpoints[1:-1]:
        k = round(b / dt)
        if abs(k * dt - b) > _TIME_TOL * max(1.0, control.horizon):
            raise ConfigError(
                f"control breakpoint {b} falls strictly inside a window of {dt}")
    if abs(control.horizon - windows * dt) > _TIME_TOL * max(1.0, control.horizon):
        raise ConfigError("control horizon does not match the window grid")


def _integrate_window(model, x, m, t0, dt, substeps, u, birth_flag, node_hook):
    h = dt / substeps
    for s in range(substeps):
        t = t0 + s * h
        if node_hook is not None:
            node_hook(t, x, m, u)
        k1x, k1m = _rhs_arrays(model, t, x, m, u, birth_flag)
        k2x, k2m = _rhs_arrays(model, t + 0.5 * h, x + 0.5 * h * k1x,
                               m + 0.5 * h * k1m, u, birth_flag)
        k3x, k3m = _rhs_arrays(model, t + 0.5 * h, x + 0.5 * h * k2x,
                               m + 0.5 * h * k2m, u, birth_flag)
        k4x, k4m = _rhs_arrays(model, t + h, x + h * k3x, m + h * k3m, u, birth_flag)
        x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        m = m + (h / 6.0) * (k1m + 2.0 * k2m + 2.0 * k3m + k4m)
    if node_hook is not None:
        node_hook(t0 + dt, x, m, u)
    return x, m


def step_window(state: EbtState, model: ModelSpec, control: Control, dt: float,
                substeps: int | None = None,
                birth_includes_boundary: bool = False) -> EbtState:
    """Advance one window and internalize the boundary cohort.

    The state time must sit on the window grid and the control must be
    constant across the window.  After integration a new zero-mass boundary
    cohort is appended at position 0.
    """
    k = round(state.t / dt)
    if abs(k * dt - state.t) > _TIME_TOL * max(1.0, state.t):
        raise ConfigError("state time is not on the window grid")
    substeps = substeps if substeps is not None else 1
    for b in control.breakpoints:
        if k * dt + _TIME_TOL < b < (k + 1) * dt - _TIME_TOL:
            raise ConfigError("control jumps strictly inside the window")
    u = _window_value(control, k, dt)
    x, m = _integrate_window(model, state.x, state.m, k * dt, dt, substeps, u,
                             birth_includes_boundary, None)
    x = np.append(x, 0.0)
    m = np.append(m, 0.0)
    return EbtState((k + 1) * dt, state.window + 1, x, m)


def _initial_state(mu0, disc: Discretization) -> EbtState:
    x0, m0 = init_cohorts(mu0, disc)
    return EbtState(0.0, 0, np.append(x0, 0.0), np.append(m0, 0.0))


def simulate(model: ModelSpec, mu0, control: Control, horizon: float,
             disc: Discretization, save_every: int = 1,
             moments=None, birth_includes_boundary: bool = False,
             node_hook=None, initial_state: EbtState | None = None) -> Trajectory:
    """Run the cohort system over an integer number of windows.

    Snapshots are stored every ``save_every`` windows (always including the
    initial and final states).  When ``moments`` is a list of scalar
    functions, the trajectory records their integrals against the cohort
    measure at every substep node together with the boundary-cohort mass,
    giving the dense data the cost quadrature consumes.
    """
    windows = disc.windows(horizon)
    _check_alignment(control, disc.dt, windows)
    if save_every < 1:
        raise ConfigError("save_every must be >= 1")

    state = initial_state.copy() if initial_state is not None else _initial_state(mu0, disc)
    if abs(state.t) > _TIME_TOL:
        raise ConfigError("simulation must start at t = 0")

    p = len(moments) if moments else 0
    nodes = windows * (disc.substeps + 1)
    node_times = np.empty(nodes)
    node_mb = np.empty(nodes)
    node_moms = np.empty((nodes, p)) if p else None
    cursor = 0

    def recorder(t, x, m, u):
        nonlocal cursor
        node_times[cursor] = t
        node_mb[cursor] = m[-1]
        if p:
            for q, fn in enumerate(moments):
                node_moms[cursor, q] = float(np.dot(m, fn.value(x)))
        if node_hook is not None:
            node_hook(t, x, m, u)
        cursor += 1

    times = [0.0]
    states = [state.copy()]
    for k in range(windows):
        u = _window_value(control, k, disc.dt)
        x, m = _integrate_window(model, state.x, state.m, k * disc.dt, disc.dt,
                                 disc.substeps, u, birth_includes_boundary,
                                 recorder)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(m))):
            raise NumericsError(
                f"cohort state became non-finite in window {k + 1}")
        x = np.append(x, 0.0)
        m = np.append(m, 0.0)
        state = EbtState((k + 1) * disc.dt, k + 1, x, m)
        if (k + 1) % save_every == 0 or k + 1 == windows:
            times.append(state.t)
            states.append(state.copy())

    return Trajectory(disc=disc, control=control, times=np.asarray(times),
                      states=states, windows=windows, node_times=node_times,
                      node_boundary_mass=node_mb, node_moments=node_moms,
                      birth_includes_boundary=birth_includes_boundary)


def as_measure(state: EbtState) -> DiscreteMeasure:
    """Cohorts as a measure: coincident cohorts merge, zero masses drop."""
    return normalize(state.x, state.m)


@dataclass(frozen=True)
class TestFunction:
    """Smooth test function phi(t, a) with both partial derivatives."""

    value: callable
    dt: callable
    da: callable


def weak_residual(traj: Trajectory, model: ModelSpec, control: Control,
                  phi: TestFunction) -> float:
    """Absolute defect of the weak balance identity along a trajectory.

    For exact solutions the terminal minus initial integral of phi equals the
    time integral of (d_t phi + d_a phi * growth - phi * mortality) against
    the population plus the birth flux tested at a = 0.  The identity is
    evaluated with the trajectory's own discretization: cohort sums for the
    space integrals, composite trapezoid on the substep nodes in time.
    """
    first = traj.states[0]
    if abs(first.t) > _TIME_TOL:
        raise ConfigError("trajectory must start at t = 0")
    horizon = traj.windows * traj.disc.dt
    h = traj.disc.dt / traj.disc.substeps

    acc = 0.0

    def hook(t, x, m, u):
        nonlocal acc
        r = t / traj.disc.dt
        on_edge = abs(r - round(r)) < 1e-9
        weight = h * (0.5 if on_edge else 1.0)
        bv, cv, betav = _rate_values(model, t, x, m, u)
        interior = np.dot(m, phi.dt(t, x) + phi.da(t, x) * bv - phi.value(t, x) * cv)
        birth = float(phi.value(t, np.zeros(1))[0]) * float(np.dot(betav, m))
        acc += weight * (interior + birth)

    simulate(model, None, control, horizon, traj.disc,
             save_every=traj.windows, initial_state=first,
             birth_includes_boundary=traj.birth_includes_boundary,
             node_hook=hook)

    last = traj.states[-1]
    lhs = float(np.dot(last.m, phi.value(horizon, last.x)))
    lhs -= float(np.dot(first.m, phi.value(0.0, first.x)))
    return abs(lhs - acc)


@dataclass(frozen=True)
class ConvergenceRow:
    dt: float
    d0: float
    error: float


@dataclass
class ConvergenceTable:
    rows: list
    fit_constant: float
    reference_dt: float
    save_times: np.ndarray

    def ratios(self):
        e = [r.error for r in self.rows]
        return [e[i] / e[i + 1] if e[i + 1] > 0 else np.inf
                for i in range(len(e) - 1)]

    def row_constants(self):
        return [r.error / (r.dt + r.d0) for r in self.rows]


def convergence_study(model: ModelSpec, mu0: DiscreteMeasure, control: Control,
                      horizon: float, schedule, reference: Discretization,
                      save_dt: float | None = None,
                      birth_includes_boundary: bool = False) -> ConvergenceTable:
    """Self-convergence of the cohort scheme against a fine reference run.

    For each discretization the error is the maximum flat distance to the
    reference measure over a shared grid of save times; rows also carry the
    initial-datum distance d0, and the table fits error ~ C * (dt + d0) by
    least squares through the origin.
    """
    if not isinstance(mu0, DiscreteMeasure):
        raise ConfigError("convergence study needs an atomic initial measure")
    entries = list(schedule)
    if any(e.dt <= reference.dt for e in entries):
        raise ConfigError("reference must be strictly finer than every entry")
    if save_dt is None:
        save_dt = max(e.dt for e in entries)

    def run(disc):
        per = round(save_dt / disc.dt)
        if per < 1 or abs(per * disc.dt - save_dt) > _TIME_TOL:
            raise ConfigError(
                f"save step {save_dt} is not a multiple of dt={disc.dt}")
        traj = simulate(model, mu0, control, horizon, disc, save_every=per,
                        birth_includes_boundary=birth_includes_boundary)
        return traj

    ref_traj = run(reference)
    ref_measures = {round(t / save_dt): m
                    for t, m in zip(ref_traj.times, ref_traj.measures())}

    rows = []
    for disc in entries:
        traj = run(disc)
        d0 = flat_distance(as_measure(traj.states[0]), mu0)
        err = 0.0
        for t, mu in zip(traj.times, traj.measures()):
            key = round(t / save_dt)
            if key in ref_measures:
                err = max(err, flat_distance(mu, ref_measures[key]))
        rows.append(ConvergenceRow(disc.dt, d0, err))

    z = np.array([r.dt + r.d0 for r in rows])
    e = np.array([r.error for r in rows])
    denom = float(np.dot(z, z))
    fit = float(np.dot(z, e) / denom) if denom > 0 else 0.0
    save_times = np.asarray(sorted(ref_traj.times))
    return ConvergenceTable(rows, fit, reference.dt, save_times)
