"""Piecewise-constant vector controls on [0, T].

Controls are right-continuous step functions with values in R^N.  Their
total variation is the sum of jump norms, which realizes the supremum over
partitions for step functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = [
    "Control",
    "constant_control",
    "total_variation",
    "approximate_bv",
    "project",
]

_TIME_TOL = 1e-9


@dataclass(frozen=True)
class Control:
    """Step function u(t) = values[k] for t in [breakpoints[k], breakpoints[k+1]).

    ``breakpoints`` has length M+1 with breakpoints[0] = 0 and
    breakpoints[-1] = T; ``values`` is (M, N).  Evaluation at t = T returns
    the last value.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.atleast_2d(np.asarray(self.values, dtype=float))
        if bp.ndim != 1 or len(bp) < 2:
            raise ConfigError("control needs at least two breakpoints")
        if abs(bp[0]) > _TIME_TOL:
            raise ConfigError("first breakpoint must be 0")
        if np.any(np.diff(bp) <= 0):
            raise ConfigError("breakpoints must be strictly increasing")
        if vals.shape[0] != len(bp) - 1:
            raise ConfigError("need one value per interval between breakpoints")
        bp.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @property
    def horizon(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def pieces(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def eval(self, t: float) -> np.ndarray:
        T = self.horizon
        if t < -_TIME_TOL * max(1.0, T) or t > T * (1 + _TIME_TOL) + _TIME_TOL:
            raise ValueError(f"t={t} outside [0, {T}]")
        k = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        k = min(max(k, 0), self.pieces - 1)
        return self.values[k]


def constant_control(value, horizon: float) -> Control:
    value = np.atleast_1d(np.asarray(value, dtype=float))
    return Control(np.array([0.0, horizon]), value[None, :])


def _jump_norms(values: np.ndarray, norm: str) -> np.ndarray:
    jumps = np.diff(values, axis=0)
    if norm == "euclidean":
        return np.sqrt((jumps ** 2).sum(axis=1))
    if norm == "max":
        return np.abs(jumps).max(axis=1) if jumps.size else np.zeros(0)
    raise ValueError(f"unknown norm {norm!r}")


def total_variation(u: Control, norm: str = "euclidean") -> float:
    """Sum of jump norms between consecutive pieces."""
    if u.pieces < 2:
        return 0.0
    return float(_jump_norms(u.values, norm).sum())


def sequence_variation(values, norm: str = "euclidean") -> float:
    """Total variation of a plain value sequence (rows = samples)."""
    vals = np.atleast_2d(np.asarray(values, dtype=float))
    if vals.shape[0] < 2:
        return 0.0
    return float(_jump_norms(vals, norm).sum())


def approximate_bv(times, samples, eps: float, norm: str = "euclidean") -> Control:
    """Greedy step-function approximation of a sampled control.

    Starts a new piece whenever the sample departs more than ``eps`` from
    the current piece value.  The output values are taken among the samples
    (range inclusion), the sup error at sample times is at most ``eps`` and
    the total variation never exceeds that of the sample sequence, because
    the piece values form a subsequence of the samples.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    times = np.asarray(times, dtype=float)
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] != len(times) or len(times) < 2:
        raise ValueError("need one sample per time point, at least two")
    if np.any(np.diff(times) <= 0):
        raise ValueError("sample times must be strictly increasing")
    if abs(times[0]) > _TIME_TOL:
        raise ValueError("samples must start at t = 0")

    piece_starts = [times[0]]
    piece_values = [samples[0]]
    for i in range(1, len(times)):
        dev = samples[i] - piece_values[-1]
        if norm == "euclidean":
            dist = float(np.sqrt((dev ** 2).sum()))
        else:
            dist = float(np.abs(dev).max())
        if dist > eps:
            start = times[i]
            if i == len(times) - 1:
                # a piece cannot begin at T itself; open it just before so the
                # right-continuous value at T is the final sample
                start = 0.5 * (times[i - 1] + times[i])
            piece_starts.append(start)
            piece_values.append(samples[i])
    breakpoints = np.append(np.asarray(piece_starts), times[-1])
    return Control(breakpoints, np.vstack(piece_values))


def project(u: Control, box) -> Control:
    """Componentwise clamp of every piece value into the control box."""
    return Control(u.breakpoints, box.clamp(u.values))
