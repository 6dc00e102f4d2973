"""Model rate functions in factored form and their analytic derivatives.

Every rate (growth, mortality, birth) factors through a scalar population
statistic: rate(t, mu, u)(a) = core(t, A, a, u) with A = integral of a
bounded kernel against mu.  Cores come from a fixed set of parametric
families so that the partial derivatives needed by the sensitivity
integrator are available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .measure import DiscreteMeasure

__all__ = [
    "ScalarFn", "ConstantFn", "ClippedAffineFn", "GaussianBumpFn", "TabulatedFn",
    "ControlTerm", "AffineControlTerm", "QuadraticControlTerm",
    "RateCore", "ConstantCore", "ScalarCore", "LogisticCore", "SeparableCore",
    "RateFunction", "Box", "ModelSpec",
    "eval_rate", "SamplingPlan", "validate_spec", "ValidationReport",
]


# ---------------------------------------------------------------------------
# scalar functions of the structure variable (kernels, profiles, moments)

class ScalarFn:
    """Scalar function of the structure variable with derivative."""

    def value(self, a):
        raise NotImplementedError

    def deriv(self, a):
        raise NotImplementedError

    def bound(self) -> float:
        """Upper bound for |f| where available, else +inf."""
        return np.inf

    def max_slope(self) -> float:
        return np.inf

    def __call__(self, a):
        return self.value(a)


@dataclass(frozen=True)
class ConstantFn(ScalarFn):
    const: float = 1.0

    def value(self, a):
        return np.full_like(np.asarray(a, dtype=float), self.const)

    def deriv(self, a):
        return np.zeros_like(np.asarray(a, dtype=float))

    def bound(self):
        return abs(self.const)

    def max_slope(self):
        return 0.0


@dataclass(frozen=True)
class ClippedAffineFn(ScalarFn):
    """max(0, intercept + slope * a); derivative 0 on the clipped side."""

    intercept: float
    slope: float

    def value(self, a):
        return np.maximum(0.0, self.intercept + self.slope * np.asarray(a, dtype=float))

    def deriv(self, a):
        raw = self.intercept + self.slope * np.asarray(a, dtype=float)
        return np.where(raw > 0, self.slope, 0.0)

    def max_slope(self):
        return abs(self.slope)


@dataclass(frozen=True)
class GaussianBumpFn(ScalarFn):
    peak: float
    center: float
    width: float

    def value(self, a):
        z = (np.asarray(a, dtype=float) - self.center) / self.width
        return self.peak * np.exp(-0.5 * z * z)

    def deriv(self, a):
        a = np.asarray(a, dtype=float)
        z = (a - self.center) / self.width
        return -self.peak * z / self.width * np.exp(-0.5 * z * z)

    def bound(self):
        return abs(self.peak)

    def max_slope(self):
        # |f'| peaks at one width from the center
        return abs(self.peak) * np.exp(-0.5) / self.width


@dataclass(frozen=True)
class TabulatedFn(ScalarFn):
    """Linear interpolation through (node, value) pairs, constant outside."""

    nodes: tuple
    values: tuple

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if nodes.ndim != 1 or nodes.shape != values.shape or len(nodes) < 2:
            raise ValueError("need matching node/value arrays with >= 2 entries")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        object.__setattr__(self, "nodes", tuple(nodes))
        object.__setattr__(self, "values", tuple(values))

    def value(self, a):
        return np.interp(np.asarray(a, dtype=float), self.nodes, self.values)

    def deriv(self, a):
        a = np.asarray(a, dtype=float)
        nodes = np.asarray(self.nodes)
        values = np.asarray(self.values)
        slopes = np.diff(values) / np.diff(nodes)
        idx = np.clip(np.searchsorted(nodes, a, side="right") - 1, 0, len(slopes) - 1)
        out = slopes[idx]
        return np.where((a < nodes[0]) | (a >= nodes[-1]), 0.0, out)

    def bound(self):
        return float(np.max(np.abs(self.values)))

    def max_slope(self):
        slopes = np.diff(self.values) / np.diff(self.nodes)
        return float(np.max(np.abs(slopes))) if len(slopes) else 0.0


# ---------------------------------------------------------------------------
# control-dependent factors for separable cores

class ControlTerm:
    def value(self, u: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def max_value(self, box) -> float:
        raise NotImplementedError

    def max_grad(self, box) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class AffineControlTerm(ControlTerm):
    """max(0, const + coeffs . u); gradient 0 on the clipped side."""

    const: float
    coeffs: tuple

    def _raw(self, u):
        return self.const + float(np.dot(self.coeffs, u))

    def value(self, u):
        return max(0.0, self._raw(u))

    def grad(self, u):
        if self._raw(u) > 0:
            return np.asarray(self.coeffs, dtype=float)
        return np.zeros(len(self.coeffs))

    def max_value(self, box):
        c = np.asarray(self.coeffs)
        hi = self.const + np.sum(np.where(c > 0, c * box.upper, c * box.lower))
        return max(0.0, float(hi))

    def max_grad(self, box):
        return float(np.linalg.norm(self.coeffs))


@dataclass(frozen=True)
class QuadraticControlTerm(ControlTerm):
    """max(0, const + lin . u + quad . u^2), componentwise squares."""

    const: float
    lin: tuple
    quad: tuple

    def _raw(self, u):
        u = np.asarray(u, dtype=float)
        return self.const + float(np.dot(self.lin, u)) + float(np.dot(self.quad, u * u))

    def value(self, u):
        return max(0.0, self._raw(u))

    def grad(self, u):
        u = np.asarray(u, dtype=float)
        if self._raw(u) > 0:
            return np.asarray(self.lin) + 2.0 * np.asarray(self.quad) * u
        return np.zeros(len(self.lin))

    def max_value(self, box):
        best = max(self._raw(c) for c in _box_corners(box))
        return max(0.0, float(best))

    def max_grad(self, box):
        umax = np.maximum(np.abs(box.lower), np.abs(box.upper))
        return float(np.linalg.norm(np.abs(self.lin) + 2.0 * np.abs(self.quad) * umax))


def _box_corners(box):
    dim = len(box.lower)
    for bits in range(2 ** dim):
        yield np.where([(bits >> j) & 1 for j in range(dim)], box.upper, box.lower)


# ---------------------------------------------------------------------------
# rate cores f(t, A, a, u)

class RateCore:
    """Core of a rate: nonnegative function of (t, A, a, u), vectorized in a."""

    uses_population = False

    def value(self, t, A, a, u):
        raise NotImplementedError

    def d_A(self, t, A, a, u):
        return np.zeros_like(np.asarray(a, dtype=float))

    def d_a(self, t, A, a, u):
        return np.zeros_like(np.asarray(a, dtype=float))

    def d_u(self, t, A, a, u):
        a = np.asarray(a, dtype=float)
        return np.zeros((len(np.atleast_1d(a)), len(np.atleast_1d(u))))

    def lipschitz(self, box) -> float:
        """Analytic bound on the joint (A, a, u) Lipschitz constant."""
        return np.inf


@dataclass(frozen=True)
class ConstantCore(RateCore):
    const: float

    def value(self, t, A, a, u):
        return np.full_like(np.asarray(a, dtype=float), self.const)

    def lipschitz(self, box):
        return 0.0


@dataclass(frozen=True)
class ScalarCore(RateCore):
    """Rate depending on the structure variable only."""

    fn: ScalarFn

    def value(self, t, A, a, u):
        return np.asarray(self.fn.value(a), dtype=float)

    def d_a(self, t, A, a, u):
        return np.asarray(self.fn.deriv(a), dtype=float)

    def lipschitz(self, box):
        return self.fn.max_slope()


@dataclass(frozen=True)
class LogisticCore(RateCore):
    """Saturating density dependence scale / (1 + A / capacity)."""

    scale: float
    capacity: float

    uses_population = True

    def value(self, t, A, a, u):
        v = self.scale / (1.0 + A / self.capacity)
        return np.full_like(np.asarray(a, dtype=float), v)

    def d_A(self, t, A, a, u):
        g = -self.scale / (self.capacity * (1.0 + A / self.capacity) ** 2)
        return np.full_like(np.asarray(a, dtype=float), g)

    def lipschitz(self, box):
        # |d/dA| is largest at A = 0
        return abs(self.scale) / self.capacity


@dataclass(frozen=True)
class SeparableCore(RateCore):
    """Product profile(a) * term(u)."""

    profile: ScalarFn
    term: ControlTerm

    def value(self, t, A, a, u):
        return np.asarray(self.profile.value(a), dtype=float) * self.term.value(u)

    def d_a(self, t, A, a, u):
        return np.asarray(self.profile.deriv(a), dtype=float) * self.term.value(u)

    def d_u(self, t, A, a, u):
        prof = np.atleast_1d(np.asarray(self.profile.value(a), dtype=float))
        return prof[:, None] * self.term.grad(u)[None, :]

    def lipschitz(self, box):
        la = self.profile.max_slope() * self.term.max_value(box)
        lu = self.profile.bound() * self.term.max_grad(box)
        return max(la, lu)


# ---------------------------------------------------------------------------
# rates, boxes and the full model

@dataclass(frozen=True)
class RateFunction:
    """A rate in factored form: core(t, integral of kernel d mu, a, u)."""

    core: RateCore
    kernel: ScalarFn = field(default_factory=ConstantFn)

    def population_stat(self, points: np.ndarray, masses: np.ndarray) -> float:
        """A = sum_j m_j * kernel(x_j); constant kernels avoid the array pass."""
        if not self.core.uses_population:
            return 0.0
        if isinstance(self.kernel, ConstantFn):
            return self.kernel.const * float(masses.sum())
        return float(np.dot(masses, self.kernel.value(points)))

    def value(self, t, A, a, u):
        return self.core.value(t, A, a, u)


@dataclass(frozen=True)
class Box:
    """Compact axis-aligned control region in R^N."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or np.any(hi < lo):
            raise ValueError("box needs matching lower <= upper bounds")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box must be bounded")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, u, tol: float = 1e-9) -> bool:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return bool(np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol))

    def clamp(self, values):
        return np.clip(np.asarray(values, dtype=float), self.lower, self.upper)

    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))


@dataclass(frozen=True)
class ModelSpec:
    """Growth, mortality and birth rates plus the admissible control box."""

    growth: RateFunction
    mortality: RateFunction
    birth: RateFunction
    control_box: Box
    declared_lipschitz: float

    def rates(self):
        return {"growth": self.growth, "mortality": self.mortality,
                "birth": self.birth}


def eval_rate(rate: RateFunction, t: float, mu: DiscreteMeasure, a: float,
              u, box: Box | None = None) -> float:
    """Rate value at one point; checks the control box when one is given."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if box is not None and not box.contains(u):
        raise ValueError(f"control {u} outside the admissible box")
    if a < 0:
        raise ValueError("structure value must be nonnegative")
    A = rate.population_stat(mu.points, mu.masses)
    return float(np.atleast_1d(rate.value(t, A, np.array([a]), u))[0])


# ---------------------------------------------------------------------------
# empirical validation of declared bounds

@dataclass(frozen=True)
class SamplingPlan:
    """Grid over (t, A, a, u) used to probe rate regularity numerically."""

    t_max: float
    a_max: float
    A_max: float
    t_count: int = 4
    a_count: int = 33
    A_count: int = 7
    u_count: int = 5
    fd_step: float = 1e-5


@dataclass
class ValidationReport:
    empirical_lipschitz: dict
    min_value: dict
    declared_lipschitz: float
    lipschitz_flags: dict
    nonnegative: bool

    @property
    def passed(self) -> bool:
        return self.nonnegative and not any(self.lipschitz_flags.values())


def validate_spec(model: ModelSpec, plan: SamplingPlan) -> ValidationReport:
    """Estimate rate Lipschitz constants by finite differences on a grid.

    Report-only: flags rates whose empirical constant exceeds the declared
    bound and records the minimum sampled value of each rate.
    """
    box = model.control_box
    ts = np.linspace(0.0, plan.t_max, plan.t_count)
    As = np.linspace(0.0, plan.A_max, plan.A_count)
    a_grid = np.linspace(0.0, plan.a_max, plan.a_count)
    u_grid = [box.lower + frac * (box.upper - box.lower)
              for frac in np.linspace(0.0, 1.0, plan.u_count)]
    h = plan.fd_step

    emp = {}
    min_val = {}
    flags = {}
    for name, rate in model.rates().items():
        worst = 0.0
        low = np.inf
        for t in ts:
            for A in As:
                for u in u_grid:
                    base = np.asarray(rate.value(t, A, a_grid, u), dtype=float)
                    low = min(low, float(base.min()))
                    da = np.asarray(rate.value(t, A, a_grid + h, u), dtype=float)
                    worst = max(worst, float(np.max(np.abs(da - base))) / h)
                    dA = np.asarray(rate.value(t, A + h, a_grid, u), dtype=float)
                    worst = max(worst, float(np.max(np.abs(dA - base))) / h)
                    for j in range(box.dim):
                        up = np.array(u, dtype=float)
                        up[j] = min(up[j] + h, box.upper[j])
                        step = up[j] - u[j]
                        if step <= 0:
                            continue
                        du = np.asarray(rate.value(t, A, a_grid, up), dtype=float)
                        worst = max(worst, float(np.max(np.abs(du - base))) / step)
        emp[name] = worst
        min_val[name] = low
        flags[name] = worst > model.declared_lipschitz * (1 + 1e-6)

    nonneg = all(v >= -1e-12 for v in min_val.values())
    return ValidationReport(emp, min_val, model.declared_lipschitz, flags, nonneg)
