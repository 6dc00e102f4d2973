"""Age-structured welfare-policy preset.

A population ages at unit speed, dies at a tabulated age-dependent rate and
reproduces through a fertility profile scaled by a subsidy control.  The
state earns the wage-weighted population integral and pays the subsidy on
the newborn cohort; the objective discounts this income and is negated so
the optimizer, which minimizes, maximizes income.  The default tables are
demonstration data.
"""

from __future__ import annotations

import numpy as np

from .cost import CostSpec, WelfareIncomeCost
from .model import (AffineControlTerm, Box, ConstantCore, ModelSpec,
                    RateFunction, ScalarCore, ScalarFn, SeparableCore,
                    TabulatedFn)

__all__ = ["welfare_model", "default_mortality", "default_wage",
           "default_fertility", "default_initial_atoms"]

MAX_AGE = 100.0


def default_mortality() -> TabulatedFn:
    """Mortality rising from 0.005 at birth to 0.2 at the maximum age."""
    return TabulatedFn(nodes=(0.0, 40.0, 60.0, 80.0, 100.0),
                       values=(0.005, 0.01, 0.03, 0.1, 0.2))


def default_wage() -> TabulatedFn:
    """Net contribution per head: negative in childhood and retirement."""
    return TabulatedFn(
        nodes=(0.0, 16.0, 20.0, 40.0, 62.0, 68.0, 100.0),
        values=(-0.12, -0.12, 0.8, 1.2, 0.9, -0.25, -0.45))


def default_fertility() -> TabulatedFn:
    """Births per head per year, concentrated on young adult ages."""
    return TabulatedFn(nodes=(0.0, 16.0, 20.0, 28.0, 36.0, 100.0),
                       values=(0.0, 0.0, 0.11, 0.12, 0.0, 0.0))


def default_initial_atoms(cells: int = 100):
    """Demonstration age pyramid: one atom per age cell, thinning with age."""
    dx = MAX_AGE / cells
    ages = (np.arange(cells) + 0.5) * dx
    masses = dx * np.maximum(0.0, 1.0 - (ages / MAX_AGE) ** 2)
    return ages, masses


def welfare_model(mortality: ScalarFn | None = None,
                  fertility: ScalarFn | None = None,
                  discount: float = 0.03,
                  wage: ScalarFn | None = None,
                  horizon: float = 50.0,
                  control_box: Box | None = None,
                  subsidy_gain: float = 1.0):
    """Model and cost of the welfare-policy problem.

    Growth is the constant 1 (age advances with time), mortality depends on
    age only and the birth rate is fertility(age) * (1 + gain * u).  The cost
    carries the wage moment and the boundary-mass subsidy channel under
    exponential discounting.  Returns (ModelSpec, CostSpec).
    """
    if discount < 0:
        raise ValueError("discount rate must be nonnegative")
    mortality = mortality if mortality is not None else default_mortality()
    fertility = fertility if fertility is not None else default_fertility()
    wage = wage if wage is not None else default_wage()
    box = control_box if control_box is not None else Box(np.array([0.0]),
                                                          np.array([1.0]))

    growth = RateFunction(ConstantCore(1.0))
    death = RateFunction(ScalarCore(mortality))
    birth = RateFunction(SeparableCore(
        profile=fertility,
        term=AffineControlTerm(const=1.0, coeffs=(subsidy_gain,) * box.dim)))

    declared = max(growth.core.lipschitz(box), death.core.lipschitz(box),
                   birth.core.lipschitz(box))

    model = ModelSpec(growth=growth, mortality=death, birth=birth,
                      control_box=box, declared_lipschitz=declared * 1.0001)
    cost = CostSpec(moments=(wage,), running=WelfareIncomeCost(discount),
                    boundary_channel=True)
    return model, cost
