import numpy as np
import pytest

import boxcar as bx
from boxcar.model import ConstantCore, ConstantFn, eval_rate
from boxcar.welfare import (default_fertility, default_initial_atoms,
                            default_mortality, default_wage, welfare_model)


class TestPresetStructure:
    def test_growth_is_constant_one(self):
        model, _ = welfare_model()
        assert isinstance(model.growth.core, ConstantCore)
        mu = bx.normalize([3.0, 50.0], [1.0, 2.0])
        for a in (0.0, 17.3, 99.0):
            for u in ([0.0], [1.0]):
                assert eval_rate(model.growth, 1.0, mu, a,
                                 u, model.control_box) == 1.0

    def test_mortality_independent_of_time_population_control(self):
        model, _ = welfare_model()
        mu1 = bx.normalize([3.0], [1.0])
        mu2 = bx.normalize([40.0, 80.0], [5.0, 2.0])
        v = eval_rate(model.mortality, 0.0, mu1, 30.0, [0.0], model.control_box)
        assert v == eval_rate(model.mortality, 7.0, mu2, 30.0, [1.0],
                              model.control_box)
        assert v == pytest.approx(float(default_mortality().value(
            np.array([30.0]))[0]))

    def test_birth_scales_affinely_with_subsidy(self):
        model, _ = welfare_model()
        mu = bx.normalize([25.0], [1.0])
        base = eval_rate(model.birth, 0.0, mu, 25.0, [0.0], model.control_box)
        boosted = eval_rate(model.birth, 0.0, mu, 25.0, [1.0], model.control_box)
        assert boosted == pytest.approx(2.0 * base)
        assert base == pytest.approx(float(default_fertility().value(
            np.array([25.0]))[0]))

    def test_wage_sign_structure(self):
        wage = default_wage()
        a = np.array([5.0, 30.0, 50.0, 80.0])
        v = wage.value(a)
        assert v[0] < 0 and v[1] > 0 and v[2] > 0 and v[3] < 0

    def test_initial_atoms_thin_with_age(self):
        ages, masses = default_initial_atoms(10)
        assert len(ages) == 10
        assert np.all(np.diff(masses) <= 0)

    def test_negative_discount_rejected(self):
        with pytest.raises(ValueError):
            welfare_model(discount=-0.1)


class TestZeroFertilityPolicy:
    def test_optimizer_returns_zero_policy(self):
        # without births the subsidy buys nothing; any nonzero policy only
        # adds variation, so the zero control is optimal
        model, cost = welfare_model(fertility=ConstantFn(0.0), horizon=4.0)
        ages, masses = default_initial_atoms(10)
        mu0 = bx.normalize(ages, masses)
        disc = bx.Discretization(n=10, dt=0.5, substeps=2, dx=10.0,
                                 placement="centroid")
        settings = bx.OptimizerSettings(max_iterations=40, tolerance=1e-7,
                                        multistart=3, seed=2)
        res = bx.minimize(model, cost, mu0, 4.0, disc, 4, settings)
        assert np.abs(res.control.values).max() <= 1e-8
