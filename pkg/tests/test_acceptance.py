"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines and timings.  Tolerances are fixed here, not calibrated elsewhere.
"""

import functools
import json
import os
import time

import numpy as np

import boxcar as bx
from boxcar.control import sequence_variation
from boxcar.measure import _merged_signed_support
from boxcar.optimizer import _tv_prox_1d, resample_control

from conftest import make_const_model


def criterion(num, name, budget_s):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper():
            t0 = time.perf_counter()
            try:
                fn()
                elapsed = time.perf_counter() - t0
                assert elapsed <= budget_s, (
                    f"runtime {elapsed:.1f}s exceeds budget {budget_s:.0f}s")
            except BaseException:
                elapsed = time.perf_counter() - t0
                print(f"\n[criterion {num}] FAIL ({elapsed:.1f}s, "
                      f"budget {budget_s:.0f}s): {name}")
                raise
            print(f"\n[criterion {num}] PASS ({elapsed:.1f}s, "
                  f"budget {budget_s:.0f}s): {name}")
        return wrapper
    return deco


def prox_grid_oracle(y, lam, h=1e-3):
    """Exact minimizer of the TV proximal objective over a value grid.

    Chain dynamic program with an O(grid) min-plus envelope per step; global
    over the grid, independent of the taut-string path it checks.
    """
    lo = float(y.min() - 2 * lam - 0.05)
    hi = float(y.max() + 2 * lam + 0.05)
    grid = np.arange(lo, hi + h / 2, h)
    G = len(grid)
    cost = 0.5 * (grid - y[0]) ** 2
    parents = []
    for i in range(1, len(y)):
        fwd = cost.copy()
        fidx = np.arange(G)
        for g in range(1, G):
            cand = fwd[g - 1] + lam * h
            if cand < fwd[g]:
                fwd[g] = cand
                fidx[g] = fidx[g - 1]
        bwd = cost.copy()
        bidx = np.arange(G)
        for g in range(G - 2, -1, -1):
            cand = bwd[g + 1] + lam * h
            if cand < bwd[g]:
                bwd[g] = cand
                bidx[g] = bidx[g + 1]
        take_fwd = fwd <= bwd
        parents.append(np.where(take_fwd, fidx, bidx))
        cost = np.where(take_fwd, fwd, bwd) + 0.5 * (grid - y[i]) ** 2
    g = int(np.argmin(cost))
    path = [g]
    for par in reversed(parents):
        g = int(par[g])
        path.append(g)
    return grid[np.array(path[::-1])]


def welfare_study_setup(horizon=4.0):
    """Welfare preset with a fixed nontrivial control and exact initial atoms."""
    model, cost = bx.welfare_model(horizon=horizon)
    n, dx = 20, 5.0
    ages = (np.arange(n) + 0.5) * dx
    masses = np.maximum(0.0, 1.0 - (ages / 100.0) ** 2) * dx
    mu0 = bx.normalize(ages, masses)
    bps = np.arange(0.0, horizon + 0.5, 1.0)
    vals = np.array([[0.8], [0.2], [0.5], [0.5]][:len(bps) - 1])
    control = bx.Control(bps, vals)

    def disc(dt):
        return bx.Discretization(n=n, dt=dt, substeps=2, dx=dx,
                                 placement="centroid")

    return model, cost, mu0, control, disc


@criterion(1, "flat metric: axioms, closed form, oracle sandwich, bound", 10)
def test_criterion_1_flat_metric():
    rng = np.random.default_rng(101)

    def rand_measure():
        k = int(rng.integers(0, 21))
        return bx.normalize(rng.uniform(0, 10, k), rng.uniform(0, 5, k))

    h = 1e-3
    for _ in range(1000):
        a, b, c = rand_measure(), rand_measure(), rand_measure()
        dab = bx.flat_distance(a, b)
        assert abs(dab - bx.flat_distance(b, a)) <= 1e-9
        assert bx.flat_distance(a, a) <= 1e-9
        assert bx.flat_distance(a, c) <= dab + bx.flat_distance(b, c) + 1e-9
        lo = bx.flat_distance_oracle(a, b, h)
        _, s = _merged_signed_support(a, b)
        assert lo <= dab + 1e-10
        assert dab <= lo + h * np.abs(s).sum() + 1e-10
        assert dab <= bx.pairing_bound(a, b) + 1e-12
        x, y = rng.uniform(0, 10, 2)
        d = bx.flat_distance(bx.normalize([x], [1.0]), bx.normalize([y], [1.0]))
        assert abs(d - min(2.0, abs(x - y))) <= 1e-9


@criterion(2, "mass conservation and pure exponential decay", 1)
def test_criterion_2_conservation_decay():
    horizon, dt, sub = 10.0, 0.5, 2
    mu0 = bx.normalize([0.2, 1.4, 2.2], [1.0, 2.0, 0.5])
    disc = bx.Discretization(n=6, dt=dt, substeps=sub)
    ctrl = bx.constant_control([0.3], horizon)

    conservative = make_const_model(b=1.0, c=0.0, beta=0.0)
    traj = bx.simulate(conservative, mu0, ctrl, horizon, disc)
    drift = max(abs(s.m.sum() - mu0.total_mass()) for s in traj.states)
    assert drift <= 1e-13

    c = 0.8
    decaying = make_const_model(b=1.0, c=c, beta=0.0)
    traj = bx.simulate(decaying, mu0, ctrl, horizon, disc)
    bound = 10.0 * (c * dt / sub) ** 4
    m0 = traj.states[0].m
    occupied = m0 > 0
    for t, state in zip(traj.times, traj.states):
        exact = m0[occupied] * np.exp(-c * t)
        rel = np.abs(state.m[:len(m0)][occupied] - exact) / exact
        assert rel.max() <= bound


@criterion(3, "first-order self-convergence of the cohort scheme", 60)
def test_criterion_3_convergence():
    model, _, mu0, control, disc = welfare_study_setup()
    schedule = [disc(0.5), disc(0.25), disc(0.125), disc(0.0625)]
    table = bx.convergence_study(model, mu0, control, 4.0, schedule,
                                 disc(0.0078125))
    ratios = table.ratios()
    in_band = [1.5 <= r <= 2.5 for r in ratios]
    assert any(in_band[i] and in_band[i + 1] for i in range(len(in_band) - 1)), \
        f"ratios {ratios} lack two consecutive values in [1.5, 2.5]"
    consts = table.row_constants()
    assert max(consts) <= 3.0 * min(consts), f"unstable constants {consts}"
    for row in table.rows:
        assert row.error <= 1.5 * table.fit_constant * (row.dt + row.d0)


@criterion(4, "weak-form residual halves with the window length", 30)
def test_criterion_4_weak_residual():
    model, _, mu0, control, disc = welfare_study_setup()
    phis = [
        bx.TestFunction(lambda t, a: np.cos(0.5 * t) * np.exp(-a / 10.0),
                        lambda t, a: -0.5 * np.sin(0.5 * t) * np.exp(-a / 10.0),
                        lambda t, a: -np.cos(0.5 * t) * np.exp(-a / 10.0) / 10.0),
        bx.TestFunction(lambda t, a: np.exp(-0.2 * t) * a / (1.0 + a),
                        lambda t, a: -0.2 * np.exp(-0.2 * t) * a / (1.0 + a),
                        lambda t, a: np.exp(-0.2 * t) / (1.0 + a) ** 2),
        bx.TestFunction(lambda t, a: (1.0 + 0.1 * t) * np.tanh(a / 20.0),
                        lambda t, a: 0.1 * np.tanh(a / 20.0),
                        lambda t, a: (1.0 + 0.1 * t) / (20.0 * np.cosh(a / 20.0) ** 2)),
    ]
    residuals = {}
    for dt in (0.5, 0.25, 0.125, 0.0625):
        d = disc(dt)
        traj = bx.simulate(model, mu0, control, 4.0, d,
                           save_every=round(4.0 / dt))
        residuals[dt] = [bx.weak_residual(traj, model, control, phi)
                         for phi in phis]
    for q in range(len(phis)):
        for coarse, fine in ((0.5, 0.25), (0.25, 0.125), (0.125, 0.0625)):
            assert residuals[fine][q] <= 0.7 * residuals[coarse][q], (
                f"phi_{q}: residual {residuals[fine][q]:.3e} at dt={fine} vs "
                f"{residuals[coarse][q]:.3e} at dt={coarse}")


@criterion(5, "tangent gradients match finite differences", 30)
def test_criterion_5_sensitivity():
    from test_sensitivity import decay_model, smooth_random_setup
    rng = np.random.default_rng(505)
    for _ in range(20):
        model, cost, mu0, ctrl, disc = smooth_random_setup(rng)
        check = bx.check_gradient(model, cost, mu0, ctrl, disc, fd_step=1e-5)
        assert check.max_rel_error <= 1e-4

    T, m0, u = 1.0, 2.0, 0.7
    disc = bx.Discretization(n=1, dt=1.0, substeps=64, dx=1.0)
    _, sens = bx.simulate_with_sensitivity(decay_model(),
                                           bx.normalize([0.5], [m0]),
                                           bx.constant_control([u], T), disc)
    assert abs(sens.final_tangent_m[0, 0] - (-T * m0 * np.exp(-u * T))) <= 1e-6


@criterion(6, "optimizer reaches analytic minima; prox matches brute force", 30)
def test_criterion_6_optimizer():
    from boxcar.cost import CostSpec, QuadraticControlCost
    from boxcar.model import Box
    mu0 = bx.normalize([0.3, 1.1], [1.0, 0.5])
    disc = bx.Discretization(n=2, dt=0.5, substeps=4, dx=1.0)
    settings = bx.OptimizerSettings(max_iterations=150, tolerance=1e-8,
                                    multistart=3, seed=1)

    for dim in (1, 2):
        box = Box(np.zeros(dim), np.ones(dim))
        model = make_const_model(b=1.0, c=0.1, box=box)
        cost = CostSpec(moments=(),
                        running=QuadraticControlCost((1.0,) * dim,
                                                     (0.0,) * dim))
        res = bx.minimize(model, cost, mu0, 3.0, disc, 3, settings)
        assert np.abs(res.values).max() <= 1e-4

    model = make_const_model(b=1.0, c=0.1)
    cost = CostSpec(moments=(), running=QuadraticControlCost((1.0,), (0.3,)))
    res = bx.minimize(model, cost, mu0, 3.0, disc, 1, settings)
    assert abs(res.values[0, 0] - 0.3) <= 1e-4
    hist = res.j_history
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))

    rng = np.random.default_rng(606)
    for _ in range(10):
        y = rng.uniform(0, 1, 5)
        lam = float(rng.uniform(0.05, 0.5))
        assert np.abs(_tv_prox_1d(y, lam)
                      - prox_grid_oracle(y, lam, h=1e-3)).max() <= 1e-3


@criterion(7, "refinement: shrinking optimal-value gaps, consistent minimizers",
           300)
def test_criterion_7_refinement():
    from boxcar.welfare import default_initial_atoms
    model, cost = bx.welfare_model()
    horizon = 50.0
    ages, masses = default_initial_atoms(100)
    mu0 = bx.normalize(ages, masses)
    levels = [
        bx.RefinementLevel(100, 1.0, 5, substeps=2, dx=1.0, placement="centroid"),
        bx.RefinementLevel(200, 0.5, 10, substeps=2, dx=0.5, placement="centroid"),
        bx.RefinementLevel(400, 0.25, 20, substeps=2, dx=0.25, placement="centroid"),
    ]
    settings = bx.OptimizerSettings(max_iterations=60, tolerance=1e-5,
                                    multistart=2, seed=0)
    cert = bx.refine(model, cost, mu0, horizon, levels, settings)
    assert cert.plateau[1] < cert.plateau[0], f"plateau {cert.plateau}"

    lvl2 = levels[1].discretization()
    windows = lvl2.windows(horizon)
    per = windows // levels[1].pieces
    bps = np.append(np.arange(levels[1].pieces) * per * lvl2.dt,
                    windows * lvl2.dt)
    coarsened = resample_control(cert.rows[2].control, bps)
    j_cross = bx.evaluate(model, mu0, coarsened, lvl2, cost).total
    j2 = cert.rows[1].j_star
    assert abs(j_cross - j2) <= 0.02 * abs(j2), (
        f"cross-evaluation {j_cross} vs optimum {j2}")


@criterion(8, "step-function approximation of sampled controls", 5)
def test_criterion_8_bv_approximation():
    rng = np.random.default_rng(808)
    for _ in range(100):
        k = int(rng.integers(10, 150))
        dim = int(rng.integers(1, 3))
        times = np.unique(np.concatenate([[0.0], rng.uniform(0, 1, k), [1.0]]))
        samples = np.cumsum(rng.normal(0, 0.15, (len(times), dim)), axis=0)
        eps = float(rng.uniform(0.05, 0.5))
        out = bx.approximate_bv(times, samples, eps=eps)
        for t, v in zip(times, samples):
            assert np.linalg.norm(out.eval(t) - v) <= eps + 1e-12
        rows = {tuple(np.round(r, 12)) for r in samples}
        assert all(tuple(np.round(v, 12)) in rows for v in out.values)
        assert bx.total_variation(out) <= sequence_variation(samples) + 1e-12


@criterion(9, "demo reruns produce byte-identical CSV outputs", 120)
def test_criterion_9_determinism():
    import tempfile
    from boxcar.cli import main

    overrides = {
        "horizon": 10.0,
        "optimizer": {"max_iterations": 20, "multistart": 2,
                      "tolerance": 1e-4, "seed": 0},
        "refine": {"levels": [
            {"n": 50, "dt": 1.0, "pieces": 5, "substeps": 2, "dx": 2.0,
             "placement": "centroid"},
            {"n": 100, "dt": 0.5, "pieces": 10, "substeps": 2, "dx": 1.0,
             "placement": "centroid"},
        ]},
    }
    with tempfile.TemporaryDirectory() as root:
        cfg_path = os.path.join(root, "overrides.json")
        with open(cfg_path, "w", encoding="utf-8") as fh:
            json.dump(overrides, fh)
        out1, out2 = os.path.join(root, "run1"), os.path.join(root, "run2")
        assert main(["welfare-demo", "--config", cfg_path, "--out", out1,
                     "--seed", "7"]) == 0
        assert main(["welfare-demo", "--config", cfg_path, "--out", out2,
                     "--seed", "7"]) == 0
        csvs = sorted(f for f in os.listdir(out1) if f.endswith(".csv"))
        assert csvs, "demo produced no CSV output"
        for name in csvs:
            with open(os.path.join(out1, name), "rb") as fh:
                b1 = fh.read()
            with open(os.path.join(out2, name), "rb") as fh:
                b2 = fh.read()
            assert b1 == b2, f"{name} differs between reruns"
