import numpy as np
import pytest

from kldguard import (
    MaliciousPmfPair,
    SolverSettings,
    build_coefficients,
    kld_relaxed,
    lift_pmf_to_theta,
    make_config,
    solve_relaxed,
    update_block_p1,
    update_block_p2,
    update_block_q1,
    update_block_q2,
)
from kldguard.model import budget_residuals, joint_pmf
from kldguard.solver import _block_problem
from kldguard.waterfill import capped_waterfill

BLOCK_UPDATES = {
    "p1": update_block_p1,
    "p2": update_block_p2,
    "q1": update_block_q1,
    "q2": update_block_q2,
}


def small_config(**over):
    kw = dict(
        alphabet_size=2,
        num_devices=1,
        chain_length=2,
        honest_prefix=1,
        attack_start=1,
        compromise_prob=0.5,
        dsa_success_prob=0.5,
        honest_pmf_h1=[0.1, 0.9],
        honest_pmf_h0=[0.9, 0.1],
    )
    kw.update(over)
    return make_config(**kw)


def max_block_move(tables, theta):
    """Largest max-norm change any single block re-update would make."""
    worst = 0.0
    active = {
        "p1": (tables.active_gamma, theta.p1),
        "p2": (tables.active_lam, theta.p2),
        "q1": (tables.active_delta, theta.q1),
        "q2": (tables.active_phi, theta.q2),
    }
    for family, (patterns, block) in active.items():
        for c, m in enumerate(patterns):
            x = BLOCK_UPDATES[family](tables, theta, int(m))
            worst = max(worst, float(np.abs(x - block[:, c]).max()))
    return worst


def test_monotone_descent_and_convergence():
    tables = build_coefficients(small_config())
    res = solve_relaxed(tables, SolverSettings(epsilon=1e-10))
    assert res.converged
    assert res.value == res.trace[-1]
    assert np.all(np.diff(res.trace) <= 1e-10)


def test_feasibility_at_optimum():
    tables = build_coefficients(small_config())
    res = solve_relaxed(tables)
    theta = res.theta_star
    for block in (theta.p1, theta.p2, theta.q1, theta.q2):
        assert np.all(block >= -1e-12) and np.all(block <= 1.0 + 1e-12)
    assert np.max(np.abs(budget_residuals(tables, theta))) < 1e-9


def test_stationarity_at_convergence():
    tables = build_coefficients(small_config())
    res = solve_relaxed(tables, SolverSettings(epsilon=1e-12))
    assert max_block_move(tables, res.theta_star) < 1e-7


def test_block_update_is_idempotent_at_fixed_point():
    tables = build_coefficients(small_config())
    res = solve_relaxed(tables, SolverSettings(epsilon=1e-12))
    theta = res.theta_star
    x = update_block_p1(tables, theta, int(tables.active_gamma[0]))
    assert np.allclose(x, theta.p1[:, 0], atol=1e-9)


def test_block_update_never_increases_objective():
    tables = build_coefficients(small_config())
    rng = np.random.default_rng(2)
    dist = MaliciousPmfPair(pB=rng.dirichlet(np.ones(2)), qB=rng.dirichlet(np.ones(2)))
    theta = lift_pmf_to_theta(tables, dist)
    before = kld_relaxed(tables, theta)
    for family in ("p1", "p2", "q1", "q2"):
        x = BLOCK_UPDATES[family](tables, theta, 1)
        getattr(theta, family)[:, 0] = x
        after = kld_relaxed(tables, theta)
        assert after <= before + 1e-12
        before = after


def test_block_update_matches_grid_search():
    """First P1 update from the lifted uniform start vs a dense grid oracle."""
    tables = build_coefficients(small_config())
    theta = lift_pmf_to_theta(tables, MaliciousPmfPair(pB=[0.5, 0.5], qB=[0.5, 0.5]))
    c, prob = _block_problem(tables, theta, 1, "p1")
    _, x_star = capped_waterfill(prob)

    w, a, f, b = prob.weights, prob.slopes, prob.floors, prob.budget
    # grid the first three coordinates; the budget equality pins the fourth
    grid = np.linspace(0.0, 1.0, 101)
    g0, g1, g2 = np.meshgrid(grid, grid, grid, indexing="ij")
    x3 = (b - w[0] * g0 - w[1] * g1 - w[2] * g2) / w[3]
    ok = (x3 >= 0.0) & (x3 <= 1.0)
    B = np.stack([f[0] + w[0] * g0, f[1] + w[1] * g1, f[2] + w[2] * g2, f[3] + w[3] * x3])
    with np.errstate(divide="ignore"):
        vals = np.where(a[:, None, None, None] > 0.0,
                        a[:, None, None, None] * (np.log(np.maximum(a, 1e-300))[:, None, None, None]
                                                  - np.log(np.maximum(B, 1e-300))),
                        0.0).sum(axis=0)
    vals = np.where(ok, vals, np.inf)
    grid_best = float(vals.min())

    B_star = f + w * x_star
    exact = float(np.sum(np.where(a > 0.0, a * np.log(np.maximum(a, 1e-300) / np.maximum(B_star, 1e-300)), 0.0)))
    assert exact <= grid_best + 1e-12
    assert grid_best - exact < 1e-3


def test_init_independence():
    tables = build_coefficients(small_config())
    rng = np.random.default_rng(9)
    res_u = solve_relaxed(tables, SolverSettings(epsilon=1e-12))
    dist = MaliciousPmfPair(pB=rng.dirichlet(np.ones(2)), qB=rng.dirichlet(np.ones(2)))
    res_r = solve_relaxed(tables, SolverSettings(epsilon=1e-12, init=dist))
    assert abs(res_u.value - res_r.value) < 1e-6


def test_identical_hypotheses_guarantee_zero():
    cfg = small_config(honest_pmf_h0=[0.1, 0.9])
    tables = build_coefficients(cfg)
    res = solve_relaxed(tables)
    assert res.value == pytest.approx(0.0, abs=1e-9)


def test_no_blowup_outcomes_at_optimum():
    tables = build_coefficients(small_config())
    res = solve_relaxed(tables)
    p, q = joint_pmf(tables, res.theta_star)
    assert not np.any((q > 1e-15) & (p < 1e-300))


def test_nonconvergence_reported():
    tables = build_coefficients(small_config())
    res = solve_relaxed(tables, SolverSettings(epsilon=1e-15, max_outer_iters=2))
    assert res.iterations == 2
    assert not res.converged


def test_settings_validation():
    with pytest.raises(ValueError):
        SolverSettings(epsilon=0.0)
    with pytest.raises(ValueError):
        SolverSettings(max_outer_iters=0)
