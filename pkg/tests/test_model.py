import numpy as np
import pytest

from kldguard import (
    MaliciousPmfPair,
    OutcomeSpaceError,
    build_coefficients,
    count_malicious,
    decode_outcome,
    encode_outcome,
    joint_pmf,
    kld_original,
    kld_relaxed,
    lift_pmf_to_theta,
    make_config,
    uniform_pair,
)
from kldguard.model import RelaxedVariables, budget_residuals, encode_outcomes

from oracles import brute_joint_pmf, brute_kld


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


def two_device_config(**over):
    kw = dict(
        alphabet_size=2,
        num_devices=2,
        chain_length=3,
        honest_prefix=2,
        attack_start=1,
        compromise_prob=0.3,
        dsa_success_prob=0.2,
        honest_pmf_h1=[0.25, 0.75],
        honest_pmf_h0=[0.6, 0.4],
    )
    kw.update(over)
    return make_config(**kw)


def random_pair(rng, k=2):
    return MaliciousPmfPair(pB=rng.dirichlet(np.ones(k)), qB=rng.dirichlet(np.ones(k)))


# ---------------------------------------------------------------------------
# outcome indexing
# ---------------------------------------------------------------------------


def test_encode_decode_bijection():
    cfg = two_device_config()
    seen = set()
    for i in range(cfg.num_outcomes):
        syms = decode_outcome(i, cfg)
        assert syms.shape == (2, 3)
        j = encode_outcome(syms, cfg)
        assert j == i
        seen.add(tuple(syms.reshape(-1)))
    assert len(seen) == cfg.num_outcomes


def test_device_major_msb_first():
    cfg = two_device_config()
    # index 1 flips only the last slot of the last device
    syms = decode_outcome(1, cfg)
    assert syms[1, 2] == 1 and syms.sum() == 1
    # the highest digit is device 1, slot 1
    syms = decode_outcome(cfg.num_outcomes // 2, cfg)
    assert syms[0, 0] == 1 and syms.sum() == 1


def test_encode_outcomes_vectorized():
    cfg = two_device_config()
    rng = np.random.default_rng(3)
    batch = rng.integers(0, 2, size=(17, 2, 3))
    idx = encode_outcomes(batch, cfg)
    assert [encode_outcome(b, cfg) for b in batch] == list(idx)


def test_decode_range_checks():
    cfg = small_config()
    with pytest.raises(ValueError):
        decode_outcome(cfg.num_outcomes, cfg)
    with pytest.raises(ValueError):
        encode_outcome(np.array([[0, 2]]), cfg)


# ---------------------------------------------------------------------------
# device patterns
# ---------------------------------------------------------------------------


def test_pattern_decoding():
    pat = count_malicious(1, 3)
    assert pat.bits == (0, 0, 1)
    assert pat.malicious_count == 1
    pat = count_malicious(4, 3)
    assert pat.bits == (1, 0, 0)
    assert pat.malicious_count == 1
    pat = count_malicious(7, 3)
    assert pat.bits == (1, 1, 1)
    assert pat.malicious_count == 3


def test_pattern_range_check():
    with pytest.raises(ValueError):
        count_malicious(0, 3)
    with pytest.raises(ValueError):
        count_malicious(8, 3)


# ---------------------------------------------------------------------------
# coefficient tables
# ---------------------------------------------------------------------------


def test_honest_mass():
    for cfg in (small_config(), two_device_config()):
        tables = build_coefficients(cfg)
        expected = (1.0 - cfg.compromise_prob) ** cfg.num_devices
        assert tables.psi.sum() == pytest.approx(expected, rel=1e-12)
        assert tables.theta.sum() == pytest.approx(expected, rel=1e-12)


def test_prefactor_mass():
    cfg = two_device_config()
    tables = build_coefficients(cfg)
    total = tables.budget_success.sum() + tables.budget_failure.sum()
    expected = 1.0 - (1.0 - cfg.compromise_prob) ** cfg.num_devices
    assert total == pytest.approx(expected, rel=1e-12)


def test_alpha_one_only_full_pattern_active():
    cfg = two_device_config(compromise_prob=1.0)
    tables = build_coefficients(cfg)
    assert np.all(tables.psi == 0.0) and np.all(tables.theta == 0.0)
    assert list(tables.active_gamma) == [3]
    assert list(tables.active_phi) == [3]


def test_success_prob_zero_and_one_active_sets():
    tables = build_coefficients(two_device_config(dsa_success_prob=0.0))
    assert tables.active_gamma.size == 0 and tables.active_delta.size == 0
    assert tables.active_lam.size == 3 and tables.active_phi.size == 3
    tables = build_coefficients(two_device_config(dsa_success_prob=1.0))
    assert tables.active_gamma.size == 3 and tables.active_delta.size == 3
    assert tables.active_lam.size == 0 and tables.active_phi.size == 0


def test_outcome_space_cap():
    cfg = two_device_config()
    with pytest.raises(OutcomeSpaceError):
        build_coefficients(cfg, outcome_cap=cfg.num_outcomes - 1)


# ---------------------------------------------------------------------------
# joint PMF against the literal brute-force oracle
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("cfg_factory", [small_config, two_device_config])
def test_joint_pmf_matches_brute_force(cfg_factory):
    cfg = cfg_factory()
    tables = build_coefficients(cfg)
    rng = np.random.default_rng(11)
    for _ in range(5):
        dist = random_pair(rng)
        p, q = joint_pmf(tables, lift_pmf_to_theta(tables, dist))
        bp, bq = brute_joint_pmf(cfg, dist.pB, dist.qB)
        assert np.allclose(p, bp, atol=1e-14)
        assert np.allclose(q, bq, atol=1e-14)


def test_kld_original_matches_brute_force():
    cfg = small_config()
    tables = build_coefficients(cfg)
    dist = MaliciousPmfPair(pB=[0.3, 0.7], qB=[0.6, 0.4])
    assert kld_original(tables, dist) == pytest.approx(brute_kld(cfg, dist.pB, dist.qB), rel=1e-12)


def test_identical_hypotheses_give_zero():
    cfg = small_config(honest_pmf_h0=[0.1, 0.9])
    tables = build_coefficients(cfg)
    dist = MaliciousPmfPair(pB=[0.3, 0.7], qB=[0.3, 0.7])
    assert kld_original(tables, dist) == pytest.approx(0.0, abs=1e-14)


def test_normalization_for_budget_feasible_points():
    cfg = two_device_config()
    tables = build_coefficients(cfg)
    rng = np.random.default_rng(5)
    for _ in range(5):
        theta = lift_pmf_to_theta(tables, random_pair(rng))
        p, q = joint_pmf(tables, theta)
        assert p.sum() == pytest.approx(1.0, abs=1e-9)
        assert q.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.max(np.abs(budget_residuals(tables, theta))) < 1e-12


# ---------------------------------------------------------------------------
# lifting
# ---------------------------------------------------------------------------


def test_uniform_lift_closed_form():
    cfg = two_device_config()
    tables = build_coefficients(cfg)
    theta = lift_pmf_to_theta(tables, uniform_pair(cfg.alphabet_size))
    K, L = cfg.alphabet_size, cfg.chain_length
    span = L - cfg.attack_start_clipped + 1
    for c, m in enumerate(tables.active_gamma):
        n = tables.n_malicious[m - 1]
        assert np.allclose(theta.p1[:, c], K ** (-float(n * span)))


def test_zero_entry_lifts_to_exact_zero():
    cfg = small_config()
    tables = build_coefficients(cfg)
    dist = MaliciousPmfPair(pB=[1.0, 0.0], qB=[0.5, 0.5])
    theta = lift_pmf_to_theta(tables, dist)
    # outcome 3 = symbol 1 in both slots; slot 2 is always in the attack range
    assert theta.p1[3, 0] == 0.0
    assert theta.p1[0, 0] == 1.0


def test_lift_consistency():
    cfg = small_config()
    tables = build_coefficients(cfg)
    rng = np.random.default_rng(7)
    for _ in range(100):
        dist = random_pair(rng)
        v1 = kld_relaxed(tables, lift_pmf_to_theta(tables, dist))
        v0 = kld_original(tables, dist)
        assert v1 == pytest.approx(v0, rel=1e-10)


# ---------------------------------------------------------------------------
# relaxed objective
# ---------------------------------------------------------------------------


def _random_feasible_theta(tables, rng):
    """Random convex combination of lifted points (the feasible set is convex)."""
    t1 = lift_pmf_to_theta(tables, MaliciousPmfPair(pB=rng.dirichlet(np.ones(2)),
                                                    qB=rng.dirichlet(np.ones(2))))
    t2 = lift_pmf_to_theta(tables, MaliciousPmfPair(pB=rng.dirichlet(np.ones(2)),
                                                    qB=rng.dirichlet(np.ones(2))))
    mu = rng.random()
    return RelaxedVariables(
        p1=mu * t1.p1 + (1 - mu) * t2.p1,
        p2=mu * t1.p2 + (1 - mu) * t2.p2,
        q1=mu * t1.q1 + (1 - mu) * t2.q1,
        q2=mu * t1.q2 + (1 - mu) * t2.q2,
    )


def test_midpoint_convexity():
    cfg = two_device_config()
    tables = build_coefficients(cfg)
    rng = np.random.default_rng(13)
    for _ in range(50):
        t1 = _random_feasible_theta(tables, rng)
        t2 = _random_feasible_theta(tables, rng)
        mu = rng.random()
        mid = RelaxedVariables(
            p1=mu * t1.p1 + (1 - mu) * t2.p1,
            p2=mu * t1.p2 + (1 - mu) * t2.p2,
            q1=mu * t1.q1 + (1 - mu) * t2.q1,
            q2=mu * t1.q2 + (1 - mu) * t2.q2,
        )
        lhs = kld_relaxed(tables, mid)
        rhs = mu * kld_relaxed(tables, t1) + (1 - mu) * kld_relaxed(tables, t2)
        assert lhs <= rhs + 1e-9


def test_infinite_sentinel():
    cfg = small_config(compromise_prob=1.0, dsa_success_prob=1.0)
    tables = build_coefficients(cfg)
    # all mass goes through the attacker PMFs; disjoint supports blow up
    dist = MaliciousPmfPair(pB=[1.0, 0.0], qB=[0.0, 1.0])
    assert kld_original(tables, dist) == float("inf")


def test_nonnegativity():
    cfg = small_config()
    tables = build_coefficients(cfg)
    rng = np.random.default_rng(17)
    for _ in range(20):
        assert kld_relaxed(tables, _random_feasible_theta(tables, rng)) >= 0.0
