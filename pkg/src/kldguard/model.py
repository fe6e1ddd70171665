"""Outcome-space model: coefficient tables, lifted variables, and KLD objectives.

The stored chain data of all devices is one discrete outcome; its distribution
under each hypothesis is a mixture over device-compromise patterns and the
success/failure of the ledger attack.  Grouping terms by pattern yields, per
outcome, honest-data coefficients multiplying products of attacker-PMF entries.
Replacing those products by free variables (boxed to [0,1], tied by weighted
budget equalities) is what the relaxed problem optimizes over.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_OUTCOME_CAP, SystemConfig, MaliciousPmfPair


class OutcomeSpaceError(ValueError):
    """Raised when the dense outcome space exceeds the configured cap."""


# ---------------------------------------------------------------------------
# outcome indexing
# ---------------------------------------------------------------------------
# An outcome index i in [0, |K|**(N*L)) is the base-|K| integer whose digits,
# most significant first, are the symbols of device 1 slots 1..L, then device 2
# slots 1..L, and so on (device-major, slot-minor).


def decode_outcome(i: int, cfg: SystemConfig) -> np.ndarray:
    """Map an outcome index to the (N, L) symbol matrix."""
    K, N, L = cfg.alphabet_size, cfg.num_devices, cfg.chain_length
    if not (0 <= i < K ** (N * L)):
        raise ValueError(f"outcome index {i} out of range")
    digits = np.zeros(N * L, dtype=np.int64)
    for pos in range(N * L - 1, -1, -1):
        digits[pos] = i % K
        i //= K
    return digits.reshape(N, L)


def encode_outcome(symbols: np.ndarray, cfg: SystemConfig) -> int:
    """Inverse of :func:`decode_outcome`."""
    K = cfg.alphabet_size
    flat = np.asarray(symbols, dtype=np.int64).reshape(-1)
    if np.any(flat < 0) or np.any(flat >= K):
        raise ValueError("symbols out of alphabet range")
    i = 0
    for d in flat:
        i = i * K + int(d)
    return i


def encode_outcomes(symbols: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Vectorized encode for an array of shape (..., N, L)."""
    K, N, L = cfg.alphabet_size, cfg.num_devices, cfg.chain_length
    flat = np.asarray(symbols, dtype=np.int64).reshape(*symbols.shape[:-2], N * L)
    weights = K ** np.arange(N * L - 1, -1, -1, dtype=np.int64)
    return flat @ weights


# ---------------------------------------------------------------------------
# device patterns
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DevicePattern:
    """One compromise pattern: which of the N devices are malicious."""

    m: int
    bits: tuple  # bits[j-1] == 1 marks device j malicious; device 1 is the MSB
    malicious_count: int


def count_malicious(m: int, num_devices: int) -> DevicePattern:
    """Decode pattern index m into per-device flags and their popcount."""
    if not (1 <= m <= 2 ** num_devices - 1):
        raise ValueError(f"pattern index {m} out of range for N={num_devices}")
    bits = tuple((m >> (num_devices - j)) & 1 for j in range(1, num_devices + 1))
    return DevicePattern(m=m, bits=bits, malicious_count=sum(bits))


# ---------------------------------------------------------------------------
# coefficient tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoefficientTables:
    """Precomputed honest-data coefficients of the mixture expansion.

    Immutable after construction; all arrays are indexed by outcome i (rows)
    and pattern column c (pattern index ``patterns[c]``).  ``attack_counts``
    and ``tail_counts`` hold, per outcome/pattern, the total number of times
    each alphabet symbol occupies a falsifiable slot, summed over that
    pattern's malicious devices (attack range: slots >= attack_start_clipped;
    tail range: slots > honest_prefix).  They make lifting and gradients
    O(|K|) per pattern instead of O(L).
    """

    cfg: SystemConfig
    patterns: np.ndarray        # all pattern indices 1 .. 2**N - 1
    n_malicious: np.ndarray     # popcount per pattern
    psi: np.ndarray             # all-honest mass per outcome under H1
    theta: np.ndarray           # all-honest mass per outcome under H0
    gamma: np.ndarray           # (I, M) success-branch coefficient under H1
    lam: np.ndarray             # (I, M) failure-branch coefficient under H1
    delta: np.ndarray           # (I, M) success-branch coefficient under H0
    phi: np.ndarray             # (I, M) failure-branch coefficient under H0
    active_gamma: np.ndarray    # pattern indices with nonzero gamma column
    active_lam: np.ndarray
    active_delta: np.ndarray
    active_phi: np.ndarray
    budget_success: np.ndarray  # per pattern: P_s * (1-a)^(N-n) * a^n
    budget_failure: np.ndarray  # per pattern: (1-P_s) * (1-a)^(N-n) * a^n
    attack_counts: np.ndarray   # (I, M, K) symbol counts over the attack range
    tail_counts: np.ndarray     # (I, M, K) symbol counts over the tail range

    @property
    def num_outcomes(self) -> int:
        return self.psi.shape[0]

    def columns(self, active: np.ndarray) -> np.ndarray:
        """Column positions in the full (I, M) tables for a set of patterns."""
        return active - 1


def build_coefficients(cfg: SystemConfig, outcome_cap: int = DEFAULT_OUTCOME_CAP) -> CoefficientTables:
    """Enumerate the outcome space and build every coefficient table."""
    K, N, L = cfg.alphabet_size, cfg.num_devices, cfg.chain_length
    num_outcomes = K ** (N * L)
    if num_outcomes > outcome_cap:
        raise OutcomeSpaceError(
            f"outcome space size {num_outcomes} exceeds cap {outcome_cap}"
        )
    alpha, ps = cfg.compromise_prob, cfg.dsa_success_prob
    la_plus = cfg.attack_start_clipped
    l0 = cfg.honest_prefix

    # Per-device words: all K**L symbol sequences, decoded once.
    num_words = K ** L
    word_syms = np.zeros((num_words, L), dtype=np.int64)
    w = np.arange(num_words)
    for l in range(L - 1, -1, -1):
        word_syms[:, l] = w % K
        w = w // K

    def slot_product(pmf: np.ndarray, lo: int, hi: int) -> np.ndarray:
        # product of pmf over slots lo..hi (1-based, inclusive); empty -> 1
        if hi < lo:
            return np.ones(num_words)
        return np.prod(pmf[word_syms[:, lo - 1:hi]], axis=1)

    h1_full = slot_product(cfg.honest_pmf_h1, 1, L)
    h1_pre_attack = slot_product(cfg.honest_pmf_h1, 1, cfg.attack_start - 1)
    h1_pre_tail = slot_product(cfg.honest_pmf_h1, 1, l0)
    h0_full = slot_product(cfg.honest_pmf_h0, 1, L)
    h0_pre_attack = slot_product(cfg.honest_pmf_h0, 1, cfg.attack_start - 1)
    h0_pre_tail = slot_product(cfg.honest_pmf_h0, 1, l0)

    # per-word symbol counts over the two falsifiable ranges
    word_attack_counts = np.zeros((num_words, K), dtype=np.int32)
    word_tail_counts = np.zeros((num_words, K), dtype=np.int32)
    for k in range(K):
        word_attack_counts[:, k] = np.sum(word_syms[:, la_plus - 1:L] == k, axis=1)
        word_tail_counts[:, k] = np.sum(word_syms[:, l0:L] == k, axis=1)

    # device-major word index per outcome
    idx = np.arange(num_outcomes, dtype=np.int64)
    words = np.empty((num_outcomes, N), dtype=np.int64)
    for j in range(1, N + 1):
        words[:, j - 1] = (idx // num_words ** (N - j)) % num_words

    psi = (1.0 - alpha) ** N * np.prod(h1_full[words], axis=1)
    theta = (1.0 - alpha) ** N * np.prod(h0_full[words], axis=1)

    num_patterns = 2 ** N - 1
    patterns = np.arange(1, num_patterns + 1)
    n_malicious = np.array([bin(m).count("1") for m in patterns])
    # 0**0 == 1 convention: numpy already evaluates 0.0**0 to 1.0
    prefactor = (1.0 - alpha) ** (N - n_malicious).astype(float) * alpha ** n_malicious.astype(float)
    budget_success = ps * prefactor
    budget_failure = (1.0 - ps) * prefactor

    gamma = np.empty((num_outcomes, num_patterns))
    lam = np.empty((num_outcomes, num_patterns))
    delta = np.empty((num_outcomes, num_patterns))
    phi = np.empty((num_outcomes, num_patterns))
    attack_counts = np.zeros((num_outcomes, num_patterns, K), dtype=np.int32)
    tail_counts = np.zeros((num_outcomes, num_patterns, K), dtype=np.int32)

    for c, m in enumerate(patterns):
        pat = count_malicious(int(m), N)
        g = np.ones(num_outcomes)
        la_ = np.ones(num_outcomes)
        d = np.ones(num_outcomes)
        ph = np.ones(num_outcomes)
        for j in range(N):
            wj = words[:, j]
            if pat.bits[j]:
                g *= h1_pre_attack[wj]
                la_ *= h1_pre_tail[wj]
                d *= h0_pre_attack[wj]
                ph *= h0_pre_tail[wj]
                attack_counts[:, c, :] += word_attack_counts[wj]
                tail_counts[:, c, :] += word_tail_counts[wj]
            else:
                g *= h1_full[wj]
                la_ *= h1_full[wj]
                d *= h0_full[wj]
                ph *= h0_full[wj]
        gamma[:, c] = budget_success[c] * g
        lam[:, c] = budget_failure[c] * la_
        delta[:, c] = budget_success[c] * d
        phi[:, c] = budget_failure[c] * ph

    # Honest PMF products are strictly positive, so a column is active iff its
    # prefactor (including the success/failure probability) is nonzero.
    active_gamma = patterns[budget_success > 0.0]
    active_lam = patterns[budget_failure > 0.0]
    active_delta = patterns[budget_success > 0.0]
    active_phi = patterns[budget_failure > 0.0]

    return CoefficientTables(
        cfg=cfg,
        patterns=patterns,
        n_malicious=n_malicious,
        psi=psi,
        theta=theta,
        gamma=gamma,
        lam=lam,
        delta=delta,
        phi=phi,
        active_gamma=active_gamma,
        active_lam=active_lam,
        active_delta=active_delta,
        active_phi=active_phi,
        budget_success=budget_success,
        budget_failure=budget_failure,
        attack_counts=attack_counts,
        tail_counts=tail_counts,
    )


# ---------------------------------------------------------------------------
# relaxed decision variables
# ---------------------------------------------------------------------------


@dataclass
class RelaxedVariables:
    """Decision vector of the relaxed problem, one column per active pattern.

    p1/p2 enter the H1 mixture (success / failure branch); q1/q2 the H0 one.
    Column order follows the active-pattern arrays of the tables.
    """

    p1: np.ndarray  # (I, |active_gamma|)
    p2: np.ndarray  # (I, |active_lam|)
    q1: np.ndarray  # (I, |active_delta|)
    q2: np.ndarray  # (I, |active_phi|)

    def copy(self) -> "RelaxedVariables":
        return RelaxedVariables(self.p1.copy(), self.p2.copy(),
                                self.q1.copy(), self.q2.copy())


def _power_products(counts: np.ndarray, cols: np.ndarray, pmf: np.ndarray) -> np.ndarray:
    # counts: (I, M, K); pick active columns, evaluate prod_k pmf_k**count.
    if cols.size == 0:
        return np.zeros((counts.shape[0], 0))
    return np.prod(pmf[None, None, :] ** counts[:, cols, :], axis=2)


def lift_pmf_to_theta(tables: CoefficientTables, dist: MaliciousPmfPair) -> RelaxedVariables:
    """Lift an attacker PMF pair to the relaxed variable space.

    Lifted points satisfy every box and budget constraint exactly, so they
    are always feasible starting points for the solver.
    """
    cg = tables.columns(tables.active_gamma)
    cl = tables.columns(tables.active_lam)
    cd = tables.columns(tables.active_delta)
    cp = tables.columns(tables.active_phi)
    return RelaxedVariables(
        p1=_power_products(tables.attack_counts, cg, dist.pB),
        p2=_power_products(tables.tail_counts, cl, dist.pB),
        q1=_power_products(tables.attack_counts, cd, dist.qB),
        q2=_power_products(tables.tail_counts, cp, dist.qB),
    )


def mixture_h1(tables: CoefficientTables, theta: RelaxedVariables) -> np.ndarray:
    """Per-outcome probability under H1 (the denominator side of the objective)."""
    b = tables.psi.copy()
    if theta.p1.shape[1]:
        b += np.einsum("im,im->i", tables.gamma[:, tables.columns(tables.active_gamma)], theta.p1)
    if theta.p2.shape[1]:
        b += np.einsum("im,im->i", tables.lam[:, tables.columns(tables.active_lam)], theta.p2)
    return b


def mixture_h0(tables: CoefficientTables, theta: RelaxedVariables) -> np.ndarray:
    """Per-outcome probability under H0 (the numerator side of the objective)."""
    a = tables.theta.copy()
    if theta.q1.shape[1]:
        a += np.einsum("im,im->i", tables.delta[:, tables.columns(tables.active_delta)], theta.q1)
    if theta.q2.shape[1]:
        a += np.einsum("im,im->i", tables.phi[:, tables.columns(tables.active_phi)], theta.q2)
    return a


def joint_pmf(tables: CoefficientTables, theta: RelaxedVariables) -> tuple:
    """Return (p over outcomes, q over outcomes) for the given variables."""
    return mixture_h1(tables, theta), mixture_h0(tables, theta)


def kld_between(q: np.ndarray, p: np.ndarray) -> float:
    """sum q ln(q/p) in nats, with 0 ln(0/x) = 0 and +inf when q>0, p=0."""
    pos = q > 0.0
    if np.any(p[pos] == 0.0):
        return float("inf")
    return float(np.sum(q[pos] * np.log(q[pos] / p[pos])))


def kld_relaxed(tables: CoefficientTables, theta: RelaxedVariables) -> float:
    """Relaxed objective value in nats."""
    p, q = joint_pmf(tables, theta)
    return kld_between(q, p)


def kld_original(tables: CoefficientTables, dist: MaliciousPmfPair) -> float:
    """Original objective: KLD between the H0 and H1 outcome distributions."""
    p, q = joint_pmf(tables, lift_pmf_to_theta(tables, dist))
    return kld_between(q, p)


def budget_residuals(tables: CoefficientTables, theta: RelaxedVariables) -> np.ndarray:
    """Absolute budget-constraint residuals, one per active column (all blocks)."""
    res = []
    for weights, active, vals, budgets in (
        (tables.gamma, tables.active_gamma, theta.p1, tables.budget_success),
        (tables.lam, tables.active_lam, theta.p2, tables.budget_failure),
        (tables.delta, tables.active_delta, theta.q1, tables.budget_success),
        (tables.phi, tables.active_phi, theta.q2, tables.budget_failure),
    ):
        for c, m in enumerate(active):
            col = tables.columns(np.array([m]))[0]
            res.append(float(weights[:, col] @ vals[:, c]) - float(budgets[m - 1]))
    return np.array(res)
