"""Monte Carlo sampler of the full adversary model.

Each trial draws per-device compromise flags, one attack-success flag, and
the stored symbols slot by slot: a compromised device reports attacker data
in every slot past the honest prefix, in the contested range only when the
ledger attack succeeded, and honest data before the attack start.  Used to
validate the analytic outcome distribution and to estimate the detection
metric empirically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig, MaliciousPmfPair
from .model import CoefficientTables, encode_outcomes, joint_pmf, lift_pmf_to_theta

H1, H0 = "H1", "H0"


@dataclass(frozen=True)
class SimBatch:
    num_trials: int
    seed: int
    hypothesis: str  # "H0" or "H1"
    dist: MaliciousPmfPair

    def __post_init__(self):
        if self.num_trials < 1:
            raise ValueError("num_trials must be >= 1")
        if self.hypothesis not in (H0, H1):
            raise ValueError("hypothesis must be 'H0' or 'H1'")


def sample_outcome(cfg: SystemConfig, dist: MaliciousPmfPair, hypothesis: str,
                   rng: np.random.Generator) -> int:
    """Draw a single outcome index from the adversary model."""
    return int(sample_outcomes(cfg, dist, hypothesis, 1, rng)[0])


def sample_outcomes(cfg: SystemConfig, dist: MaliciousPmfPair, hypothesis: str,
                    num_trials: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized sampler; one outcome index per trial.

    Draw order per call is fixed (flags, attack successes, honest symbols,
    attacker symbols), so results are deterministic for a given generator
    state regardless of batch splitting by the caller.
    """
    K, N, L = cfg.alphabet_size, cfg.num_devices, cfg.chain_length
    honest = cfg.honest_pmf_h1 if hypothesis == H1 else cfg.honest_pmf_h0
    attacker = dist.pB if hypothesis == H1 else dist.qB

    compromised = rng.random((num_trials, N)) < cfg.compromise_prob
    dsa_success = rng.random(num_trials) < cfg.dsa_success_prob
    syms = rng.choice(K, size=(num_trials, N, L), p=honest)
    attack_syms = rng.choice(K, size=(num_trials, N, L), p=attacker)

    slots = np.arange(1, L + 1)
    always_falsified = slots > cfg.honest_prefix                       # tail slots
    contested = (slots >= cfg.attack_start_clipped) & ~always_falsified

    falsify = (compromised[:, :, None]
               & (always_falsified[None, None, :]
                  | (contested[None, None, :] & dsa_success[:, None, None])))
    syms = np.where(falsify, attack_syms, syms)
    return encode_outcomes(syms, cfg)


def run_batch(cfg: SystemConfig, batch: SimBatch) -> np.ndarray:
    rng = np.random.default_rng(batch.seed)
    return sample_outcomes(cfg, batch.dist, batch.hypothesis, batch.num_trials, rng)


@dataclass
class EmpiricalKld:
    estimate: float
    std_error: float
    num_trials: int


class ModelViolationError(RuntimeError):
    """An outcome was observed that the analytic model assigns zero probability."""


def empirical_kld(cfg: SystemConfig, tables: CoefficientTables,
                  dist: MaliciousPmfPair, num_trials: int, seed: int,
                  num_jackknife_blocks: int = 100) -> EmpiricalKld:
    """Plug-in estimate of the detection metric from samples drawn under H0.

    Samples the empirical H0 outcome histogram, keeps the analytic H1
    distribution exact, and reports a grouped-jackknife standard error.
    """
    outcomes = run_batch(cfg, SimBatch(num_trials=num_trials, seed=seed,
                                       hypothesis=H0, dist=dist))
    p_analytic, _ = joint_pmf(tables, lift_pmf_to_theta(tables, dist))

    counts = np.bincount(outcomes, minlength=tables.num_outcomes).astype(float)
    observed = counts > 0
    if np.any(observed & (p_analytic == 0.0)):
        raise ModelViolationError(
            "observed outcome has zero analytic probability under H1"
        )

    def plugin(c: np.ndarray, n: float) -> float:
        q_hat = c / n
        pos = q_hat > 0.0
        return float(np.sum(q_hat[pos] * np.log(q_hat[pos] / p_analytic[pos])))

    estimate = plugin(counts, num_trials)

    # grouped jackknife over contiguous trial blocks
    g = min(num_jackknife_blocks, num_trials)
    edges = np.linspace(0, num_trials, g + 1).astype(int)
    loo = np.empty(g)
    for b in range(g):
        block = outcomes[edges[b]:edges[b + 1]]
        block_counts = np.bincount(block, minlength=tables.num_outcomes).astype(float)
        loo[b] = plugin(counts - block_counts, num_trials - (edges[b + 1] - edges[b]))
    se = float(np.sqrt((g - 1) / g * np.sum((loo - loo.mean()) ** 2)))
    return EmpiricalKld(estimate=estimate, std_error=se, num_trials=num_trials)
