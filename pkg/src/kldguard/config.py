"""Scenario configuration for detection over a partially compromised ledger network."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PMF_SUM_TOL = 1e-12

# Dense tables over all |K|**(N*L) outcomes; refuse anything bigger by default.
DEFAULT_OUTCOME_CAP = 1 << 24


class ConfigError(ValueError):
    """Raised when a scenario configuration violates the model assumptions."""


@dataclass(frozen=True)
class SystemConfig:
    """All scenario parameters.

    Direct construction performs no checking; use :func:`validate_config`
    (or ``make_config``) to enforce the model assumptions.  The unchecked
    path exists so limit cases (e.g. no compromised devices at all) can
    still be evaluated by the analytic machinery.
    """

    alphabet_size: int
    num_devices: int
    chain_length: int
    honest_prefix: int       # blocks built by honest miners before the attack
    attack_start: int        # first falsified block index (0 only when honest_prefix is 0)
    compromise_prob: float   # probability a device's key is stolen
    dsa_success_prob: float  # probability the counterfeit branch wins the race
    honest_pmf_h1: np.ndarray
    honest_pmf_h0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "honest_pmf_h1", np.asarray(self.honest_pmf_h1, dtype=float))
        object.__setattr__(self, "honest_pmf_h0", np.asarray(self.honest_pmf_h0, dtype=float))

    @property
    def num_outcomes(self) -> int:
        return self.alphabet_size ** (self.num_devices * self.chain_length)

    @property
    def attack_start_clipped(self) -> int:
        """First slot that can ever be falsified (the attack start, floored at 1)."""
        return max(self.attack_start, 1)


def _check_pmf(vec: np.ndarray, name: str, size: int) -> None:
    if vec.ndim != 1 or vec.shape[0] != size:
        raise ConfigError(f"{name} must be a length-{size} vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ConfigError(f"{name} has non-finite entries")
    if np.any(vec <= 0.0):
        raise ConfigError(f"{name} entries must be strictly positive")
    if abs(float(vec.sum()) - 1.0) > PMF_SUM_TOL:
        raise ConfigError(f"{name} must sum to 1 within {PMF_SUM_TOL}, got {vec.sum()!r}")


def validate_config(cfg: SystemConfig) -> SystemConfig:
    """Return ``cfg`` iff every invariant holds, else raise :class:`ConfigError`."""
    if cfg.alphabet_size < 2:
        raise ConfigError("alphabet_size must be >= 2")
    if cfg.num_devices < 1:
        raise ConfigError("num_devices must be >= 1")
    if cfg.chain_length < 1:
        raise ConfigError("chain_length must be >= 1")
    if not (0.0 < cfg.compromise_prob <= 1.0):
        raise ConfigError("compromise_prob must satisfy 0 < alpha <= 1")
    if not (0.0 <= cfg.dsa_success_prob <= 1.0):
        raise ConfigError("dsa_success_prob must lie in [0, 1]")
    if not (cfg.attack_start <= cfg.honest_prefix < cfg.chain_length):
        raise ConfigError(
            "must have attack_start <= honest_prefix < chain_length, got "
            f"attack_start={cfg.attack_start}, honest_prefix={cfg.honest_prefix}, "
            f"chain_length={cfg.chain_length}"
        )
    if cfg.honest_prefix > 0 and cfg.attack_start < 1:
        raise ConfigError("attack_start must be >= 1 when honest_prefix > 0")
    if cfg.honest_prefix == 0 and cfg.attack_start != 0:
        raise ConfigError("attack_start must be 0 when honest_prefix == 0")
    if cfg.attack_start < 0:
        raise ConfigError("attack_start must be >= 0")
    _check_pmf(cfg.honest_pmf_h1, "honest_pmf_h1", cfg.alphabet_size)
    _check_pmf(cfg.honest_pmf_h0, "honest_pmf_h0", cfg.alphabet_size)
    return cfg


def make_config(**kwargs) -> SystemConfig:
    """Build and validate a :class:`SystemConfig` in one step."""
    return validate_config(SystemConfig(**kwargs))


@dataclass(frozen=True)
class MaliciousPmfPair:
    """The attacker's symbol distributions under each hypothesis."""

    pB: np.ndarray  # distribution under H1
    qB: np.ndarray  # distribution under H0

    def __post_init__(self):
        object.__setattr__(self, "pB", np.asarray(self.pB, dtype=float))
        object.__setattr__(self, "qB", np.asarray(self.qB, dtype=float))
        for name, vec in (("pB", self.pB), ("qB", self.qB)):
            if vec.ndim != 1:
                raise ConfigError(f"{name} must be a vector")
            if np.any(vec < 0.0) or np.any(vec > 1.0):
                raise ConfigError(f"{name} entries must lie in [0, 1]")
            if abs(float(vec.sum()) - 1.0) > PMF_SUM_TOL:
                raise ConfigError(f"{name} must sum to 1 within {PMF_SUM_TOL}")


def uniform_pair(alphabet_size: int) -> MaliciousPmfPair:
    u = np.full(alphabet_size, 1.0 / alphabet_size)
    return MaliciousPmfPair(pB=u, qB=u.copy())
