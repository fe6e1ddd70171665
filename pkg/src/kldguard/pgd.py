"""Projected gradient descent baseline on the original nonconvex problem.

Minimizes the outcome-space KLD directly over the two attacker PMFs with
Armijo backtracking and Euclidean simplex projection, restarted from many
initial points.  This reproduces the comparison curves the guarantee is
checked against: the relaxed optimum must lower-bound every value found here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import MaliciousPmfPair
from .model import CoefficientTables

LOG_CLAMP = 1e-300
INTERIOR_EPS = 1e-12


@dataclass(frozen=True)
class PgdSettings:
    num_starts: int = 20
    max_iters: int = 2000
    step_init: float = 0.1
    backtrack: float = 0.5
    armijo: float = 1e-4
    grad_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.num_starts < 1:
            raise ValueError("num_starts must be >= 1")
        if min(self.step_init, self.backtrack, self.armijo) <= 0.0:
            raise ValueError("step parameters must be positive")


@dataclass
class PgdResult:
    value: float
    dist: MaliciousPmfPair
    traces: list  # per-start nonincreasing objective traces


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of a vector onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a non-finite vector")
    u = np.sort(v)[::-1]
    cumsum = np.cumsum(u) - 1.0
    rho = np.nonzero(u * np.arange(1, v.size + 1) > cumsum)[0][-1]
    tau = cumsum[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def _condense(coeff: np.ndarray, counts: np.ndarray):
    """Group the per-(outcome, pattern) power products by count vector.

    The count vectors take very few distinct values, so the mixture
    sum_m coeff[i,m] * prod_k pmf_k**counts[i,m,k] collapses to G @ pow(pmf)
    with G of shape (outcomes, #distinct count vectors).
    """
    num_i, num_m, k = counts.shape
    if num_m == 0:
        return np.zeros((num_i, 0)), np.zeros((0, k))
    flat = counts.reshape(num_i * num_m, k).astype(np.int64)
    base = int(flat.max()) + 1
    keys = flat @ (base ** np.arange(k - 1, -1, -1, dtype=np.int64))
    uniq_keys, first, inv = np.unique(keys, return_index=True, return_inverse=True)
    uniq = flat[first]
    inv = inv.reshape(num_i, num_m)
    grouped = np.zeros((num_i, uniq.shape[0]))
    rows = np.arange(num_i)
    for m in range(num_m):
        # each outcome hits one bucket per pattern, so plain fancy += is safe
        grouped[rows, inv[:, m]] += coeff[:, m]
    return grouped, uniq.astype(float)


class _Workspace:
    """Condensed mixture evaluators, built once per coefficient tables.

    Power products are evaluated as exp(counts @ log pmf), which is only valid
    for strictly positive PMFs; PGD keeps its iterates in the simplex interior.
    """

    def __init__(self, tables: CoefficientTables):
        self.tables = tables
        cg = tables.columns(tables.active_gamma)
        cl = tables.columns(tables.active_lam)
        cd = tables.columns(tables.active_delta)
        cp = tables.columns(tables.active_phi)
        self.g_gamma, self.u_gamma = _condense(tables.gamma[:, cg], tables.attack_counts[:, cg, :])
        self.g_lam, self.u_lam = _condense(tables.lam[:, cl], tables.tail_counts[:, cl, :])
        self.g_delta, self.u_delta = _condense(tables.delta[:, cd], tables.attack_counts[:, cd, :])
        self.g_phi, self.u_phi = _condense(tables.phi[:, cp], tables.tail_counts[:, cp, :])

    @staticmethod
    def _pow(uniq: np.ndarray, pmf: np.ndarray) -> np.ndarray:
        return np.exp(uniq @ np.log(pmf))

    def mixtures(self, pB: np.ndarray, qB: np.ndarray):
        """(p, q) over outcomes for strictly positive attacker PMFs."""
        p = self.tables.psi + self.g_gamma @ self._pow(self.u_gamma, pB) \
            + self.g_lam @ self._pow(self.u_lam, pB)
        q = self.tables.theta + self.g_delta @ self._pow(self.u_delta, qB) \
            + self.g_phi @ self._pow(self.u_phi, qB)
        return p, q

    def objective(self, pB: np.ndarray, qB: np.ndarray) -> float:
        p, q = self.mixtures(pB, qB)
        pos = q > 0.0
        if np.any(p[pos] == 0.0):
            return float("inf")
        return float(np.sum(q[pos] * np.log(q[pos] / p[pos])))

    def gradient(self, pB: np.ndarray, qB: np.ndarray):
        p, q = self.mixtures(pB, qB)
        if np.any((q > 0.0) & (p == 0.0)):
            raise FloatingPointError("objective is +inf here; gradient undefined")
        pc = np.maximum(p, LOG_CLAMP)
        qc = np.maximum(q, LOG_CLAMP)
        ratio = q / pc                   # -d D0 / d p_i
        logterm = 1.0 + np.log(qc / pc)  # d D0 / d q_i

        # d p_i / d pB_k = sum_u G[i,u] * pow_u * uniq[u,k] / pB_k
        grad_p = -(((ratio @ self.g_gamma) * self._pow(self.u_gamma, pB)) @ self.u_gamma
                   + ((ratio @ self.g_lam) * self._pow(self.u_lam, pB)) @ self.u_lam) / pB
        grad_q = (((logterm @ self.g_delta) * self._pow(self.u_delta, qB)) @ self.u_delta
                  + ((logterm @ self.g_phi) * self._pow(self.u_phi, qB)) @ self.u_phi) / qB
        return grad_p, grad_q


def grad_d0(tables: CoefficientTables, dist: MaliciousPmfPair) -> tuple:
    """Gradient of the original objective w.r.t. the two attacker PMFs.

    Requires strictly positive PMF entries (products are differentiated via
    the symbol-count exponents).  The H1 mixture depends only on pB and the
    H0 mixture only on qB, so the two gradients decouple.
    """
    if np.any(dist.pB <= 0.0) or np.any(dist.qB <= 0.0):
        raise ValueError("gradient requires strictly positive PMF entries")
    return _Workspace(tables).gradient(dist.pB, dist.qB)


def _descend(ws: _Workspace, pB: np.ndarray, qB: np.ndarray,
             settings: PgdSettings) -> tuple:
    """One PGD run; returns (final value, final pair, trace)."""
    # keep iterates in the interior so the gradient stays defined
    pB = project_simplex(np.maximum(pB, INTERIOR_EPS))
    qB = project_simplex(np.maximum(qB, INTERIOR_EPS))
    pB = np.maximum(pB, INTERIOR_EPS); pB /= pB.sum()
    qB = np.maximum(qB, INTERIOR_EPS); qB /= qB.sum()
    value = ws.objective(pB, qB)
    trace = [value]
    step = settings.step_init  # persists across iterations, grows on acceptance
    for _ in range(settings.max_iters):
        gp, gq = ws.gradient(pB, qB)
        accepted = False
        while step > 1e-16:
            cand_p = project_simplex(pB - step * gp)
            cand_q = project_simplex(qB - step * gq)
            cand_p = np.maximum(cand_p, INTERIOR_EPS); cand_p /= cand_p.sum()
            cand_q = np.maximum(cand_q, INTERIOR_EPS); cand_q /= cand_q.sum()
            decrease = gp @ (pB - cand_p) + gq @ (qB - cand_q)
            cand_value = ws.objective(cand_p, cand_q)
            if (np.isfinite(cand_value) and cand_value <= value
                    and cand_value <= value - settings.armijo * decrease):
                accepted = True
                break
            step *= settings.backtrack
        if not accepted:
            break
        move = max(np.abs(cand_p - pB).max(), np.abs(cand_q - qB).max())
        drop = value - cand_value
        pB, qB, value = cand_p, cand_q, cand_value
        trace.append(value)
        if move / step < settings.grad_tol:
            break
        if drop < 1e-13 * max(1.0, abs(value)):
            break  # objective plateau: progress below float resolution
        step = min(step / settings.backtrack, 1e6)
    return value, MaliciousPmfPair(pB=pB, qB=qB), trace


def pgd_multistart(tables: CoefficientTables,
                   settings: PgdSettings | None = None) -> PgdResult:
    """Run PGD from a uniform start plus seeded random starts; keep the best."""
    if settings is None:
        settings = PgdSettings()
    ws = _Workspace(tables)
    k = tables.cfg.alphabet_size
    rng = np.random.default_rng(settings.seed)
    starts = [(np.full(k, 1.0 / k), np.full(k, 1.0 / k))]
    for _ in range(settings.num_starts - 1):
        starts.append((rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))))

    best_value = np.inf
    best_dist = None
    traces = []
    for p0, q0 in starts:
        value, dist, trace = _descend(ws, p0, q0, settings)
        traces.append(np.array(trace))
        if value < best_value:
            best_value = value
            best_dist = dist
    if best_dist is None or not np.isfinite(best_value):
        raise FloatingPointError("every PGD start diverged to a non-finite value")
    return PgdResult(value=float(best_value), dist=best_dist, traces=traces)
