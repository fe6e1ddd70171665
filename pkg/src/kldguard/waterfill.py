"""Capped water-filling: the closed-form per-block minimizer.

Each item i has a weight w_i > 0, a slope a_i >= 0, and a floor f_i >= 0.
The allocation at level z is x_i(z) = min{[(z*a_i - f_i)/w_i]^+, 1}, so the
filled amount S(z) = sum_i w_i x_i(z) is continuous, nondecreasing, and
piecewise linear in z.  The solver finds the smallest level z with S(z)
equal to the requested budget by sorting the breakpoints {f_i/a_i,
(f_i+w_i)/a_i} and solving the linear segment containing the budget.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BUDGET_RTOL = 1e-10


class WaterfillError(ValueError):
    """Raised for infeasible budgets or empty problems with positive budget."""


@dataclass(frozen=True)
class WaterfillProblem:
    weights: np.ndarray  # w_i > 0
    slopes: np.ndarray   # a_i >= 0
    floors: np.ndarray   # f_i >= 0
    budget: float

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "slopes", np.asarray(self.slopes, dtype=float))
        object.__setattr__(self, "floors", np.asarray(self.floors, dtype=float))


def filled_amount(prob: WaterfillProblem, level: float) -> float:
    """S(level): the weighted allocation reached at a given water level."""
    x = allocations_at(prob, level)
    return float(prob.weights @ x)


def allocations_at(prob: WaterfillProblem, level: float) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        raw = (level * prob.slopes - prob.floors) / prob.weights
    return np.clip(np.nan_to_num(raw, nan=0.0, posinf=1.0, neginf=0.0), 0.0, 1.0)


def capped_waterfill(prob: WaterfillProblem) -> tuple:
    """Return (level, allocations) with sum_i w_i x_i == budget.

    Among all levels meeting the budget (flat segments of S are possible),
    the smallest is returned.
    """
    w, a, f, b = prob.weights, prob.slopes, prob.floors, prob.budget
    if w.size and (np.any(w <= 0.0) or np.any(a < 0.0) or np.any(f < 0.0)):
        raise WaterfillError("weights must be > 0, slopes and floors >= 0")
    total = float(w.sum())
    if b < -BUDGET_RTOL * max(total, 1.0) or b > total * (1.0 + BUDGET_RTOL) + 1e-300:
        raise WaterfillError(f"budget {b} infeasible for total weight {total}")
    if b <= 0.0:
        return 0.0, np.zeros_like(w)

    pos = a > 0.0
    if not np.any(pos):
        raise WaterfillError("positive budget but every slope is zero")
    wp, ap, fp = w[pos], a[pos], f[pos]
    with np.errstate(over="ignore"):
        lo = fp / ap             # level where item starts filling
        hi = (fp + wp) / ap      # level where item saturates
    if not np.all(np.isfinite(hi)):
        raise WaterfillError(
            "slope dynamic range exceeds float capacity (saturation level overflows)"
        )

    fillable = float(wp.sum())
    if b > fillable * (1.0 + BUDGET_RTOL):
        raise WaterfillError(
            f"budget {b} exceeds fillable weight {fillable} (zero-slope items stay empty)"
        )
    if b >= fillable * (1.0 - BUDGET_RTOL):
        # Budget only attainable by saturating every fillable item.
        level = float(hi.max())
        x = np.zeros_like(w)
        x[pos] = 1.0
        return level, x

    # Event sweep: slope of S gains a_i at lo_i and loses it at hi_i.
    events = np.concatenate([lo, hi])
    dslope = np.concatenate([ap, -ap])
    order = np.argsort(events, kind="stable")
    events = events[order]
    slope_after = np.cumsum(dslope[order])
    # S at each event point; S is 0 up to the first event.
    with np.errstate(over="ignore", invalid="ignore"):
        s_at = np.concatenate([[0.0], np.cumsum(slope_after[:-1] * np.diff(events))])
        j = int(np.searchsorted(s_at, b, side="left"))
        if j >= s_at.size:
            level = float(hi.max())  # numeric shortfall at the top; saturate
        elif j == 0:
            level = float(events[0])
        else:
            seg = slope_after[j - 1]
            level = float(events[j - 1]) if seg <= 0.0 else float(events[j - 1] + (b - s_at[j - 1]) / seg)
    level_cap = float(hi.max())
    if not np.isfinite(level):
        level = level_cap
    level = min(max(level, 0.0), level_cap)

    # The event sweep accumulates rounding over long cumsums, so polish the
    # level with safeguarded Newton/bisection until the budget is met to
    # machine precision (the objective is sensitive to the residual here).
    def fill(z):
        x = allocations_at(prob, z)
        x[~pos] = 0.0
        return x

    if float(w @ fill(level)) < b:
        z_lo, z_hi = level, level_cap
    else:
        z_lo, z_hi = 0.0, level
    tol = 1e-15 * max(b, 1e-300)
    for _ in range(200):
        x = fill(level)
        residual = b - float(w @ x)
        if abs(residual) <= tol:
            break
        if residual > 0.0:
            z_lo = level
        else:
            z_hi = level
        interior = pos & (x > 0.0) & (x < 1.0)
        seg_slope = float(a[interior].sum())
        if seg_slope > 0.0:
            trial = level + residual / seg_slope
        else:
            trial = 0.5 * (z_lo + z_hi)  # flat segment: pure bisection step
        if not (z_lo < trial < z_hi):
            trial = 0.5 * (z_lo + z_hi)
        if trial == level:
            break
        level = trial
    x = fill(level)
    return float(level), x
