"""Projection of raw green-time proposals onto the feasible timing set.

The feasible set for one junction is the box [g_min_i, g_max_i] intersected
with the budget plane sum(g_i) = cycle - lost. The minimum 2-norm projection
has the closed form g_i = clamp(ghat_i - lam, g_min_i, g_max_i) where the
scalar lam solves sum(clamp(ghat_i - lam)) = budget, a piecewise-linear
non-increasing equation solved exactly by a breakpoint scan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DUAL_TOL = 1e-9


class InfeasibleSetError(ValueError):
    """The box cannot meet the budget; caught at scenario load normally."""


@dataclass(frozen=True)
class FeasibleSet:
    g_min: np.ndarray
    g_max: np.ndarray
    budget: float

    def __post_init__(self):
        object.__setattr__(self, "g_min", np.asarray(self.g_min, dtype=float))
        object.__setattr__(self, "g_max", np.asarray(self.g_max, dtype=float))

    @classmethod
    def from_plan(cls, plan) -> "FeasibleSet":
        return cls(g_min=np.array([p.g_min for p in plan.phases]),
                   g_max=np.array([p.g_max for p in plan.phases]),
                   budget=plan.budget)

    def check(self) -> None:
        if np.any(self.g_min > self.g_max):
            raise InfeasibleSetError("g_min exceeds g_max for some phase")
        if not (self.g_min.sum() <= self.budget + 1e-9
                and self.budget <= self.g_max.sum() + 1e-9):
            raise InfeasibleSetError(
                f"budget {self.budget:g} outside "
                f"[{self.g_min.sum():g}, {self.g_max.sum():g}]")

    def contains(self, g, tol=1e-6) -> bool:
        g = np.asarray(g, dtype=float)
        return (np.all(g >= self.g_min - tol)
                and np.all(g <= self.g_max + tol)
                and abs(g.sum() - self.budget) <= tol)


def _residual(lam, ghat, fs):
    return np.clip(ghat - lam, fs.g_min, fs.g_max).sum() - fs.budget


def solve_dual(ghat, fs: FeasibleSet) -> float:
    """Smallest root of the budget residual in the dual variable.

    The residual is non-increasing and piecewise linear with breakpoints at
    ghat_i - g_min_i and ghat_i - g_max_i; the root is found exactly on the
    bracketing segment.
    """
    fs.check()
    ghat = np.asarray(ghat, dtype=float)
    bps = np.unique(np.concatenate([ghat - fs.g_min, ghat - fs.g_max]))
    vals = np.array([_residual(b, ghat, fs) for b in bps])

    if vals[0] <= 0.0:
        # flat at zero on (-inf, bps[0]]: report the smallest finite breakpoint
        lam = bps[0]
    else:
        idx = np.nonzero(vals <= 0.0)[0]
        if idx.size == 0:
            lam = bps[-1]
        else:
            j = idx[0]
            lo, hi = bps[j - 1], bps[j]
            flo, fhi = vals[j - 1], vals[j]
            lam = lo + flo * (hi - lo) / (flo - fhi) if flo != fhi else hi

    if abs(_residual(lam, ghat, fs)) > DUAL_TOL:
        # numerical fallback: bisection on a bracket around all breakpoints
        lo, hi = bps[0] - 1.0, bps[-1] + 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if _residual(mid, ghat, fs) > 0.0:
                lo = mid
            else:
                hi = mid
        lam = hi
    return float(lam)


def project(ghat, fs: FeasibleSet):
    """Minimum 2-norm feasible green times for a raw proposal.

    Returns (g, lam); lam is the budget multiplier, useful in run logs.
    """
    ghat = np.asarray(ghat, dtype=float)
    lam = solve_dual(ghat, fs)
    g = np.clip(ghat - lam, fs.g_min, fs.g_max)
    # spread any residual rounding over the unclamped phases
    r = fs.budget - g.sum()
    if r != 0.0:
        free = (g > fs.g_min + 1e-12) & (g < fs.g_max - 1e-12)
        n_free = int(free.sum())
        if n_free:
            g[free] += r / n_free
            g = np.clip(g, fs.g_min, fs.g_max)
    return g, lam


def split_by_junction(flat_ghat, plans):
    """Project a concatenated proposal junction by junction.

    `plans` is an ordered iterable of SignalPlan; the budget couples phases
    only within one junction, so the blocks are independent.
    """
    flat_ghat = np.asarray(flat_ghat, dtype=float)
    total = sum(len(p.phases) for p in plans)
    if flat_ghat.size != total:
        raise ValueError(
            f"proposal has {flat_ghat.size} entries, plans need {total}")
    out, lams = [], {}
    i = 0
    for plan in plans:
        n = len(plan.phases)
        g, lam = project(flat_ghat[i:i + n], FeasibleSet.from_plan(plan))
        out.append(g)
        lams[plan.junction_id] = lam
        i += n
    return np.concatenate(out) if out else np.empty(0), lams
