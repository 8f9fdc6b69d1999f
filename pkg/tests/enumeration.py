"""Brute-force feasible ranges for the two effects on small grid populations.

A population has ``n_a`` always, ``n_c`` induced and ``n_n`` never users
with every potential outcome on a grid of at most four values.  Observed
through both arms in full, it reveals the cell counts and cell means that the
estimator consumes.  The Y(1,1) outcomes of always and induced users are only
seen pooled, through their sum.  Every pair of multisets (one per stratum)
with that pooled sum, and satisfying mean dominance, is a feasible
completion; the effects range over those completions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from adoptbounds.strata_bounds import StrataInput
from adoptbounds.trial_data import GRADE_SCALE

TENTHS = 10


@dataclass(frozen=True)
class Instance:
    grid: tuple[float, ...]
    n_a: int
    n_c: int
    n_n: int
    y11_sum: int  # tenths, always and induced users pooled
    e01: float
    e00c: float
    e10: float
    true_mean_a: float
    true_mean_c: float

    @property
    def step(self) -> float:
        return max(b - a for a, b in zip(self.grid, self.grid[1:]))

    def strata_input(self) -> StrataInput:
        n = self.n_a + self.n_c + self.n_n
        mean_z0_d0 = (self.n_n * self.e10 + self.n_c * self.e00c) / (self.n_n + self.n_c)
        e11 = self.y11_sum / TENTHS / (self.n_a + self.n_c)
        return StrataInput(
            n, self.n_a, n, self.n_a + self.n_c,
            mean_z0_d0, self.e01, self.e10, e11,
            self.grid[0], self.grid[-1],
        )


def random_instance(rng: np.random.Generator) -> Instance:
    k = int(rng.integers(2, 5))
    grid = tuple(sorted(rng.choice(GRADE_SCALE.points, size=k, replace=False).tolist()))
    n_a, n_c, n_n = (int(v) for v in rng.integers(1, 13, size=3))

    def draw(n):
        return rng.choice(grid, size=n)

    y11_a, y11_c = draw(n_a), draw(n_c)
    return Instance(
        grid=grid,
        n_a=n_a,
        n_c=n_c,
        n_n=n_n,
        y11_sum=int(round(TENTHS * (y11_a.sum() + y11_c.sum()))),
        e01=float(draw(n_a).mean()),
        e00c=float(draw(n_c).mean()),
        e10=float(draw(n_n).mean()),
        true_mean_a=float(y11_a.mean()),
        true_mean_c=float(y11_c.mean()),
    )


def attainable_sums(grid, n) -> set[int]:
    """Every total (in tenths) of an ``n``-unit multiset drawn from ``grid``."""
    tenths = [int(round(TENTHS * g)) for g in grid]
    return {sum(combo) for combo in itertools.combinations_with_replacement(tenths, n)}


def feasible_ranges(inst: Instance, gamma: float = math.inf):
    """Return ((adopt_lo, adopt_hi), (eff_lo, eff_hi)) over feasible completions."""
    sums_a = attainable_sums(inst.grid, inst.n_a)
    sums_c = attainable_sums(inst.grid, inst.n_c)
    adopt, eff = [], []
    for s_a in sums_a:
        s_c = inst.y11_sum - s_a
        if s_c not in sums_c:
            continue
        m_a = s_a / TENTHS / inst.n_a
        m_c = s_c / TENTHS / inst.n_c
        if m_c < m_a - gamma - 1e-12:
            continue
        adopt.append(m_c - inst.e00c)
        eff.append(m_a - inst.e01)
    if not adopt:
        return None
    return (min(adopt), max(adopt)), (min(eff), max(eff))
