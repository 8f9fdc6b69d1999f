"""Percentile bootstrap for partially identified adoption/effectiveness effects.

Random streams: ``numpy.random.SeedSequence(seed).spawn(replications)`` gives
one independent child stream per replicate, indexed by replicate number.  A
replicate's draws therefore depend only on ``(seed, index)``, never on how
replicates are scheduled, and results are reduced in index order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import AssumptionViolation, BootstrapUnstable, DataValidationError
from .strata_bounds import (
    ADOPTION,
    EFFECTIVENESS,
    StrataInput,
    baseline_outcomes,
    dominance_bounds,
    strata_input_from_dataset,
    stratum_proportions,
)
from .trial_data import Arm, TrialDataset

MAX_FAILED_SHARE = 0.2


def percentile(sorted_values: Sequence[float], q: float) -> float:
    """Empirical quantile with linear interpolation between order statistics.

    For ``n`` sorted values the quantile sits at fractional index
    ``h = (n - 1) * q`` and interpolates between ``x[floor(h)]`` and
    ``x[floor(h) + 1]`` (Hyndman-Fan type 7, numpy's default).
    """
    n = len(sorted_values)
    if n == 0:
        raise ValueError("percentile of an empty list")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    h = (n - 1) * q
    lo = math.floor(h)
    if lo >= n - 1:
        return float(sorted_values[-1])
    frac = h - lo
    a, b = sorted_values[lo], sorted_values[lo + 1]
    return float(a + frac * (b - a))


@dataclass(frozen=True)
class BootstrapConfig:
    replications: int = 2000
    level: float = 0.95
    seed: int = 0
    method: str = "percentile_on_bounds"
    sharp: bool = False

    def __post_init__(self):
        if self.replications < 100:
            raise ValueError("replications must be at least 100")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        if self.method != "percentile_on_bounds":
            raise ValueError(f"unsupported bootstrap method {self.method!r}")


@dataclass(frozen=True)
class BoundCI:
    effect: str
    gamma: float
    lower_ci: float
    upper_ci: float
    point_lower: float
    point_upper: float
    n_failed: int
    # equal-tailed percentile intervals for each endpoint on its own
    lower_bound_ci: tuple[float, float] = (math.nan, math.nan)
    upper_bound_ci: tuple[float, float] = (math.nan, math.nan)

    def __post_init__(self):
        if self.lower_ci > self.upper_ci:
            raise ValueError("lower_ci exceeds upper_ci")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lower_bound_ci"] = list(self.lower_bound_ci)
        out["upper_bound_ci"] = list(self.upper_bound_ci)
        if self.gamma == math.inf:
            out["gamma"] = "inf"
        return out


def uniform_resampler(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, n, size=n)


@dataclass
class _Arm:
    adopted: np.ndarray
    y: np.ndarray

    @classmethod
    def from_records(cls, records):
        return cls(
            np.array([bool(r.adopted) for r in records]),
            np.array([r.grade_point for r in records], dtype=float),
        )

    def cell_stats(self, idx: np.ndarray):
        """Per-row adopter count, non-adopter mean and adopter mean.

        ``idx`` is (replicates, n); empty cells give NaN means.
        """
        d = self.adopted[idx]
        y = self.y[idx]
        n_d1 = d.sum(axis=1)
        sum_d1 = (y * d).sum(axis=1)
        sum_all = y.sum(axis=1)
        n = idx.shape[1]
        with np.errstate(invalid="ignore", divide="ignore"):
            mean_d1 = sum_d1 / n_d1
            mean_d0 = (sum_all - sum_d1) / (n - n_d1)
        return n_d1, mean_d0, mean_d1


def _opt(x):
    x = float(x)
    return None if math.isnan(x) else x


def _strata_inputs(z0: _Arm, z1: _Arm, idx0, idx1, y_min, y_max) -> list[StrataInput]:
    n0_d1, m00, m01 = z0.cell_stats(idx0)
    n1_d1, m10, m11 = z1.cell_stats(idx1)
    n0, n1 = idx0.shape[1], idx1.shape[1]
    return [
        StrataInput(
            n0, int(n0_d1[i]), n1, int(n1_d1[i]),
            _opt(m00[i]), _opt(m01[i]), _opt(m10[i]), _opt(m11[i]),
            y_min, y_max,
        )
        for i in range(idx0.shape[0])
    ]


def _bounds_for(inp: StrataInput, gammas, sharp):
    props = stratum_proportions(inp)
    base = baseline_outcomes(inp, props)
    return [dominance_bounds(inp, props, base, g, sharp) for g in gammas]


def bootstrap_bounds(
    dataset: TrialDataset,
    gammas: Sequence[float],
    config: BootstrapConfig = BootstrapConfig(),
    resampler: Callable[[np.random.Generator, int], np.ndarray] = uniform_resampler,
) -> list[BoundCI]:
    """Percentile-bootstrap confidence intervals for the bounds at each gamma.

    Units are resampled with replacement within each assignment arm, so arm
    sizes are fixed across replicates.  The interval for an effect is
    ``[q(alpha/2) of replicate lower bounds, q(1 - alpha/2) of replicate upper
    bounds]``.  Replicates where the induced share is not positive or the
    deconvolved baseline leaves the support are dropped and counted in
    ``n_failed``; replicates without always users count as failures for the
    effectiveness effect only.

    Returns one :class:`BoundCI` per (gamma, effect), gammas in input order,
    adoption before effectiveness.
    """
    gammas = list(gammas)
    if not gammas or any(not g >= 0 for g in gammas):
        raise ValueError("gammas must be a non-empty list of nonnegative values")
    recs0 = dataset.arm(Arm.AIOnly)
    recs1 = dataset.arm(Arm.AITrained)
    if not recs0 or not recs1:
        raise DataValidationError("arm empty: bootstrap needs both AI arms")
    z0, z1 = _Arm.from_records(recs0), _Arm.from_records(recs1)
    y_min, y_max = dataset.support
    n0, n1 = len(recs0), len(recs1)

    point = _bounds_for(strata_input_from_dataset(dataset), gammas, config.sharp)
    with_eff = point[0][1] is not None

    reps = config.replications
    lows = {e: np.full((reps, len(gammas)), np.nan) for e in (ADOPTION, EFFECTIVENESS)}
    highs = {e: np.full((reps, len(gammas)), np.nan) for e in (ADOPTION, EFFECTIVENESS)}
    failed = {ADOPTION: 0, EFFECTIVENESS: 0}
    idx0 = np.empty((reps, n0), dtype=np.intp)
    idx1 = np.empty((reps, n1), dtype=np.intp)
    for i, child in enumerate(np.random.SeedSequence(config.seed).spawn(reps)):
        rng = np.random.default_rng(child)
        idx0[i] = resampler(rng, n0)
        idx1[i] = resampler(rng, n1)
    inputs = _strata_inputs(z0, z1, idx0, idx1, y_min, y_max)
    for i, inp in enumerate(inputs):
        try:
            rows = _bounds_for(inp, gammas, config.sharp)
        except AssumptionViolation:
            failed[ADOPTION] += 1
            failed[EFFECTIVENESS] += 1
            continue
        for j, (adoption, effectiveness) in enumerate(rows):
            lows[ADOPTION][i, j] = adoption.lower
            highs[ADOPTION][i, j] = adoption.upper
            if effectiveness is not None:
                lows[EFFECTIVENESS][i, j] = effectiveness.lower
                highs[EFFECTIVENESS][i, j] = effectiveness.upper
        if with_eff and rows[0][1] is None:
            failed[EFFECTIVENESS] += 1

    effects = (ADOPTION, EFFECTIVENESS) if with_eff else (ADOPTION,)
    for effect in effects:
        if failed[effect] > MAX_FAILED_SHARE * reps:
            raise BootstrapUnstable(
                "bootstrap unstable: monotonicity frequently violated in resamples "
                f"({failed[effect]} of {reps} replicates failed for the {effect} effect)"
            )

    alpha = 1.0 - config.level
    out = []
    for j, gamma in enumerate(gammas):
        for k, effect in enumerate(effects):
            lo = lows[effect][:, j]
            hi = highs[effect][:, j]
            lo = np.sort(lo[~np.isnan(lo)])
            hi = np.sort(hi[~np.isnan(hi)])
            pb = point[j][k]
            out.append(
                BoundCI(
                    effect=effect,
                    gamma=gamma,
                    lower_ci=percentile(lo, alpha / 2),
                    upper_ci=percentile(hi, 1 - alpha / 2),
                    point_lower=pb.lower,
                    point_upper=pb.upper,
                    n_failed=failed[effect],
                    lower_bound_ci=(percentile(lo, alpha / 2), percentile(lo, 1 - alpha / 2)),
                    upper_bound_ci=(percentile(hi, alpha / 2), percentile(hi, 1 - alpha / 2)),
                )
            )
    return out
