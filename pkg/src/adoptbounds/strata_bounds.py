"""Principal-stratification bounds on adoption and effectiveness effects.

Assignment ``Z`` is the encouragement (training), ``D`` is adoption and ``Y``
the outcome.  Under random assignment, no defiers and exclusion for never
users the stratum shares and three baseline means are point identified; the
trained-adopter mean ``E11 = E[Y | Z=1, D=1]`` is a mixture of induced and
always users, which is where partial identification enters.

Two different mixture weight systems appear and are kept apart by name:

* ``w_*_treated`` split trained adopters (Z=1, D=1) into always/induced;
* ``w_*_untreated`` split untrained non-adopters (Z=0, D=0) into never/induced.

Bounds come in two flavours.  The default reproduces the textbook
support-restriction bounds, where the adoption upper bound is
``y_max - E[Y(0,0)|C]`` and the effectiveness lower bound is
``y_min - E[Y(0,1)|A]``.  Those two endpoints ignore the mixture constraint on
``E11`` and can be loose; ``sharp=True`` imposes it.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import DataValidationError, MonotonicityViolation, NoInducedUsers, SupportViolation
from .trial_data import Arm, TrialDataset

ADOPTION = "adoption"
EFFECTIVENESS = "effectiveness"
SUPPORT_TOL = 1e-12


@dataclass(frozen=True)
class StrataInput:
    """Cell counts and conditional means for the two AI arms.

    Counts may be omitted (``None``) for population-level inputs, in which
    case stratum shares must be built with :func:`proportions_from_rates`.
    A conditional mean is ``None`` exactly when its cell is empty.
    """

    n_z0: int | None
    n_z0_d1: int | None
    n_z1: int | None
    n_z1_d1: int | None
    mean_y_z0_d0: float | None
    mean_y_z0_d1: float | None
    mean_y_z1_d0: float | None
    mean_y_z1_d1: float | None
    y_min: float = 1.0
    y_max: float = 4.3

    def __post_init__(self):
        if not self.y_min < self.y_max:
            raise DataValidationError("support requires y_min < y_max")
        counts = (self.n_z0, self.n_z0_d1, self.n_z1, self.n_z1_d1)
        if any(c is None for c in counts) and not all(c is None for c in counts):
            raise DataValidationError("either all four counts or none must be given")
        if self.n_z0 is not None:
            for n, n_d1, z in ((self.n_z0, self.n_z0_d1, 0), (self.n_z1, self.n_z1_d1, 1)):
                if n < 1 or not 0 <= n_d1 <= n:
                    raise DataValidationError(f"invalid counts for Z={z}: n={n}, n_d1={n_d1}")
            cells = {
                "mean_y_z0_d0": self.n_z0 - self.n_z0_d1,
                "mean_y_z0_d1": self.n_z0_d1,
                "mean_y_z1_d0": self.n_z1 - self.n_z1_d1,
                "mean_y_z1_d1": self.n_z1_d1,
            }
            for name, size in cells.items():
                if size > 0 and getattr(self, name) is None:
                    raise DataValidationError(f"{name} is required: cell has {size} units")
        for name in ("mean_y_z0_d0", "mean_y_z0_d1", "mean_y_z1_d0", "mean_y_z1_d1"):
            value = getattr(self, name)
            if value is not None and not (
                self.y_min - SUPPORT_TOL <= value <= self.y_max + SUPPORT_TOL
            ):
                raise DataValidationError(f"{name}={value} outside support [{self.y_min}, {self.y_max}]")

    @property
    def support(self) -> tuple[float, float]:
        return (self.y_min, self.y_max)

    def to_dict(self) -> dict:
        return asdict(self)


def strata_input_from_dataset(dataset: TrialDataset) -> StrataInput:
    """Summaries of the AIOnly (Z=0) and AITrained (Z=1) arms; NoAI is ignored."""
    cells = {}
    for z, arm in ((0, Arm.AIOnly), (1, Arm.AITrained)):
        records = dataset.arm(arm)
        if not records:
            raise DataValidationError(f"arm empty: {arm.name} has no records")
        for d in (0, 1):
            ys = [r.grade_point for r in records if bool(r.adopted) == bool(d)]
            cells[(z, d)] = ys
    def mean(ys):
        return math.fsum(ys) / len(ys) if ys else None
    return StrataInput(
        n_z0=len(cells[(0, 0)]) + len(cells[(0, 1)]),
        n_z0_d1=len(cells[(0, 1)]),
        n_z1=len(cells[(1, 0)]) + len(cells[(1, 1)]),
        n_z1_d1=len(cells[(1, 1)]),
        mean_y_z0_d0=mean(cells[(0, 0)]),
        mean_y_z0_d1=mean(cells[(0, 1)]),
        mean_y_z1_d0=mean(cells[(1, 0)]),
        mean_y_z1_d1=mean(cells[(1, 1)]),
        y_min=dataset.y_min,
        y_max=dataset.y_max,
    )


@dataclass(frozen=True)
class StratumProportions:
    pi_A: float
    pi_N: float
    pi_C: float
    w_A_treated: float
    w_C_treated: float
    w_N_untreated: float
    w_C_untreated: float

    def to_dict(self) -> dict:
        return asdict(self)


def proportions_from_rates(rate_z0, rate_z1) -> StratumProportions:
    """Stratum shares from adoption rates P(D=1|Z=0) and P(D=1|Z=1).

    Exact arithmetic is used when the rates are Fractions, so equal rates
    give an induced share of exactly zero.
    """
    pi_A = rate_z0
    pi_N = 1 - rate_z1
    pi_C = rate_z1 - rate_z0
    if pi_C < 0:
        raise MonotonicityViolation(
            "monotonicity violated: treated adoption below untreated adoption "
            f"({float(rate_z1):.4f} < {float(rate_z0):.4f})"
        )
    if pi_C == 0:
        raise NoInducedUsers("no induced users: adoption effect unidentified (equal adoption rates)")
    return StratumProportions(
        pi_A=float(pi_A),
        pi_N=float(pi_N),
        pi_C=float(pi_C),
        w_A_treated=float(pi_A / (pi_A + pi_C)),
        w_C_treated=float(pi_C / (pi_A + pi_C)),
        w_N_untreated=float(pi_N / (pi_N + pi_C)),
        w_C_untreated=float(pi_C / (pi_N + pi_C)),
    )


def stratum_proportions(inp: StrataInput) -> StratumProportions:
    if inp.n_z0 is None:
        raise DataValidationError("counts are required to estimate stratum proportions")
    # sign of the induced share decided in exact integer arithmetic
    sign = inp.n_z1_d1 * inp.n_z0 - inp.n_z0_d1 * inp.n_z1
    if sign <= 0:
        return proportions_from_rates(Fraction(inp.n_z0_d1, inp.n_z0), Fraction(inp.n_z1_d1, inp.n_z1))
    return proportions_from_rates(inp.n_z0_d1 / inp.n_z0, inp.n_z1_d1 / inp.n_z1)


@dataclass(frozen=True)
class BaselineOutcomes:
    e_y00_never: float | None
    e_y01_always: float | None
    e_y00_induced: float

    def to_dict(self) -> dict:
        return asdict(self)


def baseline_outcomes(inp: StrataInput, props: StratumProportions) -> BaselineOutcomes:
    if props.pi_C <= 0:
        raise NoInducedUsers("no induced users: adoption effect unidentified")
    never = inp.mean_y_z1_d0 if props.pi_N > 0 else None
    always = inp.mean_y_z0_d1 if props.pi_A > 0 else None
    if props.pi_N > 0:
        induced = (inp.mean_y_z0_d0 - props.w_N_untreated * never) / props.w_C_untreated
    else:
        induced = inp.mean_y_z0_d0
    if not inp.y_min - SUPPORT_TOL <= induced <= inp.y_max + SUPPORT_TOL:
        raise SupportViolation(
            f"deconvolved induced-user baseline {induced:.4f} violates support "
            f"[{inp.y_min}, {inp.y_max}]; assumptions inconsistent with data"
        )
    return BaselineOutcomes(e_y00_never=never, e_y01_always=always, e_y00_induced=induced)


@dataclass(frozen=True)
class PrincipalBounds:
    effect: str
    lower: float
    upper: float
    lower_clamped: bool = False
    upper_clamped: bool = False
    gamma: float = math.inf

    def __post_init__(self):
        if self.lower > self.upper + 1e-12:
            raise ValueError(f"invalid interval [{self.lower}, {self.upper}]")
        for name in ("lower", "upper", "gamma"):
            object.__setattr__(self, name, float(getattr(self, name)))
        for name in ("lower_clamped", "upper_clamped"):
            object.__setattr__(self, name, bool(getattr(self, name)))

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float, tol: float = 0.0) -> bool:
        return self.lower - tol <= value <= self.upper + tol


def _always_upper(e11, w_a, w_c, y_min, y_max, gamma):
    """Upper bound on E[Y(1,1)|A] and whether a support clamp binds.

    ``(e11 - w_c*y_min)/w_a`` is the largest always-user mean compatible with
    induced users staying above ``y_min``.  It is the unclamped value in the
    support-only case and a clamp under mean dominance.
    """
    support_term = (e11 - w_c * y_min) / w_a if w_a > 0 else math.inf
    unclamped = e11 + w_c * gamma if gamma != math.inf else support_term
    u = min(unclamped, support_term, y_max)
    return u, u < unclamped


def _induced_lower(e11, w_a, w_c, u_always, y_min):
    inner = (e11 - w_a * u_always) / w_c
    return max(inner, y_min), inner < y_min - SUPPORT_TOL


def dominance_bounds(
    inp: StrataInput,
    props: StratumProportions,
    base: BaselineOutcomes,
    gamma: float,
    sharp: bool = False,
) -> tuple[PrincipalBounds, PrincipalBounds | None]:
    """Bounds under mean dominance ``E[Y(1,1)|C] >= E[Y(1,1)|A] - gamma``.

    Returns ``(adoption, effectiveness)``; effectiveness is ``None`` when
    there are no always users.  ``gamma = inf`` gives the support-only bounds.
    On the unclamped branch the adoption lower bound is
    ``E11 - w_A_treated*gamma - E[Y(0,0)|C]`` and the effectiveness upper bound
    ``E11 + w_C_treated*gamma - E[Y(0,1)|A]``.
    """
    if not gamma >= 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    if props.pi_C <= 0:
        raise NoInducedUsers("no induced users: adoption effect unidentified")
    e11 = inp.mean_y_z1_d1
    y_min, y_max = inp.y_min, inp.y_max
    w_a, w_c = props.w_A_treated, props.w_C_treated

    u_always, u_clamped = _always_upper(e11, w_a, w_c, y_min, y_max, gamma)
    # Same value as plugging u_always in, but the y_min clamp is reported
    # against the y_max-only cap, which is how the support bound is stated.
    l_induced, l_clamped = _induced_lower(e11, w_a, w_c, min(e11 + w_c * gamma, y_max), y_min)

    adopt_upper_level, adopt_upper_clamped = y_max, False
    if sharp and w_a > 0:
        inner = (e11 - w_a * y_min) / w_c
        adopt_upper_level, adopt_upper_clamped = min(inner, y_max), y_max < inner
    adoption = PrincipalBounds(
        ADOPTION,
        l_induced - base.e_y00_induced,
        adopt_upper_level - base.e_y00_induced,
        lower_clamped=l_clamped,
        upper_clamped=adopt_upper_clamped,
        gamma=gamma,
    )
    if props.pi_A <= 0:
        return adoption, None

    eff_lower_level, eff_lower_clamped = y_min, False
    if sharp:
        inner = (e11 - w_c * y_max) / w_a
        eff_lower_level, eff_lower_clamped = max(inner, y_min), inner < y_min
    effectiveness = PrincipalBounds(
        EFFECTIVENESS,
        eff_lower_level - base.e_y01_always,
        u_always - base.e_y01_always,
        lower_clamped=eff_lower_clamped,
        upper_clamped=u_clamped,
        gamma=gamma,
    )
    return adoption, effectiveness


def support_bounds(inp, props, base, sharp: bool = False):
    """Bounds under the support restriction alone (the ``gamma -> inf`` limit)."""
    return dominance_bounds(inp, props, base, math.inf, sharp=sharp)


def _gap(inp, props, base, gamma):
    adoption, effectiveness = dominance_bounds(inp, props, base, gamma)
    return adoption.lower - effectiveness.upper


def crossover_gamma(inp: StrataInput, props: StratumProportions, base: BaselineOutcomes) -> float | None:
    """Smallest gamma >= 0 where the adoption lower bound meets the effectiveness upper bound.

    The gap ``adoption.lower - effectiveness.upper`` is continuous, piecewise
    linear and non-increasing in gamma, with kinks only where a clamp starts
    to bind, so the root is found exactly by locating the segment where the
    gap changes sign.
    """
    if props.pi_A <= 0 or props.pi_C <= 0:
        return None
    e11 = inp.mean_y_z1_d1
    w_a, w_c = props.w_A_treated, props.w_C_treated
    g0 = _gap(inp, props, base, 0.0)
    if abs(g0) <= SUPPORT_TOL:
        return 0.0
    if g0 < 0:
        return None
    # U_always stops growing where it meets y_max or the support term
    kinks = {(inp.y_max - e11) / w_c, ((e11 - w_c * inp.y_min) / w_a - e11) / w_c}
    points = sorted(k for k in kinks if k > 0 and math.isfinite(k))
    lo, g_lo = 0.0, g0
    for hi in points:
        g_hi = _gap(inp, props, base, hi)
        if g_hi <= SUPPORT_TOL:
            return lo + g_lo * (hi - lo) / (g_lo - g_hi)
        lo, g_lo = hi, g_hi
    # past the last kink the gap is constant
    return None


@dataclass(frozen=True)
class SweepRow:
    gamma: float
    adoption: PrincipalBounds
    effectiveness: PrincipalBounds | None


@dataclass(frozen=True)
class GammaSweep:
    rows: tuple[SweepRow, ...]
    support: SweepRow
    crossover_gamma: float | None
    proportions: StratumProportions
    baselines: BaselineOutcomes
    inputs: StrataInput

    def to_records(self, include_support: bool = True) -> list[dict]:
        """Flat rows: gamma, L_eff, U_eff, L_adopt, U_adopt and clamp flags."""
        rows = list(self.rows) + ([self.support] if include_support else [])
        return [sweep_row_record(r) for r in rows]


def _fmt_gamma(gamma: float):
    return "inf" if gamma == math.inf else gamma


def sweep_row_record(row: SweepRow) -> dict:
    eff = row.effectiveness
    return {
        "gamma": _fmt_gamma(row.gamma),
        "L_eff": eff.lower if eff else None,
        "U_eff": eff.upper if eff else None,
        "L_adopt": row.adoption.lower,
        "U_adopt": row.adoption.upper,
        "L_eff_clamped": eff.lower_clamped if eff else None,
        "U_eff_clamped": eff.upper_clamped if eff else None,
        "L_adopt_clamped": row.adoption.lower_clamped,
        "U_adopt_clamped": row.adoption.upper_clamped,
    }


def gamma_sweep(inp: StrataInput, gammas: Sequence[float], sharp: bool = False) -> GammaSweep:
    gammas = list(gammas)
    if not gammas:
        raise ValueError("gammas must be non-empty")
    if any(not g >= 0 for g in gammas):
        raise ValueError("every gamma must be nonnegative")
    props = stratum_proportions(inp) if inp.n_z0 is not None else None
    if props is None:
        raise DataValidationError("counts are required for a gamma sweep")
    return sweep_from_parts(inp, props, baseline_outcomes(inp, props), gammas, sharp)


def sweep_from_parts(inp, props, base, gammas: Iterable[float], sharp: bool = False) -> GammaSweep:
    rows = tuple(SweepRow(g, *dominance_bounds(inp, props, base, g, sharp)) for g in sorted(gammas))
    support = SweepRow(math.inf, *support_bounds(inp, props, base, sharp))
    return GammaSweep(rows, support, crossover_gamma(inp, props, base), props, base, inp)
