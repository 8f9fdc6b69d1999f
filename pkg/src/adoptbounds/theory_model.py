"""Stylized productivity/adoption model and a synthetic-trial generator.

An agent of ability ``theta`` in [0, 1] produces

    Y = theta + D * (1 - theta) * (A * e_T - L(c, e_T)),   L = p(c, e) * l(c)

and adopts when the net gain ``(1 - theta) * (A * e_T - L)`` exceeds the
adoption cost ``k_T``.  Training raises effectiveness (``e1 >= e0``) and
lowers the cost (``k1 <= k0``), so adoption is monotone in training and the
population splits into always, induced and never users by two ability
cut-offs.

Default families are ``p(c, e) = rho * c * (1 - e)`` and ``l(c) = lam * c``.
Generated outcomes map productivity affinely onto the grade support, add
Gaussian noise, clip, and snap to the nearest grade point.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .distributions import beta_cdf
from .errors import AssumptionViolation, DataValidationError
from .resampling import BootstrapConfig, bootstrap_bounds
from .strata_bounds import (
    BaselineOutcomes,
    PrincipalBounds,
    StrataInput,
    StratumProportions,
    baseline_outcomes,
    dominance_bounds,
    proportions_from_rates,
    strata_input_from_dataset,
    stratum_proportions,
    support_bounds,
)
from .trial_data import GRADE_SCALE, Arm, ExamRecord, GradeScale, IssueScore, TrialDataset, DEFAULT_RUBRIC_MAX, save_dataset

ALWAYS = "always"
INDUCED = "induced"
NEVER = "never"


@dataclass(frozen=True)
class TheoryConfig:
    ability_A: float = 0.8
    e0: float = 0.5
    e1: float = 0.8
    k0: float = 0.15
    k1: float = 0.10
    complexity_c: float = 0.5
    error_prob_scale: float = 1.0
    error_cost_scale: float = 1.0
    y_min: float = 1.0
    y_max: float = 4.3
    error_prob: Callable[[float, float], float] | None = field(default=None, compare=False, repr=False)
    error_cost: Callable[[float], float] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        problems = []
        if not self.ability_A > 0:
            problems.append("ability_A must be positive")
        for name in ("e0", "e1", "complexity_c"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                problems.append(f"{name} must lie in [0, 1]")
        if not (self.k0 > 0 and self.k1 > 0):
            problems.append("adoption costs k0, k1 must be positive")
        if self.e1 < self.e0:
            problems.append("training must not reduce effectiveness (e1 >= e0)")
        if self.k1 > self.k0:
            problems.append("training must not raise the adoption cost (k1 <= k0)")
        if not 0.0 < self.error_prob_scale <= 1.0:
            problems.append("error_prob_scale must lie in (0, 1]")
        if not self.error_cost_scale > 0:
            problems.append("error_cost_scale must be positive")
        if not self.y_min < self.y_max:
            problems.append("y_min must be below y_max")
        if problems:
            raise DataValidationError("; ".join(problems))

    def p(self, c: float, e: float) -> float:
        if self.error_prob is not None:
            return self.error_prob(c, e)
        return self.error_prob_scale * c * (1.0 - e)

    def l(self, c: float) -> float:
        if self.error_cost is not None:
            return self.error_cost(c)
        return self.error_cost_scale * c

    def effectiveness(self, trained: bool) -> float:
        return self.e1 if trained else self.e0

    def cost(self, trained: bool) -> float:
        return self.k1 if trained else self.k0

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("error_prob", "error_cost")}

    @classmethod
    def from_dict(cls, data: dict) -> "TheoryConfig":
        known = {f.name for f in fields(cls)} - {"error_prob", "error_cost"}
        unknown = set(data) - known
        if unknown:
            raise DataValidationError(f"unknown theory config keys: {', '.join(sorted(unknown))}")
        try:
            return cls(**{k: float(v) for k, v in data.items()})
        except (TypeError, ValueError) as exc:
            raise DataValidationError(f"invalid theory config: {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "TheoryConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataValidationError(f"theory config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise DataValidationError("theory config must be a JSON object")
        return cls.from_dict(data)


def _check_unit(name, value):
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


def expected_loss(c: float, e: float, config: TheoryConfig) -> float:
    _check_unit("c", c)
    _check_unit("e", e)
    return config.p(c, e) * config.l(c)


def net_benefit(trained: bool, config: TheoryConfig) -> float:
    """``A * e_T - L(c, e_T)``: the per-unit-of-headroom gain from adopting."""
    e = config.effectiveness(trained)
    return config.ability_A * e - expected_loss(config.complexity_c, e, config)


def net_gain(theta: float, trained: bool, config: TheoryConfig) -> float:
    _check_unit("theta", theta)
    return (1.0 - theta) * net_benefit(trained, config)


def productivity(theta: float, adopt: bool, trained: bool, config: TheoryConfig) -> float:
    _check_unit("theta", theta)
    if not adopt:
        return theta
    return theta + net_gain(theta, trained, config)


def adopts(theta: float, trained: bool, config: TheoryConfig) -> bool:
    return net_gain(theta, trained, config) > config.cost(trained)


def ability_cutoffs(config: TheoryConfig) -> tuple[float, float]:
    """Return ``(always_cut, induced_cut)``.

    Always users have ``theta < always_cut``; induced users
    ``always_cut <= theta < induced_cut``.  A non-positive net benefit makes the
    corresponding set empty (cut-off ``-inf``).
    """
    cuts = []
    for trained in (False, True):
        nb = net_benefit(trained, config)
        cuts.append(1.0 - config.cost(trained) / nb if nb > 0 else -math.inf)
    always_cut, induced_cut = cuts
    if induced_cut < always_cut:
        raise DataValidationError("training lowers net adoption benefit: defiers would exist")
    return always_cut, induced_cut


def classify_stratum(theta: float, config: TheoryConfig) -> str:
    _check_unit("theta", theta)
    always_cut, induced_cut = ability_cutoffs(config)
    if theta < always_cut:
        return ALWAYS
    if theta < induced_cut:
        return INDUCED
    return NEVER


@dataclass(frozen=True)
class Agent:
    theta: float
    stratum: str


def make_agent(theta: float, config: TheoryConfig) -> Agent:
    return Agent(theta, classify_stratum(theta, config))


# ---------------------------------------------------------------------------
# Ability distributions


@dataclass(frozen=True)
class ThetaDistribution:
    """``uniform`` on [0, 1] or ``beta`` with shapes ``a``, ``b``."""

    kind: str = "uniform"
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "beta"):
            raise DataValidationError(f"unknown theta distribution {self.kind!r}")
        if not (self.a > 0 and self.b > 0):
            raise DataValidationError("beta shape parameters must be positive")

    @classmethod
    def parse(cls, spec: str) -> "ThetaDistribution":
        """Parse ``uniform`` or ``beta:A,B``."""
        text = spec.strip().lower()
        if text == "uniform":
            return cls()
        if text.startswith("beta:"):
            try:
                a, b = (float(x) for x in text[5:].split(","))
            except ValueError:
                raise DataValidationError(f"bad beta spec {spec!r}; expected beta:A,B") from None
            return cls("beta", a, b)
        raise DataValidationError(f"bad theta distribution {spec!r}")

    def __str__(self):
        return "uniform" if self.kind == "uniform" else f"beta:{self.a:g},{self.b:g}"

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(0.0, 1.0, size=n)
        return rng.beta(self.a, self.b, size=n)

    def cdf(self, x: float) -> float:
        if self.kind == "uniform":
            return min(1.0, max(0.0, x))
        return beta_cdf(x, self.a, self.b)


# ---------------------------------------------------------------------------
# Ground truth


def _to_outcome(prod, config: TheoryConfig):
    return config.y_min + (config.y_max - config.y_min) * prod


@dataclass(frozen=True)
class TrialTruth:
    always_cut: float
    induced_cut: float
    pi_A: float
    pi_N: float
    pi_C: float
    tau_adoption: float | None
    tau_effectiveness: float | None
    tau_adoption_observed: float | None
    tau_effectiveness_observed: float | None
    population: StrataInput | None
    induced_empty: bool
    noise_sd: float
    theta_distribution: str

    def identified_set(
        self, gamma: float = math.inf, sharp: bool = False
    ) -> tuple[PrincipalBounds, PrincipalBounds | None]:
        """Population bounds: what the estimator converges to with infinite data."""
        if self.population is None:
            raise AssumptionViolation("no induced users in the population")
        props = proportions_from_rates(self.pi_A, self.pi_A + self.pi_C)
        base = baseline_outcomes(self.population, props)
        return dominance_bounds(self.population, props, base, gamma, sharp)

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("always_cut", "induced_cut"):
            if out[key] == -math.inf:
                out[key] = "-inf"
        return out


def _grid_probs(mu: np.ndarray, sd: float, scale: GradeScale) -> np.ndarray:
    """P(snap(clip(mu + sd*eps)) == g_k) for each grade point g_k."""
    pts = np.array(scale.points)
    if sd == 0:
        probs = np.zeros((len(mu), len(pts)))
        for i, m in enumerate(mu):
            probs[i, scale.points.index(scale.nearest(float(m)))] = 1.0
        return probs
    mids = (pts[:-1] + pts[1:]) / 2
    cdf = ndtr((mids[None, :] - mu[:, None]) / sd)
    lower = np.hstack([np.zeros((len(mu), 1)), cdf])
    upper = np.hstack([cdf, np.ones((len(mu), 1))])
    return upper - lower


@functools.lru_cache(maxsize=64)
def population_truth(
    config: TheoryConfig,
    theta_distribution: ThetaDistribution = ThetaDistribution(),
    noise_sd: float = 0.0,
    scale: GradeScale = GRADE_SCALE,
    cells: int = 4000,
) -> TrialTruth:
    """Exact stratum shares and numerically integrated stratum means.

    The ability axis is cut into ``cells`` equal-width cells, refined so the
    stratum cut-offs are cell edges, and each cell is weighted by its exact
    probability mass.  Observed-scale means integrate the noise and grade
    snapping analytically.
    """
    always_cut, induced_cut = ability_cutoffs(config)
    F = theta_distribution.cdf
    pi_A = F(always_cut) if always_cut > 0 else 0.0
    pi_AC = F(induced_cut) if induced_cut > 0 else 0.0
    pi_C = pi_AC - pi_A
    pi_N = 1.0 - pi_AC

    edges = np.unique(np.concatenate([np.linspace(0.0, 1.0, cells + 1), [c for c in (always_cut, induced_cut) if 0 < c < 1]]))
    mass = np.diff([F(x) for x in edges])
    theta = (edges[:-1] + edges[1:]) / 2
    stratum = np.array([classify_stratum(float(t), config) for t in theta])

    nb0, nb1 = net_benefit(False, config), net_benefit(True, config)
    y00 = _to_outcome(theta, config)
    y01 = _to_outcome(theta + (1 - theta) * nb0, config)
    y11 = _to_outcome(theta + (1 - theta) * nb1, config)
    pts = np.array(scale.points)
    obs = {
        name: _grid_probs(np.clip(v, config.y_min, config.y_max) if noise_sd == 0 else v, noise_sd, scale) @ pts
        for name, v in (("y00", y00), ("y01", y01), ("y11", y11))
    }

    def mean_over(mask, values):
        w = mass[mask]
        total = w.sum()
        return float((w * values[mask]).sum() / total) if total > 0 else None

    A, C, N = stratum == ALWAYS, stratum == INDUCED, stratum == NEVER
    tau_adopt = tau_eff = tau_adopt_obs = tau_eff_obs = None
    if mass[C].sum() > 0:
        tau_adopt = mean_over(C, y11 - y00)
        tau_adopt_obs = mean_over(C, obs["y11"] - obs["y00"])
    if mass[A].sum() > 0:
        tau_eff = mean_over(A, y11 - y01)
        tau_eff_obs = mean_over(A, obs["y11"] - obs["y01"])

    population = None
    if pi_C > 0:
        population = StrataInput(
            None, None, None, None,
            mean_y_z0_d0=mean_over(C | N, obs["y00"]),
            mean_y_z0_d1=mean_over(A, obs["y01"]),
            mean_y_z1_d0=mean_over(N, obs["y00"]),
            mean_y_z1_d1=mean_over(A | C, obs["y11"]),
            y_min=config.y_min,
            y_max=config.y_max,
        )
    return TrialTruth(
        always_cut=always_cut,
        induced_cut=induced_cut,
        pi_A=pi_A,
        pi_N=pi_N,
        pi_C=pi_C,
        tau_adoption=tau_adopt,
        tau_effectiveness=tau_eff,
        tau_adoption_observed=tau_adopt_obs,
        tau_effectiveness_observed=tau_eff_obs,
        population=population,
        induced_empty=not pi_C > 0,
        noise_sd=noise_sd,
        theta_distribution=str(theta_distribution),
    )


# ---------------------------------------------------------------------------
# Trial generation


def _issues_for(fraction: float, rubric_max=DEFAULT_RUBRIC_MAX) -> tuple[IssueScore, ...]:
    return tuple(
        IssueScore(k + 1, True, int(round(fraction * m)), m) for k, m in enumerate(rubric_max)
    )


def generate_trial(
    n_per_arm: int,
    theta_distribution: ThetaDistribution | str = "uniform",
    noise_sd: float = 0.3,
    config: TheoryConfig = TheoryConfig(),
    seed: int = 0,
    scale: GradeScale = GRADE_SCALE,
) -> tuple[TrialDataset, TrialTruth]:
    """Simulate a three-arm trial with ``n_per_arm`` agents in every arm.

    Only grade points and adoption carry model content; rubric issues are all
    marked spotted with scores proportional to productivity, and text and
    citation fields are zero.
    """
    if n_per_arm < 2:
        raise ValueError("n_per_arm must be at least 2")
    if noise_sd < 0:
        raise ValueError("noise_sd must be nonnegative")
    if isinstance(theta_distribution, str):
        theta_distribution = ThetaDistribution.parse(theta_distribution)
    if (config.y_min, config.y_max) != (scale.y_min, scale.y_max):
        raise DataValidationError("theory config support must match the grade scale")
    rng = np.random.default_rng(seed)
    records = []
    for arm in Arm:
        thetas = theta_distribution.sample(rng, n_per_arm)
        noise = rng.normal(0.0, noise_sd, size=n_per_arm) if noise_sd > 0 else np.zeros(n_per_arm)
        trained = arm is Arm.AITrained
        for i, (theta, eps) in enumerate(zip(thetas, noise)):
            theta = float(theta)
            adopted = adopts(theta, trained, config) if arm.has_adoption else None
            prod = productivity(theta, bool(adopted), trained, config)
            y = scale.nearest(min(config.y_max, max(config.y_min, _to_outcome(prod, config) + eps)))
            records.append(
                ExamRecord(
                    unit_id=f"{arm.name}-{i:05d}",
                    arm=arm,
                    adopted=adopted,
                    issues=_issues_for(min(1.0, max(0.0, prod))),
                    grade_point=y,
                    word_count=0,
                    fk_grade=0.0,
                    rule_misstatements=0,
                    case_hallucinations=0,
                    case_misstatements=0,
                    cases_cited=0,
                    scale=scale,
                )
            )
    dataset = TrialDataset(tuple(records), scale)
    return dataset, population_truth(config, theta_distribution, float(noise_sd), scale)


def write_trial(dataset: TrialDataset, truth: TrialTruth, stem: str | Path) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` in the trial file format and a ``<stem>.truth.json`` sidecar."""
    stem = Path(stem)
    csv_path = stem.with_suffix(".csv")
    json_path = stem.with_suffix(".truth.json")
    save_dataset(dataset, csv_path)
    json_path.write_text(json.dumps(truth.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, json_path


# ---------------------------------------------------------------------------
# Simulation study


@dataclass(frozen=True)
class TrialOutcome:
    index: int
    seed: int
    valid: bool
    reason: str
    pi_hat: tuple[float, float, float] | None
    adoption: PrincipalBounds | None
    effectiveness: PrincipalBounds | None
    covers_tau_adoption: bool | None
    covers_tau_effectiveness: bool | None
    ci_covers_adoption_set: bool | None = None
    ci_covers_effectiveness_set: bool | None = None


@dataclass(frozen=True)
class SimulationReport:
    trials: int
    n_per_arm: int
    valid: int
    coverage_tau_adoption: float | None
    coverage_tau_effectiveness: float | None
    bias_pi_A: float
    bias_pi_N: float
    bias_pi_C: float
    ci_coverage_adoption: float | None
    ci_coverage_effectiveness: float | None
    truth: TrialTruth
    outcomes: tuple[TrialOutcome, ...]

    def summary(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "trials", "n_per_arm", "valid",
            "coverage_tau_adoption", "coverage_tau_effectiveness",
            "bias_pi_A", "bias_pi_N", "bias_pi_C",
            "ci_coverage_adoption", "ci_coverage_effectiveness",
        )}
        out["truth"] = self.truth.to_dict()
        return out


def _rate(flags):
    flags = [f for f in flags if f is not None]
    return sum(flags) / len(flags) if flags else None


def run_simulation(
    trials: int,
    n_per_arm: int = 120,
    seed: int = 0,
    config: TheoryConfig = TheoryConfig(),
    theta_distribution: ThetaDistribution | str = "uniform",
    noise_sd: float = 0.3,
    bootstrap: BootstrapConfig | None = None,
) -> SimulationReport:
    """Generate trials and check the estimator against ground truth.

    Point bounds (support restriction only) are checked for containing the
    true effects; optional bootstrap intervals are checked for covering the
    population identified set.  Trial ``i`` uses the ``i``-th child of
    ``SeedSequence(seed)`` for data and, if bootstrapping, that child's own
    spawned child for resampling.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if isinstance(theta_distribution, str):
        theta_distribution = ThetaDistribution.parse(theta_distribution)
    truth = population_truth(config, theta_distribution, float(noise_sd))
    true_sets = truth.identified_set() if truth.population is not None else (None, None)
    outcomes = []
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(trials)):
        trial_seed = int(child.generate_state(1)[0])
        dataset, _ = generate_trial(n_per_arm, theta_distribution, noise_sd, config, trial_seed)
        inp = strata_input_from_dataset(dataset)
        n0, n1 = inp.n_z0, inp.n_z1
        pi_hat = (inp.n_z0_d1 / n0, 1 - inp.n_z1_d1 / n1, inp.n_z1_d1 / n1 - inp.n_z0_d1 / n0)
        try:
            props = stratum_proportions(inp)
            base = baseline_outcomes(inp, props)
            adoption, effectiveness = support_bounds(inp, props, base)
        except AssumptionViolation as exc:
            outcomes.append(TrialOutcome(i, trial_seed, False, str(exc), pi_hat, None, None, None, None))
            continue
        cov_a = adoption.contains(truth.tau_adoption) if truth.tau_adoption is not None else None
        cov_e = (
            effectiveness.contains(truth.tau_effectiveness)
            if effectiveness is not None and truth.tau_effectiveness is not None
            else None
        )
        ci_a = ci_e = None
        if bootstrap is not None and true_sets[0] is not None:
            boot_seed = int(child.spawn(1)[0].generate_state(1)[0])
            cfg = BootstrapConfig(bootstrap.replications, bootstrap.level, boot_seed, bootstrap.method, bootstrap.sharp)
            try:
                cis = bootstrap_bounds(dataset, [math.inf], cfg)
            except AssumptionViolation:
                cis = []
            for ci in cis:
                target = true_sets[0] if ci.effect == "adoption" else true_sets[1]
                if target is None:
                    continue
                hit = ci.lower_ci <= target.lower and ci.upper_ci >= target.upper
                if ci.effect == "adoption":
                    ci_a = hit
                else:
                    ci_e = hit
        outcomes.append(
            TrialOutcome(i, trial_seed, True, "", pi_hat, adoption, effectiveness, cov_a, cov_e, ci_a, ci_e)
        )
    pis = np.array([o.pi_hat for o in outcomes])
    return SimulationReport(
        trials=trials,
        n_per_arm=n_per_arm,
        valid=sum(o.valid for o in outcomes),
        coverage_tau_adoption=_rate(o.covers_tau_adoption for o in outcomes),
        coverage_tau_effectiveness=_rate(o.covers_tau_effectiveness for o in outcomes),
        bias_pi_A=float(pis[:, 0].mean() - truth.pi_A),
        bias_pi_N=float(pis[:, 1].mean() - truth.pi_N),
        bias_pi_C=float(pis[:, 2].mean() - truth.pi_C),
        ci_coverage_adoption=_rate(o.ci_covers_adoption_set for o in outcomes),
        ci_coverage_effectiveness=_rate(o.ci_covers_effectiveness_set for o in outcomes),
        truth=truth,
        outcomes=tuple(outcomes),
    )
