"""Tests for the productivity/adoption model and the trial generator."""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adoptbounds.errors import DataValidationError
from adoptbounds.strata_bounds import strata_input_from_dataset
from adoptbounds.theory_model import (
    ALWAYS,
    INDUCED,
    NEVER,
    ThetaDistribution,
    TheoryConfig,
    ability_cutoffs,
    adopts,
    classify_stratum,
    expected_loss,
    generate_trial,
    make_agent,
    net_benefit,
    net_gain,
    population_truth,
    productivity,
    run_simulation,
    write_trial,
)
from adoptbounds.trial_data import Arm, load_dataset

THETA_GRID = np.linspace(0.0, 1.0, 10_000)
DEFAULT = TheoryConfig()


@st.composite
def configs(draw):
    unit = st.floats(0.0, 1.0, allow_nan=False)
    e0 = draw(unit)
    e1 = draw(st.floats(e0, 1.0))
    k0 = draw(st.floats(0.01, 0.5))
    k1 = draw(st.floats(0.005, k0))
    return TheoryConfig(
        ability_A=draw(st.floats(0.1, 2.0)),
        e0=e0,
        e1=e1,
        k0=k0,
        k1=k1,
        complexity_c=draw(unit),
        error_prob_scale=draw(st.floats(0.05, 1.0)),
        error_cost_scale=draw(st.floats(0.05, 2.0)),
    )


def linear_config(e0, e1, k0, k1):
    """A = 1 and c = 0, so the net benefit equals effectiveness."""
    return TheoryConfig(ability_A=1.0, e0=e0, e1=e1, k0=k0, k1=k1, complexity_c=0.0)


# ---------------------------------------------------------------------------
# expected loss and productivity


def test_expected_loss_vanishes_at_full_effectiveness():
    for c in (0.0, 0.3, 1.0):
        assert expected_loss(c, 1.0, DEFAULT) == 0.0


def test_expected_loss_vanishes_for_trivial_tasks():
    for e in (0.0, 0.4, 1.0):
        assert expected_loss(0.0, e, DEFAULT) == 0.0


@settings(max_examples=200)
@given(c=st.floats(0.05, 0.95), e=st.floats(0.05, 0.95))
def test_expected_loss_slopes(c, e):
    h = 1e-6
    d_c = (expected_loss(c + h, e, DEFAULT) - expected_loss(c - h, e, DEFAULT)) / (2 * h)
    d_e = (expected_loss(c, e + h, DEFAULT) - expected_loss(c, e - h, DEFAULT)) / (2 * h)
    assert d_c > 0
    assert d_e < 0


def test_expected_loss_rejects_out_of_range():
    with pytest.raises(ValueError):
        expected_loss(1.2, 0.5, DEFAULT)
    with pytest.raises(ValueError):
        expected_loss(0.5, -0.1, DEFAULT)


def test_productivity_without_adoption_is_ability():
    for theta in (0.0, 0.37, 1.0):
        assert productivity(theta, False, False, DEFAULT) == theta
        assert productivity(theta, False, True, DEFAULT) == theta


def test_top_ability_gains_nothing():
    assert productivity(1.0, True, True, DEFAULT) == 1.0
    assert productivity(1.0, True, False, DEFAULT) == 1.0


def test_custom_families_are_used():
    cfg = TheoryConfig(error_prob=lambda c, e: 0.0, error_cost=lambda c: 1.0)
    assert expected_loss(0.5, 0.2, cfg) == 0.0
    assert net_benefit(False, cfg) == pytest.approx(cfg.ability_A * cfg.e0)


# ---------------------------------------------------------------------------
# adoption and strata


def test_adoption_example():
    cfg = linear_config(0.5, 0.6, 0.25, 0.1)
    assert net_benefit(False, cfg) == pytest.approx(0.5)
    assert adopts(0.3, False, cfg)  # 0.7 * 0.5 = 0.35 > 0.25
    assert not adopts(0.6, False, cfg)  # 0.4 * 0.5 = 0.20
    assert not adopts(1.0, True, cfg)


def test_classification_example():
    cfg = linear_config(0.5, 0.6, 0.25, 0.1)
    always_cut, induced_cut = ability_cutoffs(cfg)
    assert always_cut == pytest.approx(0.5)
    assert induced_cut == pytest.approx(1 - 0.1 / 0.6)
    assert classify_stratum(0.2, cfg) == ALWAYS
    assert classify_stratum(0.7, cfg) == INDUCED
    assert classify_stratum(0.9, cfg) == NEVER
    assert make_agent(0.7, cfg).stratum == INDUCED


def test_identical_training_leaves_no_induced_users():
    cfg = linear_config(0.5, 0.5, 0.2, 0.2)
    strata = {classify_stratum(float(t), cfg) for t in THETA_GRID}
    assert INDUCED not in strata


def test_nonpositive_benefit_empties_the_always_set():
    cfg = TheoryConfig(ability_A=1.0, e0=0.0, e1=0.5, k0=0.1, k1=0.1, complexity_c=0.0)
    always_cut, _ = ability_cutoffs(cfg)
    assert always_cut == -math.inf
    assert classify_stratum(0.0, cfg) == INDUCED


@settings(max_examples=30)
@given(cfg=configs())
def test_no_defiers_on_grid(cfg):
    untrained = np.array([adopts(float(t), False, cfg) for t in THETA_GRID])
    trained = np.array([adopts(float(t), True, cfg) for t in THETA_GRID])
    assert not np.any(untrained & ~trained)


@settings(max_examples=30)
@given(cfg=configs())
def test_classification_agrees_with_adoption(cfg):
    for t in THETA_GRID[::7]:
        t = float(t)
        stratum = classify_stratum(t, cfg)
        d0, d1 = adopts(t, False, cfg), adopts(t, True, cfg)
        expected = ALWAYS if d0 else (INDUCED if d1 else NEVER)
        # cut-offs are computed in closed form; allow disagreement only at a boundary
        if stratum != expected:
            cuts = ability_cutoffs(cfg)
            assert min(abs(t - c) for c in cuts) < 1e-9


def test_classification_agrees_on_default_grid():
    for t in THETA_GRID:
        t = float(t)
        d0, d1 = adopts(t, False, DEFAULT), adopts(t, True, DEFAULT)
        expected = ALWAYS if d0 else (INDUCED if d1 else NEVER)
        assert classify_stratum(t, DEFAULT) == expected


@settings(max_examples=30)
@given(cfg=configs())
def test_exclusion_for_never_users(cfg):
    for t in THETA_GRID[::11]:
        t = float(t)
        if adopts(t, True, cfg):
            continue
        y0 = productivity(t, adopts(t, False, cfg), False, cfg)
        y1 = productivity(t, adopts(t, True, cfg), True, cfg)
        assert y0 == y1 == t


@settings(max_examples=50)
@given(cfg=configs())
def test_gain_weakly_decreasing_in_ability(cfg):
    for trained in (False, True):
        gains = np.array([net_gain(float(t), trained, cfg) for t in THETA_GRID[::50]])
        if net_benefit(trained, cfg) >= 0:
            assert np.all(np.diff(gains) <= 1e-15)


@settings(max_examples=50)
@given(cfg=configs())
def test_induced_users_lie_above_always_users(cfg):
    always = [t for t in THETA_GRID[::13] if classify_stratum(float(t), cfg) == ALWAYS]
    induced = [t for t in THETA_GRID[::13] if classify_stratum(float(t), cfg) == INDUCED]
    if always and induced:
        assert max(always) < min(induced)


# ---------------------------------------------------------------------------
# finite-difference slopes of the adoption gain


def _gain_at(theta, e, cfg):
    return net_gain(theta, False, dataclasses.replace(cfg, e0=e, e1=max(e, cfg.e1)))


def _closed_de(theta, e, cfg):
    # d/de (1 - theta)(A e - rho c (1 - e) lam c)
    c = cfg.complexity_c
    return (1 - theta) * (cfg.ability_A + cfg.error_prob_scale * c * cfg.error_cost_scale * c)


@settings(max_examples=300)
@given(cfg=configs(), theta=st.floats(0.0, 0.95), e=st.floats(0.01, 0.99))
def test_gain_increases_with_effectiveness(cfg, theta, e):
    h = 1e-5
    fd = (_gain_at(theta, e + h, cfg) - _gain_at(theta, e - h, cfg)) / (2 * h)
    closed = _closed_de(theta, e, cfg)
    assert closed > 0
    assert fd == pytest.approx(closed, rel=1e-6)


@settings(max_examples=300)
@given(cfg=configs(), theta=st.floats(0.01, 0.95), e=st.floats(0.01, 0.99))
def test_effectiveness_gain_shrinks_with_ability(cfg, theta, e):
    h = 1e-3
    k = 1e-3

    def d_de(t):
        return (_gain_at(t, e + h, cfg) - _gain_at(t, e - h, cfg)) / (2 * h)

    fd = (d_de(theta + k) - d_de(theta - k)) / (2 * k)
    closed = -_closed_de(0.0, e, cfg)
    assert closed < 0
    assert fd == pytest.approx(closed, rel=1e-6)


# ---------------------------------------------------------------------------
# config handling


@pytest.mark.parametrize(
    "kwargs, message",
    [
        ({"e0": 0.9, "e1": 0.5}, "e1 >= e0"),
        ({"k0": 0.1, "k1": 0.2}, "k1 <= k0"),
        ({"ability_A": 0.0}, "ability_A"),
        ({"complexity_c": 1.5}, "complexity_c"),
        ({"k1": 0.0}, "adoption costs"),
    ],
)
def test_config_validation(kwargs, message):
    with pytest.raises(DataValidationError, match=message):
        TheoryConfig(**kwargs)


def test_config_round_trip(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(DEFAULT.to_dict()))
    assert TheoryConfig.load(path) == DEFAULT


def test_config_rejects_unknown_keys():
    with pytest.raises(DataValidationError, match="unknown"):
        TheoryConfig.from_dict({"ability": 1.0})


def test_config_rejects_bad_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("{not json")
    with pytest.raises(DataValidationError):
        TheoryConfig.load(path)


def test_theta_distribution_parse():
    assert ThetaDistribution.parse("uniform") == ThetaDistribution()
    assert ThetaDistribution.parse("beta:2,3") == ThetaDistribution("beta", 2.0, 3.0)
    assert str(ThetaDistribution.parse("beta:2,3")) == "beta:2,3"
    with pytest.raises(DataValidationError):
        ThetaDistribution.parse("normal")
    with pytest.raises(DataValidationError):
        ThetaDistribution.parse("beta:2")


# ---------------------------------------------------------------------------
# ground truth and trial generation


def test_population_shares_match_cutoffs():
    truth = population_truth(DEFAULT)
    always_cut, induced_cut = ability_cutoffs(DEFAULT)
    assert truth.pi_A == pytest.approx(always_cut)
    assert truth.pi_C == pytest.approx(induced_cut - always_cut)
    assert truth.pi_A + truth.pi_C + truth.pi_N == pytest.approx(1.0)


def test_population_taus_match_closed_form():
    # uniform ability, noiseless: tau is an affine map of a linear function of theta
    truth = population_truth(DEFAULT)
    a, c = ability_cutoffs(DEFAULT)
    span = DEFAULT.y_max - DEFAULT.y_min
    nb0, nb1 = net_benefit(False, DEFAULT), net_benefit(True, DEFAULT)
    mean_headroom_c = 1 - (a + c) / 2
    mean_headroom_a = 1 - a / 2
    assert truth.tau_adoption == pytest.approx(span * nb1 * mean_headroom_c, rel=1e-6)
    assert truth.tau_effectiveness == pytest.approx(span * (nb1 - nb0) * mean_headroom_a, rel=1e-6)


def test_beta_shares_use_beta_cdf():
    dist = ThetaDistribution("beta", 2.0, 5.0)
    truth = population_truth(DEFAULT, dist)
    a, _ = ability_cutoffs(DEFAULT)
    from scipy.stats import beta

    assert truth.pi_A == pytest.approx(beta.cdf(a, 2, 5), abs=1e-10)


def test_noise_free_identical_training_has_no_effect():
    cfg = TheoryConfig(e0=0.6, e1=0.6, k0=0.1, k1=0.1)
    dataset, truth = generate_trial(200, noise_sd=0.0, config=cfg, seed=3)
    assert truth.pi_C == 0
    assert truth.induced_empty
    assert truth.tau_adoption is None
    assert truth.tau_effectiveness == 0.0
    with pytest.raises(Exception):
        truth.identified_set()


def test_generated_adoption_follows_the_model():
    dataset, _ = generate_trial(300, noise_sd=0.0, seed=5)
    assert all(r.adopted is None for r in dataset.arm(Arm.NoAI))
    for arm in (Arm.AIOnly, Arm.AITrained):
        assert all(isinstance(r.adopted, bool) for r in dataset.arm(arm))
    assert len(dataset.records) == 900


def test_shares_converge_in_large_trials():
    dataset, truth = generate_trial(10_000, seed=11)
    inp = strata_input_from_dataset(dataset)
    pi_A = inp.n_z0_d1 / inp.n_z0
    pi_AC = inp.n_z1_d1 / inp.n_z1
    assert abs(pi_A - truth.pi_A) < 0.02
    assert abs(pi_AC - truth.pi_A - truth.pi_C) < 0.02
    assert abs(inp.mean_y_z1_d1 - truth.population.mean_y_z1_d1) < 0.02
    assert abs(inp.mean_y_z0_d1 - truth.population.mean_y_z0_d1) < 0.02


def test_generation_is_deterministic():
    a, _ = generate_trial(50, seed=9)
    b, _ = generate_trial(50, seed=9)
    c, _ = generate_trial(50, seed=10)
    assert a == b
    assert a != c


def test_generation_rejects_bad_arguments():
    with pytest.raises(ValueError):
        generate_trial(1)
    with pytest.raises(ValueError):
        generate_trial(10, noise_sd=-1.0)


def test_write_trial(tmp_path):
    dataset, truth = generate_trial(20, seed=1)
    csv_path, json_path = write_trial(dataset, truth, tmp_path / "trial-1")
    assert csv_path.name == "trial-1.csv"
    assert json_path.name == "trial-1.truth.json"
    assert load_dataset(csv_path) == dataset
    sidecar = json.loads(json_path.read_text())
    assert sidecar["pi_A"] == pytest.approx(truth.pi_A)


def test_small_simulation_covers_truth():
    report = run_simulation(20, 120, seed=4)
    assert report.valid == 20
    assert report.coverage_tau_adoption == 1.0
    assert report.coverage_tau_effectiveness == 1.0
    assert abs(report.bias_pi_C) < 0.05


def test_simulation_is_deterministic():
    a = run_simulation(5, 60, seed=8)
    b = run_simulation(5, 60, seed=8)
    assert json.dumps(a.summary(), sort_keys=True) == json.dumps(b.summary(), sort_keys=True)
