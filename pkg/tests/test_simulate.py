import json

import numpy as np
import pytest

from banditlab.datasets import dataset_to_dict
from banditlab.errors import ConfigError
from banditlab.simulate import (
    SATIATION,
    SENSITIZATION,
    STATIC,
    CohortSpec,
    UserModel,
    calibration_study,
    coverage_study,
    draw_reward,
    likert_mean,
    model_from_dict,
    model_to_dict,
    power_study,
    simulate_cohort,
    true_arm_means,
)
from banditlab.stats import tau


def test_static_zero_noise_is_degenerate():
    model = UserModel(kind=STATIC, base_means=(5.0, 8.0), sigma=0.0)
    exposure = np.zeros(2)
    rng = np.random.default_rng(0)
    for _ in range(10):
        reward, exposure = draw_reward(model, 1, exposure, rng)
        assert reward == 5


def test_satiation_depresses_consecutive_pulls():
    # gamma=1, rho=0, base 9: first pull mean 9, second consecutive pull mean 8.
    model = UserModel(kind=SATIATION, base_means=(9.0, 9.0), sigma=0.0, gamma=1.0, rho=0.0)
    exposure = np.zeros(2)
    rng = np.random.default_rng(0)
    r1, exposure = draw_reward(model, 1, exposure, rng)
    r2, exposure = draw_reward(model, 1, exposure, rng)
    assert (r1, r2) == (9, 8)


def test_exposure_geometric_recursion():
    # rho=0.5, three consecutive pulls: state after each is 1, 1.5, 1.75.
    model = UserModel(kind=SATIATION, base_means=(9.0, 9.0), sigma=0.0, gamma=0.1, rho=0.5)
    exposure = np.zeros(2)
    rng = np.random.default_rng(0)
    states = []
    for _ in range(3):
        _, exposure = draw_reward(model, 1, exposure, rng)
        states.append(exposure[0])
    assert states == pytest.approx([1.0, 1.5, 1.75])


def test_sensitization_raises_mean():
    model = UserModel(kind=SENSITIZATION, base_means=(5.0, 5.0), sigma=0.0, gamma=1.0, rho=0.0)
    exposure = np.zeros(2)
    rng = np.random.default_rng(0)
    r1, exposure = draw_reward(model, 1, exposure, rng)
    r2, exposure = draw_reward(model, 1, exposure, rng)
    assert (r1, r2) == (5, 6)


def test_rewards_clamped_to_scale():
    model = UserModel(kind=SATIATION, base_means=(1.0, 1.0), sigma=0.0, gamma=5.0, rho=0.0)
    exposure = np.ones(2) * 10
    rng = np.random.default_rng(0)
    reward, _ = draw_reward(model, 1, exposure, rng)
    assert reward == 1


def test_model_invariant_static_iff_gamma_zero():
    with pytest.raises(ConfigError):
        UserModel(kind=STATIC, base_means=(5.0,) * 2, gamma=0.5)
    with pytest.raises(ConfigError):
        UserModel(kind=SATIATION, base_means=(5.0,) * 2, gamma=0.0)


def test_model_json_round_trip(tmp_path):
    model = UserModel(kind=SATIATION, base_means=(5.0, 6.0, 7.0), sigma=0.8, gamma=0.3, rho=0.5)
    doc = model_to_dict(model)
    assert model_from_dict(json.loads(json.dumps(doc))) == model


def test_likert_mean_matches_enumeration():
    mu, sigma = 5.7, 1.3
    weights = np.exp(-0.5 * ((np.arange(1, 10) - mu) / sigma) ** 2)
    weights /= weights.sum()
    assert likert_mean(mu, sigma) == pytest.approx(float((weights * np.arange(1, 10)).sum()))
    assert likert_mean(5.0, 1.0) == pytest.approx(5.0)  # symmetric center


def test_simulate_cohort_sizes_and_determinism():
    model = UserModel(kind=STATIC, base_means=(5.0,) * 5, sigma=1.0)
    cohort = CohortSpec(counts={"cycle": 6, "repeat": 5})
    ds1 = simulate_cohort(model, cohort, T=50, seed=3)
    ds2 = simulate_cohort(model, cohort, T=50, seed=3)
    assert len(ds1.group("cycle")) == 6
    assert len(ds1.group("repeat")) == 5
    assert dataset_to_dict(ds1) == dataset_to_dict(ds2)
    for p in ds1.participants:
        assert len(p.pulls) == 50
        assert p.attention_passed
        assert p.survey is not None


def test_static_zero_noise_cohort_has_zero_tau():
    model = UserModel(kind=STATIC, base_means=(3.0, 4.0, 5.0, 6.0, 7.0), sigma=0.0)
    ds = simulate_cohort(model, CohortSpec(counts={"cycle": 4, "repeat": 4}), T=50, seed=1)
    for k in range(1, 6):
        assert tau(ds.group("cycle"), ds.group("repeat"), k, 10) == 0.0


def test_adaptive_policies_run_headlessly():
    model = UserModel(kind=STATIC, base_means=(2.0, 8.0, 5.0), sigma=1.0)
    cohort = CohortSpec(counts={"ucb": 2, "ts": 2, "etc": 2, "eps_greedy": 2, "self_selected": 2})
    ds = simulate_cohort(model, cohort, T=12, seed=9)
    assert len(ds.participants) == 10
    for p in ds.participants:
        assert len(p.pulls) == 12


def test_static_cohort_arm_means_converge():
    base = (3.0, 4.0, 5.0, 6.0, 7.0)
    model = UserModel(kind=STATIC, base_means=base, sigma=1.0)
    ds = simulate_cohort(model, CohortSpec(counts={"cycle": 500, "repeat": 500}), T=50, seed=11)
    expected = true_arm_means(model)
    for k in range(1, 6):
        pooled = [r for p in ds.participants for r in p.arm_rewards(k)]
        assert abs(np.mean(pooled) - expected[k - 1]) < 0.05


def test_satiation_rho_zero_leaves_cycle_at_base():
    # Without carryover, only immediately-repeated pulls satiate; CYCLE has
    # no consecutive repeats for K >= 2.
    model = UserModel(kind=SATIATION, base_means=(5.0,) * 5, sigma=0.0, gamma=1.0, rho=0.0)
    ds = simulate_cohort(model, CohortSpec(counts={"cycle": 3}), T=50, seed=2)
    for p in ds.participants:
        assert all(r == 5 for (_, _, r) in p.pulls)


def test_satiation_gamma_monotone_in_tau():
    gammas = [0.1, 0.4, 0.8]
    taus = []
    for gamma in gammas:
        model = UserModel(kind=SATIATION, base_means=(5.0,) * 5, sigma=0.5, gamma=gamma, rho=0.5)
        ds = simulate_cohort(model, CohortSpec(counts={"cycle": 12, "repeat": 12}), T=50, seed=5)
        taus.append(np.mean([tau(ds.group("cycle"), ds.group("repeat"), k, 10) for k in range(1, 6)]))
    assert taus[0] < taus[1] < taus[2] + 1e-9


def test_calibration_study_smoke():
    model = UserModel(kind=STATIC, base_means=(5.0,) * 3, sigma=1.0)
    result = calibration_study(
        model,
        n_datasets=4,
        alpha=0.1,
        seed=0,
        cohort=CohortSpec(counts={"cycle": 5, "repeat": 5}),
        T=9,
        n_perm=200,
        stratify=False,
    )
    assert result.n_datasets == 4
    assert 0.0 <= result.familywise_rate["overall"] <= 1.0
    assert len(result.per_arm_rate["overall"]) == 3


def test_power_at_gamma_zero_equals_calibration():
    model = UserModel(kind=SATIATION, base_means=(5.0,) * 3, sigma=1.0, gamma=0.5, rho=0.5)
    common = dict(
        cohort=CohortSpec(counts={"cycle": 5, "repeat": 5}), T=9, n_perm=200, stratify=False
    )
    curve = power_study(model, [0.0], n_datasets=3, alpha=0.1, seed=4, **common)
    static = UserModel(kind=STATIC, base_means=(5.0,) * 3, sigma=1.0)
    cal = calibration_study(static, n_datasets=3, alpha=0.1, seed=4, **common)
    assert curve[0][1].familywise_rate == cal.familywise_rate
    assert curve[0][1].per_arm_rate == cal.per_arm_rate


def test_parallel_matches_serial():
    model = UserModel(kind=STATIC, base_means=(5.0,) * 3, sigma=1.0)
    kwargs = dict(
        alpha=0.1,
        seed=8,
        cohort=CohortSpec(counts={"cycle": 4, "repeat": 4}),
        T=9,
        n_perm=100,
        stratify=False,
    )
    serial = calibration_study(model, n_datasets=4, n_jobs=1, **kwargs)
    parallel = calibration_study(model, n_datasets=4, n_jobs=2, **kwargs)
    assert serial == parallel


def test_coverage_study_smoke():
    a = UserModel(kind=STATIC, base_means=(4.0, 6.0), sigma=1.0)
    b = UserModel(kind=STATIC, base_means=(5.0, 5.0), sigma=1.0)
    out = coverage_study(a, b, n_datasets=3, n_boot=200, seed=1, T=10)
    assert 0.0 <= out["coverage"] <= 1.0
    assert len(out["true_tau"]) == 2
    assert out["true_tau"][0] == pytest.approx(likert_mean(4.0, 1.0) - likert_mean(5.0, 1.0))
