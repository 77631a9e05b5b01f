"""Synthetic ensembles and the exponential/binomial count model."""

import math

import numpy as np
import pytest

from coagg.sampling import coordinated_trial_counts, support_count
from coagg.synth import (
    DISJOINT_SINGLETONS,
    MarkovProvider,
    MixtureSpec,
    NonPositiveTemperatureError,
    PRIVATE_TOKEN_BASE,
    UNIFORM_PRIVATE_POOL,
    analytic_max_freq_cdf,
    analytic_max_freq_sample,
    analytic_max_freq_tail,
    ensemble_from_config,
    grouped_point_mass_ensemble,
    grouped_uniform_pair_ensemble,
    mixture_ensemble,
    planetz_like_ensemble,
    softmax_with_temperature,
    uniform_k_ensemble,
)


def test_softmax_equal_weights_uniform():
    for t in (0.1, 1.0, 17.0):
        d = softmax_with_temperature([2.0, 2.0, 2.0], t)
        for token in range(3):
            assert d.probability(token) == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_softmax_two_weight_closed_form():
    d = softmax_with_temperature([1.0, 0.0], 1.0, tokens=(5, 6))
    e = math.e
    assert d.probability(5) == pytest.approx(e / (1 + e), abs=1e-12)
    assert d.probability(6) == pytest.approx(1 / (1 + e), abs=1e-12)


def test_softmax_low_temperature_sharpens():
    d = softmax_with_temperature([1.0, 0.0], 0.01)
    assert d.probability(0) >= 1.0 - 1e-40


def test_softmax_rejects_bad_temperature():
    with pytest.raises(NonPositiveTemperatureError):
        softmax_with_temperature([1.0], 0.0)
    with pytest.raises(ValueError):
        softmax_with_temperature([1.0, 2.0], 1.0, tokens=(1,))


def test_uniform_k_structure():
    ens = uniform_k_ensemble(4, 1)
    assert all(d.entries == {1: 1.0} for d in ens)
    ens = uniform_k_ensemble(30, 5)
    assert support_count(ens, 1, 1.0 / 5.0) == 30
    assert [d.teacher_id for d in ens] == list(range(30))


def test_mixture_alpha_one_is_common():
    spec = MixtureSpec(alpha=1.0, common={1: 0.5, 2: 0.5})
    ens = mixture_ensemble(spec, 7)
    assert all(d.entries == {1: 0.5, 2: 0.5} for d in ens)


def test_mixture_alpha_zero_disjoint():
    spec = MixtureSpec(alpha=0.0, common={1: 1.0})
    ens = mixture_ensemble(spec, 6)
    supports = [set(d.entries) for d in ens]
    for i, s in enumerate(supports):
        assert s == {PRIVATE_TOKEN_BASE + i}


def test_mixture_private_mass_exact():
    spec = MixtureSpec(alpha=0.5, common={t: 0.25 for t in (1, 2, 3, 4)})
    ens = mixture_ensemble(spec, 100)
    for i, d in enumerate(ens):
        assert d.probability(PRIVATE_TOKEN_BASE + i) == 0.5
        assert d.probability(1) == 0.125


def test_mixture_private_pool_mode():
    spec = MixtureSpec(
        alpha=0.5,
        common={1: 1.0},
        private_mode=UNIFORM_PRIVATE_POOL,
        private_pool_size=5,
    )
    ens = mixture_ensemble(spec, 3)
    for d in ens:
        assert d.probability(PRIVATE_TOKEN_BASE + 1) == pytest.approx(0.1)
        assert len(d.entries) == 6
    with pytest.raises(ValueError):
        MixtureSpec(alpha=0.5, common={1: 1.0}, private_mode=UNIFORM_PRIVATE_POOL)


def test_mixture_spec_validation():
    with pytest.raises(ValueError):
        MixtureSpec(alpha=1.5, common={1: 1.0})
    with pytest.raises(ValueError):
        MixtureSpec(alpha=0.5, common={1: 0.7})
    with pytest.raises(ValueError):
        MixtureSpec(alpha=0.5, common={1: 1.0}, private_mode="nope")


def test_planetz_reduces_to_uniform_k():
    ens = planetz_like_ensemble(20, private_weight=0.0)
    assert ens == uniform_k_ensemble(20, 4)


def test_planetz_validation():
    with pytest.raises(ValueError):
        planetz_like_ensemble(10, special_tokens=(1, 2, 3))
    with pytest.raises(ValueError):
        planetz_like_ensemble(10, special_weights=(0.5, 0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        planetz_like_ensemble(10, private_weight=1.0)


def dominance_fraction(private_weight, seed, trials=1000, n=400):
    ens = planetz_like_ensemble(n, private_weight=private_weight)
    tc = coordinated_trial_counts(ens, seed, trials, tracked_tokens=(1, 2, 3, 4))
    return float(np.mean(tc.tracked_counts.max(axis=1) > n / 2))


def test_planetz_dominance_band_and_monotonicity():
    # the common part wins a teacher exactly when it beats that teacher's
    # private race, so heavier private weight means fewer dominant trials
    mid = dominance_fraction(0.5, seed=31)
    assert 0.35 <= mid <= 0.65
    low = dominance_fraction(0.3, seed=32)
    high = dominance_fraction(0.7, seed=33)
    assert low > mid > high


def test_grouped_ensembles():
    ens = grouped_point_mass_ensemble(3, 4)
    assert len(ens) == 12
    assert ens[0].entries == {1: 1.0}
    assert ens[11].entries == {3: 1.0}
    pairs = grouped_uniform_pair_ensemble(2, 5)
    assert pairs[0].entries == {1: 0.5, 2: 0.5}
    assert pairs[9].entries == {3: 0.5, 4: 0.5}
    with pytest.raises(ValueError):
        grouped_point_mass_ensemble(0, 4)


def test_analytic_sample_alpha_one():
    rng = np.random.default_rng(0)
    assert all(analytic_max_freq_sample(1.0, 50, rng) == 50 for _ in range(20))


def test_analytic_tail_integration_value():
    # closed-form small-alpha approximation 1 - e^{-alpha ln2/(1-alpha)}
    approx = 1.0 - math.exp(-0.05 * math.log(2) / 0.95)
    value = analytic_max_freq_tail(0.05, 400, 200)
    assert approx == pytest.approx(0.0359, abs=5e-4)
    assert value == pytest.approx(approx, abs=0.004)
    rng = np.random.default_rng(1)
    draws = [analytic_max_freq_sample(0.05, 400, rng) for _ in range(20_000)]
    assert abs(np.mean(np.asarray(draws) >= 200) - value) <= 0.004


def test_analytic_tail_edges():
    assert analytic_max_freq_tail(0.3, 100, 0) == 1.0
    assert analytic_max_freq_tail(0.3, 100, 101) == 0.0
    assert analytic_max_freq_tail(1.0, 100, 100) == 1.0
    with pytest.raises(ValueError):
        analytic_max_freq_tail(0.0, 100, 10)


def test_analytic_cdf_consistent_with_tail():
    thresholds = [0, 10, 50, 99]
    cdf = analytic_max_freq_cdf(0.4, 100, thresholds)
    for t, c in zip(thresholds, cdf):
        assert c == pytest.approx(1.0 - analytic_max_freq_tail(0.4, 100, t + 1), abs=1e-9)
    assert np.all(np.diff(cdf) >= -1e-12)


def test_analytic_model_ks():
    alpha, n, trials = 0.5, 100, 100_000
    rng = np.random.default_rng(2)
    y = rng.exponential(scale=1.0 / alpha, size=trials)
    draws = rng.binomial(n, np.exp(-y * (1.0 - alpha)))
    counts = np.bincount(draws, minlength=n + 1)
    emp_cdf = np.cumsum(counts) / trials
    model_cdf = analytic_max_freq_cdf(alpha, n, np.arange(n + 1))
    assert np.abs(emp_cdf - model_cdf).max() <= 0.01


def test_coordinated_winner_dominates_model():
    # the common winner keeps a teacher unless that teacher's private part
    # wins its race, so the simulated count should sit at or above the model
    trials = 100_000
    for alpha in (0.1, 0.5, 0.9):
        spec = MixtureSpec(alpha=alpha, common={t: 0.25 for t in (1, 2, 3, 4)})
        ens = mixture_ensemble(spec, 400)
        tc = coordinated_trial_counts(ens, 41, trials, tracked_tokens=(1, 2, 3, 4))
        winner = np.sort(tc.tracked_counts.max(axis=1))
        deciles = np.quantile(winner, np.arange(0.1, 1.0, 0.1))
        model_cdf = analytic_max_freq_cdf(alpha, 400, deciles)
        emp_cdf = np.searchsorted(winner, deciles, side="right") / trials
        se = np.sqrt(np.maximum(emp_cdf * (1 - emp_cdf), 1e-9) / trials)
        assert np.all(emp_cdf <= model_cdf + 3 * se)


def test_yield_scaling_near_alpha():
    # P[winner count >= n/2] tracks alpha for small alpha
    trials, n = 40_000, 400
    for alpha in (0.02, 0.05, 0.1):
        spec = MixtureSpec(alpha=alpha, common={t: 0.25 for t in (1, 2, 3, 4)})
        ens = mixture_ensemble(spec, n)
        tc = coordinated_trial_counts(ens, 43, trials, tracked_tokens=(1, 2, 3, 4))
        rate = float(np.mean(tc.tracked_counts.max(axis=1) >= n / 2))
        assert 0.5 <= rate / alpha <= 1.5


def test_markov_provider_rows():
    prov = MarkovProvider(3, {None: {1: 1.0}, 1: {2: 0.5, 3: 0.5}})
    start = prov(())
    assert len(start) == 3
    assert start[0].entries == {1: 1.0}
    nxt = prov((1,))
    assert nxt[2].entries == {2: 0.5, 3: 0.5}
    with pytest.raises(KeyError):
        prov((9,))


def test_ensemble_from_config_kinds():
    assert ensemble_from_config({"kind": "uniform_k", "n": 3, "k": 2}) == uniform_k_ensemble(3, 2)
    mix = ensemble_from_config({"kind": "mixture", "n": 5, "alpha": 0.5})
    assert mix[0].probability(1) == pytest.approx(0.125)
    dis = ensemble_from_config({"kind": "disjoint", "n": 4})
    assert set(dis[2].entries) == {PRIVATE_TOKEN_BASE + 2}
    groups = ensemble_from_config({"kind": "groups", "groups": 2, "group_size": 3})
    assert len(groups) == 6
    with pytest.raises(ValueError):
        ensemble_from_config({"kind": "wat", "n": 3})
