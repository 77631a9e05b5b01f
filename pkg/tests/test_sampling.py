"""Coordinated sampling, the independent baseline, and histogram diagnostics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coagg.core import SharedRandomness, TeacherDistribution, derive_seed
from coagg.sampling import (
    coordinated_sample,
    coordinated_trial_counts,
    independent_sample,
    independent_trial_counts,
    pairwise_match_rate,
    support_count,
    weighted_jaccard,
)
from coagg.synth import mixture_ensemble, MixtureSpec, uniform_k_ensemble


def test_point_mass_ensemble_unanimous():
    ens = [TeacherDistribution(entries={9: 1.0}, teacher_id=i) for i in range(5)]
    for s in range(20):
        votes, hist = coordinated_sample(ens, SharedRandomness.from_master(0, s))
        assert votes.as_list() == [9] * 5
        assert hist.counts == {9: 5}


def test_identical_teachers_vote_identically():
    ens = [
        TeacherDistribution(entries={1: 0.2, 2: 0.3, 3: 0.5}, teacher_id=i)
        for i in range(8)
    ]
    for s in range(50):
        votes, hist = coordinated_sample(ens, SharedRandomness.from_master(3, s))
        assert len(set(votes.as_list())) == 1
        assert list(hist.counts.values()) == [8]


def test_marginal_law_single_teacher():
    # empirical law of one teacher's vote over seeds tracks its distribution
    dist = TeacherDistribution(entries={1: 0.1, 2: 0.2, 3: 0.3, 4: 0.4})
    trials = 20_000
    tc = coordinated_trial_counts([dist], 11, trials, tracked_tokens=(1, 2, 3, 4))
    freqs = tc.tracked_counts.mean(axis=0)
    tv = 0.5 * sum(
        abs(freqs[i] - dist.probability(t)) for i, t in enumerate((1, 2, 3, 4))
    )
    assert tv <= 0.01


def test_half_support_pair_match_rate():
    a = TeacherDistribution(entries={1: 1.0})
    b = TeacherDistribution(entries={1: 0.5, 2: 0.5})
    res = pairwise_match_rate(a, b, 20_000, seed=5)
    # teacher b picks token 1 exactly when u_1 < u_2, a coin flip by symmetry
    assert abs(res.match_rate - 0.5) <= 0.01
    assert res.jaccard == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert res.match_rate >= res.jaccard


def test_match_rate_identical_and_disjoint():
    d = TeacherDistribution(entries={1: 0.25, 2: 0.75})
    assert pairwise_match_rate(d, d, 10_000).match_rate == 1.0
    assert weighted_jaccard(d, d) == 1.0
    other = TeacherDistribution(entries={8: 0.5, 9: 0.5})
    res = pairwise_match_rate(d, other, 10_000)
    assert res.match_rate == 0.0
    assert res.jaccard == 0.0


def test_match_rate_rejects_few_trials():
    d = TeacherDistribution(entries={1: 1.0})
    with pytest.raises(ValueError):
        pairwise_match_rate(d, d, 100)


def test_uniform4_dominance_frequencies():
    ens = uniform_k_ensemble(1000, 4)
    tc = coordinated_trial_counts(ens, 21, 10_000, tracked_tokens=(1, 2, 3, 4))
    assert np.all(tc.max_counts == 1000)
    dominated = tc.tracked_counts == 1000
    fractions = dominated.mean(axis=0)
    assert np.all(np.abs(fractions - 0.25) <= 0.02)
    assert fractions.sum() == 1.0


def test_independent_baseline_concentrates():
    n, k = 1000, 4
    ens = uniform_k_ensemble(n, k)
    tc = independent_trial_counts(ens, 17, 2000, tracked_tokens=(1, 2, 3, 4))
    assert np.all(tc.max_counts < 500)
    lo = n / k - 4 * np.sqrt(n / k)
    hi = n / k + 4 * np.sqrt(n / k)
    inside = (tc.tracked_counts >= lo) & (tc.tracked_counts <= hi)
    assert inside.all(axis=1).mean() >= 0.99


def test_independent_point_mass():
    ens = [TeacherDistribution(entries={4: 1.0}, teacher_id=i) for i in range(12)]
    _, hist = independent_sample(ens, 0)
    assert hist.counts == {4: 12}


def test_expected_frequency_matches_mass():
    spec = MixtureSpec(alpha=0.4, common={1: 0.5, 2: 0.25, 3: 0.25})
    ens = mixture_ensemble(spec, 50)
    trials = 40_000
    tokens = (1, 2, 3)
    tc = coordinated_trial_counts(ens, 29, trials, tracked_tokens=tokens)
    for i, t in enumerate(tokens):
        mass = sum(d.probability(t) for d in ens)
        counts = tc.tracked_counts[:, i]
        se = counts.std(ddof=1) / np.sqrt(trials)
        assert abs(counts.mean() - mass) <= 3 * se


def test_support_count():
    ens = uniform_k_ensemble(30, 5)
    assert support_count(ens, 1, 1.0 / 5.0) == 30
    assert support_count(ens, 1, 0.21) == 0
    assert support_count(ens, 777, 1e-9) == 0
    spec = MixtureSpec(alpha=0.3, common={1: 0.5, 2: 0.5})
    mix = mixture_ensemble(spec, 40)
    assert support_count(mix, 1, 0.3 * 0.5) == 40


@st.composite
def small_ensembles(draw):
    n = draw(st.integers(min_value=2, max_value=8))
    out = []
    for i in range(n):
        k = draw(st.integers(min_value=1, max_value=4))
        tokens = draw(
            st.lists(
                st.integers(min_value=1, max_value=12), min_size=k, max_size=k, unique=True
            )
        )
        weights = draw(
            st.lists(
                st.floats(min_value=0.05, max_value=1.0), min_size=k, max_size=k
            )
        )
        total = sum(weights)
        out.append(
            TeacherDistribution(
                entries={t: w / total for t, w in zip(tokens, weights)}, teacher_id=i
            )
        )
    return out


@given(
    ens=small_ensembles(),
    replacement=small_ensembles(),
    which=st.integers(min_value=0, max_value=7),
    seed=st.integers(min_value=0, max_value=2**32),
)
@settings(max_examples=60, deadline=None)
def test_single_swap_moves_one_vote(ens, replacement, which, seed):
    # fixed shared randomness: replacing one teacher shifts at most one vote,
    # so at most two histogram entries change, by +1 and -1
    swapped = list(ens)
    swapped[which % len(ens)] = TeacherDistribution(
        entries=dict(replacement[0].entries),
        teacher_id=swapped[which % len(ens)].teacher_id,
    )
    rho = SharedRandomness.from_master(seed, 0)
    _, h1 = coordinated_sample(ens, rho)
    _, h2 = coordinated_sample(swapped, rho)
    diffs = {}
    for t in set(h1.counts) | set(h2.counts):
        d = h2.counts.get(t, 0) - h1.counts.get(t, 0)
        if d:
            diffs[t] = d
    assert sorted(diffs.values()) in ([], [-1, 1])


def test_trial_counts_match_single_draws():
    # the vectorized path must agree with per-seed scalar sampling bit for bit
    spec = MixtureSpec(alpha=0.6, common={1: 0.5, 2: 0.3, 3: 0.2})
    ens = mixture_ensemble(spec, 9)
    tc = coordinated_trial_counts(ens, 77, 25, tracked_tokens=(1, 2, 3))
    for i in range(25):
        _, hist = coordinated_sample(ens, SharedRandomness.from_master(77, i))
        for col, t in enumerate((1, 2, 3)):
            assert tc.tracked_counts[i, col] == hist.counts.get(t, 0)
        assert tc.max_counts[i] == hist.max_count()


def test_trial_counts_start_index_continues_stream():
    ens = uniform_k_ensemble(20, 3)
    full = coordinated_trial_counts(ens, 13, 40, tracked_tokens=(1,))
    tail = coordinated_trial_counts(ens, 13, 15, tracked_tokens=(1,), start_index=25)
    assert np.array_equal(full.tracked_counts[25:], tail.tracked_counts)


def test_tracked_token_absent_everywhere():
    ens = uniform_k_ensemble(10, 2)
    tc = coordinated_trial_counts(ens, 1, 50, tracked_tokens=(999,))
    assert np.all(tc.counts_for(999) == 0)
    with pytest.raises(KeyError):
        tc.counts_for(1000)
