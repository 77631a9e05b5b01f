"""Aggregation schemes and the lockstep generation loop."""

import json
import math

import numpy as np
import pytest

from coagg.accounting import PrivacyLedger, charge_teachers
from coagg.aggregation import (
    MODES,
    ProviderFailureError,
    StepRecord,
    aggregate_heterogeneous_individual,
    aggregate_heterogeneous_sampled,
    aggregate_homogeneous,
    lockstep_loop,
)
from coagg.core import (
    BOT,
    Bot,
    PrivacyParams,
    SharedRandomness,
    TargetHit,
    TeacherDistribution,
    Token,
)
from coagg.sampling import as_arrays
from coagg.synth import (
    ConstantProvider,
    MarkovProvider,
    MixtureSpec,
    grouped_point_mass_ensemble,
    mixture_ensemble,
    uniform_k_ensemble,
)


def params_with(L, eps0=1.0):
    return PrivacyParams(
        eps_total=10.0, delta_total=1e-5, eps0=eps0, delta0=0.01, L=L
    )


def make_ledger(hit_budget=1000, per_teacher_limit=1000):
    return PrivacyLedger(
        eps_total=1.0,
        delta_total=1e-5,
        eps0=0.01,
        delta0=0.01,
        hit_budget=hit_budget,
        per_teacher_limit=per_teacher_limit,
    )


# --- homogeneous ------------------------------------------------------------


def test_homogeneous_disjoint_is_bot():
    spec = MixtureSpec(alpha=0.0, common={1: 1.0})
    ens = as_arrays(mixture_ensemble(spec, 200))
    p = params_with(L=22)
    rng = np.random.default_rng(0)
    bots = sum(
        aggregate_homogeneous(ens, SharedRandomness.from_master(1, s), p, rng) == BOT
        for s in range(1000)
    )
    assert bots >= 990


def test_homogeneous_point_mass_releases():
    ens = as_arrays(
        [TeacherDistribution(entries={6: 1.0}, teacher_id=i) for i in range(100)]
    )
    p = params_with(L=22)
    rng = np.random.default_rng(1)
    hits = 0
    for s in range(1000):
        out = aggregate_homogeneous(ens, SharedRandomness.from_master(2, s), p, rng)
        if isinstance(out, Token):
            assert out.token == 6
            assert out.sanitized_count > 100 / 2 + 22
            hits += 1
    assert hits >= 990


def test_homogeneous_uniform4_released_law():
    ens = as_arrays(uniform_k_ensemble(1000, 4))
    p = params_with(L=22)
    rng = np.random.default_rng(2)
    released = []
    for s in range(10_000):
        out = aggregate_homogeneous(ens, SharedRandomness.from_master(3, s), p, rng)
        if isinstance(out, Token):
            released.append(out.token)
    assert len(released) >= 9900
    freqs = np.bincount(released, minlength=5)[1:5] / len(released)
    assert 0.5 * np.abs(freqs - 0.25).sum() <= 0.03


# --- sampled ----------------------------------------------------------------


def test_sampled_point_mass_always_releases():
    ens = as_arrays(
        [TeacherDistribution(entries={3: 1.0}, teacher_id=i) for i in range(100)]
    )
    p = params_with(L=22)
    rng = np.random.default_rng(3)
    for s in range(200):
        out = aggregate_heterogeneous_sampled(
            ens, SharedRandomness.from_master(4, s), p, rng
        )
        assert out == Token(3, out.sanitized_count)
        assert out.sanitized_count >= 11  # the keep threshold at these params


def test_sampled_rejects_bad_k():
    ens = uniform_k_ensemble(4, 2)
    with pytest.raises(ValueError):
        aggregate_heterogeneous_sampled(
            ens, SharedRandomness.from_master(0, 0), params_with(22),
            np.random.default_rng(0), k_samples=0,
        )


def test_sampled_groups_uniform_release():
    # 10 point-mass groups of 40: each token sampled with weight 1/10, and a
    # count of 40 survives sanitization essentially always
    ens = as_arrays(grouped_point_mass_ensemble(10, 40))
    p = params_with(L=22)
    rng = np.random.default_rng(4)
    runs = 10_000
    released = []
    for s in range(runs):
        out = aggregate_heterogeneous_sampled(
            ens, SharedRandomness.from_master(5, s), p, rng
        )
        assert isinstance(out, Token)
        released.append(out.token)
    freqs = np.bincount(released, minlength=11)[1:11] / runs
    assert np.all(np.abs(freqs - 0.1) <= 0.02)


def test_sampled_multi_draw_filters_light_tokens():
    # k_samples > 1 feeds several draws to sanitization, but a count of 5
    # sits six noise units under the keep threshold of 11 and should be
    # dropped almost always even when sampled
    ens = as_arrays(
        [
            TeacherDistribution(entries={1: 1.0}, teacher_id=i)
            for i in range(95)
        ]
        + [
            TeacherDistribution(entries={2: 1.0}, teacher_id=95 + i)
            for i in range(5)
        ]
    )
    p = params_with(L=22)
    rng = np.random.default_rng(5)
    seen2 = 0
    for s in range(500):
        out = aggregate_heterogeneous_sampled(
            ens, SharedRandomness.from_master(6, s), p, rng, k_samples=4
        )
        assert isinstance(out, Token)
        assert out.token in (1, 2)
        seen2 += out.token == 2
    assert seen2 <= 8


# --- individual charging ----------------------------------------------------


def test_individual_charges_exactly_the_on_target_sample():
    ens = grouped_point_mass_ensemble(4, 50)
    p = params_with(L=22)
    ledger = make_ledger()
    rng = np.random.default_rng(6)
    between_seen = 0
    for s in range(400):
        before = dict(ledger.per_teacher_used)
        out = aggregate_heterogeneous_individual(
            ens, SharedRandomness.from_master(7, s), p, ledger, rng
        )
        delta = {
            t: ledger.per_teacher_used.get(t, 0) - before.get(t, 0)
            for t in set(ledger.per_teacher_used) | set(before)
        }
        charged = {t for t, d in delta.items() if d}
        if charged:
            between_seen += 1
            assert isinstance(out, Token)
            assert all(d == 1 for d in delta.values() if d)
            # every charged teacher belongs to the released token's group
            group = (out.token - 1) * 50
            assert all(group <= t < group + 50 for t in charged)
            assert len(charged) <= 3 * p.L + 22  # window top plus noise margin
    assert between_seen > 20


def test_individual_excludes_removed_teachers():
    ens = grouped_point_mass_ensemble(2, 30)
    p = params_with(L=5)
    ledger = make_ledger(per_teacher_limit=1)
    # remove all of group 1 up front
    charge_teachers(ledger, range(30))
    rng = np.random.default_rng(7)
    for s in range(200):
        out = aggregate_heterogeneous_individual(
            ens, SharedRandomness.from_master(8, s), p, ledger, rng
        )
        if isinstance(out, Token):
            assert out.token == 2
    assert all(not ledger.is_teacher_live(t) for t in range(30))


def test_individual_empty_live_set_is_bot():
    ens = grouped_point_mass_ensemble(1, 5)
    ledger = make_ledger(per_teacher_limit=1)
    charge_teachers(ledger, range(5))
    out = aggregate_heterogeneous_individual(
        ens,
        SharedRandomness.from_master(9, 0),
        params_with(L=5),
        ledger,
        np.random.default_rng(8),
    )
    assert out == BOT


# --- the loop ---------------------------------------------------------------


def test_loop_point_mass_repeats_token():
    provider = ConstantProvider(
        [TeacherDistribution(entries={5: 1.0}, teacher_id=i) for i in range(100)]
    )
    res = lockstep_loop(provider, params_with(L=22), None, 8, seed=10)
    assert res.emitted == [5] * 8
    assert [s.outcome.token for s in res.steps] == [5] * 8
    assert not res.budget_exhausted


def test_loop_disjoint_stops_after_retries():
    spec = MixtureSpec(alpha=0.0, common={1: 1.0})
    provider = ConstantProvider(mixture_ensemble(spec, 200))
    res = lockstep_loop(provider, params_with(L=22), None, 8, seed=11)
    assert res.emitted == []
    assert len(res.steps) == 1
    assert res.steps[0].outcome == BOT
    assert res.steps[0].retries == 3
    assert res.to_jsonl() == '{"step": 0, "outcome": "bot", "retries": 3}\n'


def test_loop_respects_markov_transitions():
    transitions = {
        None: {1: 1.0},
        1: {2: 0.7, 3: 0.3},
        2: {1: 0.5, 4: 0.5},
        3: {4: 1.0},
        4: {1: 0.3, 2: 0.3, 3: 0.4},
    }
    provider = MarkovProvider(100, transitions)
    p = params_with(L=22)
    legal = 0
    total = 0
    for run in range(1000):
        res = lockstep_loop(provider, p, None, 5, seed=1000 + run)
        state = None
        for tok in res.emitted:
            total += 1
            legal += transitions[state].get(tok, 0.0) > 0.0
            state = tok
    assert total >= 4900  # releases are near-certain with identical teachers
    assert legal == total


def test_loop_deterministic_given_seed():
    provider = ConstantProvider(uniform_k_ensemble(500, 4))
    p = params_with(L=22)
    a = lockstep_loop(provider, p, None, 6, seed=12)
    b = lockstep_loop(provider, p, None, 6, seed=12)
    assert a.emitted == b.emitted
    assert [s.to_json_obj() for s in a.steps] == [s.to_json_obj() for s in b.steps]
    c = lockstep_loop(provider, p, None, 6, seed=13)
    assert a.emitted != c.emitted  # 4^6 sequences, collision essentially never


def test_loop_validates_arguments():
    provider = ConstantProvider(uniform_k_ensemble(10, 2))
    p = params_with(L=5)
    with pytest.raises(ValueError):
        lockstep_loop(provider, p, None, 4, seed=0, mode="wat")
    with pytest.raises(ValueError):
        lockstep_loop(provider, p, None, 4, seed=0, mode="sampled", use_wrapper=True)
    with pytest.raises(ValueError):
        lockstep_loop(provider, p, None, 4, seed=0, mode="individual")


def test_loop_wraps_provider_errors():
    def bad_provider(prefix):
        raise KeyError("no row")

    with pytest.raises(ProviderFailureError):
        lockstep_loop(bad_provider, params_with(L=5), None, 2, seed=0)


def test_loop_individual_all_removed_ends_cleanly():
    provider = ConstantProvider(grouped_point_mass_ensemble(2, 10))
    ledger = make_ledger(per_teacher_limit=1)
    charge_teachers(ledger, range(20))
    res = lockstep_loop(
        provider, params_with(L=5), ledger, 10, seed=14, mode="individual"
    )
    assert res.budget_exhausted
    assert res.steps == [] and res.emitted == []


def test_loop_individual_charging_erodes_the_ensemble():
    provider = ConstantProvider(grouped_point_mass_ensemble(2, 40))
    p = params_with(L=8)
    ledger = make_ledger(per_teacher_limit=1)
    res = lockstep_loop(provider, p, ledger, max_tokens=500, seed=14, mode="individual")
    # limit-1 charging eats the ensemble until the loop cannot continue
    assert len(res.emitted) < 500
    assert len(ledger.removed) > 0
    assert set(res.emitted) <= {1, 2}


def test_loop_wrapper_charges_targets_and_stops_at_budget():
    # 172 of 300 on the lead token puts its count right at the release
    # threshold, so the outcome law splits and the target keeps probability 1/3
    ens = [
        TeacherDistribution(entries={1: 1.0}, teacher_id=i) for i in range(172)
    ] + [
        TeacherDistribution(entries={2: 1.0}, teacher_id=172 + i) for i in range(128)
    ]
    provider = ConstantProvider(ens)
    p = params_with(L=22)
    ledger = make_ledger(hit_budget=3)
    res = lockstep_loop(
        provider, p, ledger, max_tokens=10_000, seed=15,
        mode="homogeneous", use_wrapper=True,
    )
    assert res.budget_exhausted
    assert ledger.hits_used == 3
    # hits inside a step retry silently; only the budget-filling one is kept
    target_steps = sum(isinstance(s.outcome, TargetHit) for s in res.steps)
    assert target_steps <= 1


def test_step_record_json_shapes():
    assert StepRecord(0, Token(4, 17), 1).to_json_obj() == {
        "step": 0, "outcome": "token", "token": 4, "count": 17, "retries": 1
    }
    assert StepRecord(2, Token(4), 0).to_json_obj() == {
        "step": 2, "outcome": "token", "token": 4, "retries": 0
    }
    assert StepRecord(1, TargetHit(), 2).to_json_obj() == {
        "step": 1, "outcome": "target", "retries": 2
    }
    obj = StepRecord(3, Bot(), 3).to_json_obj()
    assert json.loads(json.dumps(obj)) == {"step": 3, "outcome": "bot", "retries": 3}


def test_modes_tuple():
    assert MODES == ("homogeneous", "sampled", "individual")
