"""Budget ledger behavior."""

import pytest

from coagg.accounting import (
    ChargeStatus,
    NotLiveError,
    PrivacyLedger,
    charge_target,
    charge_teachers,
    default_hit_budget,
    suggested_teacher_count,
)


def make_ledger(hit_budget=100, per_teacher_limit=5):
    return PrivacyLedger(
        eps_total=1.0,
        delta_total=1e-5,
        eps0=0.01,
        delta0=0.01,
        hit_budget=hit_budget,
        per_teacher_limit=per_teacher_limit,
    )


def test_default_budget_calibrated_values():
    assert default_hit_budget(1.0, 0.01) == 100
    assert default_hit_budget(1.0, 0.001) == 10_000


def test_default_budget_fallback_warns():
    with pytest.warns(UserWarning):
        assert default_hit_budget(1.0, 0.5) == 2
    with pytest.warns(UserWarning):
        assert default_hit_budget(2.0, 0.01) == 200
    with pytest.raises(ValueError):
        default_hit_budget(0.0, 0.01)
    with pytest.raises(ValueError):
        default_hit_budget(1.0, -1.0)


def test_suggested_teacher_count():
    assert suggested_teacher_count(1.0, 0.01) == 10
    assert suggested_teacher_count(0.1, 0.01) == 93
    with pytest.raises(ValueError):
        suggested_teacher_count(1.0, 0.0)


def test_charge_target_sequence():
    ledger = make_ledger(hit_budget=100)
    ledger.hits_used = 99
    assert charge_target(ledger) is ChargeStatus.OK
    assert ledger.hits_used == 100
    assert ledger.exhausted
    assert charge_target(ledger) is ChargeStatus.EXHAUSTED
    assert ledger.hits_used == 100  # no overcharge


def test_fresh_ledger_first_charge():
    ledger = make_ledger()
    assert not ledger.exhausted
    charge_target(ledger)
    assert ledger.hits_used == 1


def test_with_default_budget():
    ledger = PrivacyLedger.with_default_budget(1.0, 1e-5, 0.01, 0.01, 3)
    assert ledger.hit_budget == 100
    assert ledger.per_teacher_limit == 3


def test_charge_teachers_limit_one():
    ledger = make_ledger(per_teacher_limit=1)
    removed = charge_teachers(ledger, {3, 7})
    assert removed == {3, 7}
    assert not ledger.is_teacher_live(3)
    assert ledger.is_teacher_live(4)


def test_charge_teachers_limit_two():
    ledger = make_ledger(per_teacher_limit=2)
    assert charge_teachers(ledger, {3}) == set()
    assert charge_teachers(ledger, {3}) == {3}
    with pytest.raises(NotLiveError):
        charge_teachers(ledger, {3})
    # the failed charge must not touch other teachers either
    ledger2 = make_ledger(per_teacher_limit=2)
    charge_teachers(ledger2, {1})
    charge_teachers(ledger2, {1})
    with pytest.raises(NotLiveError):
        charge_teachers(ledger2, {1, 5})
    assert ledger2.per_teacher_used.get(5, 0) == 0


def test_teacher_view_consistency():
    ledger = make_ledger(per_teacher_limit=2)
    charge_teachers(ledger, {1, 2})
    charge_teachers(ledger, {2})
    view = ledger.teacher_view()
    assert view.remaining == {1: 1, 2: 0}
    assert view.removed == frozenset({2})


def test_snapshot_round_trip():
    ledger = make_ledger(per_teacher_limit=1)
    charge_target(ledger)
    charge_teachers(ledger, {4})
    back = PrivacyLedger.from_json(ledger.to_json())
    assert back == ledger


def test_ledger_validation():
    with pytest.raises(ValueError):
        make_ledger(hit_budget=-1)
    with pytest.raises(ValueError):
        PrivacyLedger(
            eps_total=1.0,
            delta_total=1e-5,
            eps0=0.01,
            delta0=0.01,
            hit_budget=2,
            per_teacher_limit=1,
            hits_used=3,
        )
