"""Privacy budget tracking for target hits and per-teacher charges."""

import dataclasses
import enum
import json
import math
import warnings


class NotLiveError(ValueError):
    """A charge was attempted against an already-removed teacher."""


class ChargeStatus(enum.Enum):
    OK = "ok"
    EXHAUSTED = "exhausted"


def default_hit_budget(eps_total: float, eps0: float) -> int:
    """Number of affordable target hits.

    In the intended regime (eps_total = 1, eps0 <= 0.01) the budget is
    floor((10 * eps0)^-2); outside it a linear eps_total/eps0 fallback is
    used and flagged with a warning.
    """
    if eps_total <= 0 or eps0 <= 0:
        raise ValueError("epsilons must be positive")
    if eps_total == 1.0 and eps0 <= 0.01:
        value = (10.0 * eps0) ** -2
    else:
        warnings.warn(
            "hit budget outside the calibrated regime; using eps_total/eps0",
            stacklevel=2,
        )
        value = eps_total / eps0
    # tolerate float-decimal drift, e.g. (10*0.01)**-2 = 99.99999999999998
    return math.floor(value * (1.0 + 1e-9))


def suggested_teacher_count(eps0: float, delta0: float) -> int:
    """Config hint only: enough teachers that a 2*log(1/delta0) error bound
    stays a vanishing fraction of the ensemble."""
    if eps0 <= 0 or not 0 < delta0 < 1:
        raise ValueError("invalid privacy parameters")
    return math.ceil(2.0 * math.log(1.0 / delta0) / eps0)


@dataclasses.dataclass(frozen=True)
class ChargeLedgerView:
    """Read-only snapshot of per-teacher state."""

    remaining: dict[int, int]
    removed: frozenset[int]

    def __post_init__(self):
        for teacher, left in self.remaining.items():
            if (left == 0) != (teacher in self.removed):
                raise ValueError(f"teacher {teacher}: removed iff remaining == 0")


@dataclasses.dataclass
class PrivacyLedger:
    """Mutable budget state shared by a generation run."""

    eps_total: float
    delta_total: float
    eps0: float
    delta0: float
    hit_budget: int
    per_teacher_limit: int
    hits_used: int = 0
    per_teacher_used: dict[int, int] = dataclasses.field(default_factory=dict)
    removed: set[int] = dataclasses.field(default_factory=set)

    def __post_init__(self):
        if self.hit_budget < 0 or self.per_teacher_limit < 0:
            raise ValueError("budgets must be non-negative")
        if self.hits_used > self.hit_budget:
            raise ValueError("hits_used cannot exceed hit_budget")

    @classmethod
    def with_default_budget(
        cls, eps_total, delta_total, eps0, delta0, per_teacher_limit
    ) -> "PrivacyLedger":
        return cls(
            eps_total=eps_total,
            delta_total=delta_total,
            eps0=eps0,
            delta0=delta0,
            hit_budget=default_hit_budget(eps_total, eps0),
            per_teacher_limit=per_teacher_limit,
        )

    @property
    def exhausted(self) -> bool:
        return self.hits_used >= self.hit_budget

    def is_teacher_live(self, teacher_id: int) -> bool:
        return teacher_id not in self.removed

    def teacher_view(self) -> ChargeLedgerView:
        remaining = {
            t: max(0, self.per_teacher_limit - used)
            for t, used in self.per_teacher_used.items()
        }
        return ChargeLedgerView(remaining=remaining, removed=frozenset(self.removed))

    def snapshot(self) -> dict:
        return {
            "eps_total": self.eps_total,
            "delta_total": self.delta_total,
            "eps0": self.eps0,
            "delta0": self.delta0,
            "hit_budget": self.hit_budget,
            "hits_used": self.hits_used,
            "per_teacher_limit": self.per_teacher_limit,
            "per_teacher_used": {str(t): u for t, u in sorted(self.per_teacher_used.items())},
            "removed": sorted(self.removed),
        }

    def to_json(self) -> str:
        return json.dumps(self.snapshot(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PrivacyLedger":
        obj = json.loads(text)
        return cls(
            eps_total=obj["eps_total"],
            delta_total=obj["delta_total"],
            eps0=obj["eps0"],
            delta0=obj["delta0"],
            hit_budget=obj["hit_budget"],
            per_teacher_limit=obj["per_teacher_limit"],
            hits_used=obj["hits_used"],
            per_teacher_used={int(t): u for t, u in obj["per_teacher_used"].items()},
            removed=set(obj["removed"]),
        )


def charge_target(ledger: PrivacyLedger) -> ChargeStatus:
    """Charge one target hit. Charging at a full budget is a no-op that
    reports exhaustion; the charge that fills the budget still succeeds."""
    if ledger.hits_used >= ledger.hit_budget:
        return ChargeStatus.EXHAUSTED
    ledger.hits_used += 1
    return ChargeStatus.OK


def charge_teachers(ledger: PrivacyLedger, teacher_ids) -> set[int]:
    """Charge each listed teacher once; returns the newly removed set.

    Charging a removed teacher raises NotLiveError and leaves the ledger
    untouched.
    """
    ids = list(teacher_ids)
    for t in ids:
        if t in ledger.removed:
            raise NotLiveError(f"teacher {t} is already removed")
    newly_removed: set[int] = set()
    for t in ids:
        used = ledger.per_teacher_used.get(t, 0) + 1
        ledger.per_teacher_used[t] = used
        if used >= ledger.per_teacher_limit:
            ledger.removed.add(t)
            newly_removed.add(t)
    return newly_removed
