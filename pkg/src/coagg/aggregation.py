"""Private aggregation of coordinated votes, and the lockstep generation loop.

Three schemes:
  * homogeneous: noisy argmax released only above a majority-plus-L threshold,
    for ensembles expected to concentrate on one token;
  * heterogeneous via sampling: one histogram draw proportional to counts,
    sanitized before release, preserving vote diversity in the output law;
  * heterogeneous with individual charging: a count test at a random teacher
    sampling rate, charging only the teachers who contributed a borderline
    count rather than the whole ensemble.
"""

import dataclasses
import json
from typing import Callable, Sequence

import numpy as np

from . import accounting
from .accounting import PrivacyLedger
from .core import (
    BOT,
    TARGET_HIT,
    AggregateOutcome,
    Bot,
    PrivacyParams,
    SharedRandomness,
    TargetHit,
    TeacherDistribution,
    Token,
    TokenId,
    derive_seed,
)
from .dp_mech import (
    ThresholdOutcome,
    between_thresholds,
    boundary_wrapper,
    noisy_argmax,
    outcome_distribution,
    sanitize_sampled_histogram,
)
from .sampling import coordinated_sample

TeacherProvider = Callable[[Sequence[TokenId]], Sequence[TeacherDistribution]]


class ProviderFailureError(RuntimeError):
    pass


def aggregate_homogeneous(
    ensemble,
    rho: SharedRandomness,
    params: PrivacyParams,
    rng: np.random.Generator,
) -> AggregateOutcome:
    """Coordinated draw, then noisy argmax; release the winner only when its
    noisy count clears half the ensemble plus the error bound L."""
    _, hist = coordinated_sample(ensemble, rho)
    result = noisy_argmax(hist, params.eps0, params.delta0, rng)
    if result.token is not None and result.noisy_count > hist.n_teachers / 2.0 + params.L:
        return Token(token=result.token, sanitized_count=result.noisy_count)
    return BOT


def aggregate_heterogeneous_sampled(
    ensemble,
    rho: SharedRandomness,
    params: PrivacyParams,
    rng: np.random.Generator,
    k_samples: int = 1,
) -> AggregateOutcome:
    """Sample k_samples tokens with probability count/n each (with
    replacement), sanitize the sampled sub-histogram, and release one
    surviving token uniformly."""
    if k_samples < 1:
        raise ValueError("k_samples must be positive")
    _, hist = coordinated_sample(ensemble, rho)
    tokens = sorted(hist.counts)
    weights = np.array([hist.counts[t] for t in tokens], dtype=np.float64)
    weights /= weights.sum()
    picks = rng.choice(len(tokens), size=k_samples, p=weights)
    sampled = {tokens[int(i)]: hist.counts[tokens[int(i)]] for i in set(picks.tolist())}
    survivors = sanitize_sampled_histogram(
        sampled, params.eps0, params.delta0, rng, n_teachers=hist.n_teachers
    )
    if not survivors.counts:
        return BOT
    kept = sorted(survivors.counts)
    token = kept[int(rng.integers(len(kept)))]
    return Token(token=token, sanitized_count=survivors.counts[token])


def aggregate_heterogeneous_individual(
    ensemble: Sequence[TeacherDistribution],
    rho: SharedRandomness,
    params: PrivacyParams,
    ledger: PrivacyLedger,
    rng: np.random.Generator,
) -> AggregateOutcome:
    """Count test at a random sampling rate with individual charging.

    Removed teachers are excluded before sampling. A token drawn with
    probability proportional to its count is released when the subsampled
    count clears the (L, 3L) window; a borderline (between) outcome charges
    exactly the subsampled teachers who voted for it.
    """
    live = [d for d in ensemble if ledger.is_teacher_live(d.teacher_id)]
    if not live:
        return BOT
    votes, hist = coordinated_sample(live, rho)
    n_live = len(live)
    rate = int(rng.integers(1, n_live + 1)) / n_live
    tokens = sorted(hist.counts)
    weights = np.array([hist.counts[t] for t in tokens], dtype=np.float64)
    weights /= weights.sum()
    target = tokens[int(rng.choice(len(tokens), p=weights))]
    sampled_mask = rng.random(n_live) < rate
    vote_arr = votes.votes
    on_target = vote_arr == np.uint64(target)
    sub_count = int(np.sum(sampled_mask & on_target))
    outcome = between_thresholds(sub_count, params.L, 3 * params.L, params.eps0, rng)
    if outcome is ThresholdOutcome.BELOW:
        return BOT
    if outcome is ThresholdOutcome.BETWEEN:
        charged = [
            int(live[i].teacher_id)
            for i in np.flatnonzero(sampled_mask & on_target)
        ]
        accounting.charge_teachers(ledger, charged)
    return Token(token=target, sanitized_count=None)


@dataclasses.dataclass(frozen=True)
class StepRecord:
    step: int
    outcome: AggregateOutcome
    retries: int

    def to_json_obj(self) -> dict:
        if isinstance(self.outcome, Token):
            obj = {"step": self.step, "outcome": "token", "token": self.outcome.token}
            if self.outcome.sanitized_count is not None:
                obj["count"] = self.outcome.sanitized_count
        elif isinstance(self.outcome, TargetHit):
            obj = {"step": self.step, "outcome": "target"}
        else:
            obj = {"step": self.step, "outcome": "bot"}
        obj["retries"] = self.retries
        return obj


@dataclasses.dataclass
class LoopResult:
    steps: list[StepRecord]
    emitted: list[TokenId]
    budget_exhausted: bool

    def outcomes(self) -> list[AggregateOutcome]:
        return [s.outcome for s in self.steps]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(s.to_json_obj()) + "\n" for s in self.steps)


MODES = ("homogeneous", "sampled", "individual")


def lockstep_loop(
    provider: TeacherProvider,
    params: PrivacyParams,
    ledger: PrivacyLedger | None,
    max_tokens: int,
    seed: int,
    mode: str = "homogeneous",
    retry_cap: int = 3,
    use_wrapper: bool = False,
    k_samples: int = 1,
) -> LoopResult:
    """Generate up to max_tokens tokens in lockstep.

    Each step queries the provider with the emitted prefix and aggregates
    with fresh shared randomness. A non-token outcome is retried with new
    randomness up to retry_cap times; if the step still yields no token the
    loop records the failure and stops. Target hits charge the ledger and
    count as retries; an exhausted ledger ends the run cleanly.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if use_wrapper and mode != "homogeneous":
        raise ValueError("the boundary wrapper applies to the homogeneous mode only")
    if mode == "individual" and ledger is None:
        raise ValueError("individual mode requires a ledger")
    steps: list[StepRecord] = []
    emitted: list[TokenId] = []
    budget_exhausted = False
    for step in range(max_tokens):
        if ledger is not None and ledger.exhausted:
            budget_exhausted = True
            break
        if mode == "individual" and all(
            not ledger.is_teacher_live(d.teacher_id) for d in provider(tuple(emitted))
        ):
            budget_exhausted = True
            break
        outcome: AggregateOutcome = BOT
        retries = 0
        for attempt in range(retry_cap + 1):
            retries = attempt
            stream = step * (retry_cap + 1) + attempt
            rho = SharedRandomness.from_master(seed, stream)
            rng = np.random.default_rng(derive_seed(seed, 2**32 + stream))
            try:
                ensemble = provider(tuple(emitted))
            except Exception as exc:
                raise ProviderFailureError(f"provider failed at step {step}") from exc
            outcome = _aggregate_once(
                ensemble, rho, params, ledger, rng, mode, use_wrapper, k_samples
            )
            if isinstance(outcome, TargetHit):
                if ledger is not None:
                    accounting.charge_target(ledger)
                    if ledger.exhausted:
                        budget_exhausted = True
                        break
                continue
            if isinstance(outcome, Token):
                break
        steps.append(StepRecord(step=step, outcome=outcome, retries=retries))
        if isinstance(outcome, Token):
            emitted.append(outcome.token)
        else:
            break
    return LoopResult(steps=steps, emitted=emitted, budget_exhausted=budget_exhausted)


def _aggregate_once(
    ensemble, rho, params, ledger, rng, mode, use_wrapper, k_samples
) -> AggregateOutcome:
    if mode == "homogeneous":
        if use_wrapper:
            _, hist = coordinated_sample(ensemble, rho)
            law = outcome_distribution(hist, params)
            return boundary_wrapper(law, rng)
        return aggregate_homogeneous(ensemble, rho, params, rng)
    if mode == "sampled":
        return aggregate_heterogeneous_sampled(ensemble, rho, params, rng, k_samples)
    return aggregate_heterogeneous_individual(ensemble, rho, params, ledger, rng)
