"""Domain types and deterministic shared randomness.

The shared-randomness object maps (seed, token id) to an Exp(1) value through a
keyed integer mixer, so every consumer that holds the same seed sees the same
exponential value for the same token without any coordination at runtime.
"""

import dataclasses
import json
from typing import Iterable, Mapping, Sequence

import numpy as np

TokenId = int

PROB_SUM_TOL = 1e-9

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB
# Domain tag so seed derivation never shares a stream with token lookups.
_SPAWN_TAG = 0x5EED5EED5EED5EED


class DistributionError(ValueError):
    """Invalid teacher distribution."""


class NonPositiveProbabilityError(DistributionError):
    pass


class SumNotOneError(DistributionError):
    pass


class EmptySupportError(DistributionError):
    pass


def _check_entries(entries: Mapping[TokenId, float]) -> None:
    if not entries:
        raise EmptySupportError("distribution has empty support")
    total = 0.0
    for token, prob in entries.items():
        if not prob > 0.0:
            raise NonPositiveProbabilityError(
                f"token {token} has non-positive probability {prob}"
            )
        total += prob
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise SumNotOneError(f"probabilities sum to {total!r}, not 1")


@dataclasses.dataclass(frozen=True)
class TeacherDistribution:
    """One teacher's next-token distribution. Immutable after construction."""

    entries: Mapping[TokenId, float]
    teacher_id: int = 0

    def __post_init__(self):
        _check_entries(self.entries)

    def probability(self, token: TokenId) -> float:
        return self.entries.get(token, 0.0)

    def support(self) -> tuple[TokenId, ...]:
        return tuple(sorted(self.entries))


def validate_distribution(
    entries: Mapping[TokenId, float], teacher_id: int = 0
) -> TeacherDistribution:
    """Check the distribution invariants and wrap the entries.

    Raises NonPositiveProbabilityError, SumNotOneError, or EmptySupportError.
    """
    return TeacherDistribution(entries=dict(entries), teacher_id=teacher_id)


@dataclasses.dataclass(frozen=True)
class FrequencyHistogram:
    """Vote counts for one coordinated draw; counts sum to the ensemble size."""

    counts: Mapping[TokenId, int]
    n_teachers: int

    def __post_init__(self):
        total = 0
        for token, count in self.counts.items():
            if count < 1 or count != int(count):
                raise ValueError(f"count for token {token} must be a positive integer")
            total += count
        if total != self.n_teachers:
            raise ValueError(
                f"counts sum to {total}, expected n_teachers={self.n_teachers}"
            )

    @classmethod
    def from_votes(cls, votes: Iterable[TokenId]) -> "FrequencyHistogram":
        counts: dict[TokenId, int] = {}
        n = 0
        for v in votes:
            counts[int(v)] = counts.get(int(v), 0) + 1
            n += 1
        return cls(counts=counts, n_teachers=n)

    def max_count(self) -> int:
        return max(self.counts.values())

    def sorted_items(self) -> list[tuple[TokenId, int]]:
        return sorted(self.counts.items())


def _mix64(x: int) -> int:
    x = (x + _GOLDEN) & _M64
    x ^= x >> 30
    x = (x * _MIX_A) & _M64
    x ^= x >> 27
    x = (x * _MIX_B) & _M64
    x ^= x >> 31
    return x


def _mix64_np(x: np.ndarray) -> np.ndarray:
    # Mirrors _mix64 exactly; uint64 arithmetic wraps mod 2**64.
    with np.errstate(over="ignore"):
        x = x + np.uint64(_GOLDEN)
        x = x ^ (x >> np.uint64(30))
        x = x * np.uint64(_MIX_A)
        x = x ^ (x >> np.uint64(27))
        x = x * np.uint64(_MIX_B)
        x = x ^ (x >> np.uint64(31))
    return x


def _hash64(k0: int, k1: int, value: int) -> int:
    h = _mix64((value ^ k0) & _M64)
    return _mix64(h ^ k1)


def _hash64_np(k0, k1, values: np.ndarray) -> np.ndarray:
    h = _mix64_np(values ^ k0)
    return _mix64_np(h ^ k1)


def _exp_from_hash(h: int) -> float:
    # Top 53 bits, offset by half a step: U lies strictly inside (0, 1),
    # so -log(U) is finite and strictly positive. Routed through numpy's log
    # so scalar and vectorized lookups are bit-identical.
    return float(exp_from_hash_np(np.uint64(h)))


@dataclasses.dataclass(frozen=True)
class SharedRandomness:
    """128-bit-seeded pure function from token ids to Exp(1) values."""

    seed: int

    def __post_init__(self):
        if not 0 <= self.seed < (1 << 128):
            raise ValueError("seed must be a 128-bit non-negative integer")

    @property
    def _keys(self) -> tuple[int, int]:
        return self.seed & _M64, (self.seed >> 64) & _M64

    def exp_value(self, token: TokenId) -> float:
        k0, k1 = self._keys
        return _exp_from_hash(_hash64(k0, k1, int(token) & _M64))

    def exp_values(self, tokens: np.ndarray) -> np.ndarray:
        k0, k1 = self._keys
        h = _hash64_np(np.uint64(k0), np.uint64(k1), np.asarray(tokens, dtype=np.uint64))
        return exp_from_hash_np(h)

    @classmethod
    def from_master(cls, master_seed: int, index: int) -> "SharedRandomness":
        return cls(seed=derive_seed(master_seed, index))


def exp_from_hash_np(h: np.ndarray) -> np.ndarray:
    u = ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return -np.log(u)


def exp_from_seed(randomness: SharedRandomness, token: TokenId) -> float:
    """Shared exponential value for one token (spec'd scalar entry point)."""
    return randomness.exp_value(token)


def derive_seed(master_seed: int, index: int) -> int:
    """Derive a child 128-bit seed from a master seed and a stream index."""
    if not 0 <= master_seed < (1 << 128):
        raise ValueError("master_seed must be a 128-bit non-negative integer")
    if index < 0:
        raise ValueError("index must be non-negative")
    k0 = master_seed & _M64
    k1 = ((master_seed >> 64) ^ _SPAWN_TAG) & _M64
    lo = _hash64(k0, k1, (2 * index) & _M64)
    hi = _hash64(k0, k1, (2 * index + 1) & _M64)
    return (hi << 64) | lo


def derive_key_arrays(master_seed: int, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized derive_seed: (lo, hi) uint64 key words for each index."""
    k0 = np.uint64(master_seed & _M64)
    k1 = np.uint64(((master_seed >> 64) ^ _SPAWN_TAG) & _M64)
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        lo = _hash64_np(k0, k1, idx * np.uint64(2))
        hi = _hash64_np(k0, k1, idx * np.uint64(2) + np.uint64(1))
    return lo, hi


@dataclasses.dataclass(frozen=True)
class DiversityParams:
    """Transfer parameters: support threshold tau, floor factor beta, cap gamma."""

    tau: float
    beta: float
    gamma: float
    mu: float = 2.0

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")
        if self.gamma < 1:
            raise ValueError("gamma must be at least 1")
        if self.mu <= 1:
            raise ValueError("mu must exceed 1")


@dataclasses.dataclass(frozen=True)
class PrivacyParams:
    """Privacy budget plus the additive error bound L used by thresholds."""

    eps_total: float
    delta_total: float
    eps0: float
    delta0: float
    L: int
    threshold_T: int = 0

    def __post_init__(self):
        if self.eps0 <= 0 or self.eps_total <= 0:
            raise ValueError("epsilons must be positive")
        if self.eps0 > self.eps_total:
            raise ValueError("per-query eps0 cannot exceed eps_total")
        if not 0 < self.delta0 < 1:
            raise ValueError("delta0 must lie in (0, 1)")
        if not 0 <= self.delta_total < 1:
            raise ValueError("delta_total must lie in [0, 1)")
        if self.L < 1:
            raise ValueError("L must be a positive integer")
        if self.threshold_T < 0:
            raise ValueError("threshold_T must be non-negative")


@dataclasses.dataclass(frozen=True)
class Token:
    """A released token; sanitized_count is None when no count is released."""

    token: TokenId
    sanitized_count: int | None = None


@dataclasses.dataclass(frozen=True)
class Bot:
    """No token released for this query."""


@dataclasses.dataclass(frozen=True)
class TargetHit:
    """Boundary-wrapper outcome that charges the privacy ledger."""


AggregateOutcome = Token | Bot | TargetHit

BOT = Bot()
TARGET_HIT = TargetHit()


def ensemble_to_jsonl(ensemble: Sequence[TeacherDistribution], path: str) -> None:
    with open(path, "w") as fp:
        for dist in ensemble:
            probs = {str(t): dist.entries[t] for t in sorted(dist.entries)}
            fp.write(json.dumps({"teacher": dist.teacher_id, "probs": probs}) + "\n")


def ensemble_from_jsonl(path: str) -> list[TeacherDistribution]:
    out = []
    with open(path) as fp:
        for line in fp:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            entries = {int(t): float(p) for t, p in obj["probs"].items()}
            out.append(validate_distribution(entries, teacher_id=int(obj["teacher"])))
    return out
