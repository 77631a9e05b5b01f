"""Synthetic teacher ensembles and the analytic max-frequency model.

Token-id conventions: shared/common tokens use small ids starting at 1;
teacher i's private token is PRIVATE_TOKEN_BASE + i, which keeps private
supports disjoint from every common support.
"""

import dataclasses
import json
import math
from typing import Mapping, Sequence

import numpy as np
from scipy import integrate, stats

from .core import TeacherDistribution, TokenId, validate_distribution

PRIVATE_TOKEN_BASE = 10**6


class NonPositiveTemperatureError(ValueError):
    pass


def softmax_with_temperature(
    weights: Sequence[float],
    temperature: float,
    tokens: Sequence[TokenId] | None = None,
    teacher_id: int = 0,
) -> TeacherDistribution:
    """Temperature-scaled softmax over the given weights, stabilized by
    subtracting the max weight before exponentiation."""
    if temperature <= 0:
        raise NonPositiveTemperatureError(f"temperature must be positive, got {temperature}")
    if len(weights) == 0:
        raise ValueError("weights must be non-empty")
    w = np.asarray(weights, dtype=np.float64)
    z = (w - w.max()) / temperature
    e = np.exp(z)
    p = e / e.sum()
    toks = list(tokens) if tokens is not None else list(range(len(w)))
    if len(toks) != len(w):
        raise ValueError("tokens and weights must have equal length")
    return validate_distribution(
        {int(t): float(pi) for t, pi in zip(toks, p)}, teacher_id=teacher_id
    )


def uniform_k_ensemble(n: int, k: int) -> list[TeacherDistribution]:
    """n identical teachers, each uniform over common tokens 1..k."""
    if n < 1 or k < 1:
        raise ValueError("n and k must be positive")
    entries = {t: 1.0 / k for t in range(1, k + 1)}
    return [TeacherDistribution(entries=dict(entries), teacher_id=i) for i in range(n)]


DISJOINT_SINGLETONS = "disjoint_singletons"
UNIFORM_PRIVATE_POOL = "uniform_over_private_pool"


@dataclasses.dataclass(frozen=True)
class MixtureSpec:
    """Shared-component mixture: alpha * common + (1 - alpha) * private."""

    alpha: float
    common: Mapping[TokenId, float]
    private_mode: str = DISJOINT_SINGLETONS
    private_pool_size: int = 0

    def __post_init__(self):
        # alpha = 0 (purely private teachers) is allowed as the degenerate
        # no-agreement ensemble; alpha = 1 drops the private component.
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        _ = validate_distribution(self.common)
        if self.private_mode not in (DISJOINT_SINGLETONS, UNIFORM_PRIVATE_POOL):
            raise ValueError(f"unknown private mode {self.private_mode!r}")
        if self.private_mode == UNIFORM_PRIVATE_POOL and self.private_pool_size < 1:
            raise ValueError("private pool mode needs a positive pool size")


def mixture_ensemble(spec: MixtureSpec, n: int) -> list[TeacherDistribution]:
    """n teachers sharing the common component at weight alpha, with the rest
    of the mass on the teacher's private component."""
    if n < 1:
        raise ValueError("n must be positive")
    out = []
    for i in range(n):
        entries: dict[TokenId, float] = {}
        if spec.alpha > 0.0:
            for t, p in spec.common.items():
                entries[int(t)] = spec.alpha * p
        private_mass = 1.0 - spec.alpha
        if private_mass > 0.0:
            if spec.private_mode == DISJOINT_SINGLETONS:
                entries[PRIVATE_TOKEN_BASE + i] = private_mass
            else:
                share = private_mass / spec.private_pool_size
                for j in range(spec.private_pool_size):
                    entries[PRIVATE_TOKEN_BASE + 1 + j] = share
        out.append(TeacherDistribution(entries=entries, teacher_id=i))
    return out


def planetz_like_ensemble(
    n: int,
    special_tokens: Sequence[TokenId] = (1, 2, 3, 4),
    special_weights: Sequence[float] | None = None,
    private_weight: float = 0.5,
) -> list[TeacherDistribution]:
    """Four shared candidate tokens (optionally with unequal preference)
    plus one private token per teacher."""
    if len(special_tokens) != 4:
        raise ValueError("expected exactly 4 special tokens")
    if not 0.0 <= private_weight < 1.0:
        raise ValueError("private_weight must lie in [0, 1)")
    if special_weights is None:
        special_weights = [0.25] * 4
    w = np.asarray(special_weights, dtype=np.float64)
    if len(w) != 4 or (w <= 0).any():
        raise ValueError("special_weights must be 4 positive values")
    if abs(float(w.sum()) - 1.0) > 1e-9:
        raise ValueError("special_weights must sum to 1")
    common = {int(t): float(wi) for t, wi in zip(special_tokens, w)}
    spec = MixtureSpec(alpha=1.0 - private_weight, common=common)
    return mixture_ensemble(spec, n)


def analytic_max_freq_sample(alpha: float, n: int, rng: np.random.Generator) -> int:
    """One draw from the two-stage count model: a rate-alpha exponential sets
    the per-teacher agreement probability, then a binomial counts agreeing
    teachers."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if n < 1:
        raise ValueError("n must be positive")
    if alpha == 1.0:
        return n
    y = rng.exponential(scale=1.0 / alpha)
    return int(rng.binomial(n, math.exp(-y * (1.0 - alpha))))


def analytic_max_freq_tail(alpha: float, n: int, threshold: float) -> float:
    """P[count >= threshold] under the analytic model, by numeric integration.

    Substituting s = e^{-y(1-alpha)} turns the exponential density into
    (alpha/(1-alpha)) * s^(alpha/(1-alpha) - 1) on (0, 1).
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if alpha == 1.0:
        return 1.0 if threshold <= n else 0.0
    t = math.ceil(threshold)
    if t <= 0:
        return 1.0
    if t > n:
        return 0.0
    exponent = alpha / (1.0 - alpha)

    def integrand(s):
        return exponent * s ** (exponent - 1.0) * stats.binom.sf(t - 1, n, s)

    value, _ = integrate.quad(integrand, 0.0, 1.0, limit=200)
    return min(1.0, max(0.0, value))


def analytic_max_freq_cdf(alpha: float, n: int, thresholds: Sequence[float]) -> np.ndarray:
    """P[count <= t] for each t, consistent with analytic_max_freq_tail."""
    return np.array(
        [1.0 - analytic_max_freq_tail(alpha, n, t + 1.0) for t in thresholds]
    )


# --- teacher providers ------------------------------------------------------


class ConstantProvider:
    """Same ensemble at every prefix."""

    def __init__(self, ensemble: Sequence[TeacherDistribution]):
        self.ensemble = list(ensemble)

    def __call__(self, prefix: Sequence[TokenId]) -> list[TeacherDistribution]:
        return self.ensemble


class MarkovProvider:
    """Identical teachers whose distribution depends on the last emitted
    token; transitions maps a previous token (or None for the start state)
    to a next-token distribution."""

    def __init__(self, n: int, transitions: Mapping[TokenId | None, Mapping[TokenId, float]]):
        if n < 1:
            raise ValueError("n must be positive")
        if None not in transitions:
            raise ValueError("transitions must include the start state None")
        self.n = n
        self.transitions = {
            state: dict(validate_distribution(dist).entries)
            for state, dist in transitions.items()
        }

    def __call__(self, prefix: Sequence[TokenId]) -> list[TeacherDistribution]:
        state = prefix[-1] if len(prefix) else None
        if state not in self.transitions:
            raise KeyError(f"no transition row for token {state}")
        entries = self.transitions[state]
        return [
            TeacherDistribution(entries=dict(entries), teacher_id=i)
            for i in range(self.n)
        ]


# --- config files -----------------------------------------------------------


def ensemble_from_config(config: Mapping) -> list[TeacherDistribution]:
    """Build an ensemble from a plain config mapping ({"kind": ..., ...})."""
    kind = config.get("kind")
    n = int(config.get("n", 0))
    if kind == "uniform_k":
        return uniform_k_ensemble(n, int(config["k"]))
    if kind == "mixture":
        common = config.get("common")
        if common is None:
            common_map = {t: 0.25 for t in (1, 2, 3, 4)}
        else:
            common_map = {int(t): float(p) for t, p in common.items()}
        spec = MixtureSpec(
            alpha=float(config["alpha"]),
            common=common_map,
            private_mode=config.get("private_mode", DISJOINT_SINGLETONS),
            private_pool_size=int(config.get("private_pool_size", 0)),
        )
        return mixture_ensemble(spec, n)
    if kind == "planetz":
        return planetz_like_ensemble(
            n,
            special_tokens=tuple(config.get("special_tokens", (1, 2, 3, 4))),
            special_weights=config.get("special_weights"),
            private_weight=float(config.get("private_weight", 0.5)),
        )
    if kind == "disjoint":
        spec = MixtureSpec(alpha=0.0, common={1: 1.0})
        return mixture_ensemble(spec, n)
    if kind == "point_mass":
        token = int(config.get("token", 1))
        return [
            TeacherDistribution(entries={token: 1.0}, teacher_id=i) for i in range(n)
        ]
    if kind == "groups":
        g = int(config["groups"])
        m = int(config["group_size"])
        return grouped_point_mass_ensemble(g, m)
    raise ValueError(f"unknown ensemble kind {kind!r}")


def grouped_point_mass_ensemble(groups: int, group_size: int) -> list[TeacherDistribution]:
    """groups point-mass blocks of group_size teachers; block j agrees on
    token j+1."""
    if groups < 1 or group_size < 1:
        raise ValueError("groups and group_size must be positive")
    out = []
    for j in range(groups):
        for i in range(group_size):
            out.append(
                TeacherDistribution(entries={j + 1: 1.0}, teacher_id=j * group_size + i)
            )
    return out


def grouped_uniform_pair_ensemble(groups: int, group_size: int) -> list[TeacherDistribution]:
    """groups blocks; block j is uniform over its own token pair."""
    out = []
    for j in range(groups):
        a, b = 2 * j + 1, 2 * j + 2
        for i in range(group_size):
            out.append(
                TeacherDistribution(
                    entries={a: 0.5, b: 0.5}, teacher_id=j * group_size + i
                )
            )
    return out


def provider_from_config(config: Mapping):
    kind = config.get("kind")
    if kind == "markov":
        transitions = {}
        for state, dist in config["transitions"].items():
            key = None if state in ("", "start", None) else int(state)
            transitions[key] = {int(t): float(p) for t, p in dist.items()}
        return MarkovProvider(int(config["n"]), transitions)
    if kind == "constant":
        return ConstantProvider(ensemble_from_config(config["ensemble"]))
    # bare ensemble configs act as constant providers
    return ConstantProvider(ensemble_from_config(config))


def load_config(path: str) -> dict:
    with open(path) as fp:
        return json.load(fp)
