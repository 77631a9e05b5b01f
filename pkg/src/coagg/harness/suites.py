"""Named ensemble suites used by runners and checks.

Suites fix everything the bounds depend on (sizes, weights, support levels)
so every report row can pre-register its bound before any sampling happens.
"""

import dataclasses
from typing import Mapping, Sequence

from ..core import TeacherDistribution, TokenId
from ..synth import (
    DISJOINT_SINGLETONS,
    MixtureSpec,
    ensemble_from_config,
    grouped_point_mass_ensemble,
    grouped_uniform_pair_ensemble,
    mixture_ensemble,
    planetz_like_ensemble,
    uniform_k_ensemble,
)
from .reports import ConfigError

UNIFORM_COMMON_4 = {1: 0.25, 2: 0.25, 3: 0.25, 4: 0.25}


@dataclasses.dataclass(frozen=True)
class SuiteSpec:
    """A named ensemble recipe plus the support levels its checks probe."""

    name: str
    kind: str
    n: int
    k: int = 0
    alpha: float = 0.0
    groups: int = 0
    special_weights: tuple[float, ...] = ()
    private_weight: float = 0.0

    def build(self) -> list[TeacherDistribution]:
        if self.kind == "uniform_k":
            return uniform_k_ensemble(self.n, self.k)
        if self.kind == "mixture":
            spec = MixtureSpec(
                alpha=self.alpha,
                common=dict(UNIFORM_COMMON_4),
                private_mode=DISJOINT_SINGLETONS,
            )
            return mixture_ensemble(spec, self.n)
        if self.kind == "planetz":
            return planetz_like_ensemble(
                self.n,
                special_weights=self.special_weights,
                private_weight=self.private_weight,
            )
        if self.kind == "groups_point_mass":
            return grouped_point_mass_ensemble(self.groups, self.n // self.groups)
        if self.kind == "groups_pairs":
            return grouped_uniform_pair_ensemble(self.groups, self.n // self.groups)
        if self.kind == "disjoint":
            spec = MixtureSpec(
                alpha=0.0, common={1: 1.0}, private_mode=DISJOINT_SINGLETONS
            )
            return mixture_ensemble(spec, self.n)
        raise ConfigError(f"unknown suite kind {self.kind!r}")

    def common_tokens(self) -> tuple[TokenId, ...]:
        """Tokens every teacher's distribution shares."""
        if self.kind == "uniform_k":
            return tuple(range(1, self.k + 1))
        if self.kind in ("mixture", "planetz"):
            return (1, 2, 3, 4)
        return ()

    def support_levels(self) -> tuple[tuple[TokenId, float], ...]:
        """(token, q) pairs for transfer checks: q at and below the shared
        per-teacher probability, plus one private-token level for mixtures."""
        if self.kind == "uniform_k":
            q = 1.0 / self.k
            return ((1, q), (1, q / 2.0), (2, q))
        if self.kind == "mixture":
            q = self.alpha / 4.0
            private = 1_000_000  # teacher 0's singleton
            return ((1, q), (1, q / 2.0), (2, q), (private, 1.0 - self.alpha))
        if self.kind == "planetz":
            alpha = 1.0 - self.private_weight
            return tuple(
                (t, alpha * w) for t, w in zip((1, 2, 3, 4), self.special_weights)
            )
        raise ConfigError(f"suite {self.name!r} has no transfer levels")


SUITES: Mapping[str, SuiteSpec] = {
    "uniform4": SuiteSpec(name="uniform4", kind="uniform_k", n=1000, k=4),
    "uniform8": SuiteSpec(name="uniform8", kind="uniform_k", n=1000, k=8),
    "uniform16": SuiteSpec(name="uniform16", kind="uniform_k", n=1000, k=16),
    "uniform64": SuiteSpec(name="uniform64", kind="uniform_k", n=1000, k=64),
    "mixture01": SuiteSpec(name="mixture01", kind="mixture", n=400, alpha=0.1),
    "mixture05": SuiteSpec(name="mixture05", kind="mixture", n=400, alpha=0.5),
    "planetz": SuiteSpec(
        name="planetz",
        kind="planetz",
        n=400,
        special_weights=(0.3, 0.27, 0.23, 0.2),
        private_weight=0.5,
    ),
    "groups10": SuiteSpec(name="groups10", kind="groups_point_mass", n=400, groups=10),
    "pairs4": SuiteSpec(name="pairs4", kind="groups_pairs", n=400, groups=4),
    "disjoint": SuiteSpec(name="disjoint", kind="disjoint", n=200),
    # small mixture whose counts straddle the release threshold; used for
    # boundary-wrapper statistics where per-query laws must stay cheap
    "boundary100": SuiteSpec(name="boundary100", kind="mixture", n=100, alpha=0.9),
}


def resolve_suite(name: str | None, config: Mapping | None = None) -> SuiteSpec:
    if name is None and config is not None and "suite" in config:
        name = config["suite"]
    if name is None:
        raise ConfigError("no suite named; pass --suite or put one in the config")
    suite = SUITES.get(name)
    if suite is None:
        raise ConfigError(f"unknown suite {name!r}; known: {sorted(SUITES)}")
    return suite


def ensemble_for(config: Mapping) -> tuple[str, list[TeacherDistribution]]:
    """Either a named suite or an inline ensemble config."""
    if "suite" in config:
        suite = resolve_suite(config["suite"])
        return suite.name, suite.build()
    if "ensemble" in config:
        try:
            return "inline", ensemble_from_config(config["ensemble"])
        except (KeyError, TypeError, ValueError) as exc:
            detail = f"missing key {exc}" if isinstance(exc, KeyError) else str(exc)
            raise ConfigError(f"bad ensemble section: {detail}") from exc
    raise ConfigError("config needs a 'suite' name or an 'ensemble' section")


def tracked_tokens_for(suite: SuiteSpec) -> Sequence[TokenId]:
    levels = suite.support_levels()
    return sorted({t for t, _ in levels})
