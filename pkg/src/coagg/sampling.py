"""Coordinated and independent ensemble sampling.

Coordinated draws share one exponential value per token across all teachers;
each teacher votes for the token maximizing prob/exp_value over its own
support, which keeps every teacher's marginal law intact while making
identically-distributed teachers vote identically.

Teachers with identical distributions are grouped so a race is resolved once
per group; anything that needs per-teacher votes expands the group result.
"""

import dataclasses
from typing import NamedTuple, Sequence

import numpy as np

from .core import (
    FrequencyHistogram,
    SharedRandomness,
    TeacherDistribution,
    TokenId,
    derive_key_arrays,
    exp_from_hash_np,
    _hash64_np,
)

_U64_MAX = np.uint64(0xFFFFFFFFFFFFFFFF)


@dataclasses.dataclass(frozen=True, eq=False)
class VoteVector:
    """Per-teacher votes for one coordinated or independent draw."""

    votes: np.ndarray  # uint64, one entry per teacher

    def __len__(self) -> int:
        return len(self.votes)

    def __iter__(self):
        return (int(v) for v in self.votes)

    def as_list(self) -> list[int]:
        return [int(v) for v in self.votes]


class EnsembleArrays:
    """Flattened, deduplicated view of an ensemble for vectorized sampling."""

    def __init__(self, ensemble: Sequence[TeacherDistribution]):
        if len(ensemble) == 0:
            raise ValueError("ensemble must contain at least one teacher")
        self.n_teachers = len(ensemble)
        self.teacher_ids = np.array([d.teacher_id for d in ensemble], dtype=np.int64)

        group_index: dict[tuple, int] = {}
        group_dists: list[TeacherDistribution] = []
        group_of_teacher = np.empty(self.n_teachers, dtype=np.int64)
        for i, dist in enumerate(ensemble):
            key = tuple(sorted(dist.entries.items()))
            g = group_index.get(key)
            if g is None:
                g = len(group_dists)
                group_index[key] = g
                group_dists.append(dist)
            group_of_teacher[i] = g
        self.group_of_teacher = group_of_teacher
        self.n_groups = len(group_dists)
        self.group_sizes = np.bincount(group_of_teacher, minlength=self.n_groups).astype(
            np.int64
        )

        tokens_parts = []
        probs_parts = []
        seg_lens = np.empty(self.n_groups, dtype=np.int64)
        for g, dist in enumerate(group_dists):
            toks = np.array(sorted(dist.entries), dtype=np.uint64)
            tokens_parts.append(toks)
            probs_parts.append(
                np.array([dist.entries[int(t)] for t in toks], dtype=np.float64)
            )
            seg_lens[g] = len(toks)
        self.seg_tokens = np.concatenate(tokens_parts)
        self.seg_probs = np.concatenate(probs_parts)
        self.seg_lens = seg_lens
        self.seg_starts = np.concatenate(([0], np.cumsum(seg_lens)[:-1])).astype(np.int64)
        self.unique_tokens, self.seg_token_idx = np.unique(
            self.seg_tokens, return_inverse=True
        )
        self.n_tokens = len(self.unique_tokens)
        self._teacher_cum = None

    # --- coordinated path -------------------------------------------------

    def group_votes(self, key_lo: np.ndarray, key_hi: np.ndarray) -> np.ndarray:
        """Group winners for a batch of seeds: (m, n_groups) uint64 token ids."""
        lo = np.asarray(key_lo, dtype=np.uint64).reshape(-1, 1)
        hi = np.asarray(key_hi, dtype=np.uint64).reshape(-1, 1)
        h = _hash64_np(lo, hi, self.unique_tokens[np.newaxis, :])
        u = exp_from_hash_np(h)
        scores = self.seg_probs[np.newaxis, :] / u[:, self.seg_token_idx]
        seg_max = np.maximum.reduceat(scores, self.seg_starts, axis=1)
        is_max = scores == np.repeat(seg_max, self.seg_lens, axis=1)
        masked = np.where(is_max, self.seg_tokens[np.newaxis, :], _U64_MAX)
        return np.minimum.reduceat(masked, self.seg_starts, axis=1)

    def count_matrix(self, gvotes: np.ndarray) -> np.ndarray:
        """Token counts (m, n_tokens) from group votes, weighted by group size."""
        m = gvotes.shape[0]
        vote_idx = np.searchsorted(self.unique_tokens, gvotes)
        flat = vote_idx + np.arange(m)[:, np.newaxis] * self.n_tokens
        weights = np.broadcast_to(self.group_sizes, gvotes.shape)
        counts = np.bincount(
            flat.ravel(), weights=weights.ravel(), minlength=m * self.n_tokens
        )
        return counts.reshape(m, self.n_tokens).astype(np.int64)

    def expand_votes(self, gvotes_row: np.ndarray) -> np.ndarray:
        return gvotes_row[self.group_of_teacher]

    # --- independent path -------------------------------------------------

    def _teacher_cumulative(self):
        if self._teacher_cum is None:
            tokens = self.seg_tokens
            probs = self.seg_probs
            starts = self.seg_starts[self.group_of_teacher]
            lens = self.seg_lens[self.group_of_teacher]
            t_tokens = np.concatenate(
                [tokens[s : s + l] for s, l in zip(starts, lens)]
            )
            t_probs = np.concatenate([probs[s : s + l] for s, l in zip(starts, lens)])
            t_starts = np.concatenate(([0], np.cumsum(lens)[:-1])).astype(np.int64)
            cum = np.cumsum(t_probs)
            base = np.concatenate(([0.0], cum[:-1]))[t_starts]
            totals = cum[t_starts + lens - 1] - base
            self._teacher_cum = (t_tokens, cum, base, totals, t_starts, t_starts + lens - 1)
        return self._teacher_cum

    def independent_votes(self, uniforms: np.ndarray) -> np.ndarray:
        """Votes (m, n_teachers) given uniforms in [0, 1) of the same shape."""
        t_tokens, cum, base, totals, t_first, t_last = self._teacher_cumulative()
        targets = base[np.newaxis, :] + uniforms * totals[np.newaxis, :]
        # side="right" keeps an exact-boundary target inside its own teacher's
        # segment; the clip guards against rounding past the segment end.
        idx = np.searchsorted(cum, targets, side="right")
        idx = np.clip(idx, t_first[np.newaxis, :], t_last[np.newaxis, :])
        return t_tokens[idx]


def as_arrays(ensemble) -> EnsembleArrays:
    if isinstance(ensemble, EnsembleArrays):
        return ensemble
    return EnsembleArrays(ensemble)


def coordinated_sample(
    ensemble, rho: SharedRandomness
) -> tuple[VoteVector, FrequencyHistogram]:
    """One coordinated draw: per-teacher votes plus their frequency histogram."""
    arrays = as_arrays(ensemble)
    lo = np.array([rho.seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    hi = np.array([(rho.seed >> 64) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    gvotes = arrays.group_votes(lo, hi)[0]
    votes = arrays.expand_votes(gvotes)
    counts = {}
    for g, tok in enumerate(gvotes):
        tok = int(tok)
        counts[tok] = counts.get(tok, 0) + int(arrays.group_sizes[g])
    hist = FrequencyHistogram(counts=counts, n_teachers=arrays.n_teachers)
    return VoteVector(votes=votes), hist


def independent_sample(ensemble, rng_seed) -> tuple[VoteVector, FrequencyHistogram]:
    """One draw with fresh per-teacher randomness (the uncoordinated baseline)."""
    arrays = as_arrays(ensemble)
    rng = np.random.default_rng(rng_seed) if isinstance(rng_seed, int) else rng_seed
    uniforms = rng.random((1, arrays.n_teachers))
    votes = arrays.independent_votes(uniforms)[0]
    hist = FrequencyHistogram.from_votes(int(v) for v in votes)
    return VoteVector(votes=votes), hist


def support_count(ensemble, token: TokenId, q: float) -> int:
    """Number of teachers assigning probability at least q to the token."""
    if isinstance(ensemble, EnsembleArrays):
        raise TypeError("support_count expects the raw distribution sequence")
    return sum(1 for d in ensemble if d.entries.get(token, 0.0) >= q)


def weighted_jaccard(dist_a: TeacherDistribution, dist_b: TeacherDistribution) -> float:
    tokens = set(dist_a.entries) | set(dist_b.entries)
    num = sum(min(dist_a.probability(t), dist_b.probability(t)) for t in tokens)
    den = sum(max(dist_a.probability(t), dist_b.probability(t)) for t in tokens)
    return num / den


class MatchRateResult(NamedTuple):
    match_rate: float
    jaccard: float


def pairwise_match_rate(
    dist_a: TeacherDistribution,
    dist_b: TeacherDistribution,
    trials: int,
    seed: int = 0,
) -> MatchRateResult:
    """Monte Carlo rate of identical votes under shared randomness, plus the
    closed-form weighted Jaccard similarity of the two distributions."""
    if trials < 10_000:
        raise ValueError("trials must be at least 10000")
    arrays = EnsembleArrays(
        [
            TeacherDistribution(entries=dict(dist_a.entries), teacher_id=0),
            TeacherDistribution(entries=dict(dist_b.entries), teacher_id=1),
        ]
    )
    matches = 0
    done = 0
    chunk = 200_000
    while done < trials:
        m = min(chunk, trials - done)
        lo, hi = derive_key_arrays(seed, np.arange(done, done + m))
        gv = arrays.group_votes(lo, hi)
        if arrays.n_groups == 1:
            matches += m
        else:
            va = gv[:, arrays.group_of_teacher[0]]
            vb = gv[:, arrays.group_of_teacher[1]]
            matches += int(np.sum(va == vb))
        done += m
    return MatchRateResult(
        match_rate=matches / trials, jaccard=weighted_jaccard(dist_a, dist_b)
    )


@dataclasses.dataclass
class TrialCounts:
    """Accumulated per-trial count statistics over many coordinated draws."""

    tracked_tokens: np.ndarray
    tracked_counts: np.ndarray  # (trials, len(tracked_tokens)) int64
    max_counts: np.ndarray  # (trials,) int64

    def counts_for(self, token: TokenId) -> np.ndarray:
        pos = int(np.searchsorted(self.tracked_tokens, np.uint64(token)))
        if pos >= len(self.tracked_tokens) or self.tracked_tokens[pos] != np.uint64(token):
            raise KeyError(f"token {token} was not tracked")
        return self.tracked_counts[:, pos]


def coordinated_trial_counts(
    ensemble,
    master_seed: int,
    trials: int,
    tracked_tokens: Sequence[TokenId] = (),
    start_index: int = 0,
) -> TrialCounts:
    """Vectorized coordinated draws: tracked-token counts and the max count
    per trial. Trial i uses the child seed derived from (master_seed, i)."""
    arrays = as_arrays(ensemble)
    tracked = np.asarray(sorted(tracked_tokens), dtype=np.uint64)
    tracked_idx = np.searchsorted(arrays.unique_tokens, tracked)
    present = (tracked_idx < arrays.n_tokens) & (
        arrays.unique_tokens[np.minimum(tracked_idx, arrays.n_tokens - 1)] == tracked
    )
    out_tracked = np.zeros((trials, len(tracked)), dtype=np.int64)
    out_max = np.zeros(trials, dtype=np.int64)
    concat = max(1, len(arrays.seg_tokens))
    chunk = max(64, int(3_000_000 / concat))
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        idx = np.arange(start_index + done, start_index + done + m)
        lo, hi = derive_key_arrays(master_seed, idx)
        gvotes = arrays.group_votes(lo, hi)
        counts = arrays.count_matrix(gvotes)
        if len(tracked):
            sel = counts[:, np.minimum(tracked_idx, arrays.n_tokens - 1)]
            out_tracked[done : done + m] = np.where(present[np.newaxis, :], sel, 0)
        out_max[done : done + m] = counts.max(axis=1)
        done += m
    return TrialCounts(
        tracked_tokens=tracked, tracked_counts=out_tracked, max_counts=out_max
    )


def independent_trial_counts(
    ensemble,
    rng_seed: int,
    trials: int,
    tracked_tokens: Sequence[TokenId] = (),
) -> TrialCounts:
    """Vectorized independent draws with the same outputs as the coordinated
    variant, for side-by-side comparisons."""
    arrays = as_arrays(ensemble)
    rng = np.random.default_rng(rng_seed)
    tracked = np.asarray(sorted(tracked_tokens), dtype=np.uint64)
    tracked_idx = np.searchsorted(arrays.unique_tokens, tracked)
    present = (tracked_idx < arrays.n_tokens) & (
        arrays.unique_tokens[np.minimum(tracked_idx, arrays.n_tokens - 1)] == tracked
    )
    out_tracked = np.zeros((trials, len(tracked)), dtype=np.int64)
    out_max = np.zeros(trials, dtype=np.int64)
    chunk = max(64, int(2_000_000 / arrays.n_teachers))
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        votes = arrays.independent_votes(rng.random((m, arrays.n_teachers)))
        vote_idx = np.searchsorted(arrays.unique_tokens, votes)
        flat = vote_idx + np.arange(m)[:, np.newaxis] * arrays.n_tokens
        counts = np.bincount(flat.ravel(), minlength=m * arrays.n_tokens).reshape(
            m, arrays.n_tokens
        )
        if len(tracked):
            sel = counts[:, np.minimum(tracked_idx, arrays.n_tokens - 1)]
            out_tracked[done : done + m] = np.where(present[np.newaxis, :], sel, 0)
        out_max[done : done + m] = counts.max(axis=1)
        done += m
    return TrialCounts(
        tracked_tokens=tracked, tracked_counts=out_tracked, max_counts=out_max
    )
