"""Differentially private primitives over vote histograms.

All noise is two-sided geometric (discrete Laplace) at scale 2/eps0, so a
histogram swap (one count up by one, another down by one) shifts outcome
probabilities by a factor of at most e^{eps0}. The audit helpers enumerate
outcome laws exactly from the pmf so that bound can be checked outcome by
outcome rather than sampled.
"""

import dataclasses
import enum
import math
from typing import Mapping

import numpy as np

from .core import (
    BOT,
    AggregateOutcome,
    FrequencyHistogram,
    PrivacyParams,
    TargetHit,
    Token,
    TokenId,
)


class BadThresholdsError(ValueError):
    pass


def _rho(scale: float) -> float:
    return math.exp(-1.0 / scale)


def discrete_laplace_pmf(scale: float, z) -> float:
    """pmf of the two-sided geometric with parameter rho = e^{-1/scale}."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    r = _rho(scale)
    return (1.0 - r) / (1.0 + r) * r ** np.abs(z)


def discrete_laplace_cdf(scale: float, z) -> float:
    """P[Z <= z] in closed form (geometric series both sides of zero)."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    r = _rho(scale)
    z = np.asarray(z)
    neg = r ** (-z.astype(np.float64)) / (1.0 + r)
    pos = 1.0 - r ** (z.astype(np.float64) + 1.0) / (1.0 + r)
    out = np.where(z < 0, neg, pos)
    return out if out.shape else float(out)


def discrete_laplace_log_cdf(scale: float, z: np.ndarray) -> np.ndarray:
    """log P[Z <= z], stable far into both tails."""
    r = _rho(scale)
    z = np.asarray(z, dtype=np.float64)
    log_r = -1.0 / scale
    neg = -z * log_r - math.log1p(r)
    # the upper branch only evaluates where it is valid; feeding very negative
    # z into it would take log1p of something below -1
    zp = np.where(z < 0, 0.0, z)
    with np.errstate(divide="ignore"):
        pos = np.log1p(-np.exp((zp + 1.0) * log_r) / (1.0 + r))
    return np.where(z < 0, neg, pos)


def discrete_laplace(scale: float, rng: np.random.Generator, size=None):
    """Sample the difference of two geometrics, which has the target pmf."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    p = 1.0 - _rho(scale)
    if size is None:
        return int(rng.geometric(p) - rng.geometric(p))
    return (rng.geometric(p, size=size) - rng.geometric(p, size=size)).astype(np.int64)


def noise_tail_bound(scale: float, t: int) -> float:
    """P[|Z| >= t] for t >= 1, exact."""
    r = _rho(scale)
    return 2.0 * r**t / (1.0 + r)


def truncation_radius(eps0: float, mass_error: float = 1e-12) -> int:
    """Smallest radius with two-sided tail mass below mass_error, floored at 60."""
    scale = 2.0 / eps0
    r = _rho(scale)
    t = math.ceil(math.log(mass_error * (1.0 + r) / 2.0) / math.log(r))
    return max(60, t)


def noisy_max_error_bound(eps0: float, delta_fail: float, support_size: int) -> int:
    """Additive error bound L for the argmax report over support_size entries.

    With independent noise at scale 2/eps0 on each stored count plus the
    virtual zero entry, all s+1 noise values stay below L in absolute value
    with probability well above 1 - delta_fail.
    """
    if eps0 <= 0:
        raise ValueError("eps0 must be positive")
    if not 0 < delta_fail < 1:
        raise ValueError("delta_fail must lie in (0, 1)")
    if support_size < 1:
        raise ValueError("support_size must be positive")
    return math.ceil((4.0 / eps0) * math.log((support_size + 1) / delta_fail))


@dataclasses.dataclass(frozen=True)
class NoisyMaxResult:
    """Argmax winner and its noisy count; token None means the virtual zero
    entry won, i.e. no stored token survived the report."""

    token: TokenId | None
    noisy_count: int


def noisy_argmax(
    hist: FrequencyHistogram | Mapping[TokenId, int],
    eps0: float,
    delta_fail: float,
    rng: np.random.Generator,
) -> NoisyMaxResult:
    """Report-noisy-max over the stored counts plus one virtual zero entry.

    Ties go to the smallest token id; the virtual entry loses all ties. The
    returned count is clamped at zero.
    """
    counts = hist.counts if isinstance(hist, FrequencyHistogram) else hist
    scale = 2.0 / eps0
    best_token: TokenId | None = None
    best_val: int | None = None
    for token in sorted(counts):
        val = counts[token] + discrete_laplace(scale, rng)
        if best_val is None or val > best_val:
            best_token, best_val = token, val
    virtual = discrete_laplace(scale, rng)
    if best_val is None or virtual > best_val:
        best_token, best_val = None, virtual
    return NoisyMaxResult(token=best_token, noisy_count=max(0, int(best_val)))


class ThresholdOutcome(enum.Enum):
    BELOW = "below"
    BETWEEN = "between"
    ABOVE = "above"


def between_thresholds(
    count: int, low: int, high: int, eps0: float, rng: np.random.Generator
) -> ThresholdOutcome:
    """Classify a noisy count against a (low, high) window."""
    if low >= high:
        raise BadThresholdsError(f"low={low} must be below high={high}")
    noisy = count + discrete_laplace(2.0 / eps0, rng)
    if noisy < low:
        return ThresholdOutcome.BELOW
    if noisy > high:
        return ThresholdOutcome.ABOVE
    return ThresholdOutcome.BETWEEN


def between_thresholds_outcome_probs(
    count: int, low: int, high: int, eps0: float
) -> dict[ThresholdOutcome, float]:
    """Exact outcome law of between_thresholds via the noise cdf."""
    if low >= high:
        raise BadThresholdsError(f"low={low} must be below high={high}")
    scale = 2.0 / eps0
    p_below = float(discrete_laplace_cdf(scale, low - 1 - count))
    p_above = 1.0 - float(discrete_laplace_cdf(scale, high - count))
    return {
        ThresholdOutcome.BELOW: p_below,
        ThresholdOutcome.ABOVE: p_above,
        ThresholdOutcome.BETWEEN: 1.0 - p_below - p_above,
    }


def sanitize_keep_threshold(eps0: float, delta0: float) -> int:
    """Keep threshold for sanitized histograms: a true count of 2L survives
    with probability at least 1 - delta0, while a count of 1 survives with
    probability below delta0."""
    if not 0 < delta0 < 1:
        raise ValueError("delta0 must lie in (0, 1)")
    return math.ceil((2.0 / eps0) * math.log(1.0 / delta0)) + 1


@dataclasses.dataclass(frozen=True)
class SanitizedHistogram:
    """Noisy surviving counts; sums are not tied to the ensemble size."""

    counts: Mapping[TokenId, int]
    n_teachers: int
    keep_threshold: int


def sanitize_sampled_histogram(
    sampled: FrequencyHistogram | Mapping[TokenId, int],
    eps0: float,
    delta0: float,
    rng: np.random.Generator,
    n_teachers: int | None = None,
) -> SanitizedHistogram:
    """Add noise to every stored count and drop entries below the keep
    threshold. Absent tokens stay absent."""
    if isinstance(sampled, FrequencyHistogram):
        counts = sampled.counts
        n = sampled.n_teachers
    else:
        counts = sampled
        n = n_teachers if n_teachers is not None else sum(counts.values())
    threshold = sanitize_keep_threshold(eps0, delta0)
    scale = 2.0 / eps0
    kept: dict[TokenId, int] = {}
    for token in sorted(counts):
        noisy = counts[token] + discrete_laplace(scale, rng)
        if noisy >= threshold:
            kept[token] = int(noisy)
    return SanitizedHistogram(counts=kept, n_teachers=n, keep_threshold=threshold)


# --- exact outcome law of the homogeneous aggregate -------------------------


def homogeneous_outcome_core(
    token_ids: np.ndarray,
    counts: np.ndarray,
    n_teachers: int,
    eps0: float,
    L: int,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Exact win probabilities of the homogeneous aggregate for one histogram.

    token_ids must be ascending; counts aligned with it. Returns (candidate
    token ids, their Token probabilities, Bot probability). Tokens whose count
    cannot reach the release threshold even at the truncation radius are
    folded into Bot, and competitors are grouped by count value so the cost is
    O(candidates * distinct_counts * grid) rather than O(support * grid).

    Ties in the noisy argmax go to the smallest token id; the virtual zero
    entry loses every tie, so a competitor with a smaller id must land
    strictly below the winner's value (cdf at v-1) while larger ids and the
    virtual entry may land at it (cdf at v).
    """
    scale = 2.0 / eps0
    radius = truncation_radius(eps0)
    threshold = n_teachers / 2.0 + L
    v_lo = math.floor(threshold) + 1
    cand_mask = counts + radius >= v_lo
    cand_idx = np.flatnonzero(cand_mask)
    if len(cand_idx) == 0:
        return token_ids[:0], np.zeros(0), 1.0
    v_hi = int(counts[cand_idx].max()) + radius
    # leading extra grid point so cdf(v-1) is a shifted view of cdf(v)
    grid = np.arange(v_lo - 1, v_hi + 1, dtype=np.int64)
    distinct, inverse = np.unique(counts, return_inverse=True)
    mult = np.bincount(inverse, minlength=len(distinct))
    log_cdf = discrete_laplace_log_cdf(
        scale, grid[np.newaxis, :] - distinct[:, np.newaxis]
    )
    log_cdf_virtual = discrete_laplace_log_cdf(scale, grid)
    probs = np.zeros(len(cand_idx))
    for ci, j in enumerate(cand_idx):
        # among tokens sharing count d, how many precede j in id order
        smaller = np.bincount(inverse[:j], minlength=len(distinct))
        own = np.zeros(len(distinct), dtype=np.int64)
        own[inverse[j]] = 1
        at_v = mult - smaller - own
        log_total = (
            at_v @ log_cdf[:, 1:]
            + smaller @ log_cdf[:, :-1]
            + log_cdf_virtual[1:]
        )
        pmf_own = discrete_laplace_pmf(scale, grid[1:] - counts[j])
        probs[ci] = float(np.sum(pmf_own * np.exp(log_total)))
    p_bot = max(0.0, 1.0 - float(probs.sum()))
    return token_ids[cand_idx], probs, p_bot


def outcome_distribution(
    hist: FrequencyHistogram,
    params: PrivacyParams,
    method: str = "auto",
    mc_samples: int = 100_000,
    rng: np.random.Generator | None = None,
) -> dict[AggregateOutcome, float]:
    """Response law of the homogeneous aggregate for one fixed histogram.

    Returns probabilities for Token(j) per stored token (count marginalized
    out) and for Bot. Exact mode enumerates the noise pmf over a truncated
    value grid; Monte Carlo mode estimates the same law by sampling.
    """
    counts = dict(hist.counts)
    n = hist.n_teachers
    threshold = n / 2.0 + params.L
    tokens = sorted(counts)
    if method not in ("auto", "exact", "mc"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto":
        method = "exact" if len(set(counts.values())) <= 64 else "mc"

    if method == "mc":
        if rng is None:
            rng = np.random.default_rng(0)
        wins: dict[AggregateOutcome, float] = {Token(t): 0.0 for t in tokens}
        wins[BOT] = 0.0
        scale = 2.0 / params.eps0
        arr = np.array([counts[t] for t in tokens])
        for _ in range(mc_samples):
            noisy = arr + discrete_laplace(scale, rng, size=len(arr))
            virtual = discrete_laplace(scale, rng)
            best = int(np.max(noisy)) if len(noisy) else virtual
            if virtual > best:
                wins[BOT] += 1.0
            else:
                j = int(np.argmax(noisy))  # first index == smallest id on ties
                if noisy[j] > threshold:
                    wins[Token(tokens[j])] += 1.0
                else:
                    wins[BOT] += 1.0
        return {k: v / mc_samples for k, v in wins.items()}

    count_arr = np.array([counts[t] for t in tokens], dtype=np.int64)
    token_arr = np.array(tokens, dtype=np.int64)
    cand_tokens, cand_probs, p_bot = homogeneous_outcome_core(
        token_arr, count_arr, n, params.eps0, params.L
    )
    out = {Token(t): 0.0 for t in tokens}
    for t, p in zip(cand_tokens, cand_probs):
        out[Token(int(t))] = float(p)
    out[BOT] = p_bot
    return out


def noisy_argmax_outcome_probs(
    counts: Mapping[TokenId, int],
    eps0: float,
    values: tuple[int, int] | None = None,
) -> dict[tuple[TokenId | None, int], float]:
    """Exact law of noisy_argmax outcomes (winner, clamped count), with the
    virtual zero entry as winner None. Used by the adjacency audit.

    values fixes the enumeration grid as (low, high) inclusive; audits pass
    one shared grid for both histograms of a pair so the outcome key sets
    match exactly."""
    tokens = sorted(counts)
    count_arr = np.array([counts[t] for t in tokens] + [0], dtype=np.int64)
    scale = 2.0 / eps0
    radius = truncation_radius(eps0)
    if values is None:
        v_min = int(count_arr.min()) - radius
        v_max = int(count_arr.max()) + radius
    else:
        v_min, v_max = values
    grid = np.arange(v_min, v_max + 1, dtype=np.int64)
    s = len(count_arr)
    out: dict[tuple[TokenId | None, int], float] = {}
    for j in range(s):
        pmf_own = discrete_laplace_pmf(scale, grid - count_arr[j])
        prob = pmf_own.copy()
        for k in range(s):
            if k == j:
                continue
            # ids ascend with index; the virtual entry (last) loses all ties
            shift = 1 if k < j else 0
            prob *= discrete_laplace_cdf(scale, grid - count_arr[k] - shift)
        winner = tokens[j] if j < len(tokens) else None
        for v, p in zip(grid, prob):
            if p <= 0.0:
                continue
            key = (winner, max(0, int(v)))
            out[key] = out.get(key, 0.0) + float(p)
    return out


# --- boundary wrapper -------------------------------------------------------


def boundary_wrapper(
    outcomes: Mapping[AggregateOutcome, float], rng: np.random.Generator
) -> AggregateOutcome:
    """Sample a response, diverting probability min(1/3, 1 - max outcome
    probability) to TargetHit so near-ties cannot leak through the argmax."""
    p_top = target_probability(outcomes)
    if rng.random() < p_top:
        return TargetHit()
    keys = list(outcomes)
    probs = np.array([outcomes[k] for k in keys], dtype=np.float64)
    probs = probs / probs.sum()
    return keys[int(rng.choice(len(keys), p=probs))]


def target_probability(outcomes: Mapping[AggregateOutcome, float]) -> float:
    """The wrapper's TargetHit probability for a given response law."""
    total = float(sum(outcomes.values()))
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"outcome probabilities sum to {total!r}, not 1")
    return min(1.0 / 3.0, 1.0 - max(outcomes.values()))
