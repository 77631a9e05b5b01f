"""Experiment runners behind the CLI subcommands.

Each runner fixes its bounds from the suite definition before drawing a
single sample, runs the trials, and returns an ExperimentReport whose rows
compare empirical values against those pre-registered bounds.
"""

import dataclasses
import math
import time
from typing import Iterator, Mapping

import numpy as np

from ..accounting import PrivacyLedger
from ..aggregation import LoopResult, lockstep_loop
from ..core import BOT, PrivacyParams, Token, derive_seed
from ..dp_mech import (
    between_thresholds_outcome_probs,
    homogeneous_outcome_core,
    noisy_argmax_outcome_probs,
    noisy_max_error_bound,
    truncation_radius,
)
from ..sampling import (
    coordinated_trial_counts,
    independent_trial_counts,
    support_count,
)
from ..synth import (
    PRIVATE_TOKEN_BASE,
    MixtureSpec,
    analytic_max_freq_cdf,
    mixture_ensemble,
    provider_from_config,
    uniform_k_ensemble,
)
from .reports import ConfigError, DataTable, ExperimentReport, MetricRow
from .suites import resolve_suite

MIN_CHECK_TRIALS = 100_000


def _lower_row(metric: str, value: float, bound: float, se: float) -> MetricRow:
    return MetricRow(
        metric=metric,
        value=value,
        bound=bound,
        margin=value - bound,
        passed=value >= bound - 3.0 * se,
    )


def _upper_row(
    metric: str, value: float, bound: float, se: float = 0.0, slack: float = 0.0
) -> MetricRow:
    return MetricRow(
        metric=metric,
        value=value,
        bound=bound,
        margin=bound - value,
        passed=value <= bound + 3.0 * se + slack,
    )


def _band_row(metric: str, value: float, lo: float, hi: float) -> MetricRow:
    return MetricRow(
        metric=metric,
        value=value,
        bound=hi,
        margin=min(value - lo, hi - value),
        passed=lo <= value <= hi,
    )


def _tight_row(metric: str, value: float, bound: float, se: float) -> MetricRow:
    return MetricRow(
        metric=metric,
        value=value,
        bound=bound,
        margin=abs(value - bound),
        passed=abs(value - bound) <= 3.0 * se,
    )


def _binom_se(p: float, trials: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / trials)


def _check_trials(trials: int) -> int:
    if trials < MIN_CHECK_TRIALS:
        raise ConfigError(f"need at least {MIN_CHECK_TRIALS} trials, got {trials}")
    return trials


# --- transfer (support-level carryover) check -------------------------------


def run_lemma_transfer_check(config: Mapping) -> ExperimentReport:
    """Per (token, q, p): empirical Pr[count >= p * support_count] against the
    half-log lower bound (ln(1/p) / 2) * q."""
    t0 = time.perf_counter()
    suite = resolve_suite(config.get("suite"))
    trials = _check_trials(int(config.get("trials", MIN_CHECK_TRIALS)))
    seed = int(config.get("seed", 0))
    p_values = tuple(config.get("p_values", (0.5, 2.0 / 3.0)))
    for p in p_values:
        if not 0.0 < p < 1.0:
            raise ConfigError(f"p must lie in (0, 1), got {p}")

    ensemble = suite.build()
    checks = []
    for token, q in suite.support_levels():
        c_jq = support_count(ensemble, token, q)
        if c_jq == 0:
            continue  # vacuous level: no teacher reaches q
        for p in p_values:
            checks.append(
                {
                    "metric": f"{suite.name}:j{token}:q{q:.6g}:p{p:.6g}",
                    "token": token,
                    "count_threshold": p * c_jq - 1e-9,
                    "bound": 0.5 * math.log(1.0 / p) * q,
                }
            )
    if not checks:
        raise ConfigError(f"suite {suite.name!r} has no non-vacuous levels")

    tracked = sorted({c["token"] for c in checks})
    tc = coordinated_trial_counts(ensemble, seed, trials, tracked_tokens=tracked)
    rows = []
    for c in checks:
        emp = float(np.mean(tc.counts_for(c["token"]) >= c["count_threshold"]))
        rows.append(_lower_row(c["metric"], emp, c["bound"], _binom_se(emp, trials)))
    return ExperimentReport(
        name="lemma-check",
        config={"suite": suite.name, "trials": trials, "seed": seed},
        rows=rows,
        trials=trials,
        wall_time_s=time.perf_counter() - t0,
    )


# --- relevance (tail mass) check --------------------------------------------

ABSENT_TOKEN = 999_999_999


def run_relevance_check(config: Mapping) -> ExperimentReport:
    """Per (token, T): empirical Pr[count >= T] against the mean-mass bound
    (sum of per-teacher probabilities) / T, with tightness cases flagged."""
    t0 = time.perf_counter()
    suite = resolve_suite(config.get("suite"))
    trials = _check_trials(int(config.get("trials", MIN_CHECK_TRIALS)))
    seed = int(config.get("seed", 0))
    ensemble = suite.build()
    n = suite.n

    tokens: list[int] = [1]
    if suite.kind == "uniform_k" and suite.k >= 2:
        tokens.append(2)
    if suite.kind == "mixture":
        tokens.append(PRIVATE_TOKEN_BASE)  # teacher 0's singleton
    tokens.append(ABSENT_TOKEN)

    thresholds = sorted({1, n // 4, n // 2, n})
    checks = []
    for token in tokens:
        mass = float(sum(d.probability(token) for d in ensemble))
        for t_value in thresholds:
            tight = (suite.kind == "uniform_k" and token != ABSENT_TOKEN and t_value == n) or (
                token == PRIVATE_TOKEN_BASE and t_value == 1
            )
            checks.append(
                {
                    "metric": f"{suite.name}:j{token}:T{t_value}" + (":tight" if tight else ""),
                    "token": token,
                    "threshold": t_value,
                    "bound": mass / t_value,
                    "tight": tight,
                }
            )

    tc = coordinated_trial_counts(
        ensemble, seed, trials, tracked_tokens=sorted(set(tokens))
    )
    rows = []
    for c in checks:
        emp = float(np.mean(tc.counts_for(c["token"]) >= c["threshold"]))
        se = _binom_se(emp, trials)
        if c["tight"]:
            rows.append(_tight_row(c["metric"], emp, c["bound"], se))
        else:
            rows.append(_upper_row(c["metric"], emp, c["bound"], se))
    return ExperimentReport(
        name="relevance-check",
        config={"suite": suite.name, "trials": trials, "seed": seed},
        rows=rows,
        trials=trials,
        wall_time_s=time.perf_counter() - t0,
    )


# --- response-law sweep over the common-knowledge weight --------------------

DEFAULT_ALPHAS = (0.02, 0.05, 0.1, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95, 1.0)


@dataclasses.dataclass(frozen=True)
class TrialLaw:
    """Exact response law of one coordinated draw, wrapper probability
    included."""

    p_token: float
    p_bot: float
    p_top: float
    tokens: tuple[int, ...]
    token_probs: tuple[float, ...]

    def outcome_law(self) -> dict:
        law = {Token(t): p for t, p in zip(self.tokens, self.token_probs)}
        law[BOT] = self.p_bot
        return law


def mixture_trial_counts(alpha: float, n: int, common_k: int, trials: int, seed: int):
    """Tracked common-token counts over coordinated draws of the standard
    disjoint-singleton mixture."""
    common = {t: 1.0 / common_k for t in range(1, common_k + 1)}
    ensemble = mixture_ensemble(MixtureSpec(alpha=alpha, common=common), n)
    tracked = tuple(range(1, common_k + 1))
    return coordinated_trial_counts(ensemble, seed, trials, tracked_tokens=tracked)


def law_from_common_counts(
    crow: np.ndarray, n: int, eps0: float, L: int, radius: int
) -> TrialLaw:
    """Exact homogeneous response law reconstructed from common-token counts.

    The law depends on the histogram only through the common counts and the
    number of private voters (each a count-1 singleton with an id above every
    common id), so the tracked counts determine it.
    """
    n_priv = n - int(crow.sum())
    cmax = max(int(crow.max()), 1 if n_priv else 0)
    if cmax + radius <= n / 2.0 + L:
        # every stored count is too far below the release bar for the
        # truncated noise to cross it; the law is Bot up to ~1e-12
        return TrialLaw(0.0, 1.0, 0.0, (), ())
    live = crow > 0
    ids = np.concatenate(
        [np.flatnonzero(live) + 1, PRIVATE_TOKEN_BASE + np.arange(n_priv)]
    ).astype(np.int64)
    counts = np.concatenate([crow[live], np.ones(n_priv, dtype=np.int64)]).astype(
        np.int64
    )
    cand, probs, p_bot = homogeneous_outcome_core(ids, counts, n, eps0, L)
    p_token = float(probs.sum()) if len(probs) else 0.0
    top = max(float(probs.max()) if len(probs) else 0.0, p_bot)
    return TrialLaw(
        p_token=p_token,
        p_bot=p_bot,
        p_top=min(1.0 / 3.0, 1.0 - top),
        tokens=tuple(int(t) for t in cand),
        token_probs=tuple(float(p) for p in probs),
    )


def iter_mixture_laws(
    alpha: float,
    n: int,
    eps0: float,
    L: int,
    trials: int,
    seed: int,
    common_k: int = 4,
) -> Iterator[TrialLaw]:
    """Exact per-draw response laws for the standard mixture ensemble."""
    tc = mixture_trial_counts(alpha, n, common_k, trials, seed)
    radius = truncation_radius(eps0)
    for i in range(trials):
        yield law_from_common_counts(tc.tracked_counts[i], n, eps0, L, radius)


def run_alpha_sweep(config: Mapping) -> ExperimentReport:
    """Mean wrapped response probabilities per mixture weight alpha."""
    t0 = time.perf_counter()
    alphas = tuple(config.get("alphas", DEFAULT_ALPHAS))
    if not alphas or any(not 0.0 < a <= 1.0 for a in alphas):
        raise ConfigError("alphas must lie in (0, 1]")
    n = int(config.get("n", 800))
    common_k = int(config.get("common_k", 4))
    eps0 = float(config.get("eps0", 1.0))
    delta0 = float(config.get("delta0", 0.01))
    trials = int(config.get("trials", 2000))
    tail_trials = int(config.get("tail_trials", 40_000))
    tail_cutoff = float(config.get("tail_cutoff", 0.1))
    seed = int(config.get("seed", 0))
    if trials < 1 or tail_trials < 1:
        raise ConfigError("trials must be positive")

    L = noisy_max_error_bound(eps0, delta0, common_k + n)
    sweep_rows = []
    cdf_rows = []
    ratio_checks = [a for a in alphas if a <= tail_cutoff]
    p_top_means = []
    p_top_trial_max = 0.0
    count_grid = np.arange(0, n + 1, max(1, n // 200))

    radius = truncation_radius(eps0)
    for ai, alpha in enumerate(alphas):
        t_alpha = tail_trials if alpha <= tail_cutoff else trials
        tc = mixture_trial_counts(alpha, n, common_k, t_alpha, derive_seed(seed, ai))
        tok_sum = bot_sum = top_sum = 0.0
        for i in range(t_alpha):
            law = law_from_common_counts(tc.tracked_counts[i], n, eps0, L, radius)
            tok_sum += (1.0 - law.p_top) * law.p_token
            bot_sum += (1.0 - law.p_top) * law.p_bot
            top_sum += law.p_top
            if law.p_top > p_top_trial_max:
                p_top_trial_max = law.p_top
        # the model CDF is for the top common count; tc.max_counts is floored
        # at 1 by the private singletons and disagrees with it at zero
        maxes = tc.tracked_counts.max(axis=1)
        p_token = tok_sum / t_alpha
        p_bot = bot_sum / t_alpha
        p_top = top_sum / t_alpha
        sweep_rows.append((float(alpha), p_token, p_bot, p_top))
        p_top_means.append(p_top)
        sim_cdf = np.searchsorted(np.sort(maxes), count_grid, side="right") / t_alpha
        model_cdf = analytic_max_freq_cdf(alpha, n, count_grid)
        for c, sc, mc in zip(count_grid, sim_cdf, model_cdf):
            cdf_rows.append((float(alpha), int(c), float(sc), float(mc)))

    rows = []
    for alpha, p_token, _, _ in sweep_rows:
        if alpha in ratio_checks:
            rows.append(
                _band_row(f"alpha{alpha:g}:token_over_alpha", p_token / alpha, 0.5, 1.5)
            )
    by_alpha = {r[0]: r for r in sweep_rows}
    if 1.0 in by_alpha:
        rows.append(
            MetricRow(
                "alpha1:p_token",
                by_alpha[1.0][1],
                0.99,
                by_alpha[1.0][1] - 0.99,
                by_alpha[1.0][1] >= 0.99,
            )
        )
        rows.append(_upper_row("alpha1:p_top", by_alpha[1.0][3], 0.01))
    rows.append(_upper_row("p_top_per_query_cap", p_top_trial_max, 1.0 / 3.0, slack=1e-12))
    peak_idx = int(np.argmax(p_top_means))
    rows.append(
        MetricRow(
            "p_top_peak_interior",
            float(alphas[peak_idx]),
            0.0,
            float(min(peak_idx, len(alphas) - 1 - peak_idx)),
            0 < peak_idx < len(alphas) - 1,
        )
    )
    rows.append(_upper_row("p_top_low_end", p_top_means[0], 0.02))

    return ExperimentReport(
        name="alpha-sweep",
        config={
            "alphas": list(alphas),
            "n": n,
            "common_k": common_k,
            "eps0": eps0,
            "delta0": delta0,
            "L": L,
            "trials": trials,
            "tail_trials": tail_trials,
            "seed": seed,
        },
        rows=rows,
        trials=sum(tail_trials if a <= tail_cutoff else trials for a in alphas),
        wall_time_s=time.perf_counter() - t0,
        data=DataTable(
            header=("alpha", "p_token", "p_bot", "p_top"),
            rows=tuple(sweep_rows),
        ),
        side_tables={
            "cdf": DataTable(
                header=("alpha", "count", "cdf_sim", "cdf_model"),
                rows=tuple(cdf_rows),
            )
        },
    )


# --- coordinated vs independent comparison ----------------------------------


def _trial_metrics(tc, n: int, n_specials: int):
    """Per-trial top/second special counts and the top non-special count.

    Private parts are per-teacher singletons, so the top non-special count is
    the indicator that anyone voted outside the specials.
    """
    special = tc.tracked_counts
    top = special.max(axis=1)
    second = np.partition(special, -2, axis=1)[:, -2] if n_specials >= 2 else np.zeros_like(top)
    other = (special.sum(axis=1) < n).astype(np.int64)
    return top, second, other


def run_sampling_compare(config: Mapping) -> ExperimentReport:
    """Sorted per-trial frequency curves for independent vs coordinated
    sampling, plus dominance and k-scaling checks."""
    t0 = time.perf_counter()
    suite = resolve_suite(config.get("suite", "planetz"))
    if suite.kind not in ("planetz", "uniform_k"):
        raise ConfigError("compare-sampling expects a planetz or uniform_k suite")
    trials = int(config.get("trials", 1000))
    seed = int(config.get("seed", 0))
    if trials < 100:
        raise ConfigError("need at least 100 trials for the curves")
    ensemble = suite.build()
    n = suite.n
    specials = suite.common_tokens()

    tc_coord = coordinated_trial_counts(ensemble, seed, trials, tracked_tokens=specials)
    tc_indep = independent_trial_counts(
        ensemble, derive_seed(seed, 1) % 2**63, trials, tracked_tokens=specials
    )
    c_top, c_second, c_other = _trial_metrics(tc_coord, n, len(specials))
    i_top, i_second, i_other = _trial_metrics(tc_indep, n, len(specials))

    def desc(x):
        return -np.sort(-x)

    curves = np.column_stack(
        [
            np.arange(trials),
            desc(c_top),
            desc(c_second),
            desc(c_other),
            desc(i_top),
            desc(i_second),
            desc(i_other),
        ]
    )
    data = DataTable(
        header=(
            "rank",
            "coord_top_special",
            "coord_second_special",
            "coord_top_other",
            "indep_top_special",
            "indep_second_special",
            "indep_top_other",
        ),
        rows=tuple(tuple(int(v) for v in row) for row in curves),
    )

    rows = []
    half = n / 2.0
    coord_dom = float(np.mean(tc_coord.max_counts > half))
    indep_dom = float(np.mean(tc_indep.max_counts > half))
    if suite.kind == "planetz":
        rows.append(_band_row(f"{suite.name}:coord_dominance_frac", coord_dom, 0.35, 0.65))
        rows.append(
            MetricRow(
                f"{suite.name}:indep_over_half_frac",
                indep_dom,
                0.0,
                -indep_dom,
                indep_dom == 0.0,
            )
        )
        dom_mask = tc_coord.max_counts > half
        if dom_mask.any():
            winners = np.argmax(tc_coord.tracked_counts[dom_mask], axis=1)
            emp = np.bincount(winners, minlength=len(specials)) / dom_mask.sum()
            weights = np.asarray(suite.special_weights, dtype=np.float64)
            tv = 0.5 * float(np.abs(emp - weights).sum())
            rows.append(_upper_row(f"{suite.name}:dominant_token_tv", tv, 0.1))
    else:
        rows.append(
            MetricRow(
                f"{suite.name}:coord_always_full",
                float(np.mean(tc_coord.max_counts == n)),
                1.0,
                0.0,
                bool(np.all(tc_coord.max_counts == n)),
            )
        )
        rows.append(
            MetricRow(
                f"{suite.name}:indep_under_half",
                float(np.mean(tc_indep.max_counts < half)),
                1.0,
                0.0,
                bool(np.all(tc_indep.max_counts < half)),
            )
        )

    # doubling the support should halve the independent top count and leave
    # the coordinated winner count (always n for identical teachers) alone
    ks_k = int(config.get("kscale_k", 4))
    ks_n = int(config.get("kscale_n", 1000))
    ks_trials = int(config.get("kscale_trials", 300))
    means = {}
    for mult, k in (("base", ks_k), ("double", 2 * ks_k)):
        ens_k = uniform_k_ensemble(ks_n, k)
        tck = coordinated_trial_counts(ens_k, derive_seed(seed, 100 + k), ks_trials)
        tik = independent_trial_counts(ens_k, derive_seed(seed, 200 + k), ks_trials)
        means[mult] = (
            float(tck.max_counts.mean()),
            float(tik.max_counts.mean()),
        )
    coord_ratio = means["double"][0] / means["base"][0]
    indep_ratio = means["double"][1] / means["base"][1]
    rows.append(_band_row(f"kscale{ks_k}:indep_top_ratio", indep_ratio, 0.45, 0.55))
    rows.append(_band_row(f"kscale{ks_k}:coord_top_ratio", coord_ratio, 0.95, 1.05))

    hist_trials = min(int(config.get("histogram_trials", 8)), trials)
    hist_rows = []
    for mode, tcm in (("coordinated", tc_coord), ("independent", tc_indep)):
        for trial in range(hist_trials):
            for pos, token in enumerate(specials):
                hist_rows.append(
                    (mode, trial, int(token), int(tcm.tracked_counts[trial, pos]), 1)
                )
            other_total = n - int(tcm.tracked_counts[trial].sum())
            hist_rows.append((mode, trial, 0, other_total, 0))

    return ExperimentReport(
        name="compare-sampling",
        config={"suite": suite.name, "trials": trials, "seed": seed},
        rows=rows,
        trials=trials,
        wall_time_s=time.perf_counter() - t0,
        data=data,
        side_tables={
            "histograms": DataTable(
                header=("mode", "trial", "token", "count", "is_special"),
                rows=tuple(hist_rows),
            )
        },
    )


# --- adjacency audit --------------------------------------------------------


def _audit_pairs(seed: int, three_token_pairs: int):
    """Adjacent histogram pairs: one teacher's vote moves between two stored
    tokens, with both post-swap counts kept positive so supports match."""
    pairs = [("nm_2-3_to_2-3", {1: 2, 2: 3}, {1: 2, 2: 3})]
    for a in range(1, 7):
        for b in range(2, 7):
            pairs.append(
                (f"nm_{a}-{b}_to_{a + 1}-{b - 1}", {1: a, 2: b}, {1: a + 1, 2: b - 1})
            )
    rng = np.random.default_rng(seed)
    seen = set()
    while len(seen) < three_token_pairs:
        counts = [int(v) for v in rng.integers(1, 7, size=3)]
        i, j = rng.choice(3, size=2, replace=False)
        if counts[j] < 2:
            continue
        moved = list(counts)
        moved[i] += 1
        moved[j] -= 1
        key = (tuple(counts), tuple(moved))
        if key in seen:
            continue
        seen.add(key)
        h1 = {t + 1: c for t, c in enumerate(counts)}
        h2 = {t + 1: c for t, c in enumerate(moved) if c > 0}
        name = "nm_" + "-".join(map(str, counts)) + "_to_" + "-".join(map(str, moved))
        pairs.append((name, h1, h2))
    return pairs


def run_dp_audit(config: Mapping) -> ExperimentReport:
    """Exact outcome-probability ratios for the noisy maximizer and the
    threshold test on adjacent inputs, against e^eps0."""
    t0 = time.perf_counter()
    eps_values = tuple(config.get("eps_values", (0.5, 1.0)))
    delta0 = float(config.get("delta0", 0.01))
    seed = int(config.get("seed", 0))
    three_token_pairs = int(config.get("three_token_pairs", 40))
    slack = 1e-9

    pairs = _audit_pairs(seed, three_token_pairs)
    audit_rows = []
    rows = []
    for eps0 in eps_values:
        bound = math.exp(eps0)
        radius = truncation_radius(eps0)
        nm_max = 0.0
        tail_max = 0.0
        identical_max = 0.0
        for name, h1, h2 in pairs:
            v_lo = -radius
            v_hi = max(max(h1.values()), max(h2.values())) + radius
            probs1 = noisy_argmax_outcome_probs(h1, eps0, values=(v_lo, v_hi))
            probs2 = noisy_argmax_outcome_probs(h2, eps0, values=(v_lo, v_hi))
            keys = sorted(
                set(probs1) | set(probs2),
                key=lambda k: (k[0] is None, k[0] if k[0] is not None else 0, k[1]),
            )
            pair_id = f"{name}_eps{eps0:g}"
            for key in keys:
                p1 = probs1.get(key, 0.0)
                p2 = probs2.get(key, 0.0)
                ratio = max(p1 / p2, p2 / p1) if p1 > 0.0 and p2 > 0.0 else math.inf
                ok = ratio <= bound + slack
                winner = "none" if key[0] is None else str(key[0])
                audit_rows.append(
                    (pair_id, f"{winner}:{key[1]}", p1, p2, ratio, bound, ok)
                )
                if h1 == h2:
                    identical_max = max(identical_max, ratio)
                else:
                    nm_max = max(nm_max, ratio)
            resid1 = abs(1.0 - sum(probs1.values()))
            resid2 = abs(1.0 - sum(probs2.values()))
            tail_max = max(tail_max, resid1, resid2)
            audit_rows.append(
                (
                    pair_id,
                    "tail",
                    resid1,
                    resid2,
                    1.0,
                    slack,
                    max(resid1, resid2) <= slack,
                )
            )

        L = noisy_max_error_bound(eps0, delta0, 1)
        bt_max = 0.0
        bt_counts = sorted({1, 2, 3, 4, 5, 6, L - 1, L, 2 * L, 3 * L - 1, 3 * L})
        for c in bt_counts:
            law1 = between_thresholds_outcome_probs(c, L, 3 * L, eps0)
            law2 = between_thresholds_outcome_probs(c + 1, L, 3 * L, eps0)
            pair_id = f"bt_{c}_to_{c + 1}_eps{eps0:g}"
            for outcome in law1:
                p1, p2 = law1[outcome], law2[outcome]
                ratio = max(p1 / p2, p2 / p1) if p1 > 0.0 and p2 > 0.0 else math.inf
                ok = ratio <= bound + slack
                audit_rows.append((pair_id, outcome.value, p1, p2, ratio, bound, ok))
                bt_max = max(bt_max, ratio)

        rows.append(_upper_row(f"audit:nm_max_ratio:eps{eps0:g}", nm_max, bound, slack=slack))
        rows.append(_upper_row(f"audit:bt_max_ratio:eps{eps0:g}", bt_max, bound, slack=slack))
        rows.append(_upper_row(f"audit:tail_residual:eps{eps0:g}", tail_max, slack))
        rows.append(_upper_row(f"audit:identical_ratio:eps{eps0:g}", identical_max, 1.0, slack=1e-12))

    return ExperimentReport(
        name="dp-audit",
        config={
            "eps_values": list(eps_values),
            "delta0": delta0,
            "seed": seed,
            "three_token_pairs": three_token_pairs,
        },
        rows=rows,
        trials=0,
        wall_time_s=time.perf_counter() - t0,
        data=DataTable(
            header=("pair_id", "outcome", "p_h1", "p_h2", "ratio", "bound", "pass"),
            rows=tuple(audit_rows),
        ),
    )


# --- generation-loop simulation ---------------------------------------------


def run_simulation(config: Mapping) -> tuple[ExperimentReport, LoopResult]:
    if "provider" not in config:
        raise ConfigError("simulate config needs a 'provider' section")
    try:
        provider = provider_from_config(config["provider"])
    except (KeyError, TypeError, ValueError) as exc:
        detail = f"missing key {exc}" if isinstance(exc, KeyError) else str(exc)
        raise ConfigError(f"bad provider section: {detail}") from exc
    try:
        mode = config.get("mode", "homogeneous")
        max_tokens = int(config.get("max_tokens", 16))
        eps0 = float(config.get("eps0", 1.0))
        delta0 = float(config.get("delta0", 0.01))
        eps_total = float(config.get("eps_total", 1.0))
        delta_total = float(config.get("delta_total", 1e-5))
        retry_cap = int(config.get("retry_cap", 3))
        use_wrapper = bool(config.get("use_wrapper", False))
        k_samples = int(config.get("k_samples", 1))
        seed = int(config.get("seed", 0))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad simulate config value: {exc}") from exc
    if max_tokens < 1:
        raise ConfigError("max_tokens must be positive")

    t0 = time.perf_counter()
    first = provider(())
    support = {t for d in first for t in d.support()}
    try:
        L = int(config.get("L", noisy_max_error_bound(eps0, delta0, len(support))))
        params = PrivacyParams(
            eps_total=eps_total,
            delta_total=delta_total,
            eps0=eps0,
            delta0=delta0,
            L=L,
        )
        ledger = None
        if mode == "individual" or use_wrapper:
            ledger = PrivacyLedger(
                eps_total=eps_total,
                delta_total=delta_total,
                eps0=eps0,
                delta0=delta0,
                hit_budget=int(
                    config.get("hit_budget", max(1, int(eps_total / eps0)))
                ),
                per_teacher_limit=int(
                    config.get("per_teacher_limit", max_tokens * 100)
                ),
            )
        result = lockstep_loop(
            provider,
            params,
            ledger,
            max_tokens=max_tokens,
            seed=seed,
            mode=mode,
            retry_cap=retry_cap,
            use_wrapper=use_wrapper,
            k_samples=k_samples,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    step_rows = []
    for s in result.steps:
        obj = s.to_json_obj()
        step_rows.append(
            (
                obj["step"],
                obj["outcome"],
                obj.get("token"),
                obj.get("count"),
                obj["retries"],
            )
        )
    report = ExperimentReport(
        name="simulate",
        config={"mode": mode, "max_tokens": max_tokens, "seed": seed, "L": L},
        rows=[],
        trials=len(result.steps),
        wall_time_s=time.perf_counter() - t0,
        data=DataTable(
            header=("step", "outcome", "token", "count", "retries"),
            rows=tuple(step_rows),
        ),
        raw_jsonl=result.to_jsonl(),
    )
    return report, result
