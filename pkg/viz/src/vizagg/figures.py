"""Figure builders for harness output tables.

Each figure kind is tied to one producing subcommand's table schema; the
header is validated before anything is drawn and a mismatch is an error,
never a best-effort plot. Rendering is read-only and deterministic: the
same input bytes and spec give the same image bytes.
"""

import csv
import dataclasses
import json

import matplotlib

matplotlib.use("Agg")
# content-salted element ids instead of object addresses, same across runs
matplotlib.rcParams["svg.hashsalt"] = "vizagg"

import matplotlib.pyplot as plt


class SchemaMismatch(ValueError):
    """Input table does not match the figure kind's schema."""


class MissingInput(OSError):
    """Input file absent or unreadable."""


SCHEMAS = {
    "histogram": ("mode", "trial", "token", "count", "is_special"),
    "sorted-curves": (
        "rank",
        "coord_top_special",
        "coord_second_special",
        "coord_top_other",
        "indep_top_special",
        "indep_second_special",
        "indep_top_other",
    ),
    "alpha-sweep": ("alpha", "p_token", "p_bot", "p_top"),
    "cdf-compare": ("alpha", "count", "cdf_sim", "cdf_model"),
}

KINDS = tuple(SCHEMAS)

FIGSIZE = (6.4, 4.8)


@dataclasses.dataclass(frozen=True)
class FigureSpec:
    input_path: str
    kind: str
    output_path: str


def _cell(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_table(path: str, schema) -> list[tuple]:
    """Parse a harness CSV or JSONL file against the expected schema."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as exc:
        raise MissingInput(f"cannot read {path}: {exc}") from exc
    rows: list[tuple] = []
    if path.endswith(".jsonl"):
        for ln, line in enumerate(raw.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rows.append(tuple(obj[k] for k in schema))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise SchemaMismatch(f"{path}:{ln}: {exc!r}") from exc
    else:
        reader = csv.reader(raw.splitlines())
        header = next(reader, None)
        if header is None or tuple(header) != tuple(schema):
            raise SchemaMismatch(
                f"{path}: header {header} does not match {list(schema)}"
            )
        for ln, rec in enumerate(reader, start=2):
            if len(rec) != len(schema):
                raise SchemaMismatch(f"{path}:{ln}: {len(rec)} cells, need {len(schema)}")
            rows.append(tuple(_cell(c) for c in rec))
    if not rows:
        raise SchemaMismatch(f"{path}: no data rows")
    return rows


def _column(rows, i):
    return [r[i] for r in rows]


def _histogram(ax, rows):
    modes = sorted({r[0] for r in rows})
    top = max(r[3] for r in rows)
    labels = []
    for mode in modes:
        counts = [r[3] for r in rows if r[0] == mode]
        ax.hist(counts, bins=20, range=(0, top), histtype="step", label=mode)
        labels.append(mode)
    ax.set_xlabel("count")
    ax.set_ylabel("rows")
    return labels


def _sorted_curves(ax, rows):
    ranks = _column(rows, 0)
    labels = []
    for i, name in enumerate(SCHEMAS["sorted-curves"][1:], start=1):
        style = "--" if name.startswith("indep") else "-"
        ax.plot(ranks, _column(rows, i), style, label=name)
        labels.append(name)
    ax.set_xlabel("trial rank")
    ax.set_ylabel("count")
    return labels


def _alpha_sweep(ax, rows):
    alphas = _column(rows, 0)
    names = SCHEMAS["alpha-sweep"][1:]
    ax.stackplot(alphas, *(_column(rows, i) for i in (1, 2, 3)), labels=names)
    ax.set_xlabel("alpha")
    ax.set_ylabel("probability")
    ax.set_ylim(0.0, 1.0)
    return list(names)


def _cdf_compare(ax, rows):
    labels = []
    seen = []
    for alpha in _column(rows, 0):
        if alpha not in seen:
            seen.append(alpha)
    for alpha in seen:
        sub = [r for r in rows if r[0] == alpha]
        counts = _column(sub, 1)
        ax.plot(counts, _column(sub, 2), "-", label=f"sim a={alpha:g}")
        ax.plot(counts, _column(sub, 3), "--", label=f"model a={alpha:g}")
        labels += [f"sim a={alpha:g}", f"model a={alpha:g}"]
    ax.set_xlabel("top common count")
    ax.set_ylabel("cdf")
    return labels


_BUILDERS = {
    "histogram": _histogram,
    "sorted-curves": _sorted_curves,
    "alpha-sweep": _alpha_sweep,
    "cdf-compare": _cdf_compare,
}


def build_figure(kind: str, rows) -> tuple[plt.Figure, list[str]]:
    """One figure per kind, one labeled series per schema value column
    (per alpha group for cdf-compare). Caller owns closing the figure."""
    if kind not in _BUILDERS:
        raise SchemaMismatch(f"unknown figure kind {kind!r}; known: {list(KINDS)}")
    fig, ax = plt.subplots(figsize=FIGSIZE)
    labels = _BUILDERS[kind](ax, rows)
    ax.set_title(kind)
    ax.legend(loc="upper right", fontsize="small")
    return fig, labels


def render(spec: FigureSpec) -> list[str]:
    """Read, validate, draw, and write the image; returns the series labels."""
    if spec.kind not in SCHEMAS:
        raise SchemaMismatch(f"unknown figure kind {spec.kind!r}; known: {list(KINDS)}")
    rows = read_table(spec.input_path, SCHEMAS[spec.kind])
    fig, labels = build_figure(spec.kind, rows)
    try:
        # no Date metadata: output bytes must depend on the input alone
        metadata = {"Date": None} if spec.output_path.endswith(".svg") else None
        fig.savefig(spec.output_path, metadata=metadata)
    finally:
        plt.close(fig)
    return labels
