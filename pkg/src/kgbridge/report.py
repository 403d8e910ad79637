"""Accuracy and error reports as text, CSV and SVG.

CSV headers:

* ``accuracy.csv``: direction, model, strategy, correct, incorrect, failed, n, accuracy_pct
* ``errors.csv``: error_category, then one count column per target KG
* ``cooccurrence_<target>.csv``: label, then P(column | row) in percent per label
* ``categories.csv``: category, then mean distinct labels per incorrect run per target KG

``failed`` counts incorrect runs that produced no comparable answer (no
query extracted, invalid query, execution error, empty result).
"""

from __future__ import annotations

import csv
import io
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence
from xml.sax.saxutils import escape

from .benchset import CATEGORIES
from .prompts import Strategy
from .taxonomy import LABELS, REPORT_ORDER, Annotation, CooccurrenceMatrix, cooccurrence_matrix, display_label, merge_annotations

STRATEGY_NAMES = {
    "zero_shot": "Zero-shot",
    "zero_shot_er": "Zero-shot + ER",
    "few_shot_er": "Few-shot + ER",
    "cot": "CoT",
    "cot_tags": "CoT + tags",
}
_STRATEGY_RANK = {s.value: i for i, s in enumerate(Strategy)}

# Published reference figure, for report footnotes only: (model, strategy, direction, correct, N).
REFERENCE_ROWS = (("Mistral-Large-Instruct-2407", "few_shot_er", "Wikidata->DBpedia", 86, 100),)


@dataclass(frozen=True)
class AccuracyRow:
    direction: str
    model: str
    strategy: str
    correct: int
    incorrect: int
    failed: int

    @property
    def n(self) -> int:
        return self.correct + self.incorrect

    @property
    def pct(self) -> float:
        return 100.0 * self.correct / self.n if self.n else 0.0


@dataclass(frozen=True)
class AccuracyTable:
    rows: tuple[AccuracyRow, ...]

    def row(self, direction: str, model: str, strategy: str) -> AccuracyRow:
        for r in self.rows:
            if (r.direction, r.model, r.strategy) == (direction, model, strategy):
                return r
        raise KeyError((direction, model, strategy))

    @property
    def directions(self) -> list[str]:
        return list(dict.fromkeys(r.direction for r in self.rows))


def _row_order(key):
    d, m, s = key
    return (d, m, _STRATEGY_RANK.get(s, len(_STRATEGY_RANK)), s)


def accuracy_table(records: Iterable) -> AccuracyTable:
    tally: dict[tuple, Counter] = defaultdict(Counter)
    for r in records:
        c = tally[(r.direction, r.model_id, r.strategy)]
        c[r.outcome] += 1
        if r.outcome == "incorrect" and r.failure:
            c["failed"] += 1
    rows = [
        AccuracyRow(d, m, s, c["correct"], c["incorrect"], c["failed"])
        for (d, m, s), c in sorted(tally.items(), key=lambda kv: _row_order(kv[0]))
    ]
    return AccuracyTable(tuple(rows))


def _direction_title(key: str) -> str:
    return key.replace("->", " → ")


def format_accuracy(table: AccuracyTable) -> str:
    """Per direction, one line per model and strategy."""
    out = []
    for d in table.directions:
        rows = [r for r in table.rows if r.direction == d]
        out.append(f"Correctly translated queries: {_direction_title(d)}")
        mw = max(len("Model"), *(len(r.model) for r in rows))
        sw = max(len("Strategy"), *(len(STRATEGY_NAMES.get(r.strategy, r.strategy)) for r in rows))
        out.append(f"  {'Model':<{mw}}  {'Strategy':<{sw}}  {'Correct':>7}  {'N':>4}  {'Acc.':>6}  {'Incorrect':>9}  {'Failed':>6}")
        for r in rows:
            out.append(
                f"  {r.model:<{mw}}  {STRATEGY_NAMES.get(r.strategy, r.strategy):<{sw}}  "
                f"{r.correct:>7}  {r.n:>4}  {r.pct:>5.1f}%  {r.incorrect:>9}  {r.failed:>6}"
            )
        out.append("")
    return "\n".join(out)


def format_correct_incorrect(table: AccuracyTable, direction: str | None = None) -> str:
    """Compact layout with a combined ``Incorrect / Failed`` column."""
    rows = [r for r in table.rows if direction is None or r.direction == direction]
    lines = ["Model | Strategy | Correct | Incorrect / Failed"]
    for r in rows:
        lines.append(f"{r.model} | {STRATEGY_NAMES.get(r.strategy, r.strategy)} | {r.correct} | {r.incorrect}")
    return "\n".join(lines) + "\n"


def accuracy_csv(table: AccuracyTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["direction", "model", "strategy", "correct", "incorrect", "failed", "n", "accuracy_pct"])
    for r in table.rows:
        w.writerow([r.direction, r.model, r.strategy, r.correct, r.incorrect, r.failed, r.n, f"{r.pct:.1f}"])
    return buf.getvalue()


# -- errors ----------------------------------------------------------------------


@dataclass(frozen=True)
class ErrorReport:
    targets: tuple[str, ...]
    counts: Mapping[str, Mapping[str, int]]  # target -> label -> count
    cooccurrence: Mapping[str, CooccurrenceMatrix]
    category_means: Mapping[str, Mapping[str, float | None]]  # target -> category -> mean labels

    def total(self, target: str) -> int:
        return sum(self.counts[target].values())


def _target_of(direction_key: str) -> str:
    return direction_key.split("->", 1)[1]


def error_report(annotations: Mapping[str, Annotation] | None, records: Iterable) -> ErrorReport:
    """Label counts per target KG, co-occurrence, and mean labels per question category.

    ``annotations`` (keyed by run id) override the labels stored in records.
    """
    annotations = annotations or {}
    per_target: dict[str, list[frozenset]] = defaultdict(list)
    by_cat: dict[str, dict[str, list[int]]] = defaultdict(lambda: defaultdict(list))
    targets: list[str] = []
    for r in sorted(records, key=lambda r: r.cell_key):
        t = _target_of(r.direction)
        if t not in targets:
            targets.append(t)
        if r.outcome != "incorrect":
            continue
        labels = frozenset(r.labels)
        manual = annotations.get(r.run_id)
        if manual is not None:
            labels = merge_annotations(Annotation(r.run_id, labels or frozenset({"StructuralError"})), manual).labels
        if not labels:
            continue
        per_target[t].append(labels)
        if r.category:
            by_cat[t][r.category].append(len(labels))
    counts = {t: {lbl: sum(lbl in a for a in per_target[t]) for lbl in REPORT_ORDER} for t in targets}
    co = {t: cooccurrence_matrix(per_target[t], REPORT_ORDER) for t in targets}
    means = {
        t: {c: (sum(by_cat[t][c]) / len(by_cat[t][c]) if by_cat[t][c] else None) for c in CATEGORIES}
        for t in targets
    }
    return ErrorReport(tuple(targets), counts, co, means)


def _row_name(label: str, targets: Sequence[str]) -> str:
    names = list(dict.fromkeys(display_label(label, t) for t in targets)) if targets else [display_label(label)]
    return " / ".join(names)


def format_error_table(rep: ErrorReport) -> str:
    header = ["Error Category"] + [f"Target KG: {t}" for t in rep.targets]
    rows = [[_row_name(lbl, rep.targets)] + [str(rep.counts[t][lbl]) for t in rep.targets] for lbl in REPORT_ORDER]
    rows.append(["Total Error Instances Logged"] + [str(rep.total(t)) for t in rep.targets])
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]

    def fmt(r):
        return "  ".join(r[0].ljust(widths[0]) if i == 0 else c.rjust(widths[i]) for i, c in enumerate(r))

    sep = "-" * len(fmt(header))
    return "\n".join([fmt(header), sep] + [fmt(r) for r in rows[:-1]] + [sep, fmt(rows[-1])]) + "\n"


def errors_csv(rep: ErrorReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["error_category"] + [f"target_{t}" for t in rep.targets])
    for lbl in REPORT_ORDER:
        w.writerow([lbl] + [rep.counts[t][lbl] for t in rep.targets])
    w.writerow(["total"] + [rep.total(t) for t in rep.targets])
    return buf.getvalue()


def cooccurrence_csv(m: CooccurrenceMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label"] + list(m.labels))
    for a, row in zip(m.labels, m.percentages()):
        w.writerow([a] + [f"{v:.1f}" for v in row])
    return buf.getvalue()


def format_cooccurrence(m: CooccurrenceMatrix, target: str, min_count: int = 1) -> str:
    """``P(B | A)`` for every label pair with A observed, in percent."""
    lines = [f"Label co-occurrence, target {target} (P(column | row), %)"]
    for a in m.labels:
        base = m.count(a, a)
        if base < min_count:
            continue
        parts = [f"{display_label(b, target)}: {m.conditional(a, b):.1f}" for b in m.labels if b != a and m.count(a, b)]
        lines.append(f"  {display_label(a, target)} (n={base}): " + ("; ".join(parts) if parts else "alone"))
    return "\n".join(lines) + "\n"


def categories_csv(rep: ErrorReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["category"] + [f"mean_labels_target_{t}" for t in rep.targets])
    for c in CATEGORIES:
        w.writerow([c] + ["" if rep.category_means[t][c] is None else f"{rep.category_means[t][c]:.2f}" for t in rep.targets])
    return buf.getvalue()


def format_categories(rep: ErrorReport) -> str:
    width = max(len(c) for c in CATEGORIES)
    lines = ["Mean distinct error labels per incorrect run, by question category"]
    lines.append(f"  {'Category':<{width}}" + "".join(f"  {t:>10}" for t in rep.targets))
    for c in CATEGORIES:
        cells = []
        for t in rep.targets:
            v = rep.category_means[t][c]
            cells.append(f"  {'-' if v is None else f'{v:.2f}':>10}")
        lines.append(f"  {c:<{width}}" + "".join(cells))
    return "\n".join(lines) + "\n"


# -- SVG -------------------------------------------------------------------------

_BAR_W, _GAP, _PLOT_H, _TOP, _LEFT = 28, 10, 200, 40, 50
_PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c")


def accuracy_svg(table: AccuracyTable) -> str:
    """Grouped bar chart of correct counts: one panel per direction, one group per model."""
    if not table.rows:
        raise ValueError("nothing to plot")
    strategies = sorted({r.strategy for r in table.rows}, key=lambda s: (_STRATEGY_RANK.get(s, 99), s))
    colour = {s: _PALETTE[i % len(_PALETTE)] for i, s in enumerate(strategies)}
    scale_max = max(r.n for r in table.rows) or 1
    panels = []
    y0 = _TOP
    width = _LEFT
    for d in table.directions:
        rows = [r for r in table.rows if r.direction == d]
        models = list(dict.fromkeys(r.model for r in rows))
        parts = [f'<text x="{_LEFT}" y="{y0 - 12}" font-size="14">{escape(_direction_title(d))}</text>']
        base = y0 + _PLOT_H
        parts.append(f'<line x1="{_LEFT}" y1="{base}" x2="{_LEFT}" y2="{y0}" stroke="#000"/>')
        x = _LEFT + _GAP
        for m in models:
            gx = x
            for s in strategies:
                r = next((r for r in rows if r.model == m and r.strategy == s), None)
                if r is None:
                    continue
                h = round(_PLOT_H * r.correct / scale_max, 3)
                parts.append(
                    f'<rect class="bar" x="{x}" y="{round(base - h, 3)}" width="{_BAR_W}" height="{h}" '
                    f'fill="{colour[s]}" data-model="{escape(m)}" data-strategy="{s}" data-correct="{r.correct}" '
                    f'data-n="{r.n}"/>'
                )
                parts.append(f'<text x="{x + _BAR_W / 2}" y="{round(base - h - 3, 3)}" font-size="10" text-anchor="middle">{r.correct}</text>')
                x += _BAR_W
            parts.append(f'<text x="{(gx + x) / 2}" y="{base + 16}" font-size="11" text-anchor="middle">{escape(m)}</text>')
            x += 2 * _GAP
        parts.append(f'<line x1="{_LEFT}" y1="{base}" x2="{x}" y2="{base}" stroke="#000"/>')
        width = max(width, x)
        panels.append("\n".join(parts))
        y0 = base + 70
    legend_y = y0 - 30
    legend = []
    lx = _LEFT
    for s in strategies:
        legend.append(f'<rect x="{lx}" y="{legend_y}" width="12" height="12" fill="{colour[s]}"/>')
        legend.append(f'<text x="{lx + 16}" y="{legend_y + 10}" font-size="11">{escape(STRATEGY_NAMES.get(s, s))}</text>')
        lx += 130
    width = max(width, lx) + _GAP
    height = legend_y + 30
    body = "\n".join(panels + legend)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">\n{body}\n</svg>\n'
    )


def emit_outputs(
    out_dir: str | Path,
    accuracy: AccuracyTable | None = None,
    errors: ErrorReport | None = None,
    formats: Iterable[str] = ("text", "csv", "svg"),
) -> list[Path]:
    """Write the requested formats; returns the files written in a fixed order."""
    formats = set(formats)
    unknown = formats - {"text", "csv", "svg"}
    if unknown:
        raise ValueError(f"unknown formats {sorted(unknown)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: list[tuple[str, str]] = []
    if accuracy is not None:
        if "text" in formats:
            text = format_accuracy(accuracy) + "\n" + format_correct_incorrect(accuracy)
            files.append(("accuracy.txt", text))
        if "csv" in formats:
            files.append(("accuracy.csv", accuracy_csv(accuracy)))
        if "svg" in formats and accuracy.rows:
            files.append(("accuracy.svg", accuracy_svg(accuracy)))
    if errors is not None:
        if "text" in formats:
            parts = [format_error_table(errors)]
            parts += [format_cooccurrence(errors.cooccurrence[t], t) for t in errors.targets]
            parts.append(format_categories(errors))
            files.append(("errors.txt", "\n".join(parts)))
        if "csv" in formats:
            files.append(("errors.csv", errors_csv(errors)))
            for t in errors.targets:
                files.append((f"cooccurrence_{t}.csv", cooccurrence_csv(errors.cooccurrence[t])))
            files.append(("categories.csv", categories_csv(errors)))
    written = []
    for name, content in files:
        p = out / name
        with p.open("w", encoding="utf-8", newline="") as fh:
            fh.write(content)
        written.append(p)
    return written
