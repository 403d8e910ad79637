import csv
import io
import re

import pytest

from kgbridge.pipeline import RunRecord
from kgbridge.report import (
    accuracy_csv,
    accuracy_svg,
    accuracy_table,
    categories_csv,
    cooccurrence_csv,
    emit_outputs,
    error_report,
    errors_csv,
    format_accuracy,
    format_correct_incorrect,
    format_error_table,
)
from kgbridge.taxonomy import Annotation

WD, DBP = "DBpedia->Wikidata", "Wikidata->DBpedia"


def rec(direction, model, strategy, item, labels=(), failure=None, category=None):
    outcome = "incorrect" if labels or failure else "correct"
    return RunRecord(item, model, strategy, direction, "p", "r", "", {}, None, {}, None, outcome,
                     failure, tuple(labels), None, category)


@pytest.fixture
def records():
    out = []
    # DBpedia->Wikidata, model A: zero_shot 1/4 correct, few_shot_er 3/4
    out.append(rec(WD, "A", "zero_shot", "q1"))
    out.append(rec(WD, "A", "zero_shot", "q2", ["QueryBadFormed"], "no_query", "Single Fact"))
    out.append(rec(WD, "A", "zero_shot", "q3", ["WrongOrMissingEntity", "StructuralError"], None, "Single Fact"))
    out.append(rec(WD, "A", "zero_shot", "q4", ["UnadaptedDatasetPatterns", "WrongOrMissingProperty"], "empty_result", "Numerical Count"))
    out += [rec(WD, "A", "few_shot_er", f"q{i}") for i in (1, 2, 3)]
    out.append(rec(WD, "A", "few_shot_er", "q4", ["MissingTypeAssertion"], None, "Numerical Count"))
    # Wikidata->DBpedia, model B: cot 2/4 correct
    out += [rec(DBP, "B", "cot", f"q{i}") for i in (1, 2)]
    out.append(rec(DBP, "B", "cot", "q3", ["MissingTypeAssertion", "StructuralError"], None, "Single Person"))
    out.append(rec(DBP, "B", "cot", "q4", ["PropertyAsEntity_OntologyAsResource"], None, "Single Person"))
    return out


def test_accuracy_rows(records):
    t = accuracy_table(records)
    assert list(t.directions) == [WD, DBP]
    zs = t.row(WD, "A", "zero_shot")
    assert (zs.correct, zs.incorrect, zs.failed, zs.n) == (1, 3, 2, 4)
    assert zs.pct == 25.0
    assert t.row(WD, "A", "few_shot_er").correct == 3
    assert t.row(DBP, "B", "cot").correct == 2


def test_accuracy_text_grouping(records):
    text = format_accuracy(accuracy_table(records))
    blocks = [b for b in text.split("\n\n") if b.strip()]
    titles = [b.splitlines()[0] for b in blocks]
    assert titles == sorted(titles)
    assert "Correctly translated queries: DBpedia → Wikidata" in titles
    wd_block = next(b for b in blocks if b.startswith("Correctly translated queries: DBpedia"))
    # strategies listed in canonical order: zero-shot before few-shot
    assert wd_block.index("Zero-shot") < wd_block.index("Few-shot + ER")


def test_correct_incorrect_layout(records):
    lines = format_correct_incorrect(accuracy_table(records), WD).splitlines()
    assert lines[0] == "Model | Strategy | Correct | Incorrect / Failed"
    assert lines[1:] == ["A | Zero-shot | 1 | 3", "A | Few-shot + ER | 3 | 1"]


def test_accuracy_csv(records):
    rows = list(csv.reader(io.StringIO(accuracy_csv(accuracy_table(records)))))
    assert rows[0] == ["direction", "model", "strategy", "correct", "incorrect", "failed", "n", "accuracy_pct"]
    assert [DBP, "B", "cot", "2", "2", "0", "4", "50.0"] in rows
    assert [WD, "A", "zero_shot", "1", "3", "2", "4", "25.0"] in rows


def test_error_table_eight_rows_two_targets(records):
    rep = error_report(None, records)
    lines = format_error_table(rep).splitlines()
    assert lines[0].split("  ")[0] == "Error Category"
    assert "Target KG: Wikidata" in lines[0] and "Target KG: DBpedia" in lines[0]
    body = [ln for ln in lines[2:] if not ln.startswith("-")]
    assert len(body) == 9 and body[-1].startswith("Total Error Instances Logged")
    assert body[0].startswith("Structural Error")
    assert body[4].startswith("Missing P31 / Missing rdf:type")
    assert body[-1].split()[-2:] == ["6", "3"]


def test_errors_csv_counts(records):
    rows = list(csv.reader(io.StringIO(errors_csv(error_report(None, records)))))
    header = rows[0]
    col = {name: i for i, name in enumerate(header)}
    counts = {r[0]: r for r in rows[1:]}
    assert len(rows) == 10
    wd, dbp = col["target_Wikidata"], col["target_DBpedia"]
    assert counts["StructuralError"][wd] == "1" and counts["StructuralError"][dbp] == "1"
    assert counts["MissingTypeAssertion"][wd] == "1" and counts["MissingTypeAssertion"][dbp] == "1"
    assert counts["PropertyAsEntity_OntologyAsResource"][dbp] == "1"
    assert counts["EntityAsProperty_ResourceAsOntology"][wd] == "0"
    assert counts["total"][wd] == "6" and counts["total"][dbp] == "3"


def test_manual_annotations_override(records):
    run_id = records[2].run_id
    manual = {run_id: Annotation(run_id, frozenset({"QueryBadFormed"}), "manual")}
    rep = error_report(manual, records)
    assert rep.counts["Wikidata"]["QueryBadFormed"] == 2
    assert rep.counts["Wikidata"]["StructuralError"] == 0


def test_category_means(records):
    rep = error_report(None, records)
    assert rep.category_means["Wikidata"]["Single Fact"] == 1.5
    assert rep.category_means["Wikidata"]["Numerical Count"] == 1.5
    assert rep.category_means["DBpedia"]["Single Person"] == 1.5
    assert rep.category_means["DBpedia"]["Single Fact"] is None
    rows = list(csv.reader(io.StringIO(categories_csv(rep))))
    assert rows[1][0] == "Single Fact"


def test_cooccurrence_percentages(records):
    m = error_report(None, records).cooccurrence["DBpedia"]
    rows = {r[0]: r for r in csv.reader(io.StringIO(cooccurrence_csv(m)))}
    header = rows["label"]
    assert rows["MissingTypeAssertion"][header.index("StructuralError")] == "100.0"
    assert rows["StructuralError"][header.index("PropertyAsEntity_OntologyAsResource")] == "0.0"


def test_svg_bars_proportional(records):
    svg = accuracy_svg(accuracy_table(records))
    bars = re.findall(r'<rect class="bar"[^>]*height="([\d.]+)"[^>]*data-correct="(\d+)" data-n="(\d+)"', svg)
    assert len(bars) == 3
    for h, correct, _ in bars:
        assert float(h) == pytest.approx(200 * int(correct) / 4)
    with pytest.raises(ValueError):
        accuracy_svg(accuracy_table([]))


def test_emit_is_byte_deterministic(tmp_path, records):
    def emit(d):
        files = emit_outputs(d, accuracy_table(records), error_report(None, records))
        return {p.name: p.read_bytes() for p in files}

    a, b = emit(tmp_path / "a"), emit(tmp_path / "b")
    assert a == b
    assert {"accuracy.txt", "accuracy.csv", "accuracy.svg", "errors.txt", "errors.csv", "categories.csv"} <= set(a)
    assert {"cooccurrence_Wikidata.csv", "cooccurrence_DBpedia.csv"} <= set(a)
    with pytest.raises(ValueError):
        emit_outputs(tmp_path / "c", formats=("pdf",))
