import json

import pytest

from conftest import FIXTURES
from kgbridge.prompts import (
    FEW_SHOT_LEAD,
    PromptSpec,
    PromptSpecError,
    Strategy,
    er2_pairs,
    render_prompt,
    validate_spec,
)

PROMPTS = FIXTURES / "prompts"
SPEC = json.loads((PROMPTS / "kubrick_spec.json").read_text(encoding="utf-8"))


def spec_for(strategy, **kw):
    s = Strategy.parse(strategy)
    args = dict(
        nlq=SPEC["nlq"], sparql_query_kg1=SPEC["sparql_query_kg1"],
        kg1_name=SPEC["kg1_name"], kg2_name=SPEC["kg2_name"], strategy=s,
        er2=SPEC["er2"] if s.uses_er2 else None,
        exemplars=SPEC["exemplars"] if s is Strategy.FEW_SHOT_ER else None,
    )
    args.update(kw)
    return PromptSpec(**args)


def test_few_shot_golden():
    golden = (PROMPTS / "few_shot_er.golden.txt").read_text(encoding="utf-8")
    assert render_prompt(spec_for("few_shot_er")).text == golden


def test_zero_shot_golden():
    golden = (PROMPTS / "zero_shot.golden.txt").read_text(encoding="utf-8")
    assert render_prompt(spec_for("zero_shot")).text == golden


@pytest.mark.parametrize("strategy", [s.value for s in Strategy])
def test_every_strategy_renders_the_core_fields(strategy):
    text = render_prompt(spec_for(strategy)).text
    for key in ("natural_language_question", "sparql_query_kg1", "kg1_name", "kg2_name", "instruction"):
        assert f'"{key}": ' in text
    assert ('"er2": ' in text) == Strategy.parse(strategy).uses_er2
    assert "'<sparql>' and '</sparql>'" in text
    assert (FEW_SHOT_LEAD in text) == (strategy == "few_shot_er")


def test_cot_variants():
    cot = render_prompt(spec_for("cot")).text
    tags = render_prompt(spec_for("cot_tags")).text
    assert "step by step" in cot and "<think>" not in cot
    assert tags.count("<think>Step ") == 5
    assert tags.index('"instruction"') < tags.index("<think>Step a")


@pytest.mark.parametrize("strategy", [s.value for s in Strategy])
def test_digest_is_stable_and_content_bound(strategy):
    digests = {render_prompt(spec_for(strategy)).spec_digest for _ in range(3)}
    assert len(digests) == 1
    other = render_prompt(spec_for(strategy, nlq="Which films did Kubrick direct?")).spec_digest
    assert other not in digests


def test_template_override_changes_digest(tmp_path):
    (tmp_path / "zero_shot.txt").write_text("Q: $nlq\nKG: $kg2_name\n$instruction", encoding="utf-8")
    base = render_prompt(spec_for("zero_shot"))
    custom = render_prompt(spec_for("zero_shot"), template_dir=tmp_path)
    assert custom.text.startswith('Q: "Which films')
    assert custom.spec_digest != base.spec_digest
    # strategies without an override fall back to the built-in set
    assert render_prompt(spec_for("cot"), template_dir=tmp_path).text == render_prompt(spec_for("cot")).text


def test_broken_template_is_reported(tmp_path):
    (tmp_path / "zero_shot.txt").write_text("$nlq $unknown_field", encoding="utf-8")
    with pytest.raises(PromptSpecError):
        render_prompt(spec_for("zero_shot"), template_dir=tmp_path)


@pytest.mark.parametrize("kw,needle", [
    ({"strategy": Strategy.ZERO_SHOT, "er2": []}, "zero_shot carries no er2"),
    ({"strategy": Strategy.ZERO_SHOT_ER, "er2": None}, "needs an er2"),
    ({"strategy": Strategy.FEW_SHOT_ER, "exemplars": SPEC["exemplars"][:3]}, "exactly 4"),
    ({"strategy": Strategy.COT, "exemplars": SPEC["exemplars"]}, "takes no exemplars"),
    ({"nlq": "  "}, "nlq is empty"),
    ({"kg2_name": "dbpedia"}, "must differ"),
])
def test_validation_findings(kw, needle):
    spec = spec_for(kw.pop("strategy", "zero_shot_er"), **kw)
    findings = validate_spec(spec)
    assert any(needle in f for f in findings)
    with pytest.raises(PromptSpecError):
        render_prompt(spec)


def test_strategy_parsing():
    assert Strategy.parse("few-shot-er") is Strategy.FEW_SHOT_ER
    assert Strategy.parse("COT_TAGS") is Strategy.COT_TAGS
    with pytest.raises(ValueError):
        Strategy.parse("one_shot")


def test_er2_pair_forms():
    pairs = er2_pairs([
        {"dbpedia_id": "a", "wikidata_ids": ["b"]},
        {"dbpedia_id": "c", "wikidata_id": ["d"]},
        ("e", "f"),
    ])
    assert pairs == [("a", ("b",)), ("c", ("d",)), ("e", ("f",))]
