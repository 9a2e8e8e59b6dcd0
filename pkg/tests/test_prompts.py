from __future__ import annotations

import json
from collections import Counter
from pathlib import Path

import pytest

from seebench.catalog import default_catalog
from seebench.prompts import (
    PromptRecord,
    article,
    build_corpus,
    corpus_digest,
    enumerate_variants,
    parse_attributes,
    read_corpus,
    render_leakage_prompt,
    render_prompt,
    render_question,
    write_corpus,
)

import oracles

GOLDEN = Path(__file__).parent / "golden"


def load_leakage_golden():
    rows = []
    for line in (GOLDEN / "leakage_prompts.tsv").read_text().splitlines():
        if line and not line.startswith("#"):
            rows.append(tuple(line.split("\t")))
    return rows


def test_corpus_size_and_arity(corpus):
    assert len(corpus) == 5056
    per_object = Counter(r.object_id for r in corpus)
    assert len(per_object) == 79 and set(per_object.values()) == {64}
    by_obj: dict[str, Counter] = {}
    for r in corpus:
        by_obj.setdefault(r.object_id, Counter())[r.arity] += 1
    frozen = json.loads(oracles.FROZEN.read_text())["arity_counts"]
    for counts in by_obj.values():
        assert [counts[a] for a in range(4)] == frozen == [1, 9, 27, 27]


def test_prompt_template(corpus):
    for r in corpus:
        assert r.text == f"An image of a {r.class_label}"
        assert "  " not in r.text
        assert r.question == f"Is there a {r.class_label} in the image?"


def test_car_variants(tree):
    recs = enumerate_variants(tree.node("car"))
    texts = {r.text for r in recs}
    assert len(recs) == 64
    assert "An image of a small red wooden car" in texts
    assert "An image of a car" in texts
    assert recs[0].class_label == "car"


def test_enumerate_rejects_non_object(tree):
    with pytest.raises(ValueError):
        enumerate_variants(tree.node("vehicle"))
    with pytest.raises(ValueError):
        enumerate_variants(tree.node("red car"))


def test_prompt_ids_join_tree(tree, corpus):
    for r in corpus:
        assert tree.node(r.prompt_id).name == r.class_label


def test_corpus_write_read(tmp_path, tree, corpus):
    path = write_corpus(corpus, tmp_path, tree)
    assert sum(1 for _ in path.open()) == 5056
    back = read_corpus(path)
    assert corpus_digest(back) == corpus_digest(corpus)
    manifest = json.loads((tmp_path / "corpus.manifest.json").read_text())
    assert manifest["corpus_hash"] == corpus_digest(corpus)
    assert manifest["tree_hash"] == tree.digest()


def test_corpus_is_deterministic():
    a = build_corpus(default_catalog())
    b = build_corpus(default_catalog())
    assert corpus_digest(a) == corpus_digest(b)


def test_record_json_roundtrip(corpus):
    r = corpus[17]
    assert PromptRecord.from_json(r.to_json()) == r


@pytest.mark.parametrize("attr,e,p,expected", load_leakage_golden())
def test_leakage_golden(attr, e, p, expected):
    assert render_leakage_prompt(attr, e, p) == expected


def test_leakage_golden_has_20_cases():
    assert len(load_leakage_golden()) == 20


def test_leakage_rejects_bad_input():
    with pytest.raises(ValueError):
        render_leakage_prompt("purple", "couch", "donut")
    with pytest.raises(ValueError):
        render_leakage_prompt("red", "couch", "couch")
    with pytest.raises(ValueError):
        render_leakage_prompt("red", "", "couch")


@pytest.mark.parametrize("word,art", [
    ("apple", "an"), ("orange", "an"), ("umbrella", "an"), ("car", "a"),
    ("hour", "an"), ("unicorn", "a"), ("one", "a"), ("Elephant", "an"),
])
def test_article(word, art):
    assert article(word) == art


def test_question_rejects_empty():
    with pytest.raises(ValueError):
        render_question("   ")


def test_render_prompt():
    assert render_prompt("red cup") == "An image of a red cup"


@pytest.mark.parametrize("phrase,attrs,name", [
    ("small red wooden car", {"size": "small", "color": "red", "material": "wooden"}, "car"),
    ("An image of a blue cup", {"color": "blue"}, "cup"),
    ("teddy bear", {}, "teddy bear"),
    ("large tv remote", {"size": "large"}, "tv remote"),
])
def test_parse_attributes(phrase, attrs, name):
    assert parse_attributes(phrase) == (attrs, name)
