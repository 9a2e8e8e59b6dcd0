from __future__ import annotations

import pytest

from seebench.gateway import ImageRecord, generate_one
from seebench.verifiers import (
    CLASSIFY,
    VQA,
    OracleVerifier,
    VerdictCache,
    VerifierError,
    attribute_labels,
    classify,
    normalize_answer,
    presence,
    probe_labels,
    question_phrase,
    sibling_labels,
    superclass_labels,
)


@pytest.mark.parametrize("text,expected", [
    ("Yes", True), ("yes.", True), ("YES, there is", True), ("  yes", True),
    ("No", False), ("no!", False), ("No, there is not", False),
    ("Maybe", None), ("", None), ("I think yes", None), ("yesterday", None), ("nope", None),
])
def test_normalize_answer(text, expected):
    assert normalize_answer(text) is expected


class Fixed:
    """Classifier returning canned scores."""

    family = CLASSIFY
    verifier_id = "fixed"
    version = "1"

    def __init__(self, scores):
        self._scores = scores
        self.calls = 0

    def scores(self, image, labels):
        self.calls += 1
        return self._scores


class Canned:
    family = VQA
    verifier_id = "canned"
    version = "1"

    def __init__(self, reply):
        self.reply = reply

    def answer(self, image, question):
        return self.reply


IMG = ImageRecord("p", 0, "m", {"kind": "mock", "objects": []})


def test_argmax_and_ties():
    assert classify(IMG, ["a", "b", "c"], Fixed([0.1, 0.7, 0.2])).label == "b"
    tie = classify(IMG, ["a", "b", "c"], Fixed([0.4, 0.4, 0.2]))
    assert tie.label == "a" and tie.tie_broken


def test_all_equal_scores_mean_absent():
    c = classify(IMG, ["a", "b"], Fixed([0.5, 0.5]))
    assert c.label is None
    v = presence(IMG, "a", Fixed([0.5, 0.5]), labels=["a", "b"])
    assert v.outcome is False and not v.indeterminate


def test_classification_validation():
    with pytest.raises(ValueError):
        classify(IMG, ["a"], Fixed([1.0]))
    with pytest.raises(ValueError):
        classify(IMG, ["a", "a"], Fixed([1.0, 0.0]))
    with pytest.raises(VerifierError):
        classify(IMG, ["a", "b"], Fixed([1.0]))
    with pytest.raises(ValueError):
        presence(IMG, "z", Fixed([1.0, 0.0]), labels=["a", "b"])


def test_vqa_presence_and_indeterminate():
    assert presence(IMG, "cup", Canned("Yes, a cup.")).outcome is True
    assert presence(IMG, "cup", Canned("no")).outcome is False
    v = presence(IMG, "cup", Canned("There might be"))
    assert v.indeterminate and v.raw == "There might be"


def test_question_phrase():
    assert question_phrase("Is there a red cup in the image?") == "red cup"
    assert question_phrase("is there an airplane in the image") == "airplane"
    with pytest.raises(ValueError):
        question_phrase("What is this?")


def test_cache_avoids_repeat_calls():
    cache = VerdictCache()
    v = Fixed([0.9, 0.1])
    a = presence(IMG, "a", v, ["a", "b"], cache)
    b = presence(ImageRecord("q", 1, "m2", IMG.payload), "a", v, ["a", "b"], cache)
    assert v.calls == 1 and cache.hits == 1 and len(cache) == 1
    assert a.outcome == b.outcome and b.image_key == ("q", 1, "m2")
    presence(IMG, "a", v, ["b", "a"], cache)
    assert v.calls == 2


def test_oracle_families_agree(base, tree):
    img = generate_one(base, ("x", "An image of a large blue bicycle"), 0)
    clf = OracleVerifier(tree, "clf", CLASSIFY)
    vqa = OracleVerifier(tree, "vqa", VQA)
    for probe in ["bicycle", "blue bicycle", "large blue bicycle", "car"]:
        labels = probe_labels(tree, probe)
        assert presence(img, probe, clf, labels).outcome == presence(img, probe, vqa).outcome
    with pytest.raises(ValueError):
        OracleVerifier(tree, "x", "ocr")


def test_oracle_rejects_files(tree):
    with pytest.raises(VerifierError):
        classify(ImageRecord("p", 0, "m", "/tmp/x.png"), ["a", "b"], OracleVerifier(tree, "c", CLASSIFY))


def test_label_sets(tree):
    assert len(superclass_labels(tree)) == 11
    sib = sibling_labels(tree, "red cup")
    assert sib[0] == "red cup" and "cup" not in sib and "fork" in sib
    assert attribute_labels("red", "cup") == ["red cup", "green cup", "blue cup", "cup"]
    with pytest.raises(ValueError):
        attribute_labels("shiny", "cup")
    assert probe_labels(tree, "kitchen") == superclass_labels(tree)
