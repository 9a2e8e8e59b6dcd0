"""Concept-presence verifiers: zero-shot classification and yes/no VQA.

Each verifier is reported separately (never majority-voted). The oracle
verifier reads the ground truth of mock payloads and is exact by
construction.
"""

from __future__ import annotations

import re
import string
import threading
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Any, Protocol

from .catalog import OBJECT, SUPERCLASS, ConceptTree
from .gateway import ImageRecord
from .prompts import parse_attributes, render_question
from .vocab import DEFAULT_VOCAB, AttributeVocabulary

CLASSIFY = "classify"
VQA = "vqa"

# Default verifier suite: one classifier and three VQA models.
DEFAULT_SUITE: tuple[tuple[str, str], ...] = (
    ("CLIP", CLASSIFY),
    ("QWEN2.5VL", VQA),
    ("BLIP", VQA),
    ("Florence-2-base", VQA),
)

_QUESTION = re.compile(r"^\s*is there (?:a|an) (.+?) in the image\s*\??\s*$", re.IGNORECASE)
_PUNCT = str.maketrans({c: " " for c in string.punctuation})


class VerifierError(RuntimeError):
    """Backend failure while verifying one image; safe to retry."""

    retriable = True

    def __init__(self, image_key: tuple, reason: str):
        super().__init__(f"verifier failed on {image_key}: {reason}")
        self.image_key = image_key


class Verifier(Protocol):
    verifier_id: str
    family: str
    version: str

    def scores(self, image: ImageRecord, labels: Sequence[str]) -> Sequence[float]: ...

    def answer(self, image: ImageRecord, question: str) -> str: ...


@dataclass(frozen=True)
class Classification:
    label: str | None
    scores: tuple[float, ...]
    labels: tuple[str, ...]
    tie_broken: bool = False


@dataclass(frozen=True)
class VerifierVerdict:
    image_key: tuple[str, int, str]
    verifier_id: str
    probe: str
    outcome: bool | None
    score: float | None = None
    raw: str | None = None
    rule: str = ""

    @property
    def indeterminate(self) -> bool:
        return self.outcome is None


def normalize_answer(text: str) -> bool | None:
    """Map a free-text VQA answer to yes / no; anything else is ``None``."""
    words = str(text).lower().translate(_PUNCT).split()
    if not words:
        return None
    if words[0] == "yes":
        return True
    if words[0] == "no":
        return False
    return None


def question_phrase(question: str) -> str:
    m = _QUESTION.match(question)
    if not m:
        raise ValueError(f"not a presence question: {question!r}")
    return m.group(1)


def classify(image: ImageRecord, labels: Sequence[str], verifier: Verifier) -> Classification:
    """Zero-shot classification; argmax with ties broken by label order.

    When every label scores the same the classifier carries no information
    and no label is chosen.
    """
    labels = tuple(labels)
    if len(labels) < 2 or len(set(labels)) != len(labels):
        raise ValueError(f"classification needs at least two distinct labels, got {labels!r}")
    try:
        scores = tuple(float(s) for s in verifier.scores(image, labels))
    except Exception as exc:
        raise VerifierError(image.key, f"{type(exc).__name__}: {exc}") from exc
    if len(scores) != len(labels):
        raise VerifierError(image.key, f"got {len(scores)} scores for {len(labels)} labels")
    top = max(scores)
    if all(s == top for s in scores):
        return Classification(None, scores, labels, False)
    winners = [i for i, s in enumerate(scores) if s == top]
    return Classification(labels[winners[0]], scores, labels, len(winners) > 1)


def vqa_answer(image: ImageRecord, question: str, verifier: Verifier) -> tuple[bool | None, str]:
    try:
        raw = str(verifier.answer(image, question))
    except Exception as exc:
        raise VerifierError(image.key, f"{type(exc).__name__}: {exc}") from exc
    return normalize_answer(raw), raw


def vqa_presence(image: ImageRecord, question: str, verifier: Verifier) -> bool | None:
    """Normalized yes/no answer; ``None`` when the answer is unparseable."""
    return vqa_answer(image, question, verifier)[0]


class VerdictCache:
    """Verdicts keyed by (payload digest, probe, labels, verifier id, version)."""

    def __init__(self) -> None:
        self._data: dict[tuple, VerifierVerdict] = {}
        self._lock = threading.Lock()
        self.hits = 0

    def get(self, key: tuple) -> VerifierVerdict | None:
        with self._lock:
            v = self._data.get(key)
            if v is not None:
                self.hits += 1
            return v

    def put(self, key: tuple, verdict: VerifierVerdict) -> None:
        with self._lock:
            self._data[key] = verdict

    def __len__(self) -> int:
        return len(self._data)


def presence(
    image: ImageRecord,
    probe: str,
    verifier: Verifier,
    labels: Sequence[str] | None = None,
    cache: VerdictCache | None = None,
) -> VerifierVerdict:
    """Is ``probe`` (a concept phrase, or a question for VQA) in the image?

    Classification verifiers need ``labels`` containing the probe; the probe
    is present iff it is the chosen label.
    """
    labels = tuple(labels) if labels is not None else None
    key = None
    if cache is not None:
        key = (image.payload_digest(), probe, labels, verifier.verifier_id, verifier.version)
        hit = cache.get(key)
        if hit is not None:
            if hit.image_key != image.key:
                hit = VerifierVerdict(image.key, hit.verifier_id, hit.probe, hit.outcome, hit.score, hit.raw, hit.rule)
            return hit
    if verifier.family == CLASSIFY:
        if labels is None or probe not in labels:
            raise ValueError(f"classification probe {probe!r} must be one of the labels")
        result = classify(image, labels, verifier)
        idx = labels.index(probe)
        verdict = VerifierVerdict(
            image.key, verifier.verifier_id, probe, result.label == probe,
            result.scores[idx], result.label, "argmax==probe; ties by label order; all-equal -> absent",
        )
    elif verifier.family == VQA:
        question = probe if probe.rstrip().endswith("?") else render_question(probe)
        outcome, raw = vqa_answer(image, question, verifier)
        score = None
        if outcome is not None and isinstance(verifier, OracleVerifier):
            score = float(outcome)
        verdict = VerifierVerdict(
            image.key, verifier.verifier_id, probe, outcome, score, raw, "leading yes/no token",
        )
    else:
        raise ValueError(f"unknown verifier family {verifier.family!r}")
    if cache is not None:
        cache.put(key, verdict)
    return verdict


class OracleVerifier:
    """Reads mock payloads directly. Supports both families."""

    version = "1"

    def __init__(
        self,
        tree: ConceptTree,
        verifier_id: str = "oracle",
        family: str = VQA,
        vocab: AttributeVocabulary = DEFAULT_VOCAB,
    ):
        if family not in (CLASSIFY, VQA):
            raise ValueError(f"unknown verifier family {family!r}")
        self.tree = tree
        self.verifier_id = verifier_id
        self.family = family
        self.vocab = vocab
        self._superclasses = {n.name for n in tree.superclasses()}

    def settings(self) -> dict:
        return {"backend": "oracle", "family": self.family, "version": self.version}

    def _objects(self, image: ImageRecord) -> list[Mapping[str, Any]]:
        if not image.synthetic or image.payload.get("kind") != "mock":
            raise TypeError("oracle verifier only reads mock payloads")
        return image.payload["objects"]

    def matches(self, image: ImageRecord, phrase: str) -> bool:
        phrase = " ".join(phrase.lower().split())
        objects = self._objects(image)
        if phrase in self._superclasses:
            return any(o["superclass"] == phrase for o in objects)
        attrs, name = parse_attributes(phrase, self.vocab)
        return any(
            o["name"] == name and all(o["attributes"].get(s) == v for s, v in attrs.items())
            for o in objects
        )

    def scores(self, image: ImageRecord, labels: Sequence[str]) -> list[float]:
        return [1.0 if self.matches(image, lab) else 0.0 for lab in labels]

    def answer(self, image: ImageRecord, question: str) -> str:
        return "Yes" if self.matches(image, question_phrase(question)) else "No"


# -- label sets ---------------------------------------------------------------

def superclass_labels(tree: ConceptTree) -> list[str]:
    return [n.name for n in tree.superclasses()]


def sibling_labels(tree: ConceptTree, probe: str) -> list[str]:
    """The probe followed by the other objects of its superclass."""
    node = tree.node(probe)
    if node.level == SUPERCLASS:
        return superclass_labels(tree)
    obj = tree.object_of(node.id)
    sc = tree.superclass_of(node.id)
    others = [tree.node(c).name for c in tree.children(sc.id) if c != obj.id]
    return [node.name, *others]


def attribute_labels(
    attribute: str, name: str, vocab: AttributeVocabulary = DEFAULT_VOCAB
) -> list[str]:
    """``<attribute> <name>``, the same name with the slot's other values, then bare ``name``."""
    slot = vocab.slot_of(attribute)
    if slot is None:
        raise ValueError(f"{attribute!r} is not in the vocabulary")
    others = [v for v in vocab.values(slot) if v != attribute]
    return [f"{attribute} {name}", *(f"{v} {name}" for v in others), name]


def probe_labels(tree: ConceptTree, probe: str) -> list[str]:
    node = tree.node(probe)
    if node.level == OBJECT or node.level == "variant":
        return sibling_labels(tree, probe)
    return superclass_labels(tree)
