"""Benchmark corpus: compositional prompts, yes/no questions, leakage probes."""

from __future__ import annotations

import hashlib
import json
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType

from . import __version__
from .catalog import OBJECT, ConceptNode, ConceptTree
from .vocab import DEFAULT_VOCAB, SLOTS, AttributeVocabulary

__all__ = [
    "AttributeVocabulary",
    "PromptRecord",
    "article",
    "build_corpus",
    "corpus_digest",
    "enumerate_variants",
    "parse_attributes",
    "read_corpus",
    "render_leakage_prompt",
    "render_prompt",
    "render_question",
    "write_corpus",
]

PROMPT_PREFIX = "An image of a"

# "an" before these despite a consonant letter, "a" before these despite a vowel.
_VOWEL_SOUND = frozenset({"hour", "hourly", "honest", "honor", "honour", "heir", "heirloom"})
_CONSONANT_SOUND = frozenset({"one", "once", "unicorn", "uniform", "unit", "university", "user", "euro", "european", "ewe"})


@dataclass(frozen=True)
class PromptRecord:
    prompt_id: str
    object_id: str
    superclass: str
    attributes: Mapping[str, str]
    text: str
    question: str
    class_label: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "attributes", MappingProxyType(dict(self.attributes)))

    @property
    def arity(self) -> int:
        return len(self.attributes)

    def to_json(self) -> dict:
        return {
            "prompt_id": self.prompt_id,
            "object_id": self.object_id,
            "superclass": self.superclass,
            "attributes": {s: self.attributes[s] for s in SLOTS if s in self.attributes},
            "text": self.text,
            "question": self.question,
            "class_label": self.class_label,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "PromptRecord":
        return cls(
            d["prompt_id"], d["object_id"], d["superclass"], d["attributes"],
            d["text"], d["question"], d["class_label"],
        )


def article(word: str) -> str:
    w = word.strip().lower()
    if not w:
        raise ValueError("article() needs a word")
    head = w.split()[0]
    if head in _VOWEL_SOUND:
        return "an"
    if head in _CONSONANT_SOUND:
        return "a"
    return "an" if head[0] in "aeiou" else "a"


def render_prompt(class_label: str) -> str:
    return f"{PROMPT_PREFIX} {class_label}"


def render_question(concept_phrase: str) -> str:
    phrase = " ".join(concept_phrase.split())
    if not phrase:
        raise ValueError("question needs a non-empty concept phrase")
    return f"Is there a {phrase} in the image?"


def render_leakage_prompt(
    attribute: str, e: str, p: str, vocab: AttributeVocabulary = DEFAULT_VOCAB
) -> str:
    """``an image of a/an <attribute> <e> and a/an <p>``."""
    if vocab.slot_of(attribute) is None:
        raise ValueError(f"{attribute!r} is not in the attribute vocabulary")
    e, p = " ".join(e.split()), " ".join(p.split())
    if not e or not p:
        raise ValueError("leakage prompt needs non-empty concepts")
    if e == p:
        raise ValueError(f"target and preserve concept are both {e!r}")
    return f"an image of {article(attribute)} {attribute} {e} and {article(p)} {p}"


def parse_attributes(phrase: str, vocab: AttributeVocabulary = DEFAULT_VOCAB) -> tuple[dict[str, str], str]:
    """Split a concept phrase (or full prompt) into (attributes, object name).

    Leading vocabulary words are taken as attributes; the rest is the name.
    """
    words = phrase.split()
    if len(words) >= 4 and [w.lower() for w in words[:3]] == ["an", "image", "of"]:
        words = words[4:] if words[3].lower() in ("a", "an") else words[3:]
    attrs: dict[str, str] = {}
    i = 0
    while i < len(words) - 1:
        slot = vocab.slot_of(words[i])
        if slot is None or slot in attrs:
            break
        attrs[slot] = words[i]
        i += 1
    return attrs, " ".join(words[i:])


def _record(node: ConceptNode, obj: ConceptNode, superclass: str) -> PromptRecord:
    return PromptRecord(
        prompt_id=node.id,
        object_id=obj.id,
        superclass=superclass,
        attributes=node.attributes,
        text=render_prompt(node.name),
        question=render_question(node.name),
        class_label=node.name,
    )


def enumerate_variants(
    object_node: ConceptNode,
    vocab: AttributeVocabulary = DEFAULT_VOCAB,
    superclass: str | None = None,
) -> list[PromptRecord]:
    """The bare prompt plus all 63 attribute variants of one object.

    Variant ids follow the catalog id scheme, so records join the tree
    directly. ``superclass`` defaults to the first segment of the object id.
    """
    if object_node.level != OBJECT:
        raise ValueError(f"{object_node.id!r} is a {object_node.level}, expected an object")
    sc = superclass if superclass is not None else object_node.parent_id
    out = [_record(object_node, object_node, sc)]
    for attrs in vocab.combinations():
        suffix = "-".join(attrs[s] for s in SLOTS if s in attrs)
        variant = ConceptNode(
            f"{object_node.id}/{suffix}", vocab.phrase(attrs, object_node.name), "variant",
            object_node.id, attrs,
        )
        out.append(_record(variant, object_node, sc))
    return out


def build_corpus(tree: ConceptTree, vocab: AttributeVocabulary = DEFAULT_VOCAB) -> list[PromptRecord]:
    """One record per object and variant node, in tree order."""
    out: list[PromptRecord] = []
    for obj in tree.objects():
        sc = tree.node(obj.parent_id).name
        records = enumerate_variants(obj, vocab, sc)
        for rec in records[1:]:
            if rec.prompt_id not in tree or tree.node(rec.prompt_id).name != rec.class_label:
                raise ValueError(f"tree is missing variant {rec.prompt_id!r}")
        out.extend(records)
    return out


def corpus_to_jsonl(records: Iterable[PromptRecord]) -> str:
    rows = sorted(records, key=lambda r: r.prompt_id)
    return "".join(json.dumps(r.to_json(), sort_keys=True) + "\n" for r in rows)


def corpus_digest(records: Iterable[PromptRecord]) -> str:
    return hashlib.sha256(corpus_to_jsonl(records).encode("utf-8")).hexdigest()


def write_corpus(
    records: list[PromptRecord], out_dir: str | Path, tree: ConceptTree, vocab: AttributeVocabulary = DEFAULT_VOCAB
) -> Path:
    """Write ``corpus.jsonl`` (sorted by prompt id) and its sidecar manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    body = corpus_to_jsonl(records)
    path = out / "corpus.jsonl"
    path.write_text(body, encoding="utf-8")
    manifest = {
        "generator": "seebench",
        "generator_version": __version__,
        "vocabulary": vocab.as_dict(),
        "tree_hash": tree.digest(),
        "corpus_hash": hashlib.sha256(body.encode("utf-8")).hexdigest(),
        "n_records": len(records),
    }
    (out / "corpus.manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_corpus(path: str | Path) -> list[PromptRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [PromptRecord.from_json(json.loads(line)) for line in lines if line.strip()]
