"""Concept hierarchy: superclass -> object -> compositional variant.

The tree defines erase and preserve sets for any target concept. Lookups
accept either a node id (``"kitchen/cup/red"``) or a concept phrase
(``"red cup"``); phrases are unique across the tree.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from types import MappingProxyType

from .vocab import DEFAULT_VOCAB, SLOTS, AttributeVocabulary

SUPERCLASS = "superclass"
OBJECT = "object"
VARIANT = "variant"
LEVELS = (SUPERCLASS, OBJECT, VARIANT)


class CatalogError(ValueError):
    """Invalid catalog input."""


@dataclass(frozen=True)
class ConceptNode:
    id: str
    name: str
    level: str
    parent_id: str | None = None
    attributes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.level not in LEVELS:
            raise CatalogError(f"unknown level {self.level!r}")
        if (self.level == SUPERCLASS) != (self.parent_id is None):
            raise CatalogError(f"{self.id}: only superclasses lack a parent")
        if self.level == VARIANT and not self.attributes:
            raise CatalogError(f"{self.id}: variant without attributes")
        if self.level != VARIANT and self.attributes:
            raise CatalogError(f"{self.id}: only variants carry attributes")
        object.__setattr__(self, "attributes", MappingProxyType(dict(self.attributes)))

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "level": self.level,
            "parent_id": self.parent_id,
            "attributes": {s: self.attributes[s] for s in SLOTS if s in self.attributes},
        }


def slug(text: str) -> str:
    return "_".join(text.lower().split())


def variant_suffix(attributes: Mapping[str, str]) -> str:
    return "-".join(attributes[s] for s in SLOTS if s in attributes)


class ConceptTree:
    """Immutable concept hierarchy with id and phrase lookup."""

    def __init__(self, nodes: Iterable[ConceptNode]):
        self._nodes: dict[str, ConceptNode] = {}
        self._by_name: dict[str, str] = {}
        children: dict[str, list[str]] = {}
        for node in nodes:
            if node.id in self._nodes:
                raise CatalogError(f"duplicate node id {node.id!r}")
            if node.name in self._by_name:
                raise CatalogError(f"duplicate concept name {node.name!r}")
            self._nodes[node.id] = node
            self._by_name[node.name] = node.id
            children.setdefault(node.id, [])
            if node.parent_id is not None:
                children.setdefault(node.parent_id, []).append(node.id)
        for node in self._nodes.values():
            if node.parent_id is None:
                continue
            parent = self._nodes.get(node.parent_id)
            if parent is None:
                raise CatalogError(f"{node.id}: parent {node.parent_id!r} missing")
            expected = LEVELS[LEVELS.index(node.level) - 1]
            if parent.level != expected:
                raise CatalogError(f"{node.id}: parent must be a {expected}, got {parent.level}")
        self._children = {k: tuple(v) for k, v in children.items()}

    def __len__(self) -> int:
        return len(self._nodes)

    def __iter__(self) -> Iterator[ConceptNode]:
        return iter(self._nodes.values())

    def __contains__(self, key: object) -> bool:
        return isinstance(key, str) and (key in self._nodes or key in self._by_name)

    @property
    def ids(self) -> list[str]:
        return list(self._nodes)

    def resolve(self, key: str) -> str:
        """Return the node id for ``key`` (an id or a concept phrase)."""
        if key in self._nodes:
            return key
        try:
            return self._by_name[key]
        except KeyError:
            raise KeyError(f"unknown concept {key!r}") from None

    def node(self, key: str) -> ConceptNode:
        return self._nodes[self.resolve(key)]

    def children(self, key: str) -> tuple[str, ...]:
        return self._children[self.resolve(key)]

    def parent(self, key: str) -> ConceptNode | None:
        pid = self.node(key).parent_id
        return None if pid is None else self._nodes[pid]

    def level_nodes(self, level: str) -> list[ConceptNode]:
        return [n for n in self._nodes.values() if n.level == level]

    def superclasses(self) -> list[ConceptNode]:
        return self.level_nodes(SUPERCLASS)

    def objects(self) -> list[ConceptNode]:
        return self.level_nodes(OBJECT)

    def object_of(self, key: str) -> ConceptNode | None:
        """Object node a concept belongs to; ``None`` for superclasses."""
        node = self.node(key)
        if node.level == SUPERCLASS:
            return None
        return node if node.level == OBJECT else self._nodes[node.parent_id]

    def superclass_of(self, key: str) -> ConceptNode:
        node = self.node(key)
        while node.parent_id is not None:
            node = self._nodes[node.parent_id]
        return node

    def to_jsonl(self) -> str:
        return "".join(json.dumps(n.to_json(), sort_keys=True) + "\n" for n in self)

    def digest(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode("utf-8")).hexdigest()

    def write_jsonl(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "ConceptTree":
        nodes = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                d = json.loads(line)
                nodes.append(ConceptNode(d["id"], d["name"], d["level"], d["parent_id"], d["attributes"]))
        return cls(nodes)


def load_superclass_table() -> dict[str, list[str]]:
    """The 11-superclass / 79-object grouping shipped with the package."""
    text = resources.files("seebench.data").joinpath("superclasses.json").read_text(encoding="utf-8")
    return json.loads(text)


def build_catalog(
    superclass_table: Mapping[str, Sequence[str]],
    vocab: AttributeVocabulary = DEFAULT_VOCAB,
) -> ConceptTree:
    """Expand a superclass -> objects table into the full three-level tree."""
    seen: set[str] = set()
    nodes: list[ConceptNode] = []
    combos = vocab.combinations()
    for sc_name, objects in superclass_table.items():
        if not objects:
            raise CatalogError(f"superclass {sc_name!r} has no objects")
        if sc_name in seen:
            raise CatalogError(f"duplicate name {sc_name!r}")
        seen.add(sc_name)
        sc_id = slug(sc_name)
        nodes.append(ConceptNode(sc_id, sc_name, SUPERCLASS))
        for obj_name in objects:
            if obj_name in seen:
                raise CatalogError(f"duplicate object name {obj_name!r}")
            seen.add(obj_name)
            obj_id = f"{sc_id}/{slug(obj_name)}"
            nodes.append(ConceptNode(obj_id, obj_name, OBJECT, sc_id))
            for attrs in combos:
                nodes.append(
                    ConceptNode(
                        f"{obj_id}/{variant_suffix(attrs)}",
                        vocab.phrase(attrs, obj_name),
                        VARIANT,
                        obj_id,
                        attrs,
                    )
                )
    return ConceptTree(nodes)


def default_catalog(vocab: AttributeVocabulary = DEFAULT_VOCAB) -> ConceptTree:
    return build_catalog(load_superclass_table(), vocab)


def descendants(tree: ConceptTree, key: str, depth: int | None = None) -> list[ConceptNode]:
    """Breadth-first descendants of ``key``, at most ``depth`` levels down.

    ``depth=None`` walks the whole subtree.
    """
    if depth is not None and depth < 1:
        raise ValueError("depth must be a positive integer or None")
    out: list[ConceptNode] = []
    queue = deque([(tree.resolve(key), 0)])
    while queue:
        nid, d = queue.popleft()
        if depth is not None and d >= depth:
            continue
        for cid in tree.children(nid):
            out.append(tree.node(cid))
            queue.append((cid, d + 1))
    return out


def erase_order(tree: ConceptTree, e: str) -> list[str]:
    """Erase set as an ordered id list: the target first, then BFS descendants."""
    return [tree.resolve(e), *(n.id for n in descendants(tree, e))]


def erase_set(tree: ConceptTree, e: str) -> set[str]:
    return set(erase_order(tree, e))


def preserve_set(tree: ConceptTree, e: str) -> set[str]:
    erased = erase_set(tree, e)
    return {nid for nid in tree.ids if nid not in erased}
