from __future__ import annotations

from pathlib import Path

import pytest

from seebench.catalog import (
    OBJECT,
    SUPERCLASS,
    VARIANT,
    CatalogError,
    ConceptNode,
    ConceptTree,
    build_catalog,
    descendants,
    erase_order,
    erase_set,
    load_superclass_table,
    preserve_set,
    slug,
)
from seebench.vocab import DEFAULT_VOCAB, AttributeVocabulary

GOLDEN = Path(__file__).parent / "golden"


def test_tree_shape(tree):
    assert len(tree.superclasses()) == 11
    assert len(tree.objects()) == 79
    assert len(tree.level_nodes(VARIANT)) == 79 * 63
    assert len(tree) == 11 + 79 + 79 * 63


def test_superclass_order_and_membership(tree):
    names = [n.name for n in tree.superclasses()]
    assert names == ["vehicle", "outdoor", "animal", "accessory", "sports", "kitchen",
                     "food", "furniture", "electronic", "appliance", "indoor"]
    assert tree.superclass_of("cup").name == "kitchen"
    assert tree.superclass_of("small red wooden car").name == "vehicle"
    assert tree.superclass_of("vehicle").name == "vehicle"


def test_table_has_79_unique_objects():
    table = load_superclass_table()
    objs = [o for v in table.values() for o in v]
    assert len(objs) == len(set(objs)) == 79
    for name in ("tv remote", "computer mouse", "computer keyboard", "hair drier", "teddy bear"):
        assert name in objs


def test_ids_and_lookup(tree):
    node = tree.node("small red wooden car")
    assert node.id == "vehicle/car/small-red-wooden"
    assert node.level == VARIANT
    assert dict(node.attributes) == {"size": "small", "color": "red", "material": "wooden"}
    assert tree.node("vehicle/car/small-red-wooden") is node
    assert tree.node("teddy bear").id == "indoor/teddy_bear"
    assert tree.parent("red cup").name == "cup"
    assert tree.parent("vehicle") is None
    assert tree.object_of("vehicle") is None
    with pytest.raises(KeyError):
        tree.node("purple cup")


def test_slug():
    assert slug("teddy bear") == "teddy_bear"
    assert slug("cup") == "cup"


def test_erase_set_cup_matches_golden(tree):
    expected = (GOLDEN / "erase_set_cup.txt").read_text().splitlines()
    got = [tree.node(i).name for i in erase_order(tree, "cup")]
    assert got == expected


def test_erase_preserve_partition(tree):
    for e in ("cup", "vehicle", "red car"):
        es, ps = erase_set(tree, e), preserve_set(tree, e)
        assert es.isdisjoint(ps)
        assert es | ps == set(tree.ids)


def test_erase_set_sizes(tree):
    assert len(erase_set(tree, "cup")) == 64
    assert len(erase_set(tree, "red cup")) == 1
    n_vehicle = len(tree.children("vehicle"))
    assert len(erase_set(tree, "vehicle")) == 1 + 64 * n_vehicle


def test_variant_target_is_a_leaf(tree):
    assert erase_order(tree, "red car") == [tree.resolve("red car")]


def test_descendants_depth(tree):
    assert len(descendants(tree, "vehicle", depth=1)) == len(tree.children("vehicle"))
    assert descendants(tree, "red car") == []
    with pytest.raises(ValueError):
        descendants(tree, "cup", depth=0)


def test_jsonl_roundtrip(tree, tmp_path):
    path = tmp_path / "tree.jsonl"
    tree.write_jsonl(path)
    again = ConceptTree.read_jsonl(path)
    assert again.digest() == tree.digest()
    assert len(again) == len(tree)


def test_build_rejects_bad_tables():
    with pytest.raises(CatalogError):
        build_catalog({"empty": []})
    with pytest.raises(CatalogError):
        build_catalog({"a": ["cup"], "b": ["cup"]})


def test_node_invariants():
    with pytest.raises(CatalogError):
        ConceptNode("x", "x", "leaf")
    with pytest.raises(CatalogError):
        ConceptNode("x", "x", OBJECT)  # object without parent
    with pytest.raises(CatalogError):
        ConceptNode("x", "x", SUPERCLASS, "p")
    with pytest.raises(CatalogError):
        ConceptNode("x/y", "y", VARIANT, "x")  # variant without attributes


def test_duplicate_ids_rejected():
    sc = ConceptNode("a", "a", SUPERCLASS)
    with pytest.raises(CatalogError):
        ConceptTree([sc, sc])


def test_custom_vocabulary_changes_tree():
    vocab = AttributeVocabulary(color=("cyan", "magenta", "yellow"))
    t = build_catalog({"kitchen": ["cup"]}, vocab)
    assert "cyan cup" in t
    assert "red cup" not in t
    assert len(t) == 1 + 1 + 63


def test_vocab_combinations_order():
    combos = DEFAULT_VOCAB.combinations()
    assert len(combos) == 63
    assert combos[0] == {"size": "small"}
    assert combos[9] == {"size": "small", "color": "red"}
    assert combos[-1] == {"size": "large", "color": "blue", "material": "metallic"}


def test_vocab_validation():
    with pytest.raises(ValueError):
        AttributeVocabulary(size=("small", "small", "large"))
    with pytest.raises(ValueError):
        AttributeVocabulary(color=("small", "green", "blue"))
