from __future__ import annotations

import pytest

import oracles
from conftest import sub_corpus
from seebench.gateway import (
    SEQUENTIAL_FOLD,
    SINGLE_CALL,
    BatchGenerationError,
    EditRequest,
    EraseError,
    GatewayError,
    GenerationError,
    ImageRecord,
    MockBackend,
    ModelRegistry,
    PayloadStore,
    apply_erasure,
    base_handle,
    generate,
    generate_one,
)
from seebench.verifiers import OracleVerifier, presence


def names(record):
    return [o["name"] for o in record.payload["objects"]]


def test_generation_is_deterministic(base, tree):
    p = ("x", "An image of a red car")
    a = generate_one(base, p, 3, want_attention=True)
    b = generate_one(base_handle(MockBackend(tree), "mock-sd"), p, 3, want_attention=True)
    assert a.payload == b.payload and a.payload_digest() == b.payload_digest()
    assert {k: m.grid.tolist() for k, m in a.attention.items()} == {k: m.grid.tolist() for k, m in b.attention.items()}


def test_seeds_are_independent(base):
    p = ("x", "An image of a cup")
    recs = generate(base, p, [0, 1, 2, 3])
    assert [r.seed for r in recs] == [0, 1, 2, 3]
    assert len({r.payload_digest() for r in recs}) == 4
    assert generate(base, p, [2])[0].payload == recs[2].payload


def test_base_is_never_mutated(base, make_cet):
    cet = make_cet(closure=True)
    before = generate_one(base, ("x", "An image of a cup"), 0).payload
    edited = apply_erasure(cet, base, EditRequest(cet.name, ("cup",)))
    assert edited.model_id != base.model_id and edited.edited and not base.edited
    assert names(generate_one(edited, ("x", "An image of a cup"), 0)) == []
    assert generate_one(base, ("x", "An image of a cup"), 0).payload == before


def test_edited_id_is_idempotent(base, make_cet):
    cet = make_cet()
    reg = ModelRegistry()
    a = apply_erasure(cet, base, EditRequest(cet.name, ("cup",)), reg)
    b = apply_erasure(cet, base, EditRequest(cet.name, ("cup",)), reg)
    c = apply_erasure(cet, base, EditRequest(cet.name, ("car",)), reg)
    assert a.model_id == b.model_id != c.model_id
    assert len(reg) == 2 and reg.get(a.model_id) is a


def test_sequential_fold_provenance(base, make_cet, tree):
    cet = make_cet()
    targets = [r.name for r in [tree.node("cup"), *(tree.node(c) for c in tree.children(tree.node("cup").id))]]
    assert len(targets) == 64
    folded = apply_erasure(cet, base, EditRequest(cet.name, targets[1:], SEQUENTIAL_FOLD))
    assert len(folded.provenance) == 63
    assert all(len(p.targets) == 1 and p.mode == SEQUENTIAL_FOLD for p in folded.provenance)
    assert [p.targets[0] for p in folded.provenance] == targets[1:]
    assert cet.calls == 63
    single = apply_erasure(cet, base, EditRequest(cet.name, targets[1:], SINGLE_CALL))
    assert len(single.provenance) == 1 and cet.calls == 64


def test_edit_request_validation():
    with pytest.raises(ValueError):
        EditRequest("c", ())
    with pytest.raises(ValueError):
        EditRequest("c", ("cup",), "bogus")


def test_adapter_name_mismatch(base, make_cet):
    with pytest.raises(GatewayError):
        apply_erasure(make_cet("a"), base, EditRequest("b", ("cup",)))


def test_erase_failure_reports_step(base, make_cet):
    broken = make_cet("broken")
    real = broken.erase
    broken.erase = lambda req: {"error": "out of memory"} if req["targets"] == ["car"] else real(req)
    reg = ModelRegistry()
    with pytest.raises(EraseError, match="step 1") as info:
        apply_erasure(broken, base, EditRequest("broken", ("cup", "car", "fork"), SEQUENTIAL_FOLD), reg)
    assert info.value.step == 1
    assert len(reg) == 0


def test_failure_injection_isolates_seeds(tree):
    be = MockBackend(tree, fail=lambda r: r["seed"] == 2)
    h = base_handle(be, be.model_id)
    with pytest.raises(BatchGenerationError) as info:
        generate(h, ("x", "An image of a cup"), [0, 1, 2, 3])
    assert [r.seed for r in info.value.records] == [0, 1, 3]
    assert [e.seed for e in info.value.errors] == [2]
    assert info.value.errors[0].retriable


def test_malformed_response(base):
    class Empty:
        capabilities = base.capabilities

        def generate(self, req):
            return {}

    h = base_handle(Empty(), "empty")
    with pytest.raises(GenerationError, match="neither payload nor locator"):
        generate_one(h, ("x", "An image of a cup"), 0)


def test_unrenderable_prompt(base):
    with pytest.raises(GenerationError):
        generate_one(base, ("x", "An image of a unicorn"), 0)


def test_payload_store_is_content_addressed(tmp_path):
    src = tmp_path / "img.png"
    src.write_bytes(b"pixels")
    store = PayloadStore(tmp_path / "store")
    a = store.put(src)
    b = store.put(src)
    assert a == b
    rec = ImageRecord("x", 0, "m", a)
    assert not rec.synthetic and len(rec.payload_digest()) == 64


def test_collateral_matches_bruteforce(base, make_cet, tree, corpus, oracle):
    cet = make_cet(radius=1, probability=1.0)
    edited = apply_erasure(cet, base, EditRequest(cet.name, ("red car",)))
    expected = oracles.radius_suppressed((None, "red", None), 1, "car")
    assert set(cet.suppression_set(["red car"])) == expected
    for rec in sub_corpus(corpus, tree, "car"):
        img = generate_one(edited, rec, 0)
        shown = presence(img, rec.class_label, oracle).outcome
        assert shown == (rec.class_label not in expected)


def test_collateral_probability_is_seeded(make_cet):
    a = make_cet(radius=3, probability=0.5, rng_seed=7).suppression_set(["cup"])
    b = make_cet(radius=3, probability=0.5, rng_seed=7).suppression_set(["cup"])
    c = make_cet(radius=3, probability=0.5, rng_seed=8).suppression_set(["cup"])
    assert a == b and a != c
    assert 10 < len(a) < 60


def test_mock_cet_argument_validation(make_cet):
    with pytest.raises(ValueError):
        make_cet(radius=-1)
    with pytest.raises(ValueError):
        make_cet(probability=1.5)
    with pytest.raises(ValueError):
        make_cet(single_call="some")


def test_attention_maps(base, make_cet):
    img = generate_one(base, ("x", "An image of a red cup"), 0, want_attention=True)
    assert set(img.attention) == {"cup", "red"}
    assert img.attention["cup"].grid.max() == 1.0
    weak = make_cet(radius=0)
    edited = apply_erasure(weak, base, EditRequest(weak.name, ("blue cup",)))
    img = generate_one(edited, ("x", "An image of a red cup"), 0, want_attention=True)
    assert img.attention["cup"].grid.max() == pytest.approx(1 / 64)
    assert generate_one(base, ("x", "An image of a cup"), 0, want_attention=False).attention is None


def test_oracle_reads_payload(base, tree):
    img = generate_one(base, ("x", "An image of a small red wooden cup"), 0)
    o = OracleVerifier(tree)
    assert o.matches(img, "cup") and o.matches(img, "red cup") and o.matches(img, "kitchen")
    assert not o.matches(img, "blue cup") and not o.matches(img, "car")
