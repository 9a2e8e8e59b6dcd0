"""Boundary to text-to-image backends and concept-erasure adapters.

Real generators and erasure techniques live out of process and speak a
small JSON message contract (see :mod:`seebench.transport`). The harness
only tracks handles, seeds and provenance. :class:`MockBackend` and
:class:`MockCET` form a deterministic in-process stack whose side effects
are configurable, so every metric path can be exercised without a GPU.
"""

from __future__ import annotations

import hashlib
import json
import shutil
import threading
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Protocol

import numpy as np

from . import attention as attn
from .catalog import OBJECT, SUPERCLASS, ConceptTree, descendants
from .prompts import PromptRecord
from .vocab import DEFAULT_VOCAB, SLOTS, AttributeVocabulary

DEFAULT_SEEDS: tuple[int, ...] = (0, 1, 2, 3)
SINGLE_CALL = "single_call"
SEQUENTIAL_FOLD = "sequential_fold"
EDIT_MODES = (SINGLE_CALL, SEQUENTIAL_FOLD)


class GatewayError(RuntimeError):
    pass


class GenerationError(GatewayError):
    """A single (prompt, seed) generation failed; safe to retry."""

    retriable = True

    def __init__(self, prompt_id: str, seed: int, reason: str):
        super().__init__(f"generation failed for {prompt_id!r} seed {seed}: {reason}")
        self.prompt_id = prompt_id
        self.seed = seed
        self.reason = reason


class BatchGenerationError(GatewayError):
    """Some seeds of a prompt failed; ``records`` holds the ones that did not."""

    def __init__(self, records: list["ImageRecord"], errors: list[GenerationError]):
        super().__init__("; ".join(str(e) for e in errors))
        self.records = records
        self.errors = errors


class EraseError(GatewayError):
    def __init__(self, step: int, cet_name: str, reason: str):
        super().__init__(f"{cet_name} failed at step {step}: {reason}")
        self.step = step


@dataclass(frozen=True)
class Capabilities:
    returns_attention_maps: bool = False
    max_concurrent_requests: int = 1


@dataclass(frozen=True)
class EditRequest:
    cet_name: str
    targets: tuple[str, ...]
    mode: str = SINGLE_CALL

    def __post_init__(self) -> None:
        object.__setattr__(self, "targets", tuple(self.targets))
        if not self.targets:
            raise ValueError("edit request needs at least one target")
        if self.mode not in EDIT_MODES:
            raise ValueError(f"mode must be one of {EDIT_MODES}, got {self.mode!r}")

    def to_json(self) -> dict:
        return {"cet_name": self.cet_name, "targets": list(self.targets), "mode": self.mode}


class Backend(Protocol):
    capabilities: Capabilities

    def generate(self, request: Mapping[str, Any]) -> Mapping[str, Any]: ...


class CETAdapter(Protocol):
    name: str

    def erase(self, request: Mapping[str, Any]) -> Mapping[str, Any]: ...

    def settings(self) -> dict: ...


@dataclass(frozen=True)
class GeneratorHandle:
    model_id: str
    capabilities: Capabilities
    provenance: tuple[EditRequest, ...] = ()
    label: str = ""
    backend: Backend | None = field(default=None, compare=False, repr=False)
    backend_ref: str = ""

    @property
    def edited(self) -> bool:
        return bool(self.provenance)

    def manifest_entry(self) -> dict:
        return {
            "model_id": self.model_id,
            "label": self.label,
            "backend_ref": self.backend_ref,
            "provenance": [r.to_json() for r in self.provenance],
        }


def base_handle(backend: Backend, model_id: str, label: str = "Unedited") -> GeneratorHandle:
    return GeneratorHandle(model_id, backend.capabilities, (), label, backend, model_id)


def edited_model_id(base_id: str, request: EditRequest) -> str:
    """Digest naming the model obtained by applying ``request`` to ``base_id``."""
    blob = json.dumps({"base": base_id, **request.to_json()}, sort_keys=True)
    return f"{request.cet_name}-{hashlib.sha256(blob.encode()).hexdigest()[:16]}"


@dataclass(frozen=True)
class ImageRecord:
    prompt_id: str
    seed: int
    model_id: str
    payload: Any
    attention: Mapping[str, attn.AttentionMap] | None = None

    @property
    def key(self) -> tuple[str, int, str]:
        return (self.prompt_id, self.seed, self.model_id)

    @property
    def synthetic(self) -> bool:
        return isinstance(self.payload, Mapping)

    def payload_digest(self) -> str:
        return self._digest

    @cached_property
    def _digest(self) -> str:
        if self.synthetic:
            blob = json.dumps(self.payload, sort_keys=True).encode()
            return hashlib.sha256(blob).hexdigest()
        path = Path(self.payload)
        # Content-addressed payloads carry their digest as the file stem.
        if len(path.stem) == 64 and path.parent.name == path.stem[:2]:
            return path.stem
        return hashlib.sha256(path.read_bytes()).hexdigest()


class PayloadStore:
    """Content-addressed directory for image files returned by adapters."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def put(self, locator: str | Path) -> str:
        src = Path(locator)
        digest = hashlib.sha256(src.read_bytes()).hexdigest()
        dest = self.root / digest[:2] / f"{digest}{src.suffix}"
        if not dest.exists():
            dest.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(src, dest)
        return str(dest)


class ModelRegistry:
    """Thread-safe model_id -> handle map; only completed edits are registered."""

    def __init__(self) -> None:
        self._handles: dict[str, GeneratorHandle] = {}
        self._lock = threading.Lock()

    def register(self, handle: GeneratorHandle) -> GeneratorHandle:
        with self._lock:
            return self._handles.setdefault(handle.model_id, handle)

    def get(self, model_id: str) -> GeneratorHandle:
        with self._lock:
            return self._handles[model_id]

    def __contains__(self, model_id: str) -> bool:
        with self._lock:
            return model_id in self._handles

    def __len__(self) -> int:
        with self._lock:
            return len(self._handles)


def _decode_response(handle: GeneratorHandle, prompt_id: str, seed: int, resp: Mapping, store: PayloadStore | None) -> ImageRecord:
    if "payload" in resp and resp["payload"]:
        payload = resp["payload"]
    elif resp.get("locator"):
        payload = store.put(resp["locator"]) if store is not None else str(resp["locator"])
    else:
        raise GenerationError(prompt_id, seed, "response carries neither payload nor locator")
    maps = None
    if resp.get("attention"):
        maps = {tok: attn.from_wire(tok, grid) for tok, grid in resp["attention"].items()}
    return ImageRecord(prompt_id, seed, handle.model_id, payload, maps)


def generate_one(
    handle: GeneratorHandle,
    prompt: PromptRecord | tuple[str, str],
    seed: int,
    want_attention: bool | None = None,
    store: PayloadStore | None = None,
) -> ImageRecord:
    """Generate one image. ``prompt`` may be a record or a (prompt_id, text) pair."""
    prompt_id, text = (prompt.prompt_id, prompt.text) if isinstance(prompt, PromptRecord) else prompt
    if handle.backend is None:
        raise GatewayError(f"handle {handle.model_id!r} has no backend")
    if want_attention is None:
        want_attention = handle.capabilities.returns_attention_maps
    request = {
        "model_id": handle.backend_ref or handle.model_id,
        "prompt": text,
        "seed": int(seed),
        "want_attention": bool(want_attention),
    }
    try:
        resp = handle.backend.generate(request)
    except GenerationError:
        raise
    except Exception as exc:
        raise GenerationError(prompt_id, seed, f"{type(exc).__name__}: {exc}") from exc
    if resp.get("error"):
        raise GenerationError(prompt_id, seed, str(resp["error"]))
    try:
        return _decode_response(handle, prompt_id, seed, resp, store)
    except GenerationError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise GenerationError(prompt_id, seed, f"malformed response: {exc}") from exc


def generate(
    handle: GeneratorHandle,
    prompt: PromptRecord | tuple[str, str],
    seeds: Sequence[int] = DEFAULT_SEEDS,
    want_attention: bool | None = None,
    store: PayloadStore | None = None,
) -> list[ImageRecord]:
    """One image per seed. Failed seeds raise :class:`BatchGenerationError`
    after all other seeds have been generated."""
    if not seeds:
        raise ValueError("at least one seed is required")
    records, errors = [], []
    for seed in seeds:
        try:
            records.append(generate_one(handle, prompt, seed, want_attention, store))
        except GenerationError as exc:
            errors.append(exc)
    if errors:
        raise BatchGenerationError(records, errors)
    return records


def apply_erasure(
    adapter: CETAdapter,
    base: GeneratorHandle,
    request: EditRequest,
    registry: ModelRegistry | None = None,
    label: str | None = None,
) -> GeneratorHandle:
    """Edit ``base`` with ``adapter``; ``base`` itself is never modified.

    ``sequential_fold`` calls the adapter once per target, each on the
    previous result, and records one provenance entry per call.
    """
    if adapter.name != request.cet_name:
        raise GatewayError(f"adapter {adapter.name!r} cannot serve request for {request.cet_name!r}")
    if request.mode == SINGLE_CALL:
        steps = [request]
    else:
        steps = [EditRequest(request.cet_name, (t,), SEQUENTIAL_FOLD) for t in request.targets]
    handle = base
    for i, step in enumerate(steps):
        handle = _erase_step(adapter, handle, step, i)
    handle = _relabel(handle, label or request.cet_name)
    if registry is not None:
        handle = registry.register(handle)
    return handle


def _erase_step(adapter: CETAdapter, handle: GeneratorHandle, step: EditRequest, index: int) -> GeneratorHandle:
    new_id = edited_model_id(handle.model_id, step)
    message = {
        "cet_name": step.cet_name,
        "base_model_id": handle.backend_ref or handle.model_id,
        "targets": list(step.targets),
        "mode": step.mode,
        "new_model_id": new_id,
    }
    try:
        resp = adapter.erase(message)
    except Exception as exc:
        raise EraseError(index, step.cet_name, f"{type(exc).__name__}: {exc}") from exc
    if resp.get("error"):
        raise EraseError(index, step.cet_name, str(resp["error"]))
    ref = resp.get("model_id")
    if not ref:
        raise EraseError(index, step.cet_name, "adapter returned no model_id")
    return GeneratorHandle(
        new_id, handle.capabilities, handle.provenance + (step,), handle.label, handle.backend, str(ref)
    )


def _relabel(handle: GeneratorHandle, label: str) -> GeneratorHandle:
    return GeneratorHandle(handle.model_id, handle.capabilities, handle.provenance, label, handle.backend, handle.backend_ref)


# -- deterministic mock stack -------------------------------------------------

def _stable_int(*parts: object) -> int:
    blob = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(blob, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class Mention:
    name: str
    attributes: Mapping[str, str]

    def phrase(self, vocab: AttributeVocabulary) -> str:
        return vocab.phrase(dict(self.attributes), self.name)


@dataclass(frozen=True)
class MockState:
    suppressed: frozenset[str] = frozenset()
    transfer_attributes: bool = False
    edited: bool = False
    # Object names whose family some edit has touched.
    targeted: frozenset[str] = frozenset()


class MockBackend:
    """In-process generator producing structured records instead of pixels.

    A mock image lists the objects it "shows" with their attributes and
    superclass. Edited models skip any mention whose concept phrase was
    suppressed by a :class:`MockCET`.

    Attention maps (when requested) are one-hot for tokens the edited model
    got right (rendered by an unedited model, or successfully suppressed)
    and uniform for tokens whose erasure failed, mimicking attention that
    disperses when erasure fails.
    """

    def __init__(
        self,
        tree: ConceptTree,
        vocab: AttributeVocabulary = DEFAULT_VOCAB,
        model_id: str = "mock-sd",
        grid: tuple[int, int] = (8, 8),
        returns_attention_maps: bool = True,
        max_concurrent_requests: int = 8,
        fail: Callable[[Mapping[str, Any]], bool] | None = None,
    ):
        self.tree = tree
        self.vocab = vocab
        self.model_id = model_id
        self.grid = tuple(grid)
        self.capabilities = Capabilities(returns_attention_maps, max_concurrent_requests)
        self.fail = fail
        self._states: dict[str, MockState] = {model_id: MockState()}
        self._lock = threading.Lock()
        self._names = {n.name for n in tree if n.level in (OBJECT, SUPERCLASS)}
        self.calls = 0
        self.max_inflight = 0
        self._inflight = 0

    def settings(self) -> dict:
        return {"kind": "mock", "model_id": self.model_id, "grid": list(self.grid)}

    def state(self, ref: str) -> MockState:
        with self._lock:
            try:
                return self._states[ref]
            except KeyError:
                raise GatewayError(f"mock backend has no model {ref!r}") from None

    def add_state(self, ref: str, state: MockState) -> None:
        with self._lock:
            self._states.setdefault(ref, state)

    def parse(self, text: str) -> list[Mention]:
        body = " ".join(text.split()).lower()
        if body.startswith("an image of "):
            body = body[len("an image of "):]
        out = []
        for part in body.split(" and "):
            words = part.split()
            if words and words[0] in ("a", "an"):
                words = words[1:]
            attrs: dict[str, str] = {}
            i = 0
            while i < len(words) - 1 and (slot := self.vocab.slot_of(words[i])) and slot not in attrs:
                attrs[slot] = words[i]
                i += 1
            name = " ".join(words[i:])
            if name not in self._names:
                raise GatewayError(f"mock backend cannot render {name!r}")
            out.append(Mention(name, attrs))
        return out

    def render(self, text: str, state: MockState) -> tuple[list[dict], list[Mention], list[Mention]]:
        mentions = self.parse(text)
        shown = [m for m in mentions if m.phrase(self.vocab) not in state.suppressed]
        hidden = [m for m in mentions if m.phrase(self.vocab) in state.suppressed]
        objects = []
        for m in shown:
            attrs = dict(m.attributes)
            if state.transfer_attributes:
                for h in hidden:
                    for slot, value in h.attributes.items():
                        attrs.setdefault(slot, value)
            node = self.tree.node(m.name)
            objects.append({
                "name": m.name,
                "superclass": self.tree.superclass_of(node.id).name,
                "attributes": {s: attrs[s] for s in SLOTS if s in attrs},
            })
        return objects, shown, hidden

    def _attention(self, text: str, seed: int, state: MockState, shown, hidden, objects) -> dict:
        h, w = self.grid
        cells = h * w

        def one_hot(key: str) -> dict:
            data = [0.0] * cells
            data[_stable_int(text, seed, key) % cells] = 1.0
            return {"h": h, "w": w, "data": data}

        uniform = {"h": h, "w": w, "data": [1.0] * cells}
        maps: dict[str, dict] = {}
        for m, obj in zip(shown, objects):
            # An edited model that still renders a mention failed to erase it
            # only if some edit targeted this object family.
            failed = state.edited and m.name in state.targeted
            for tok in m.name.split():
                maps[tok] = uniform if failed else one_hot(m.name)
            for value in obj["attributes"].values():
                maps[value] = one_hot(m.name)
        for m in hidden:
            for tok in m.name.split():
                maps.setdefault(tok, one_hot(m.name))
            for value in m.attributes.values():
                maps.setdefault(value, one_hot(m.name))
        return maps

    def generate(self, request: Mapping[str, Any]) -> dict:
        with self._lock:
            self.calls += 1
            self._inflight += 1
            self.max_inflight = max(self.max_inflight, self._inflight)
        try:
            return self._generate(request)
        finally:
            with self._lock:
                self._inflight -= 1

    def _generate(self, request: Mapping[str, Any]) -> dict:
        if self.fail is not None and self.fail(request):
            raise GatewayError("injected mock failure")
        state = self.state(request["model_id"])
        text, seed = request["prompt"], int(request["seed"])
        objects, shown, hidden = self.render(text, state)
        payload = {"kind": "mock", "model": request["model_id"], "prompt": text, "seed": seed, "objects": objects}
        resp: dict[str, Any] = {"payload": payload}
        if request.get("want_attention") and self.capabilities.returns_attention_maps:
            resp["attention"] = self._attention(text, seed, state, shown, hidden, objects)
        return resp


class MockCET:
    """Erasure adapter for :class:`MockBackend` with tunable side effects.

    radius, probability: each target also suppresses same-object concepts
        within that attribute edit distance, each with the given probability
        (drawn from a generator seeded by ``rng_seed`` and the target).
    closure: also suppress every descendant of a target.
    transfer_attributes: rendered objects inherit attributes of suppressed
        mentions in the same prompt (attribute leakage).
    single_call: ``"all"`` honours every target of a multi-target call;
        ``"first"`` only the first one.
    """

    def __init__(
        self,
        backend: MockBackend,
        name: str = "mock-cet",
        radius: int = 0,
        probability: float = 0.0,
        rng_seed: int = 0,
        closure: bool = False,
        transfer_attributes: bool = False,
        single_call: str = "all",
    ):
        if radius < 0:
            raise ValueError(f"collateral radius must be >= 0, got {radius}")
        if not 0.0 <= probability <= 1.0:
            raise ValueError(f"collateral probability must be in [0, 1], got {probability}")
        if single_call not in ("all", "first"):
            raise ValueError("single_call must be 'all' or 'first'")
        self.backend = backend
        self.name = name
        self.radius = int(radius)
        self.probability = float(probability)
        self.rng_seed = int(rng_seed)
        self.closure = closure
        self.transfer_attributes = transfer_attributes
        self.single_call = single_call
        self.calls = 0

    def settings(self) -> dict:
        return {
            "kind": "mock",
            "radius": self.radius,
            "probability": self.probability,
            "rng_seed": self.rng_seed,
            "closure": self.closure,
            "transfer_attributes": self.transfer_attributes,
            "single_call": self.single_call,
        }

    def suppression_set(self, targets: Iterable[str]) -> frozenset[str]:
        """Concept phrases removed by erasing ``targets`` (before any prior edits)."""
        tree = self.backend.tree
        out: set[str] = set()
        for target in targets:
            phrase = " ".join(target.split())
            out.add(phrase)
            if phrase not in tree:
                continue
            node = tree.node(phrase)
            out.add(node.name)
            if self.closure:
                out.update(n.name for n in descendants(tree, node.id))
            obj = tree.object_of(node.id)
            if obj is None or self.probability == 0.0 or self.radius == 0:
                continue
            rng = np.random.default_rng([self.rng_seed, _stable_int(node.id) % (2**32)])
            family = [obj, *(tree.node(c) for c in tree.children(obj.id))]
            draws = rng.random(len(family))
            for cand, u in zip(family, draws):
                if cand.id == node.id:
                    continue
                dist = sum(cand.attributes.get(s) != node.attributes.get(s) for s in SLOTS)
                if dist <= self.radius and u < self.probability:
                    out.add(cand.name)
        return frozenset(out)

    def erase(self, request: Mapping[str, Any]) -> dict:
        self.calls += 1
        targets = list(request["targets"])
        if not targets:
            raise ValueError("no targets")
        if request.get("mode", SINGLE_CALL) == SINGLE_CALL and self.single_call == "first":
            targets = targets[:1]
        base = self.backend.state(request["base_model_id"])
        new_ref = request.get("new_model_id") or edited_model_id(
            request["base_model_id"], EditRequest(self.name, tuple(request["targets"]), request.get("mode", SINGLE_CALL))
        )
        removed = self.suppression_set(targets)
        tree = self.backend.tree
        touched = set()
        for phrase in removed:
            if phrase in tree:
                obj = tree.object_of(phrase)
                touched.add(obj.name if obj is not None else phrase)
        state = MockState(
            base.suppressed | removed,
            base.transfer_attributes or self.transfer_attributes,
            True,
            base.targeted | frozenset(touched),
        )
        self.backend.add_state(new_ref, state)
        return {"model_id": new_ref}


def mock_generate(backend: MockBackend, model_id: str, prompt: str, seed: int, want_attention: bool = False) -> dict:
    return backend.generate({"model_id": model_id, "prompt": prompt, "seed": seed, "want_attention": want_attention})


def mock_erase(cet: MockCET, base_model_id: str, targets: Sequence[str], mode: str = SINGLE_CALL) -> str:
    return cet.erase({"base_model_id": base_model_id, "targets": list(targets), "mode": mode})["model_id"]
