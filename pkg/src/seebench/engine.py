"""Evaluation dimensions and accuracy aggregation.

Every dimension reduces to the same work unit: generate a prompt under a
model for each seed, then ask each verifier whether a probed concept is
present. Accuracy is computed per seed (fraction of probes judged present)
and summarized as mean and sample standard deviation across seeds.
Indeterminate answers and failed generations never enter a denominator.
"""

from __future__ import annotations

import threading
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import attention as attn
from .catalog import OBJECT, SUPERCLASS, VARIANT, ConceptTree, erase_order, erase_set, slug
from .distance import (
    COSINE_SIMILARITY,
    DEFAULT_COSINE_BIN_WIDTH,
    EDIT_DISTANCE,
    EDIT_DISTANCE_EDGES,
    TextEmbedder,
    bin_concepts,
    cosine_edges,
    edit_distance_matrix,
    similarity_to,
)
from .gateway import (
    DEFAULT_SEEDS,
    SEQUENTIAL_FOLD,
    SINGLE_CALL,
    CETAdapter,
    EditRequest,
    GenerationError,
    GeneratorHandle,
    ImageRecord,
    ModelRegistry,
    PayloadStore,
    apply_erasure,
    generate_one,
)
from .prompts import PromptRecord, render_leakage_prompt
from .verifiers import (
    CLASSIFY,
    VerdictCache,
    Verifier,
    VerifierError,
    attribute_labels,
    presence,
    probe_labels,
    superclass_labels,
)
from .vocab import DEFAULT_VOCAB, AttributeVocabulary

NEIGHBOR_ERASE = "neighbor_erase"
NEIGHBOR_PRESERVE = "neighbor_preserve"
EVASION = "evasion"
LEAKAGE_TARGET = "leakage_target"
LEAKAGE_PRESERVE = "leakage_preserve"
DIMENSIONS = (NEIGHBOR_ERASE, NEIGHBOR_PRESERVE, EVASION, LEAKAGE_TARGET, LEAKAGE_PRESERVE)
_TARGET_SIDE = (NEIGHBOR_ERASE, EVASION, LEAKAGE_TARGET)

STD_DDOF = 1


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class Probe:
    dimension: str
    target: str
    concept: str
    labels: tuple[str, ...]
    edit_distance: int | None = None
    similarity: float | None = None
    group: str = ""
    attribute: str | None = None
    preserve: str | None = None


@dataclass(frozen=True)
class WorkItem:
    prompt_id: str
    text: str
    probes: tuple[Probe, ...]


@dataclass(frozen=True)
class EvalRecord:
    dimension: str
    target: str
    probe: str
    prompt_id: str
    model_id: str
    verifier_id: str
    seeds: tuple[int, ...]
    outcomes: tuple[bool | None, ...]
    failed_seeds: tuple[int, ...] = ()
    edit_distance: int | None = None
    similarity: float | None = None
    group: str = ""
    attribute: str | None = None
    preserve: str | None = None
    tag: str = ""

    def __post_init__(self) -> None:
        if self.dimension not in DIMENSIONS:
            raise EvaluationError(f"unknown dimension {self.dimension!r}")
        if len(self.seeds) != len(self.outcomes):
            raise EvaluationError("one outcome per seed")

    @property
    def indeterminate(self) -> int:
        failed = set(self.failed_seeds)
        return sum(o is None and s not in failed for s, o in zip(self.seeds, self.outcomes))

    def to_json(self) -> dict:
        return {
            "dimension": self.dimension,
            "target": self.target,
            "probe": self.probe,
            "prompt_id": self.prompt_id,
            "model_id": self.model_id,
            "verifier_id": self.verifier_id,
            "seeds": list(self.seeds),
            "outcomes": list(self.outcomes),
            "failed_seeds": list(self.failed_seeds),
            "edit_distance": self.edit_distance,
            "similarity": None if self.similarity is None else round(self.similarity, 12),
            "group": self.group,
            "attribute": self.attribute,
            "preserve": self.preserve,
            "tag": self.tag,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "EvalRecord":
        return cls(
            d["dimension"], d["target"], d["probe"], d["prompt_id"], d["model_id"], d["verifier_id"],
            tuple(d["seeds"]), tuple(d["outcomes"]), tuple(d.get("failed_seeds", ())),
            d.get("edit_distance"), d.get("similarity"), d.get("group", ""),
            d.get("attribute"), d.get("preserve"), d.get("tag", ""),
        )


@dataclass(frozen=True)
class MetricSummary:
    model_id: str
    verifier_id: str
    dimension: str
    group: str
    mean: float
    std: float
    n: int
    model_label: str = ""

    def __post_init__(self) -> None:
        if not (0.0 <= self.mean <= 100.0) or self.std < 0 or self.n <= 0:
            raise EvaluationError(f"invalid summary {self}")

    def cell(self, digits: int = 2) -> str:
        return f"{self.mean:.{digits}f} ± {self.std:.{digits}f}"


@dataclass(frozen=True)
class Gap:
    model_id: str
    prompt_id: str
    seed: int
    verifier_id: str | None
    reason: str

    def to_json(self) -> dict:
        return {"model_id": self.model_id, "prompt_id": self.prompt_id, "seed": self.seed,
                "verifier_id": self.verifier_id, "reason": self.reason}


# -- aggregation --------------------------------------------------------------

def per_seed_accuracy(records: Iterable[EvalRecord]) -> dict[int, tuple[int, int]]:
    """seed -> (present count, valid count)."""
    counts: dict[int, list[int]] = defaultdict(lambda: [0, 0])
    for rec in records:
        for seed, outcome in zip(rec.seeds, rec.outcomes):
            if outcome is None:
                continue
            counts[seed][0] += int(bool(outcome))
            counts[seed][1] += 1
    return {s: (c[0], c[1]) for s, c in counts.items()}


def summarize(
    records: Sequence[EvalRecord], group: str = "all", model_label: str = "", pooled_model: str | None = None
) -> MetricSummary:
    """Mean and std (across seeds) of per-seed presence accuracy, in percent.

    Records must share one model and verifier, unless ``pooled_model`` names
    the pool (e.g. one CET edited separately per target).
    """
    records = list(records)
    if not records:
        raise EvaluationError("cannot summarize an empty record set")
    if pooled_model is not None:
        records = [replace(r, model_id=pooled_model) for r in records]
    keys = {(r.model_id, r.verifier_id) for r in records}
    if len(keys) != 1:
        raise EvaluationError(f"records span several model/verifier pairs: {sorted(keys)}")
    dims = sorted({r.dimension for r in records})
    counts = per_seed_accuracy(records)
    accs = [100.0 * p / v for _, (p, v) in sorted(counts.items()) if v > 0]
    if not accs:
        raise EvaluationError("no determinate verdicts to summarize")
    mean = float(np.mean(accs))
    std = float(np.std(accs, ddof=STD_DDOF)) if len(accs) > 1 else 0.0
    model_id, verifier_id = keys.pop()
    n = sum(v for _, v in counts.values())
    return MetricSummary(model_id, verifier_id, "+".join(dims), group, mean, std, n, model_label)


def _check_side(records: Sequence[EvalRecord], tree: ConceptTree | None, target_side: bool) -> None:
    for rec in records:
        if tree is not None:
            inside = tree.resolve(rec.probe) in erase_set(tree, rec.target)
        else:
            inside = rec.dimension in _TARGET_SIDE
        if inside != target_side:
            which = "outside" if target_side else "inside"
            raise EvaluationError(f"probe {rec.probe!r} lies {which} the erase set of {rec.target!r}")


def target_accuracy(records: Sequence[EvalRecord], tree: ConceptTree | None = None, group: str = "all") -> MetricSummary:
    """Presence rate over erase-set probes (lower means better erasure)."""
    if not records:
        raise EvaluationError("target accuracy needs at least one record")
    _check_side(records, tree, True)
    return summarize(records, group)


def preserve_accuracy(records: Sequence[EvalRecord], tree: ConceptTree | None = None, group: str = "all") -> MetricSummary:
    """Presence rate over preserve-set probes (higher means fewer side effects)."""
    if not records:
        raise EvaluationError("preserve accuracy needs at least one record")
    _check_side(records, tree, False)
    return summarize(records, group)


def summarize_by(
    records: Iterable[EvalRecord], key, labels: Mapping[str, str] | None = None
) -> list[MetricSummary]:
    """One summary per (model, verifier, dimension, key(record)) group, sorted."""
    buckets: dict[tuple, list[EvalRecord]] = defaultdict(list)
    for rec in records:
        buckets[(rec.model_id, rec.verifier_id, rec.dimension, key(rec))].append(rec)
    out = []
    for (model_id, _, _, group), recs in sorted(buckets.items(), key=lambda kv: kv[0]):
        try:
            out.append(summarize(recs, group, (labels or {}).get(model_id, "")))
        except EvaluationError:
            continue
    return out


# -- execution ----------------------------------------------------------------

@dataclass
class RunOutput:
    records: list[EvalRecord] = field(default_factory=list)
    gaps: list[Gap] = field(default_factory=list)
    images: dict[tuple[str, int, str], ImageRecord] = field(default_factory=dict)

    def extend(self, other: "RunOutput") -> None:
        self.records.extend(other.records)
        self.gaps.extend(other.gaps)
        self.images.update(other.images)


class Evaluator:
    """Schedules (prompt, seed) work for one model and applies every verifier.

    Output order depends only on the inputs, never on thread interleaving.
    """

    def __init__(
        self,
        verifiers: Sequence[Verifier],
        seeds: Sequence[int] = DEFAULT_SEEDS,
        parallelism: int = 1,
        cache: VerdictCache | None = None,
        store: PayloadStore | None = None,
        verifier_capacity: Mapping[str, int] | None = None,
    ):
        if not seeds:
            raise ValueError("at least one seed is required")
        if not verifiers:
            raise ValueError("at least one verifier is required")
        self.verifiers = list(verifiers)
        self.seeds = tuple(int(s) for s in seeds)
        self.parallelism = max(1, int(parallelism))
        self.cache = cache if cache is not None else VerdictCache()
        self.store = store
        cap = verifier_capacity or {}
        self._sems = {v.verifier_id: threading.Semaphore(max(1, cap.get(v.verifier_id, self.parallelism)))
                      for v in self.verifiers}

    def _one(self, handle: GeneratorHandle, item: WorkItem, seed: int, want_attention: bool):
        try:
            image = generate_one(handle, (item.prompt_id, item.text), seed, want_attention, self.store)
        except GenerationError as exc:
            return None, {}, [Gap(handle.model_id, item.prompt_id, seed, None, exc.reason)]
        outcomes: dict[tuple[int, str], bool | None] = {}
        gaps = []
        for pi, probe in enumerate(item.probes):
            for v in self.verifiers:
                labels = probe.labels if v.family == CLASSIFY else None
                try:
                    with self._sems[v.verifier_id]:
                        verdict = presence(image, probe.concept, v, labels, self.cache)
                    outcomes[(pi, v.verifier_id)] = verdict.outcome
                except VerifierError as exc:
                    outcomes[(pi, v.verifier_id)] = None
                    gaps.append(Gap(handle.model_id, item.prompt_id, seed, v.verifier_id, str(exc)))
        return image, outcomes, gaps

    def run(
        self,
        handle: GeneratorHandle,
        items: Sequence[WorkItem],
        want_attention: bool = False,
        keep_images: bool = False,
        tag: str = "",
    ) -> RunOutput:
        jobs = [(i, seed) for i in range(len(items)) for seed in self.seeds]
        workers = min(self.parallelism, max(1, handle.capabilities.max_concurrent_requests))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(lambda j: self._one(handle, items[j[0]], j[1], want_attention), jobs))
        else:
            results = [self._one(handle, items[i], seed, want_attention) for i, seed in jobs]
        by_job = dict(zip(jobs, results))

        out = RunOutput()
        for i, item in enumerate(items):
            for seed in self.seeds:
                image, _, gaps = by_job[(i, seed)]
                out.gaps.extend(gaps)
                if keep_images and image is not None:
                    out.images[image.key] = image
            for pi, probe in enumerate(item.probes):
                for v in self.verifiers:
                    outs, failed = [], []
                    for seed in self.seeds:
                        image, outcomes, gaps = by_job[(i, seed)]
                        value = outcomes.get((pi, v.verifier_id))
                        outs.append(value)
                        if image is None or any(g.verifier_id == v.verifier_id for g in gaps):
                            failed.append(seed)
                    out.records.append(EvalRecord(
                        probe.dimension, probe.target, probe.concept, item.prompt_id, handle.model_id,
                        v.verifier_id, self.seeds, tuple(outs), tuple(failed), probe.edit_distance,
                        probe.similarity, probe.group, probe.attribute, probe.preserve, tag,
                    ))
        return out


# -- neighboring concepts -----------------------------------------------------

@dataclass(frozen=True)
class CurvePoint:
    model_id: str
    verifier_id: str
    dimension: str
    kind: str
    lower: float
    upper: float
    label: str
    population: int
    clamped: int
    summary: MetricSummary | None


@dataclass
class NeighborResult:
    target: str
    output: RunOutput
    summaries: list[MetricSummary]
    curves: list[CurvePoint]
    edges: dict[str, list[float]]


def neighbor_items(
    e: str,
    tree: ConceptTree,
    corpus: Sequence[PromptRecord],
    embedder: TextEmbedder,
    vocab: AttributeVocabulary = DEFAULT_VOCAB,
) -> list[WorkItem]:
    node = tree.node(e)
    if node.level not in (OBJECT, VARIANT):
        raise EvaluationError(f"neighbor dimension needs an object or variant target, got {node.level} {e!r}")
    erased = erase_set(tree, node.id)
    obj = tree.object_of(node.id)
    sims = similarity_to(node.name, [r.class_label for r in corpus], embedder)
    family = [i for i, r in enumerate(corpus) if r.object_id == obj.id]
    dists = {}
    if family:
        mat = edit_distance_matrix([dict(node.attributes)], [dict(corpus[i].attributes) for i in family], vocab)
        dists = {i: int(d) for i, d in zip(family, mat[0])}
    items = []
    for i, rec in enumerate(corpus):
        dim = NEIGHBOR_ERASE if rec.prompt_id in erased else NEIGHBOR_PRESERVE
        probe = Probe(
            dim, node.name, rec.class_label, tuple(probe_labels(tree, rec.prompt_id)),
            dists.get(i), float(sims[i]), rec.superclass,
        )
        items.append(WorkItem(rec.prompt_id, rec.text, (probe,)))
    return items


def neighbor_curves(
    records: Sequence[EvalRecord],
    edges: Mapping[str, Sequence[float]],
    labels: Mapping[str, str] | None = None,
) -> list[CurvePoint]:
    """Accuracy per distance bin, per model, verifier and erase/preserve side."""
    points = []
    buckets: dict[tuple, list[EvalRecord]] = defaultdict(list)
    for rec in records:
        buckets[(rec.model_id, rec.verifier_id, rec.dimension)].append(rec)
    for (model_id, verifier_id, dim), recs in sorted(buckets.items()):
        for kind, attr in ((EDIT_DISTANCE, "edit_distance"), (COSINE_SIMILARITY, "similarity")):
            usable = [r for r in recs if getattr(r, attr) is not None]
            index = {f"{r.prompt_id}\x1f{j}": r for j, r in enumerate(usable)}
            pairs = [(k, getattr(r, attr)) for k, r in index.items()]
            for b in bin_concepts(pairs, edges[kind], kind):
                members = [index[k] for k in b.members]
                summary = None
                if members:
                    try:
                        summary = summarize(members, f"{kind}:{b.label}", (labels or {}).get(model_id, ""))
                    except EvaluationError:
                        summary = None
                points.append(CurvePoint(model_id, verifier_id, dim, kind, b.lower, b.upper, b.label,
                                         len(members), len(b.clamped), summary))
    return points


def run_neighbor_dimension(
    e: str,
    tree: ConceptTree,
    corpus: Sequence[PromptRecord],
    models: Sequence[GeneratorHandle],
    evaluator: Evaluator,
    embedder: TextEmbedder,
    bin_width: float = DEFAULT_COSINE_BIN_WIDTH,
) -> NeighborResult:
    items = neighbor_items(e, tree, corpus, embedder)
    out = RunOutput()
    for handle in models:
        out.extend(evaluator.run(handle, items))
    sims = [p.similarity for it in items for p in it.probes]
    edges = {EDIT_DISTANCE: [float(x) for x in EDIT_DISTANCE_EDGES], COSINE_SIMILARITY: cosine_edges(sims, bin_width)}
    labels = {h.model_id: h.label for h in models}
    summaries = summarize_by(out.records, lambda r: "all", labels)
    curves = neighbor_curves(out.records, edges, labels)
    return NeighborResult(tree.node(e).name, out, summaries, curves, edges)


# -- erasure evasion ----------------------------------------------------------

def evasion_items(e: str, tree: ConceptTree, corpus: Sequence[PromptRecord]) -> list[WorkItem]:
    node = tree.node(e)
    if node.level != SUPERCLASS:
        raise EvaluationError(f"evasion needs a superclass target, got {node.level} {e!r}")
    labels = tuple(superclass_labels(tree))
    probe = Probe(EVASION, node.name, node.name, labels, group=node.name)
    items = [WorkItem(r.prompt_id, r.text, (probe,)) for r in corpus if r.superclass == node.name]
    if not items:
        raise EvaluationError(f"corpus holds no prompts under {node.name!r}")
    return items


def run_evasion_dimension(
    e: str,
    tree: ConceptTree,
    corpus: Sequence[PromptRecord],
    models: Sequence[GeneratorHandle],
    evaluator: Evaluator,
) -> tuple[RunOutput, list[MetricSummary]]:
    """Presence of superclass ``e`` in images prompted by its objects and variants."""
    items = evasion_items(e, tree, corpus)
    out = RunOutput()
    for handle in models:
        out.extend(evaluator.run(handle, items))
    labels = {h.model_id: h.label for h in models}
    return out, summarize_by(out.records, lambda r: r.group, labels)


# -- attribute leakage --------------------------------------------------------

def default_leakage_partners(tree: ConceptTree, e: str, k: int = 3) -> list[str]:
    """``k`` preserve objects from distinct superclasses other than e's.

    Superclasses are visited cyclically after e's own; within each, the
    object at e's position (mod size) is taken.
    """
    obj = tree.object_of(e)
    if obj is None:
        raise EvaluationError(f"leakage target {e!r} must be an object or variant")
    supers = tree.superclasses()
    home = tree.superclass_of(obj.id)
    pos = list(tree.children(home.id)).index(obj.id)
    start = [s.id for s in supers].index(home.id)
    out = []
    for step in range(1, len(supers)):
        sc = supers[(start + step) % len(supers)]
        kids = tree.children(sc.id)
        out.append(tree.node(kids[pos % len(kids)]).name)
        if len(out) == k:
            break
    return out


def leakage_items(
    e: str, p: str, attributes: Sequence[str], tree: ConceptTree, vocab: AttributeVocabulary = DEFAULT_VOCAB
) -> list[WorkItem]:
    e_name, p_name = tree.node(e).name, tree.node(p).name
    if tree.resolve(p) in erase_set(tree, e):
        raise EvaluationError(f"{p_name!r} is inside the erase set of {e_name!r}")
    items = []
    for attr in attributes:
        slot = vocab.slot_of(attr)
        if slot is None:
            raise EvaluationError(f"{attr!r} is not in the vocabulary")
        text = render_leakage_prompt(attr, e_name, p_name, vocab)
        t = Probe(LEAKAGE_TARGET, e_name, f"{attr} {e_name}", tuple(attribute_labels(attr, e_name, vocab)),
                  group=slot, attribute=attr, preserve=p_name)
        q = Probe(LEAKAGE_PRESERVE, e_name, f"{attr} {p_name}", tuple(attribute_labels(attr, p_name, vocab)),
                  group=slot, attribute=attr, preserve=p_name)
        items.append(WorkItem(f"leak/{slug(e_name)}/{slug(p_name)}/{attr}", text, (t, q)))
    return items


def summarize_leakage(records: Sequence[EvalRecord], labels: Mapping[str, str] | None = None) -> list[MetricSummary]:
    """Paired target/preserve summaries overall and per attribute family."""
    return summarize_by(records, lambda r: "all", labels) + summarize_by(records, lambda r: r.group, labels)


def run_leakage_dimension(
    e: str,
    p: str,
    attributes: Sequence[str],
    tree: ConceptTree,
    models: Sequence[GeneratorHandle],
    evaluator: Evaluator,
    vocab: AttributeVocabulary = DEFAULT_VOCAB,
) -> tuple[RunOutput, list[MetricSummary]]:
    items = leakage_items(e, p, attributes, tree, vocab)
    out = RunOutput()
    for handle in models:
        out.extend(evaluator.run(handle, items))
    return out, summarize_leakage(out.records, {h.model_id: h.label for h in models})


# -- progressive vs all-at-once -----------------------------------------------

@dataclass(frozen=True)
class SchedulePoint:
    k: int
    verifier_id: str
    progressive: MetricSummary
    all_at_once: MetricSummary
    progressive_model: str
    all_at_once_model: str


@dataclass
class ScheduleResult:
    target: str
    targets: list[str]
    output: RunOutput
    points: list[SchedulePoint]

    def curve(self, verifier_id: str, arm: str) -> list[float]:
        return [getattr(p, arm).mean for p in self.points if p.verifier_id == verifier_id]


def run_schedule_comparison(
    e: str,
    tree: ConceptTree,
    adapter: CETAdapter,
    base: GeneratorHandle,
    evaluator: Evaluator,
    corpus: Sequence[PromptRecord],
    steps: Sequence[int] | None = None,
    registry: ModelRegistry | None = None,
) -> ScheduleResult:
    """Target accuracy after erasing the first k erase-set concepts, per arm.

    Both arms use the same target order (target first, then its variants).
    The progressive arm folds one adapter call per concept; the all-at-once
    arm makes a single call with all k concepts on a fresh copy of ``base``.
    """
    order = [tree.node(i).name for i in erase_order(tree, e)]
    if len(order) < 2:
        raise EvaluationError(f"erase set of {e!r} has a single member; nothing to schedule")
    erased = erase_set(tree, e)
    prompts = [r for r in corpus if r.prompt_id in erased]
    if not prompts:
        raise EvaluationError(f"corpus holds no prompts in the erase set of {e!r}")
    target = tree.node(e).name
    items = [WorkItem(r.prompt_id, r.text, (Probe(NEIGHBOR_ERASE, target, r.class_label,
                                                   tuple(probe_labels(tree, r.prompt_id)), group=r.superclass),))
             for r in prompts]
    ks = sorted(set(steps)) if steps else list(range(1, len(order) + 1))
    if ks[0] < 1 or ks[-1] > len(order):
        raise EvaluationError(f"schedule steps must lie in 1..{len(order)}")

    out = RunOutput()
    points: list[SchedulePoint] = []
    progressive = base
    done = 0
    for k in ks:
        for t in order[done:k]:
            progressive = apply_erasure(adapter, progressive, EditRequest(adapter.name, (t,), SEQUENTIAL_FOLD),
                                        label=f"{adapter.name} progressive")
        done = k
        at_once = apply_erasure(adapter, base, EditRequest(adapter.name, tuple(order[:k]), SINGLE_CALL),
                                registry, label=f"{adapter.name} all-at-once")
        if registry is not None:
            registry.register(progressive)
        prog_out = evaluator.run(progressive, items, tag=f"progressive:k={k}")
        once_out = evaluator.run(at_once, items, tag=f"all_at_once:k={k}")
        out.extend(prog_out)
        out.extend(once_out)
        for v in evaluator.verifiers:
            pr = [r for r in prog_out.records if r.verifier_id == v.verifier_id]
            ar = [r for r in once_out.records if r.verifier_id == v.verifier_id]
            try:
                arms = (summarize(pr, f"progressive:k={k}"), summarize(ar, f"all_at_once:k={k}"))
            except EvaluationError:  # no determinate verdicts; the gaps carry the failure
                continue
            points.append(SchedulePoint(
                k, v.verifier_id,
                replace(arms[0], model_label=progressive.label),
                replace(arms[1], model_label=at_once.label),
                progressive.model_id, at_once.model_id,
            ))
    return ScheduleResult(target, order, out, points)


# -- attention spread ---------------------------------------------------------

@dataclass(frozen=True)
class SpreadRow:
    model_id: str
    prompt_id: str
    seed: int
    token: str
    spread: float


@dataclass
class AttentionResult:
    target: str
    output: RunOutput
    rows: list[SpreadRow]
    points: list[tuple[str, str, float, float]]  # model_id, label, target accuracy, mean spread
    correlation: attn.SpreadCorrelation | None
    verifier_id: str


def run_attention_dimension(
    e: str,
    tree: ConceptTree,
    corpus: Sequence[PromptRecord],
    models: Sequence[GeneratorHandle],
    evaluator: Evaluator,
) -> AttentionResult:
    """Target accuracy vs mean attention spread of the object token, per model.

    The correlation is taken over edited models only; unedited models are
    kept in ``points`` as a reference.
    """
    erased = erase_set(tree, e)
    prompts = [r for r in corpus if r.prompt_id in erased]
    if not prompts:
        raise EvaluationError(f"corpus holds no prompts in the erase set of {e!r}")
    target = tree.node(e).name
    items = [WorkItem(r.prompt_id, r.text, (Probe(NEIGHBOR_ERASE, target, r.class_label,
                                                   tuple(probe_labels(tree, r.prompt_id)), group=r.superclass),))
             for r in prompts]
    token_of = {r.prompt_id: tree.object_of(r.prompt_id).name for r in prompts}
    verifier_id = evaluator.verifiers[0].verifier_id
    out = RunOutput()
    rows: list[SpreadRow] = []
    points = []
    for handle in models:
        run = evaluator.run(handle, items, want_attention=True, keep_images=True)
        out.records.extend(run.records)
        out.gaps.extend(run.gaps)
        maps, keys = [], []
        for key in sorted(run.images):
            image = run.images[key]
            if not image.attention:
                continue
            m = attn.phrase_map(image.attention, token_of[image.prompt_id])
            if m is not None:
                maps.append(m)
                keys.append(key)
        spreads = attn.spread_batch(maps)
        rows.extend(SpreadRow(k[2], k[0], k[1], token_of[k[0]], float(s)) for k, s in zip(keys, spreads))
        recs = [r for r in run.records if r.verifier_id == verifier_id]
        try:
            acc = summarize(recs).mean
        except EvaluationError:
            acc = float("nan")
        points.append((handle.model_id, handle.label, acc, float(np.mean(spreads)) if len(spreads) else float("nan")))
    usable = [(p, h) for p, h in zip(points, models) if h.edited and np.isfinite(p[2]) and np.isfinite(p[3])]
    edited = [(a, s) for (_, _, a, s), _ in usable]
    labels = [lab for (_, lab, _, _), _ in usable]
    corr = attn.correlate_spread_with_accuracy(edited, labels) if len(edited) >= 3 else None
    return AttentionResult(target, out, rows, points, corr, verifier_id)
