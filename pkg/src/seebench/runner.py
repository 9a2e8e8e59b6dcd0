"""Build the model/verifier stack from a config and run one dimension.

A run directory holds everything needed to re-render its report:

    runs/<run-id>/manifest.json    provenance, hashes, seeds, binning, pairing
    runs/<run-id>/records.jsonl    one EvalRecord per line
    runs/<run-id>/summary.csv      one MetricSummary per row
    runs/<run-id>/gaps.jsonl       failed generations / verifications
    runs/<run-id>/attention.*      spread rows and correlation (attention runs)
"""

from __future__ import annotations

import csv
import io
import json
import platform
from collections import defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .catalog import OBJECT, SUPERCLASS, VARIANT, CatalogError, ConceptTree, default_catalog
from .config import HASHING, MOCK, ORACLE, SUBPROCESS, ConfigError, config_digest
from .distance import HashingEmbedder
from .engine import (
    STD_DDOF,
    EvalRecord,
    EvaluationError,
    Evaluator,
    Gap,
    MetricSummary,
    default_leakage_partners,
    run_attention_dimension,
    run_evasion_dimension,
    run_leakage_dimension,
    run_neighbor_dimension,
    run_schedule_comparison,
    summarize,
)
from .gateway import (
    Capabilities,
    EditRequest,
    EraseError,
    GeneratorHandle,
    MockBackend,
    MockCET,
    ModelRegistry,
    apply_erasure,
    base_handle,
)
from .prompts import PromptRecord, build_corpus, corpus_digest
from .transport import ADAPTER_ENV, RemoteBackend, RemoteCET, RemoteEmbedder, RemoteVerifier, SubprocessTransport, TransportError
from .verifiers import OracleVerifier
from .vocab import DEFAULT_VOCAB

REGISTERED_ADAPTERS = (MOCK, SUBPROCESS)
SUMMARY_COLUMNS = ("target", "model_id", "model_label", "verifier_id", "dimension", "group", "mean", "std", "n")
POOLED = "*"
SPREAD_NOTE = "attention spread = normalized spatial entropy -sum(p log p) / log(H*W) (a reconstruction)"
STD_NOTE = f"mean ± std over seeds of per-seed accuracy (%); std uses ddof={STD_DDOF}"


class RunExistsError(ConfigError):
    pass


@dataclass
class Stack:
    cfg: dict
    tree: ConceptTree
    corpus: list[PromptRecord]
    backend: object
    base: GeneratorHandle
    cets: dict[str, object]
    verifiers: list
    embedder: object
    evaluator: Evaluator
    registry: ModelRegistry = field(default_factory=ModelRegistry)
    transport: SubprocessTransport | None = None

    def close(self) -> None:
        if self.transport is not None:
            self.transport.close()


def select_corpus(tree: ConceptTree, objects: Sequence[str] | None) -> list[PromptRecord]:
    corpus = build_corpus(tree, DEFAULT_VOCAB)
    if objects is None:
        return corpus
    keep = set()
    for i, name in enumerate(objects):
        if name not in tree or tree.node(name).level != OBJECT:
            raise ConfigError(f"corpus.objects[{i}]", f"{name!r} is not an object of the catalog")
        keep.add(tree.node(name).id)
    return [r for r in corpus if r.object_id in keep]


def build_stack(cfg: dict, tree: ConceptTree | None = None) -> Stack:
    tree = tree or default_catalog()
    corpus = select_corpus(tree, cfg["corpus"]["objects"])
    bcfg = cfg["backend"]
    needs_transport = (
        bcfg["kind"] == SUBPROCESS
        or cfg["embedder"]["backend"] == SUBPROCESS
        or any(c["kind"] == SUBPROCESS for c in cfg["cets"])
        or any(v["backend"] == SUBPROCESS for v in cfg["verifiers"])
    )
    transport = None
    if needs_transport:
        try:
            transport = SubprocessTransport(cfg["adapter_command"] or None)
        except TransportError as exc:
            raise ConfigError(
                "adapter_command",
                f"{exc}; registered adapters: {list(REGISTERED_ADAPTERS)} "
                f"(set adapter_command or ${ADAPTER_ENV} for {SUBPROCESS!r})",
            ) from exc

    caps = Capabilities(bcfg["returns_attention_maps"], bcfg["max_concurrent_requests"])
    if bcfg["kind"] == MOCK:
        backend = MockBackend(tree, DEFAULT_VOCAB, bcfg["model_id"], tuple(bcfg["grid"]),
                              bcfg["returns_attention_maps"], bcfg["max_concurrent_requests"])
    else:
        backend = RemoteBackend(transport, caps)
    base = base_handle(backend, bcfg["model_id"], "Unedited")

    cets = {}
    for c in cfg["cets"]:
        if c["kind"] == MOCK:
            cets[c["name"]] = MockCET(backend, c["name"], c["radius"], c["probability"], c["rng_seed"],
                                      c["closure"], c["transfer_attributes"], c["single_call"])
        else:
            cets[c["name"]] = RemoteCET(transport, c["name"], {"mode": c["mode"]})

    verifiers = []
    for v in cfg["verifiers"]:
        if v["backend"] == ORACLE:
            ver = OracleVerifier(tree, v["id"], v["family"])
            ver.version = v["version"]
        else:
            ver = RemoteVerifier(transport, v["id"], v["family"], v["version"])
        verifiers.append(ver)

    ecfg = cfg["embedder"]
    embedder = HashingEmbedder(ecfg["dim"]) if ecfg["backend"] == HASHING else RemoteEmbedder(transport, ecfg["model_id"])
    evaluator = Evaluator(verifiers, cfg["seeds"], cfg["parallelism"],
                          verifier_capacity={v["id"]: v["max_concurrent_requests"] for v in cfg["verifiers"]})
    return Stack(cfg, tree, corpus, backend, base, cets, verifiers, embedder, evaluator, transport=transport)


@dataclass
class RunResult:
    dimension: str
    records: list[EvalRecord] = field(default_factory=list)
    summaries: list[tuple[str, MetricSummary]] = field(default_factory=list)
    gaps: list[Gap] = field(default_factory=list)
    models: dict[str, GeneratorHandle] = field(default_factory=dict)
    binning: dict[str, dict] = field(default_factory=dict)
    pairing: dict[str, list[str]] = field(default_factory=dict)
    attention_rows: list[tuple] = field(default_factory=list)
    attention: dict[str, dict] = field(default_factory=dict)

    def add_models(self, handles: Sequence[GeneratorHandle]) -> None:
        for h in handles:
            self.models.setdefault(h.model_id, h)

    def images_per_model(self) -> dict[str, int]:
        attempted: dict[str, set] = defaultdict(set)
        for r in self.records:
            attempted[r.model_id].update((r.prompt_id, s) for s in r.seeds)
        failed: dict[str, set] = defaultdict(set)
        for g in self.gaps:
            if g.verifier_id is None and g.prompt_id:
                failed[g.model_id].add((g.prompt_id, g.seed))
        return {m: len(keys - failed[m]) for m, keys in sorted(attempted.items())}


def _resolve_target(tree: ConceptTree, name: str, levels: Sequence[str], path: str) -> str:
    try:
        node = tree.node(name)
    except (KeyError, CatalogError):
        raise ConfigError(path, f"{name!r} is not in the catalog") from None
    if node.level not in levels:
        raise ConfigError(path, f"{name!r} is a {node.level}; expected {' or '.join(levels)}")
    return node.name


def _edited_models(stack: Stack, target: str, result: RunResult) -> list[GeneratorHandle]:
    models = [stack.base]
    for c in stack.cfg["cets"]:
        adapter = stack.cets[c["name"]]
        try:
            handle = apply_erasure(adapter, stack.base, EditRequest(c["name"], (target,), c["mode"]),
                                   stack.registry, c["label"] or c["name"])
        except EraseError as exc:
            result.gaps.append(Gap(f"{c['name']}<{target}>", "", -1, None, f"erasure failed: {exc}"))
            continue
        models.append(handle)
    result.add_models(models)
    return models


def _pooled(records: Sequence[EvalRecord], labels: Mapping[str, str], key) -> list[MetricSummary]:
    """Summaries pooled over targets, keyed by model label rather than id."""
    buckets: dict[tuple, list[EvalRecord]] = defaultdict(list)
    order: dict[str, int] = {}
    for r in records:
        label = labels[r.model_id]
        order.setdefault(label, len(order))
        buckets[(label, r.verifier_id, r.dimension, key(r))].append(r)
    out = []
    for (label, _, _, group), recs in sorted(buckets.items(), key=lambda kv: (order[kv[0][0]], kv[0][1:])):
        try:
            out.append(summarize(recs, group, label, pooled_model=label))
        except EvaluationError:  # every verdict failed; the gaps report covers it
            continue
    return out


def run_dimension(stack: Stack, dimension: str) -> RunResult:
    cfg, tree = stack.cfg, stack.tree
    result = RunResult(dimension)
    ev = stack.evaluator

    if dimension == "neighbors":
        for i, t in enumerate(cfg["neighbors"]["targets"]):
            e = _resolve_target(tree, t, (OBJECT, VARIANT), f"neighbors.targets[{i}]")
            models = _edited_models(stack, e, result)
            res = run_neighbor_dimension(e, tree, stack.corpus, models, ev, stack.embedder,
                                         cfg["binning"]["cosine_width"])
            result.records += res.output.records
            result.gaps += res.output.gaps
            result.summaries += [(e, s) for s in res.summaries]
            result.summaries += [(e, c.summary) for c in res.curves if c.summary is not None]
            result.binning[e] = res.edges
        labels = {m: h.label for m, h in result.models.items()}
        result.summaries += [(POOLED, s) for s in _pooled(result.records, labels, lambda r: "all")]

    elif dimension == "evasion":
        targets = cfg["evasion"]["targets"] or [n.name for n in tree.superclasses()]
        present = {r.superclass for r in stack.corpus}
        for i, t in enumerate(targets):
            e = _resolve_target(tree, t, (SUPERCLASS,), f"evasion.targets[{i}]")
            if e not in present:
                continue
            models = _edited_models(stack, e, result)
            out, summaries = run_evasion_dimension(e, tree, stack.corpus, models, ev)
            result.records += out.records
            result.gaps += out.gaps
            result.summaries += [(e, s) for s in summaries]

    elif dimension == "leakage":
        lcfg = cfg["leakage"]
        attributes = lcfg["attributes"] or [v for _, v in DEFAULT_VOCAB.flat()]
        for i, a in enumerate(attributes):
            if DEFAULT_VOCAB.slot_of(a) is None:
                raise ConfigError(f"leakage.attributes[{i}]", f"{a!r} is not in the vocabulary")
        partners_cfg = lcfg["partners"] or {}
        for i, t in enumerate(lcfg["targets"]):
            e = _resolve_target(tree, t, (OBJECT,), f"leakage.targets[{i}]")
            partners = partners_cfg.get(e) or default_leakage_partners(tree, e, lcfg["partners_per_target"])
            partners = [_resolve_target(tree, p, (OBJECT,), f"leakage.partners.{e}") for p in partners]
            result.pairing[e] = partners
            models = _edited_models(stack, e, result)
            for p in partners:
                try:
                    out, summaries = run_leakage_dimension(e, p, attributes, tree, models, ev)
                except EvaluationError as exc:
                    raise ConfigError(f"leakage.partners.{e}", str(exc)) from exc
                result.records += out.records
                result.gaps += out.gaps
                result.summaries += [(f"{e}|{p}", s) for s in summaries]
        labels = {m: h.label for m, h in result.models.items()}
        result.summaries += [(POOLED, s) for s in _pooled(result.records, labels, lambda r: "all")]
        result.summaries += [(POOLED, s) for s in _pooled(result.records, labels, lambda r: r.group)]

    elif dimension == "schedule":
        scfg = cfg["schedule"]
        cet_name = scfg["cet"] or cfg["cets"][0]["name"]
        adapter = stack.cets[cet_name]
        result.add_models([stack.base])
        for i, t in enumerate(scfg["targets"]):
            e = _resolve_target(tree, t, (SUPERCLASS, OBJECT), f"schedule.targets[{i}]")
            try:
                res = run_schedule_comparison(e, tree, adapter, stack.base, ev, stack.corpus,
                                              scfg["steps"], stack.registry)
            except EraseError as exc:
                result.gaps.append(Gap(f"{cet_name}<{e}>", "", -1, None, f"erasure failed: {exc}"))
                continue
            except EvaluationError as exc:
                raise ConfigError(f"schedule.targets[{i}]", str(exc)) from exc
            result.records += res.output.records
            result.gaps += res.output.gaps
            for p in res.points:
                result.summaries += [(e, p.progressive), (e, p.all_at_once)]
            result.add_models([stack.registry.get(p.progressive_model) for p in res.points])
            result.add_models([stack.registry.get(p.all_at_once_model) for p in res.points])

    elif dimension == "attention":
        for i, t in enumerate(cfg["attention"]["targets"]):
            e = _resolve_target(tree, t, (OBJECT, VARIANT), f"attention.targets[{i}]")
            models = _edited_models(stack, e, result)
            res = run_attention_dimension(e, tree, stack.corpus, models, ev)
            result.records += res.output.records
            result.gaps += res.output.gaps
            labels = {h.model_id: h.label for h in models}
            for h in models:
                recs = [r for r in res.output.records if r.model_id == h.model_id and r.verifier_id == res.verifier_id]
                result.summaries.append((e, summarize(recs, "attention", h.label)))
            result.attention_rows += [(e, r.model_id, labels[r.model_id], r.prompt_id, r.seed, r.token, r.spread)
                                      for r in res.rows]
            corr = res.correlation
            result.attention[e] = {
                "verifier_id": res.verifier_id,
                "points": [
                    {"model_id": m, "label": lab, "edited": result.models[m].edited,
                     "target_accuracy": round(acc, 10), "mean_spread": round(sp, 10)}
                    for m, lab, acc, sp in res.points
                ],
                "r": None if corr is None or corr.r is None else round(corr.r, 10),
                "correlated_over": "edited models",
            }
    else:
        raise ConfigError("dimension", f"unknown dimension {dimension!r}")
    return result


# -- persistence --------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.6f}"


def summary_csv(rows: Sequence[tuple[str, MetricSummary]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for target, s in rows:
        w.writerow([target, s.model_id, s.model_label, s.verifier_id, s.dimension, s.group, _fmt(s.mean), _fmt(s.std), s.n])
    return buf.getvalue()


def read_summary(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["mean"], r["std"], r["n"] = float(r["mean"]), float(r["std"]), int(r["n"])
    return rows


def _jsonl(items) -> str:
    return "".join(json.dumps(x, sort_keys=True, ensure_ascii=False) + "\n" for x in items)


def write_run(result: RunResult, stack: Stack, runs_root: str | Path, run_id: str) -> Path:
    """Persist a run. Existing run directories are never overwritten."""
    run_dir = Path(runs_root) / run_id
    if (run_dir / "manifest.json").exists():
        raise RunExistsError("run_id", f"run {run_id!r} already exists at {run_dir}; choose another run id")
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "records.jsonl").write_text(_jsonl(r.to_json() for r in result.records), encoding="utf-8")
    (run_dir / "summary.csv").write_text(summary_csv(result.summaries), encoding="utf-8")
    (run_dir / "gaps.jsonl").write_text(_jsonl(g.to_json() for g in result.gaps), encoding="utf-8")
    if result.dimension == "attention":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("target", "model_id", "model_label", "prompt_id", "seed", "token", "spread"))
        for row in result.attention_rows:
            w.writerow([*row[:-1], f"{row[-1]:.10f}"])
        (run_dir / "attention.csv").write_text(buf.getvalue(), encoding="utf-8")
        (run_dir / "attention.json").write_text(json.dumps(result.attention, indent=2, sort_keys=True) + "\n")

    cfg = stack.cfg
    manifest = {
        "run_id": run_id,
        "dimension": result.dimension,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "generator_version": __version__,
        "python": platform.python_version(),
        "config": cfg,
        "config_digest": config_digest(cfg),
        "tree_hash": stack.tree.digest(),
        "corpus_hash": corpus_digest(stack.corpus),
        "corpus_size": len(stack.corpus),
        "seeds": list(cfg["seeds"]),
        "aggregation": STD_NOTE,
        "models": [h.manifest_entry() for h in result.models.values()],
        "images_per_model": result.images_per_model(),
        "verifiers": [
            {"id": v.verifier_id, "family": v.family, "version": v.version, "settings": v.settings()}
            for v in stack.verifiers
        ],
        "cets": {name: a.settings() for name, a in stack.cets.items()},
        "backend": getattr(stack.backend, "settings", lambda: {"kind": SUBPROCESS})(),
        "attention_extraction": cfg["backend"]["attention_extraction"],
        "spread": SPREAD_NOTE,
        "binning": result.binning,
        "leakage_pairing": result.pairing,
        "gaps": len(result.gaps),
        "files": ["records.jsonl", "summary.csv", "gaps.jsonl"]
        + (["attention.csv", "attention.json"] if result.dimension == "attention" else []),
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return run_dir


def default_run_id(cfg: Mapping, dimension: str) -> str:
    return cfg["run_id"] or f"{dimension}-{config_digest(cfg)[:12]}"


def execute(cfg: dict, dimension: str, run_id: str | None = None, runs_root: str | Path | None = None) -> tuple[Path, RunResult]:
    """Build the stack, run ``dimension`` and persist it. Returns the run directory."""
    stack = build_stack(cfg)
    try:
        result = run_dimension(stack, dimension)
        root = runs_root if runs_root is not None else cfg["out_dir"]
        run_dir = write_run(result, stack, root, run_id or default_run_id(cfg, dimension))
    finally:
        stack.close()
    return run_dir, result

