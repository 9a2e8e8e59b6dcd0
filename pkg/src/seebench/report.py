"""Tables and plots rendered from a persisted run.

Everything here reads only the run directory, so re-rendering the same run
yields byte-identical files. Cells are ``mean ± std`` straight from
summary.csv rows.
"""

from __future__ import annotations

import csv
import io
import json
import re
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .catalog import slug
from .distance import COSINE_SIMILARITY, EDIT_DISTANCE
from .engine import EVASION, LEAKAGE_PRESERVE, LEAKAGE_TARGET, NEIGHBOR_ERASE, NEIGHBOR_PRESERVE
from .runner import POOLED, SPREAD_NOTE, STD_NOTE, read_summary
from .vocab import SLOTS

FORMATS = ("csv", "md", "plots")
MISSING = "n/a"
_BIN = re.compile(r"^\[(-?[\d.]+),(-?[\d.]+)\)$")


class ReportError(ValueError):
    pass


@dataclass
class Table:
    name: str
    title: str
    header: list[str]
    rows: list[list[str]]
    notes: list[str] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        w.writerows(self.rows)
        return buf.getvalue()

    def to_md(self) -> str:
        lines = [f"### {self.title}", "", "| " + " | ".join(self.header) + " |",
                 "|" + "|".join(["---"] * len(self.header)) + "|"]
        lines += ["| " + " | ".join(r) + " |" for r in self.rows]
        if self.notes:
            lines += [""] + [f"_{n}_" for n in self.notes]
        return "\n".join(lines) + "\n"


@dataclass
class Run:
    path: Path
    manifest: dict
    summary: list[dict]
    attention: dict | None = None

    @property
    def dimension(self) -> str:
        return self.manifest["dimension"]

    @property
    def verifier_ids(self) -> list[str]:
        return [v["id"] for v in self.manifest["verifiers"]]

    def labels(self, rows: Sequence[dict]) -> list[str]:
        """Model labels present in ``rows``, in manifest model order."""
        present = {r["model_label"] for r in rows}
        order = list(dict.fromkeys(m["label"] for m in self.manifest["models"]))
        order += sorted(present - set(order))
        return [lab for lab in order if lab in present]


def resolve_run(run: str | Path, runs_root: str | Path = "runs") -> Path:
    """A run directory path, or a run id under ``runs_root``."""
    for cand in (Path(run), Path(runs_root) / str(run)):
        if (cand / "manifest.json").is_file():
            return cand
    raise ReportError(f"no run {str(run)!r} (looked for manifest.json in {run} and {Path(runs_root) / str(run)})")


def load_run(run_dir: str | Path) -> Run:
    path = Path(run_dir)
    manifest = json.loads((path / "manifest.json").read_text())
    summary = read_summary(path / "summary.csv")
    attention = None
    if (path / "attention.json").exists():
        attention = json.loads((path / "attention.json").read_text())
    return Run(path, manifest, summary, attention)


def _cell(row: dict | None) -> str:
    if row is None:
        return MISSING
    return f"{row['mean']:.2f} ± {row['std']:.2f}"


def _index(rows: Sequence[dict], *keys: str) -> dict[tuple, dict]:
    return {tuple(r[k] for k in keys): r for r in rows}


def _model_by_verifier(run: Run, rows: list[dict], dimension: str, group: str, name: str, title: str) -> Table:
    rows = [r for r in rows if r["dimension"] == dimension and r["group"] == group]
    idx = _index(rows, "model_label", "verifier_id")
    vids = run.verifier_ids
    body = [[lab, *(_cell(idx.get((lab, v))) for v in vids)] for lab in run.labels(rows)]
    return Table(name, title, ["Model", *vids], body, [STD_NOTE])


def neighbor_tables(run: Run) -> list[Table]:
    pooled = [r for r in run.summary if r["target"] == POOLED]
    targets = [t for t in dict.fromkeys(r["target"] for r in run.summary) if t != POOLED]
    scope = ", ".join(targets)
    tables = [
        _model_by_verifier(run, pooled, NEIGHBOR_ERASE, "all", "erase_set",
                           f"Accuracy on the erase set (lower is better); targets: {scope}"),
        _model_by_verifier(run, pooled, NEIGHBOR_PRESERVE, "all", "preserve_set",
                           f"Accuracy on the preserve set (higher is better); targets: {scope}"),
    ]
    vids = run.verifier_ids
    for t in targets:
        rows = [r for r in run.summary if r["target"] == t and ":" in r["group"]]
        body = []
        for dim in (NEIGHBOR_ERASE, NEIGHBOR_PRESERVE):
            for kind in (EDIT_DISTANCE, COSINE_SIMILARITY):
                sel = [r for r in rows if r["dimension"] == dim and r["group"].startswith(kind + ":")]
                idx = _index(sel, "model_label", "group", "verifier_id")
                groups = sorted(dict.fromkeys(r["group"] for r in sel), key=_bin_x)
                for g in groups:
                    for lab in run.labels(sel):
                        cells = [_cell(idx.get((lab, g, v))) for v in vids]
                        if all(c == MISSING for c in cells):
                            continue
                        body.append([dim, kind, g.split(":", 1)[1], lab, *cells])
        tables.append(Table(f"curves_{slug(t)}", f"Accuracy vs distance from {t!r}",
                            ["Set", "Measure", "Bin", "Model", *vids], body, [STD_NOTE]))
    return tables


def evasion_tables(run: Run) -> list[Table]:
    rows = [r for r in run.summary if r["dimension"] == EVASION]
    supers = list(dict.fromkeys(r["group"] for r in rows))
    tables = []
    for v in run.verifier_ids:
        sel = [r for r in rows if r["verifier_id"] == v]
        idx = _index(sel, "model_label", "group")
        body = [[lab, *(_cell(idx.get((lab, s))) for s in supers)] for lab in run.labels(sel)]
        tables.append(Table(f"evasion_{slug(v)}", f"Superclass accuracy via subclasses and variants ({v}; lower is better)",
                            ["Model", *(s.capitalize() for s in supers)], body, [STD_NOTE]))
    return tables


def leakage_tables(run: Run) -> list[Table]:
    pooled = [r for r in run.summary if r["target"] == POOLED]
    pairs = ", ".join(f"{e} -> {'/'.join(ps)}" for e, ps in run.manifest.get("leakage_pairing", {}).items())
    tables = [
        _model_by_verifier(run, pooled, LEAKAGE_TARGET, "all", "leakage_target",
                           "Accuracy on <attribute> <e> (lower is better)"),
        _model_by_verifier(run, pooled, LEAKAGE_PRESERVE, "all", "leakage_preserve",
                           "Accuracy on <attribute> <p> (higher means more leakage)"),
    ]
    for t in tables:
        t.notes.append(f"pairing: {pairs}")
    for v in run.verifier_ids:
        for dim, tag in ((LEAKAGE_PRESERVE, "preserve"), (LEAKAGE_TARGET, "target")):
            sel = [r for r in pooled if r["verifier_id"] == v and r["dimension"] == dim and r["group"] in SLOTS]
            idx = _index(sel, "model_label", "group")
            body = [[lab, *(_cell(idx.get((lab, s))) for s in SLOTS)] for lab in run.labels(sel)]
            phrase = "<attribute> <p>" if tag == "preserve" else "<attribute> <e>"
            tables.append(Table(f"leakage_{tag}_slots_{slug(v)}", f"{v} accuracy on {phrase} by attribute family",
                                ["Model", *(f"<{s}>" for s in SLOTS)], body, [STD_NOTE]))
    return tables


def _schedule_k(group: str) -> tuple[str, int]:
    arm, k = group.split(":k=")
    return arm, int(k)


def schedule_tables(run: Run) -> list[Table]:
    tables = []
    vids = run.verifier_ids
    for t in dict.fromkeys(r["target"] for r in run.summary):
        sel = [r for r in run.summary if r["target"] == t]
        idx = {(_schedule_k(r["group"]), r["verifier_id"]): r for r in sel}
        ks = sorted({_schedule_k(r["group"])[1] for r in sel})
        header = ["k", *(f"{v} {arm}" for v in vids for arm in ("progressive", "all-at-once"))]
        body = [[str(k), *(_cell(idx.get(((arm, k), v))) for v in vids for arm in ("progressive", "all_at_once"))]
                for k in ks]
        tables.append(Table(f"schedule_{slug(t)}", f"Target accuracy vs number of erased concepts ({t!r})",
                            header, body, [STD_NOTE]))
    return tables


def attention_tables(run: Run) -> list[Table]:
    tables = []
    for t, info in sorted((run.attention or {}).items()):
        body = [[p["label"], "yes" if p["edited"] else "no", f"{p['target_accuracy']:.2f}", f"{p['mean_spread']:.4f}"]
                for p in info["points"]]
        r = "undefined (zero variance)" if info["r"] is None else f"{info['r']:.4f}"
        tables.append(Table(f"attention_{slug(t)}", f"Target accuracy vs attention spread ({t!r})",
                            ["Model", "Edited", f"Target accuracy ({info['verifier_id']})", "Mean spread"], body,
                            [f"Pearson r over {info['correlated_over']}: {r}", SPREAD_NOTE]))
    return tables


_RENDERERS = {
    "neighbors": neighbor_tables,
    "evasion": evasion_tables,
    "leakage": leakage_tables,
    "schedule": schedule_tables,
    "attention": attention_tables,
}


def tables(run: Run) -> list[Table]:
    try:
        return _RENDERERS[run.dimension](run)
    except KeyError:
        raise ReportError(f"unknown run dimension {run.dimension!r}") from None


# -- plots --------------------------------------------------------------------

def _bin_x(group: str) -> float:
    value = group.split(":", 1)[-1]
    m = _BIN.match(value)
    if m:
        return (float(m.group(1)) + float(m.group(2))) / 2
    try:
        return float(value)
    except ValueError:
        return float("inf")


def _figure(ncols: int):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, ncols, figsize=(4 * ncols, 3.4), squeeze=False)
    return plt, fig, axes[0]


def _save(plt, fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="png", dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def _neighbor_plots(run: Run, out: Path) -> list[Path]:
    paths = []
    vids = run.verifier_ids
    for t in [t for t in dict.fromkeys(r["target"] for r in run.summary) if t != POOLED]:
        for dim, tag in ((NEIGHBOR_ERASE, "erase"), (NEIGHBOR_PRESERVE, "preserve")):
            for kind in (EDIT_DISTANCE, COSINE_SIMILARITY):
                sel = [r for r in run.summary if r["target"] == t and r["dimension"] == dim
                       and r["group"].startswith(kind + ":")]
                if not sel:
                    continue
                plt, fig, axes = _figure(len(vids))
                for ax, v in zip(axes, vids):
                    for lab in run.labels(sel):
                        pts = sorted((_bin_x(r["group"]), r["mean"], r["std"]) for r in sel
                                     if r["verifier_id"] == v and r["model_label"] == lab)
                        if pts:
                            xs, ys, es = zip(*pts)
                            ax.errorbar(xs, ys, yerr=es, marker="o", capsize=2, label=lab)
                    ax.set_title(v)
                    ax.set_xlabel("attribute edit distance" if kind == EDIT_DISTANCE else "cosine similarity")
                    ax.set_ylim(-5, 105)
                axes[0].set_ylabel("accuracy (%)")
                axes[0].legend(fontsize=7)
                fig.suptitle(f"{tag} set, e = {t}")
                paths.append(_save(plt, fig, out / f"{slug(t)}_{tag}_{kind}.png"))
    return paths


def _bar_plot(run: Run, out: Path, name: str, groups: list[str], rows: list[dict], title: str) -> Path:
    vids = run.verifier_ids
    plt, fig, axes = _figure(len(vids))
    labels = run.labels(rows)
    width = 0.8 / max(1, len(labels))
    for ax, v in zip(axes, vids):
        idx = _index([r for r in rows if r["verifier_id"] == v], "model_label", "group")
        for j, lab in enumerate(labels):
            ys = [idx[(lab, g)]["mean"] if (lab, g) in idx else 0.0 for g in groups]
            ax.bar([i + j * width for i in range(len(groups))], ys, width, label=lab)
        ax.set_xticks([i + 0.4 - width / 2 for i in range(len(groups))])
        ax.set_xticklabels(groups, rotation=60, fontsize=7)
        ax.set_title(v)
        ax.set_ylim(0, 105)
    axes[0].set_ylabel("accuracy (%)")
    axes[0].legend(fontsize=7)
    fig.suptitle(title)
    return _save(plt, fig, out / f"{name}.png")


def _schedule_plots(run: Run, out: Path) -> list[Path]:
    paths = []
    vids = run.verifier_ids
    for t in dict.fromkeys(r["target"] for r in run.summary):
        sel = [r for r in run.summary if r["target"] == t]
        plt, fig, axes = _figure(1)
        ax = axes[0]
        colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
        for i, v in enumerate(vids):
            for arm, style in (("progressive", "-"), ("all_at_once", "--")):
                pts = sorted((_schedule_k(r["group"])[1], r["mean"]) for r in sel
                             if r["verifier_id"] == v and _schedule_k(r["group"])[0] == arm)
                if pts:
                    xs, ys = zip(*pts)
                    ax.plot(xs, ys, style, color=colors[i % len(colors)], label=f"{v} {arm.replace('_', '-')}")
        ax.set_xlabel("number of erased concepts")
        ax.set_ylabel("target accuracy (%)")
        ax.set_ylim(-5, 105)
        ax.legend(fontsize=6)
        ax.set_title(f"e = {t}: progressive (solid) vs all-at-once (dashed)")
        paths.append(_save(plt, fig, out / f"schedule_{slug(t)}.png"))
    return paths


def _attention_plots(run: Run, out: Path) -> list[Path]:
    paths = []
    for t, info in sorted((run.attention or {}).items()):
        plt, fig, axes = _figure(1)
        ax = axes[0]
        for p in info["points"]:
            ax.scatter([p["target_accuracy"]], [p["mean_spread"]], marker="o" if p["edited"] else "x")
            ax.annotate(p["label"], (p["target_accuracy"], p["mean_spread"]), fontsize=7)
        r = "undefined" if info["r"] is None else f"{info['r']:.3f}"
        ax.set_xlabel(f"target accuracy (%), {info['verifier_id']}")
        ax.set_ylabel("mean attention spread")
        ax.set_title(f"e = {t}, Pearson r = {r}")
        paths.append(_save(plt, fig, out / f"attention_{slug(t)}.png"))
    return paths


def plots(run: Run, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    dim = run.dimension
    if dim == "neighbors":
        return _neighbor_plots(run, out)
    if dim == "evasion":
        rows = [r for r in run.summary if r["dimension"] == EVASION]
        groups = list(dict.fromkeys(r["group"] for r in rows))
        return [_bar_plot(run, out, "evasion", groups, rows, "superclass accuracy via subclasses")]
    if dim == "leakage":
        rows = [r for r in run.summary if r["target"] == POOLED and r["group"] in SLOTS]
        return [
            _bar_plot(run, out, f"leakage_{tag}", list(SLOTS), [r for r in rows if r["dimension"] == d], title)
            for d, tag, title in ((LEAKAGE_TARGET, "target", "<attribute> <e>"),
                                  (LEAKAGE_PRESERVE, "preserve", "<attribute> <p>"))
        ]
    if dim == "schedule":
        return _schedule_plots(run, out)
    if dim == "attention":
        return _attention_plots(run, out)
    raise ReportError(f"unknown run dimension {dim!r}")


def render(run_dir: str | Path, fmt: str) -> list[Path]:
    """Write report files for ``fmt`` and return their paths."""
    if fmt not in FORMATS:
        raise ReportError(f"unknown format {fmt!r}; expected one of {list(FORMATS)}")
    run = load_run(run_dir)
    if fmt == "plots":
        return plots(run, run.path / "plots")
    out = run.path / "report"
    out.mkdir(parents=True, exist_ok=True)
    ts = tables(run)
    if fmt == "csv":
        paths = []
        for t in ts:
            p = out / f"{t.name}.csv"
            p.write_text(t.to_csv(), encoding="utf-8")
            paths.append(p)
        return paths
    m = run.manifest
    header = [
        f"# Run {m['run_id']} ({m['dimension']})", "",
        f"- corpus: {m['corpus_size']} prompts, hash {m['corpus_hash'][:16]}",
        f"- tree hash: {m['tree_hash'][:16]}",
        f"- seeds: {m['seeds']}",
        "- verifiers: " + ", ".join(f"{v['id']} ({v['family']})" for v in m["verifiers"]),
        f"- gaps: {m['gaps']}",
        "",
    ]
    p = out / "report.md"
    p.write_text("\n".join(header) + "\n" + "\n".join(t.to_md() for t in ts), encoding="utf-8")
    return [p]
