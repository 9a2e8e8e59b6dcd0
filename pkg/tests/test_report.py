from __future__ import annotations

import pytest

from seebench.config import normalize_config
from seebench.report import MISSING, ReportError, Table, load_run, render, tables
from seebench.runner import SUMMARY_COLUMNS, execute, read_summary

CFG = {
    "seeds": [0, 1],
    "corpus": {"objects": ["cup", "couch", "airplane", "car"]},
    "cets": [{"name": "UCE", "radius": 1, "probability": 1.0},
             {"name": "leaky", "closure": True, "transfer_attributes": True}],
    "verifiers": [{"id": "CLIP", "family": "classify"}, {"id": "BLIP", "family": "vqa"}],
    "leakage": {"targets": ["couch"], "partners": {"couch": ["airplane", "car"]}, "attributes": ["red", "wooden"]},
    "evasion": {"targets": ["vehicle"]},
}


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    cfg = normalize_config(CFG)
    return {d: execute(cfg, d, d, root)[0] for d in ("neighbors", "leakage", "evasion", "attention")}


def test_summary_csv_shape(runs):
    rows = read_summary(runs["neighbors"] / "summary.csv")
    assert tuple(rows[0]) == SUMMARY_COLUMNS
    pooled = [r for r in rows if r["target"] == "*"]
    assert {r["model_label"] for r in pooled} == {"Unedited", "UCE", "leaky"}


def test_neighbor_tables(runs):
    ts = {t.name: t for t in tables(load_run(runs["neighbors"]))}
    erase = ts["erase_set"]
    assert erase.header == ["Model", "CLIP", "BLIP"]
    assert [r[0] for r in erase.rows] == ["Unedited", "UCE", "leaky"]
    assert erase.rows[0][1] == "100.00 ± 0.00"
    assert erase.rows[2][1] == "0.00 ± 0.00"
    assert "curves_cup" in ts


def test_leakage_tables(runs):
    ts = {t.name: t for t in tables(load_run(runs["leakage"]))}
    pres = {r[0]: r[1:] for r in ts["leakage_preserve"].rows}
    assert pres["leaky"] == ["100.00 ± 0.00", "100.00 ± 0.00"]
    assert pres["Unedited"] == ["0.00 ± 0.00", "0.00 ± 0.00"]
    assert any("couch -> airplane/car" in n for n in ts["leakage_preserve"].notes)
    slots = ts["leakage_preserve_slots_blip"]
    assert slots.header == ["Model", "<size>", "<color>", "<material>"]
    assert slots.rows[0][1] == MISSING  # no size attribute was probed


def test_evasion_and_attention_tables(runs):
    ev = tables(load_run(runs["evasion"]))
    assert [t.name for t in ev] == ["evasion_clip", "evasion_blip"]
    assert ev[0].header == ["Model", "Vehicle"]
    att = tables(load_run(runs["attention"]))[0]
    assert att.header[0] == "Model" and len(att.rows) == 3
    assert any(n.startswith("Pearson r") for n in att.notes)


def test_table_rendering():
    t = Table("x", "Title", ["a", "b"], [["1", "2"]], ["note"])
    assert t.to_csv() == "a,b\n1,2\n"
    assert t.to_md() == "### Title\n\n| a | b |\n|---|---|\n| 1 | 2 |\n\n_note_\n"


def test_bad_format(runs):
    with pytest.raises(ReportError):
        render(runs["neighbors"], "pdf")


def test_plots_are_reproducible(runs):
    first = {p.name: p.read_bytes() for p in render(runs["evasion"], "plots")}
    second = {p.name: p.read_bytes() for p in render(runs["evasion"], "plots")}
    assert first == second and first
