from __future__ import annotations

import pytest

from seebench.config import ConfigError, config_digest, normalize_config, validate_config
from seebench.verifiers import DEFAULT_SUITE


def test_defaults():
    cfg = normalize_config({})
    assert cfg["seeds"] == [0, 1, 2, 3]
    assert cfg["parallelism"] == 1
    assert cfg["binning"]["cosine_width"] == 0.05
    assert [v["id"] for v in cfg["verifiers"]] == [vid for vid, _ in DEFAULT_SUITE]
    assert cfg["cets"][0]["name"] == "mock-cet"
    assert cfg["corpus"]["objects"] is None
    assert normalize_config(None) == cfg


def test_unknown_key_suggestion():
    with pytest.raises(ConfigError, match="did you mean 'verifiers'") as info:
        normalize_config({"verfiers": []})
    assert info.value.path == "verfiers"
    with pytest.raises(ConfigError, match=r"cets\[0\]\.radiuss.*'radius'"):
        normalize_config({"cets": [{"name": "a", "radiuss": 1}]})


def test_seed_order_preserved():
    assert normalize_config({"seeds": [3, 1]})["seeds"] == [3, 1]


@pytest.mark.parametrize("data,path", [
    ({"seeds": [1, 1]}, "seeds"),
    ({"seeds": []}, "seeds"),
    ({"seeds": "0"}, "seeds"),
    ({"seeds": [True]}, r"seeds\[0\]"),
    ({"parallelism": 0}, "parallelism"),
    ({"binning": {"cosine_width": 0}}, "binning.cosine_width"),
    ({"cets": [{"radius": 1}]}, r"cets\[0\]\.name"),
    ({"cets": [{"name": "a"}, {"name": "a"}]}, r"cets\[1\]\.name"),
    ({"cets": [{"name": "a", "probability": 2}]}, r"cets\[0\]\.probability"),
    ({"cets": [{"name": "a", "single_call": "some"}]}, r"cets\[0\]\.single_call"),
    ({"cets": []}, "cets"),
    ({"verifiers": [{"id": "x", "family": "ocr"}]}, r"verifiers\[0\]\.family"),
    ({"verifiers": [{"id": "x"}]}, r"verifiers\[0\]\.family"),
    ({"schedule": {"cet": "ghost"}}, "schedule.cet"),
    ({"backend": {"grid": [8]}}, "backend.grid"),
    ({"backend": {"kind": "gpu"}}, "backend.kind"),
    ({"neighbors": "cup"}, "neighbors"),
])
def test_invalid(data, path):
    with pytest.raises(ConfigError, match=f"^{path}:"):
        normalize_config(data)


def test_yaml_file(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("seeds: [7]\ncets:\n  - {name: UCE, radius: 1, probability: 1}\n")
    cfg = validate_config(p)
    assert cfg["seeds"] == [7] and cfg["cets"][0]["probability"] == 1.0
    p.write_text("seeds: [7\n")
    with pytest.raises(ConfigError, match="not valid YAML"):
        validate_config(p)
    with pytest.raises(ConfigError, match="cannot read"):
        validate_config(tmp_path / "missing.yaml")


def test_digest_stable():
    assert config_digest(normalize_config({})) == config_digest(normalize_config({"seeds": [0, 1, 2, 3]}))
    assert config_digest(normalize_config({})) != config_digest(normalize_config({"seeds": [0]}))
