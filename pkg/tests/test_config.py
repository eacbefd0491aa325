import json

import pytest

from mrag_bias.config import RunManifest, config_from_dict, load_config, run_directory
from mrag_bias.exceptions import ConfigError
from mrag_bias.services import HttpEndpoint, LocalEndpoint, MockServices

BASE = {
    "endpoints": {
        "ret": {"role": "retriever", "url": "http://localhost:1"},
        "rr": {"role": "reranker", "url": "local:"},
        "gen-a": {"role": "generator", "url": "${GEN_URL:-http://localhost:3}", "auth": "${GEN_TOKEN:-}"},
    },
    "retriever": "ret",
    "reranker": "rr",
    "generators": ["gen-a"],
}


def test_defaults():
    cfg = load_config()
    assert len(cfg.language_set) == 13
    assert (cfg.retrieval_top_k, cfg.laura_retrieval_top_k, cfg.rerank_top_k) == (50, 100, 5)
    assert cfg.theta == 0.8 and cfg.theta_inclusive and cfg.k_negatives == 7
    assert cfg.kl_direction == "vanilla||oracle" and cfg.log_base == 2.0
    assert not cfg.casefold


def test_interpolation_default_and_env(monkeypatch):
    monkeypatch.delenv("GEN_URL", raising=False)
    assert config_from_dict(BASE).endpoints["gen-a"].url == "http://localhost:3"
    monkeypatch.setenv("GEN_URL", "http://gen:9")
    assert config_from_dict(BASE).endpoints["gen-a"].url == "http://gen:9"


def test_missing_variable_is_named(monkeypatch):
    monkeypatch.delenv("NOPE_VAR", raising=False)
    with pytest.raises(ConfigError, match="NOPE_VAR"):
        config_from_dict({"prompt_template": "${NOPE_VAR}"})


def test_endpoint_env_override(monkeypatch):
    monkeypatch.setenv("MRAG_ENDPOINT_GEN_A_URL", "http://override:1")
    monkeypatch.setenv("MRAG_ENDPOINT_GEN_A_AUTH", "secret")
    ep = config_from_dict(BASE).endpoints["gen-a"]
    assert ep.url == "http://override:1" and ep.auth == "secret"


@pytest.mark.parametrize("patch,field", [
    ({"theta": 1.5}, "theta"),
    ({"theta": "high"}, "theta"),
    ({"retrieval_top_k": 0}, "retrieval_top_k"),
    ({"k_negatives": True}, "k_negatives"),
    ({"language_set": ["en", "en"]}, "language_set"),
    ({"kl_direction": "sideways"}, "kl_direction"),
    ({"stage1_utility": "magic"}, "stage1_utility"),
    ({"bogus": 1}, "bogus"),
    ({"generators": ["missing"]}, "generator"),
    ({"retriever": "rr"}, "endpoints.rr.role"),
])
def test_errors_name_the_field(patch, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        config_from_dict({**BASE, **patch})


def test_endpoint_field_errors():
    bad = json.loads(json.dumps(BASE))
    bad["endpoints"]["ret"]["timeout"] = -1
    with pytest.raises(ConfigError, match=r"endpoints\.ret\.timeout"):
        config_from_dict(bad)
    bad["endpoints"]["ret"] = {"role": "oracle"}
    with pytest.raises(ConfigError, match=r"endpoints\.ret\.role"):
        config_from_dict(bad)


def test_hash_ignores_operational_fields(monkeypatch):
    monkeypatch.delenv("GEN_URL", raising=False)
    a = config_from_dict(BASE)
    varied = json.loads(json.dumps(BASE))
    varied["endpoints"]["gen-a"].update(timeout=99, retries=9, max_in_flight=1, auth="x")
    varied["paths"] = {"output_root": "/elsewhere"}
    assert config_from_dict(varied).config_hash() == a.config_hash()
    assert config_from_dict({**BASE, "theta": 0.7}).config_hash() != a.config_hash()
    assert len(a.config_hash()) == 64


def test_endpoint_construction():
    cfg = config_from_dict(BASE)
    assert isinstance(cfg.endpoint("ret"), HttpEndpoint)
    assert isinstance(cfg.endpoint("rr", MockServices()), LocalEndpoint)
    with pytest.raises(ConfigError, match=r"endpoints\.rr\.url"):
        cfg.endpoint("rr")


def test_invalid_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("a: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_run_directory_and_manifest(tmp_path):
    cfg = load_config()
    assert run_directory(cfg, explicit=tmp_path / "x") == tmp_path / "x"
    d = run_directory(cfg, root=str(tmp_path))
    assert d.parent == tmp_path and d.name.startswith(cfg.config_hash()[:12])
    m = RunManifest("run-vanilla", cfg.config_hash(), 3, "2026-01-01T00:00:00Z", counts={"queries": 1})
    m.write(tmp_path / "m" / "manifest.json")
    data = json.loads((tmp_path / "m" / "manifest.json").read_text())
    assert data["seed"] == 3 and data["counts"] == {"queries": 1} and data["version"]
