"""Run configuration (YAML with ``${VAR}`` interpolation) and run manifests."""

import hashlib
import json
import os
import re
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import yaml

from mrag_bias import __version__
from mrag_bias.corpus import DEFAULT_LANGUAGES
from mrag_bias.exceptions import ConfigError
from mrag_bias.services import HttpEndpoint, LocalEndpoint

ROLES = ("retriever", "reranker", "generator")
_VAR = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)(?::-([^}]*))?\}")


@dataclass
class EndpointConfig:
    role: str
    url: str = None
    auth: str = None
    timeout: float = 30.0
    retries: int = 3
    max_in_flight: int = 8


@dataclass
class RunConfig:
    language_set: list = field(default_factory=lambda: list(DEFAULT_LANGUAGES))
    endpoints: dict = field(default_factory=dict)
    retriever: str = "retriever"
    reranker: str = "reranker"
    generators: list = field(default_factory=list)
    retrieval_top_k: int = 50
    laura_retrieval_top_k: int = 100
    rerank_top_k: int = 5
    theta: float = 0.8
    theta_inclusive: bool = True
    k_negatives: int = 7
    seed: int = 0
    prompt_template: str = None
    casefold: bool = False
    kl_direction: str = "vanilla||oracle"
    log_base: float = 2.0
    stage1_utility: str = "group"
    paths: dict = field(default_factory=dict)

    # operational fields that never change results
    _VOLATILE = ("paths",)
    _VOLATILE_ENDPOINT = ("auth", "timeout", "retries", "max_in_flight")

    def semantic_dict(self):
        d = asdict(self)
        for key in self._VOLATILE:
            d.pop(key)
        d["endpoints"] = {
            name: {k: v for k, v in ep.items() if k not in self._VOLATILE_ENDPOINT}
            for name, ep in d["endpoints"].items()
        }
        return d

    def config_hash(self):
        canon = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def endpoint(self, name, mock_services=None):
        ep = self.endpoints[name]
        if ep.url is None or ep.url.startswith("local:"):
            if mock_services is None:
                raise ConfigError(f"endpoints.{name}.url: in-process endpoint needs mock services")
            return LocalEndpoint(name, mock_services)
        return HttpEndpoint(name, ep.url, ep.auth, ep.timeout, ep.retries, ep.max_in_flight)

    def generator_endpoints(self, names=None, mock_services=None):
        return {name: self.endpoint(name, mock_services) for name in (names or self.generators)}

    def max_in_flight(self):
        limits = [ep.max_in_flight for ep in self.endpoints.values()]
        return min(limits) if limits else None


def _interpolate(value):
    if isinstance(value, str):
        def sub(m):
            if m.group(1) in os.environ:
                return os.environ[m.group(1)]
            if m.group(2) is not None:
                return m.group(2)
            raise ConfigError(f"environment variable {m.group(1)} is not set")
        return _VAR.sub(sub, value)
    if isinstance(value, dict):
        return {k: _interpolate(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate(v) for v in value]
    return value


def _env_key(name):
    return re.sub(r"[^A-Za-z0-9]", "_", name).upper()


def _check_type(name, value, kind):
    if isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"{name}: expected {kind.__name__}, got bool")
    if not isinstance(value, kind):
        raise ConfigError(f"{name}: expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")


def config_from_dict(raw):
    """Validate a parsed config mapping; every error names the offending field.

    ``MRAG_ENDPOINT_<NAME>_URL`` / ``MRAG_ENDPOINT_<NAME>_AUTH`` environment
    variables override the file.
    """
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>: expected a mapping")
    raw = _interpolate(raw)
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown field")

    endpoints = {}
    for name, ep in (raw.get("endpoints") or {}).items():
        if not isinstance(ep, dict):
            raise ConfigError(f"endpoints.{name}: expected a mapping")
        extra = set(ep) - set(EndpointConfig.__dataclass_fields__)
        if extra:
            raise ConfigError(f"endpoints.{name}.{sorted(extra)[0]}: unknown field")
        if ep.get("role") not in ROLES:
            raise ConfigError(f"endpoints.{name}.role: must be one of {ROLES}")
        ep = dict(ep)
        env = _env_key(name)
        for key in ("url", "auth"):
            override = os.environ.get(f"MRAG_ENDPOINT_{env}_{key.upper()}")
            if override is not None:
                ep[key] = override
        for key, kind in (("timeout", (int, float)), ("retries", int), ("max_in_flight", int)):
            if key in ep:
                _check_type(f"endpoints.{name}.{key}", ep[key], kind)
                if ep[key] <= 0:
                    raise ConfigError(f"endpoints.{name}.{key}: must be positive")
        endpoints[name] = EndpointConfig(**ep)

    fields = {k: v for k, v in raw.items() if k != "endpoints"}
    cfg = RunConfig(endpoints=endpoints, **fields)

    _check_type("language_set", cfg.language_set, list)
    if not cfg.language_set or len(set(cfg.language_set)) != len(cfg.language_set):
        raise ConfigError("language_set: must be a non-empty list of distinct language codes")
    for key in ("retrieval_top_k", "laura_retrieval_top_k", "rerank_top_k", "k_negatives", "seed"):
        _check_type(key, getattr(cfg, key), int)
        if key != "seed" and getattr(cfg, key) < 1:
            raise ConfigError(f"{key}: must be >= 1")
    _check_type("theta", cfg.theta, (int, float))
    if not 0.0 <= cfg.theta <= 1.0:
        raise ConfigError("theta: must lie in [0, 1]")
    if cfg.kl_direction not in ("vanilla||oracle", "oracle||vanilla"):
        raise ConfigError("kl_direction: must be 'vanilla||oracle' or 'oracle||vanilla'")
    if cfg.stage1_utility not in ("group", "document"):
        raise ConfigError("stage1_utility: must be 'group' or 'document'")
    _check_type("generators", cfg.generators, list)
    for role, names in (("retriever", [cfg.retriever]), ("reranker", [cfg.reranker]), ("generator", cfg.generators)):
        for n in names:
            if n not in endpoints:
                # only enforce when endpoints are declared at all
                if endpoints:
                    raise ConfigError(f"{role}: endpoint {n!r} is not defined under endpoints")
                continue
            if endpoints[n].role != role:
                raise ConfigError(f"endpoints.{n}.role: expected {role!r}, got {endpoints[n].role!r}")
    return cfg


def load_config(path=None):
    if path is None:
        return config_from_dict({})
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"<file>: not valid YAML ({exc})") from None
    return config_from_dict(raw)


def now_iso():
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def run_directory(cfg, root="runs", explicit=None):
    """Explicit directory if given, else ``<root>/<hash12>-<UTC timestamp>``."""
    if explicit:
        return Path(explicit)
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    return Path(cfg.paths.get("output_root", root)) / f"{cfg.config_hash()[:12]}-{stamp}"


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    started: str
    finished: str = None
    version: str = __version__
    counts: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def write(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, ensure_ascii=False, indent=2, sort_keys=True)
            fh.write("\n")
