"""Pipeline configuration: endpoint definitions, cache, and retry policy.

One YAML file configures every endpoint by name; secrets stay in environment
variables referenced by ``auth_env_var``. An endpoint with ``backend: mock``
reads a deterministic script file instead of talking to the network, which is
how the test and acceptance suites drive every stage offline.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import RelimathError
from .gateway import (
    Client,
    CompletionCache,
    EndpointRole,
    HttpBackend,
    MockBackend,
    ModelEndpoint,
    RetryPolicy,
)


@dataclass
class EndpointConfig:
    role: EndpointRole
    model_name: str
    backend: str = "http"
    base_url: str = ""
    auth_env_var: str = ""
    max_output_tokens: int = 4096
    temperature: float = 0.0
    top_p: float = 1.0
    script: str | None = None

    def to_endpoint(self) -> ModelEndpoint:
        return ModelEndpoint(
            role=self.role,
            model_name=self.model_name,
            base_url=self.base_url,
            auth_env_var=self.auth_env_var,
            max_output_tokens=self.max_output_tokens,
            temperature=self.temperature,
            top_p=self.top_p,
        )


@dataclass
class PipelineConfig:
    endpoints: dict[str, EndpointConfig] = field(default_factory=dict)
    cache_dir: str | None = None
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    max_in_flight: int = 4
    template_dir: str | None = None
    base_dir: Path = field(default_factory=Path)

    def as_dict(self) -> dict:
        return {
            "endpoints": {
                name: {
                    "role": ep.role.value,
                    "model_name": ep.model_name,
                    "backend": ep.backend,
                    "base_url": ep.base_url,
                    "temperature": ep.temperature,
                    "top_p": ep.top_p,
                    "max_output_tokens": ep.max_output_tokens,
                }
                for name, ep in sorted(self.endpoints.items())
            },
            "cache_dir": self.cache_dir,
            "max_in_flight": self.max_in_flight,
        }


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise RelimathError(f"config file not found: {path}")
    raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    retry_raw = raw.get("retry", {})
    config = PipelineConfig(
        cache_dir=raw.get("cache_dir"),
        retry=RetryPolicy(
            max_retries=retry_raw.get("max_retries", 3),
            backoff_base=retry_raw.get("backoff_base", 1.0),
            jitter=retry_raw.get("jitter", 0.5),
            timeout=retry_raw.get("timeout", 600.0),
        ),
        max_in_flight=raw.get("max_in_flight", 4),
        template_dir=raw.get("template_dir"),
        base_dir=path.parent,
    )
    for name, spec in (raw.get("endpoints") or {}).items():
        try:
            role = EndpointRole(spec.get("role", name))
        except ValueError:
            raise RelimathError(
                f"endpoint {name!r}: role must be one of "
                f"{[r.value for r in EndpointRole]}"
            ) from None
        config.endpoints[name] = EndpointConfig(
            role=role,
            model_name=spec.get("model_name", f"{name}-model"),
            backend=spec.get("backend", "http"),
            base_url=spec.get("base_url", ""),
            auth_env_var=spec.get("auth_env_var", ""),
            max_output_tokens=spec.get("max_output_tokens", 4096),
            temperature=spec.get("temperature", 0.0),
            top_p=spec.get("top_p", 1.0),
            script=spec.get("script"),
        )
    return config


def build_client(config: PipelineConfig, name: str,
                 cache: CompletionCache | None = None) -> Client:
    """Instantiate the named endpoint; mock scripts resolve relative to the config file."""
    if name not in config.endpoints:
        raise RelimathError(
            f"no endpoint named {name!r} configured "
            f"(available: {', '.join(sorted(config.endpoints)) or 'none'})"
        )
    spec = config.endpoints[name]
    if spec.backend == "mock":
        if not spec.script:
            raise RelimathError(f"endpoint {name!r}: mock backend requires a script file")
        script_path = config.base_dir / spec.script
        if not script_path.is_file():
            raise RelimathError(f"endpoint {name!r}: script file not found: {script_path}")
        backend = MockBackend.from_script(json.loads(script_path.read_text(encoding="utf-8")))
    elif spec.backend == "http":
        if not spec.base_url:
            raise RelimathError(f"endpoint {name!r}: http backend requires base_url")
        backend = HttpBackend(retry=config.retry)
    else:
        raise RelimathError(f"endpoint {name!r}: unknown backend {spec.backend!r}")
    if cache is None and config.cache_dir:
        cache = CompletionCache(config.base_dir / config.cache_dir)
    return Client(spec.to_endpoint(), backend, cache=cache)
