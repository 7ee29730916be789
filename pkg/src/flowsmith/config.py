"""Run configuration: one JSON file describing provider, tools, and limits.

Relative paths inside the file (script_file, archive_dir, workspace) resolve
against the config file's own directory, so a config directory can be moved
wholesale without editing anything.
"""

from __future__ import annotations

import dataclasses
import json
import os

from .orchestrator import RunConfig
from .provider import ConfigError, HTTPProvider, PriceTable, ScriptedProvider
from .sandbox import SandboxPolicy

DEFAULT_PORT_LOW = 8700
"""Default start of the local port range probed for tool servers."""

DEFAULT_PORT_HIGH = 8716
"""Default end (exclusive) of the probed port range."""


@dataclasses.dataclass(frozen=True)
class ProviderConfig:
    backend: str = "scripted"
    base_url: str = ""
    api_key_env: str = "FLOWSMITH_API_KEY"
    model_bindings: dict = dataclasses.field(default_factory=dict)
    embedding_dim: int = 256
    script_file: str = ""

    def __post_init__(self):
        if self.backend not in ("scripted", "http"):
            raise ConfigError(f"unknown provider backend {self.backend!r}")


@dataclasses.dataclass(frozen=True)
class McpConfig:
    host: str = "127.0.0.1"
    port_low: int = DEFAULT_PORT_LOW
    port_high: int = DEFAULT_PORT_HIGH
    timeout_s: float = 0.2
    parallelism: int = 16

    def __post_init__(self):
        if self.port_low > self.port_high:
            raise ConfigError("mcp port range is inverted")


@dataclasses.dataclass(frozen=True)
class AppConfig:
    provider: ProviderConfig = dataclasses.field(default_factory=ProviderConfig)
    mcp: McpConfig = dataclasses.field(default_factory=McpConfig)
    run: RunConfig = dataclasses.field(default_factory=RunConfig)
    sandbox: SandboxPolicy = dataclasses.field(default_factory=SandboxPolicy)
    archive_dir: str = "archive"
    workspace: str = "workspace"
    prices: dict = dataclasses.field(default_factory=dict)


def _build_section(cls, raw: dict, section: str):
    """Construct a config dataclass, rejecting unknown keys loudly: a typo'd
    limit that silently falls back to its default is worse than an error."""
    if not isinstance(raw, dict):
        raise ConfigError(f"config section {section!r} must be an object")
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in config section {section!r}: {', '.join(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config section {section!r}: {exc}") from exc


def load_config(path: str) -> AppConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a JSON object")

    known = {"provider", "mcp", "run", "sandbox", "archive_dir", "workspace", "prices"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {', '.join(unknown)}")

    base = os.path.dirname(os.path.abspath(path))

    def _resolve(p: str) -> str:
        return p if (not p or os.path.isabs(p)) else os.path.join(base, p)

    provider = _build_section(ProviderConfig, raw.get("provider", {}), "provider")
    if provider.script_file:
        provider = dataclasses.replace(provider, script_file=_resolve(provider.script_file))
    prices = raw.get("prices", {})
    if not isinstance(prices, dict):
        raise ConfigError("config section 'prices' must be an object")
    return AppConfig(
        provider=provider,
        mcp=_build_section(McpConfig, raw.get("mcp", {}), "mcp"),
        run=_build_section(RunConfig, raw.get("run", {}), "run"),
        sandbox=_build_section(SandboxPolicy, raw.get("sandbox", {}), "sandbox"),
        archive_dir=_resolve(str(raw.get("archive_dir", "archive"))),
        workspace=_resolve(str(raw.get("workspace", "workspace"))),
        prices=prices,
    )


def build_provider(config: ProviderConfig):
    """Instantiate the provider a config names.

    Scripted backends optionally preload canned responses from script_file
    (a JSON array of response texts, consumed FIFO)."""
    if config.backend == "scripted":
        provider = ScriptedProvider(embedding_dim=config.embedding_dim)
        if config.script_file:
            try:
                with open(config.script_file, "r", encoding="utf-8") as fh:
                    responses = json.load(fh)
            except OSError as exc:
                raise ConfigError(f"cannot read script_file: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"script_file is not valid JSON: {exc}") from exc
            if not isinstance(responses, list) or not all(isinstance(r, str) for r in responses):
                raise ConfigError("script_file must hold a JSON array of strings")
            for text in responses:
                provider.enqueue(text)
        return provider
    if not config.base_url:
        raise ConfigError("http provider needs base_url")
    api_key = os.environ.get(config.api_key_env, "")
    if not api_key:
        raise ConfigError(f"environment variable {config.api_key_env} is not set")
    return HTTPProvider(
        base_url=config.base_url,
        api_key=api_key,
        model_bindings=dict(config.model_bindings),
        embedding_dim=config.embedding_dim,
    )


def build_price_table(prices: dict) -> PriceTable:
    return PriceTable(prices)
