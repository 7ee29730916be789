"""Tests for config loading, validation, and provider construction."""

from __future__ import annotations

import json
import os

import pytest

from flowsmith.config import (
    AppConfig,
    McpConfig,
    ProviderConfig,
    build_price_table,
    build_provider,
    load_config,
)
from flowsmith.provider import ConfigError, HTTPProvider, ScriptedProvider


def _write_config(tmp_path, payload) -> str:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


class TestLoadConfig:
    def test_empty_object_gives_defaults(self, tmp_path):
        config = load_config(_write_config(tmp_path, {}))
        assert config.provider.backend == "scripted"
        assert config.mcp.port_low == 8700
        assert config.run.max_iterations == 10
        assert config.run.early_stop_threshold == 0.9

    def test_sections_override_defaults(self, tmp_path):
        config = load_config(
            _write_config(
                tmp_path,
                {
                    "provider": {"backend": "scripted", "embedding_dim": 32},
                    "mcp": {"port_low": 9000, "port_high": 9004},
                    "run": {"max_iterations": 3, "early_stop_threshold": 0.8},
                },
            )
        )
        assert config.provider.embedding_dim == 32
        assert config.mcp.port_high == 9004
        assert config.run.max_iterations == 3

    def test_unknown_top_level_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown top-level"):
            load_config(_write_config(tmp_path, {"providerr": {}}))

    def test_unknown_section_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown keys"):
            load_config(_write_config(tmp_path, {"run": {"max_iters": 5}}))

    def test_bad_section_value_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="bad config section"):
            load_config(_write_config(tmp_path, {"run": {"max_iterations": 0}}))

    def test_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(str(path))

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(str(tmp_path / "absent.json"))

    def test_non_object_document_rejected(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(ConfigError, match="JSON object"):
            load_config(str(path))

    def test_relative_paths_resolve_against_config_dir(self, tmp_path):
        nested = tmp_path / "conf"
        nested.mkdir()
        config = load_config(
            _write_config(
                nested,
                {
                    "archive_dir": "store",
                    "workspace": "ws",
                    "provider": {"script_file": "script.json"},
                },
            )
        )
        assert config.archive_dir == str(nested / "store")
        assert config.workspace == str(nested / "ws")
        assert config.provider.script_file == str(nested / "script.json")

    def test_absolute_paths_left_alone(self, tmp_path):
        target = str(tmp_path / "elsewhere")
        config = load_config(_write_config(tmp_path, {"archive_dir": target}))
        assert config.archive_dir == target

    def test_prices_must_be_object(self, tmp_path):
        with pytest.raises(ConfigError, match="prices"):
            load_config(_write_config(tmp_path, {"prices": [1, 2]}))

    def test_inverted_port_range_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(_write_config(tmp_path, {"mcp": {"port_low": 9000, "port_high": 8000}}))


class TestBuildProvider:
    def test_scripted_default(self):
        provider = build_provider(ProviderConfig())
        assert isinstance(provider, ScriptedProvider)
        assert provider.embedding_dim == 256

    def test_scripted_with_script_file(self, tmp_path):
        script = tmp_path / "script.json"
        script.write_text(json.dumps(["first reply", "second reply"]), encoding="utf-8")
        provider = build_provider(ProviderConfig(script_file=str(script)))
        assert provider.depth() == 2
        from flowsmith.provider import ChatRequest

        response = provider.chat(ChatRequest(model_ref="m", messages=(("user", "hi"),)))
        assert response.text == "first reply"

    def test_script_file_must_be_string_array(self, tmp_path):
        script = tmp_path / "script.json"
        script.write_text(json.dumps([1, 2]), encoding="utf-8")
        with pytest.raises(ConfigError, match="array of strings"):
            build_provider(ProviderConfig(script_file=str(script)))

    def test_script_file_missing(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            build_provider(ProviderConfig(script_file=str(tmp_path / "nope.json")))

    def test_unknown_backend_rejected(self):
        with pytest.raises(ConfigError):
            ProviderConfig(backend="quantum")

    def test_http_requires_base_url(self):
        with pytest.raises(ConfigError, match="base_url"):
            build_provider(ProviderConfig(backend="http"))

    def test_http_requires_api_key_env(self, monkeypatch):
        monkeypatch.delenv("FLOWSMITH_API_KEY", raising=False)
        with pytest.raises(ConfigError, match="FLOWSMITH_API_KEY"):
            build_provider(ProviderConfig(backend="http", base_url="http://127.0.0.1:1/v1"))

    def test_http_built_when_key_present(self, monkeypatch):
        monkeypatch.setenv("FLOWSMITH_API_KEY", "sk-test")
        provider = build_provider(
            ProviderConfig(
                backend="http",
                base_url="http://127.0.0.1:1/v1",
                model_bindings={"judge_model": "big-model"},
            )
        )
        assert isinstance(provider, HTTPProvider)
        assert provider.model_bindings == {"judge_model": "big-model"}


class TestPrices:
    def test_price_table_built_from_config(self, tmp_path):
        config = load_config(
            _write_config(
                tmp_path,
                {"prices": {"small": {"input_per_mtok": 0.56, "output_per_mtok": 1.19}}},
            )
        )
        table = build_price_table(config.prices)
        from flowsmith.provider import UsageRecord, cost

        usage = UsageRecord(input_tokens=1_000_000, output_tokens=0, model_ref="small")
        assert cost([usage], table) == 0.56
