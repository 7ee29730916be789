"""Fenced structured-block extraction and parsing."""

from __future__ import annotations

import pytest

from flowsmith.blocks import (
    BlockError,
    extract_block,
    parse_json_block,
    render_json_block,
    require_keys,
)


def test_extracts_first_matching_fence():
    text = (
        "Thinking out loud first.\n"
        "```other\nnot this\n```\n"
        "```verdict\n{\"g\": 1}\n```\n"
        "```verdict\n{\"g\": 2}\n```\n"
    )
    assert parse_json_block(text, "verdict") == {"g": 1}


def test_tolerates_indentation_and_trailing_space():
    text = "  ```mutation  \n  {\"kind\": \"x\"}\n  ```  "
    assert parse_json_block(text, "mutation") == {"kind": "x"}


def test_missing_block_reason():
    with pytest.raises(BlockError) as err:
        extract_block("no fences here", "verdict")
    assert err.value.reason == "missing"


def test_bad_json_reason():
    with pytest.raises(BlockError) as err:
        parse_json_block("```verdict\n{nope}\n```", "verdict")
    assert err.value.reason == "json"


def test_non_object_payload_reason():
    with pytest.raises(BlockError) as err:
        parse_json_block("```verdict\n[1, 2]\n```", "verdict")
    assert err.value.reason == "shape"


def test_render_parse_round_trip():
    payload = {"g": 0.25, "feedback": "uneven", "evidence": [{"node_id": "a", "step_index": 0}]}
    assert parse_json_block(render_json_block("verdict", payload), "verdict") == payload


def test_require_keys():
    payload = {"g": 1, "c": 1}
    require_keys(payload, ("g", "c"), "verdict")
    with pytest.raises(BlockError) as err:
        require_keys(payload, ("g", "c", "q", "a"), "verdict")
    assert "q" in str(err.value)
    assert err.value.reason == "shape"


def test_tag_is_exact_not_prefix():
    text = "```verdicts\n{\"g\": 1}\n```"
    with pytest.raises(BlockError):
        extract_block(text, "verdict")
