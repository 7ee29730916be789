"""Fenced structured blocks: the one wire grammar for model output parsing.

Every place the engine asks a model for structured data (judge verdicts,
mutation proposals, synthesized workflows, task plans) uses the same shape:
a fenced code block tagged with the payload name, containing a single JSON
object. One grammar, one parser, one failure taxonomy:

    ```verdict
    {"g": 0.8, "c": 0.6, "q": 1.0, "a": 0.6, "feedback": "...", "evidence": []}
    ```

The first block carrying the requested tag is parsed; surrounding prose is
ignored, which lets models think aloud without breaking the contract.
"""

from __future__ import annotations

import json
import re
from typing import Any


class BlockError(ValueError):
    """Structured block missing or unusable. reason ∈ {missing, json, shape}."""

    def __init__(self, message: str, reason: str):
        super().__init__(message)
        self.reason = reason


def _fence_pattern(tag: str) -> re.Pattern[str]:
    return re.compile(
        r"^[ \t]*```[ \t]*" + re.escape(tag) + r"[ \t]*\r?\n(.*?)^[ \t]*```[ \t]*$",
        re.DOTALL | re.MULTILINE,
    )


def extract_block(text: str, tag: str) -> str:
    """Return the body of the first ```<tag> fenced block in text."""
    match = _fence_pattern(tag).search(text)
    if match is None:
        raise BlockError(f"no ```{tag} block found", reason="missing")
    return match.group(1)


def parse_json_block(text: str, tag: str) -> dict[str, Any]:
    """Extract the first ```<tag> block and parse its body as a JSON object."""
    body = extract_block(text, tag)
    try:
        payload = json.loads(body)
    except json.JSONDecodeError as exc:
        raise BlockError(f"```{tag} block is not valid JSON: {exc.msg}", reason="json") from exc
    if not isinstance(payload, dict):
        raise BlockError(f"```{tag} block must contain a JSON object", reason="shape")
    return payload


def render_json_block(tag: str, payload: dict[str, Any]) -> str:
    """Inverse of parse_json_block, used by tests and scripted fixtures."""
    body = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False)
    return f"```{tag}\n{body}\n```"


def require_keys(payload: dict[str, Any], keys: tuple[str, ...], tag: str) -> None:
    missing = [k for k in keys if k not in payload]
    if missing:
        raise BlockError(f"```{tag} block missing keys: {', '.join(missing)}", reason="shape")
