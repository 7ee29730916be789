"""Four-criterion scoring of execution traces by a model call.

The judge sees the task, a rubric, and a byte-budgeted summary of the trace,
and must answer with a ```verdict block (see blocks.py). Scores are clamped
into [0, 1] with a logged event, and the overall score is always recomputed
as the mean of the four criteria — a model-reported aggregate is never
trusted. Parse failures retry with a stricter-format reminder; when retries
run out, a sentinel all-zero verdict keeps the evolution loop alive.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .blocks import BlockError, parse_json_block, render_json_block, require_keys
from .executor import ExecutionTrace
from .provider import ChatRequest
from .templates import TemplateError, TemplateSet, render, require_placeholders, JUDGE_SYSTEM

log = logging.getLogger(__name__)

DEFAULT_TRACE_BYTE_BUDGET = 16384
"""Trace summary budget for step detail; final outputs stay verbatim."""

CRITERIA_KEYS = ("g", "c", "q", "a")

RETRY_REMINDER = (
    "Your previous reply could not be parsed: {error}. Reply again with ONLY "
    "a ```verdict fenced block containing one JSON object with numeric keys "
    "g, c, q, a, a \"feedback\" string, and an \"evidence\" array."
)


class VerdictParseError(Exception):
    """Response carries no usable ```verdict block. Retriable."""


@dataclass(frozen=True)
class JudgeCriteria:
    """goal alignment, collaboration, output quality, plausibility — each in [0, 1]."""

    g: float
    c: float
    q: float
    a: float

    def __post_init__(self):
        for key in CRITERIA_KEYS:
            value = getattr(self, key)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"criterion {key}={value} outside [0, 1]")


@dataclass(frozen=True)
class EvidenceRef:
    """Pointer into the scored trace backing a judgment."""

    node_id: str
    step_index: int
    excerpt: str = ""


@dataclass(frozen=True)
class JudgeVerdict:
    criteria: JudgeCriteria
    overall: float
    feedback: str
    evidence: tuple[EvidenceRef, ...] = ()


def aggregate(criteria: JudgeCriteria) -> float:
    """The overall score: plain arithmetic mean of the four criteria."""
    return (criteria.g + criteria.c + criteria.q + criteria.a) / 4


def make_verdict(criteria: JudgeCriteria, feedback: str, evidence=()) -> JudgeVerdict:
    return JudgeVerdict(
        criteria=criteria,
        overall=aggregate(criteria),
        feedback=feedback,
        evidence=tuple(evidence),
    )


def sentinel_verdict(reason: str) -> JudgeVerdict:
    return make_verdict(JudgeCriteria(0.0, 0.0, 0.0, 0.0), feedback=reason)


def render_verdict(verdict: JudgeVerdict) -> str:
    """Wire form of a verdict; parse_verdict(render_verdict(v)) round-trips
    criteria and feedback. Used by tests and scripted fixtures."""
    payload = {
        "g": verdict.criteria.g,
        "c": verdict.criteria.c,
        "q": verdict.criteria.q,
        "a": verdict.criteria.a,
        "overall": verdict.overall,
        "feedback": verdict.feedback,
        "evidence": [
            {"node_id": e.node_id, "step_index": e.step_index, "excerpt": e.excerpt}
            for e in verdict.evidence
        ],
    }
    return render_json_block("verdict", payload)


def _as_score(key: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise VerdictParseError(f"criterion {key!r} is not a number")
    score = float(value)
    if not 0.0 <= score <= 1.0:
        clamped = min(1.0, max(0.0, score))
        log.warning("judge criterion %s=%s clamped to %s", key, score, clamped)
        return clamped
    return score


def parse_verdict(response_text: str) -> JudgeVerdict:
    """Extract and normalize a verdict. Out-of-range criteria are clamped
    (logged); the overall score is recomputed, never read."""
    try:
        payload = parse_json_block(response_text, "verdict")
        require_keys(payload, CRITERIA_KEYS + ("feedback",), "verdict")
    except BlockError as exc:
        raise VerdictParseError(str(exc)) from exc
    criteria = JudgeCriteria(**{key: _as_score(key, payload[key]) for key in CRITERIA_KEYS})
    feedback = payload["feedback"]
    if not isinstance(feedback, str):
        raise VerdictParseError("feedback must be a string")
    evidence = []
    raw_evidence = payload.get("evidence", [])
    if not isinstance(raw_evidence, list):
        raise VerdictParseError("evidence must be an array")
    for item in raw_evidence:
        if not isinstance(item, dict) or "node_id" not in item or "step_index" not in item:
            raise VerdictParseError("evidence items need node_id and step_index")
        if isinstance(item["step_index"], bool) or not isinstance(item["step_index"], int):
            raise VerdictParseError("evidence step_index must be an integer")
        evidence.append(
            EvidenceRef(
                node_id=str(item["node_id"]),
                step_index=item["step_index"],
                excerpt=str(item.get("excerpt", "")),
            )
        )
    return make_verdict(criteria, feedback, evidence)


def summarize_trace(trace: ExecutionTrace, byte_budget: int = DEFAULT_TRACE_BYTE_BUDGET) -> str:
    """Deterministic trace rendering for the judge prompt.

    Final node outputs appear verbatim — they are what the score is about.
    Step detail is filled in newest-first until the byte budget runs out;
    older steps collapse into an elision marker.
    """
    if not trace.node_results:
        return "[no execution: the workflow produced no node results]"
    lines = [f"workflow {trace.workflow_id} — overall status: {trace.overall_status}"]
    for result in trace.node_results:
        lines.append(f"== node {result.node_id} [{result.status}, {len(result.steps)} steps] ==")
        lines.append(f"final output:\n{result.final_output}")
    head = "\n".join(lines)

    step_blocks: list[str] = []
    flat = [
        (result.node_id, step)
        for result in trace.node_results
        for step in result.steps
    ]
    used = 0
    shown = 0
    for node_id, step in reversed(flat):
        block = (
            f"-- step {node_id}/{step.index} --\n"
            f"model: {step.model_output}\n"
            f"result: {step.observation}"
        )
        size = len(block.encode("utf-8"))
        # The newest step always survives, even over budget: the freshest
        # content is what the judge most needs intact.
        if shown > 0 and used + size > byte_budget:
            break
        step_blocks.append(block)
        used += size
        shown += 1
    elided = len(flat) - shown
    detail: list[str] = []
    if elided > 0:
        detail.append(f"[... {elided} earlier steps elided ...]")
    detail.extend(reversed(step_blocks))
    return head + "\n\nstep detail (newest steps kept in full):\n" + "\n".join(detail)


def build_judge_prompt(
    trace: ExecutionTrace,
    task_prompt: str,
    templates: TemplateSet | None = None,
    byte_budget: int = DEFAULT_TRACE_BYTE_BUDGET,
    ground_truth: str | None = None,
) -> list[tuple[str, str]]:
    """Deterministic judge message list. Raises TemplateError when the
    template lacks one of the required placeholders."""
    templates = templates or TemplateSet.default()
    require_placeholders(templates.judge, ("task_prompt", "trace_summary", "rubric"))
    rendered = render(
        templates.judge,
        {
            "task_prompt": task_prompt,
            "trace_summary": summarize_trace(trace, byte_budget),
            "rubric": templates.rubric,
            "ground_truth": ground_truth if ground_truth is not None else "not provided",
        },
    )
    return [("system", JUDGE_SYSTEM), ("user", rendered)]


def _resolve_evidence(verdict: JudgeVerdict, trace: ExecutionTrace) -> JudgeVerdict:
    kept = []
    node_steps = {r.node_id: len(r.steps) for r in trace.node_results}
    for ref in verdict.evidence:
        if ref.node_id in node_steps and 0 <= ref.step_index < max(node_steps[ref.node_id], 1):
            kept.append(ref)
        else:
            log.warning(
                "dropping judge evidence pointing outside the trace: %s/%s",
                ref.node_id,
                ref.step_index,
            )
    if len(kept) == len(verdict.evidence):
        return verdict
    return JudgeVerdict(
        criteria=verdict.criteria,
        overall=verdict.overall,
        feedback=verdict.feedback,
        evidence=tuple(kept),
    )


def judge_trace(
    trace: ExecutionTrace,
    task_prompt: str,
    provider,
    templates: TemplateSet | None = None,
    retries: int = 2,
    byte_budget: int = DEFAULT_TRACE_BYTE_BUDGET,
    ground_truth: str | None = None,
) -> JudgeVerdict:
    """Prompt, call, parse — with retries — then a sentinel on exhaustion.

    Never raises for content reasons; only infrastructure failures (a dead
    backend) propagate. Judging is read-only with respect to the trace.
    """
    messages = build_judge_prompt(trace, task_prompt, templates, byte_budget, ground_truth)
    last_error = "no attempts made"
    for _ in range(retries + 1):
        response = provider.chat(
            ChatRequest(model_ref="judge_model", messages=tuple(messages), temperature=0.0)
        )
        try:
            verdict = parse_verdict(response.text)
        except VerdictParseError as exc:
            last_error = str(exc)
            log.warning("judge verdict parse failed, retrying: %s", exc)
            messages = messages + [
                ("assistant", response.text),
                ("user", RETRY_REMINDER.format(error=last_error)),
            ]
            continue
        return _resolve_evidence(verdict, trace)
    return sentinel_verdict(f"verdict parse failed after {retries + 1} attempts: {last_error}")
