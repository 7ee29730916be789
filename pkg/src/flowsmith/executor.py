"""Workflow execution: bounded agent loops, gates, shared state, traces.

Nodes run strictly in topological order. Each agent node is a step loop —
model call, action parse, action execution, observation — capped by the
node's step budget. Gate nodes evaluate their predicate against the shared
auxiliary state and select one successor; nodes left without a live incoming
edge are recorded as skipped.

Failures never abort a run: a node that errors contributes its error text as
its output, downstream nodes keep going, and the trace's overall status
degrades. The judge scores terminated runs too, so the trace must always be
complete.

Action grammar (what an agent's reply may contain, checked in this order):

    FINAL: <answer>            ends the node; the rest of the reply is s*_i
    CALL <tool_key> {json}     one MCP tool call per line, run sequentially
    ```...fenced code...```    run in the sandbox
    anything else              no-op; the loop continues with a hint
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from typing import Any

from .mcp.client import (
    McpClient,
    ProtocolError,
    Registry,
    SchemaError,
    ToolError,
    TransportError,
    UnknownTool,
)
from .predicates import MissingKey, evaluate_predicate
from .provider import BackendError, ChatRequest, UsageRecord, aggregate_usage
from .sandbox import SandboxPolicy, sandbox_exec
from .templates import AGENT_RULES
from .workflow import AgentSpec, GateSpec, ParseError, Workflow, topological_order

log = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_BUDGET = "step_budget_exhausted"
STATUS_ERROR = "error"
STATUS_SKIPPED = "skipped"

OVERALL_OK = "ok"
OVERALL_DEGRADED = "degraded"

DEFAULT_OBSERVATION_CAP = 65536
"""Per-step observation byte cap; keeps verbose tools from flooding context."""

TRACE_FORMAT = 1

_FINAL_RE = re.compile(r"^FINAL:[ \t]?", re.MULTILINE)
_CALL_RE = re.compile(r"^CALL[ \t]+(\S+)[ \t]+(\{.*\})[ \t]*$", re.MULTILINE)
_CODE_RE = re.compile(r"^[ \t]*```[^\n`]*\r?\n(.*?)^[ \t]*```[ \t]*$", re.DOTALL | re.MULTILINE)

NO_ACTION_HINT = (
    "no actionable content found; reply with CALL <tool_key> <json>, "
    "a fenced code block, or FINAL: <answer>"
)


class GateConfigError(Exception):
    """Gate selected a branch whose target cannot be resolved."""


class SharedState:
    """Cumulative run state: per-node final outputs (insertion order equals
    execution order, append-only) plus the auxiliary store gates read."""

    def __init__(self):
        self.outputs: dict[str, str] = {}
        self.aux: dict[str, Any] = {}

    def record_output(self, node_id: str, text: str) -> None:
        if node_id in self.outputs:
            raise ValueError(f"output for {node_id!r} already recorded")
        self.outputs[node_id] = text

    def recent_outputs(self, count: int) -> list[tuple[str, str]]:
        items = list(self.outputs.items())
        return items[-count:] if count < len(items) else items


@dataclass(frozen=True)
class StepRecord:
    """One agent step: model output s^(k), parsed action a^(k), result r^(k)."""

    index: int
    model_output: str
    action: Any  # plain dict, JSON-shaped
    observation: str
    usage: UsageRecord
    wall_time_s: float


@dataclass(frozen=True)
class NodeResult:
    node_id: str
    final_output: str
    steps: tuple[StepRecord, ...]
    status: str


@dataclass(frozen=True)
class ExecutionTrace:
    run_id: str
    workflow_id: str
    node_results: tuple[NodeResult, ...]
    overall_status: str
    total_usage: tuple[UsageRecord, ...]
    started_at: float
    ended_at: float

    def node(self, node_id: str) -> NodeResult:
        for result in self.node_results:
            if result.node_id == node_id:
                return result
        raise KeyError(node_id)


@dataclass
class ExecutionEnv:
    """Everything execute_workflow needs besides the workflow itself."""

    provider: Any
    registry: Registry
    client: McpClient | None = None
    sandbox_policy: SandboxPolicy = field(default_factory=SandboxPolicy)
    workspace: str = "."
    window_k: int = 3
    observation_cap: int = DEFAULT_OBSERVATION_CAP
    run_id: str = "run"


def _cap_text(text: str, cap_bytes: int) -> str:
    data = text.encode("utf-8")
    if len(data) <= cap_bytes:
        return text
    return data[:cap_bytes].decode("utf-8", errors="replace") + "\n[truncated]"


def parse_action(text: str) -> dict[str, Any]:
    """Classify one model reply per the action grammar (see module docstring)."""
    final = _FINAL_RE.search(text)
    if final is not None:
        return {"type": "final", "text": text[final.end():].strip()}
    calls = [
        {"tool_key": m.group(1), "args_text": m.group(2)}
        for m in _CALL_RE.finditer(text)
    ]
    if calls:
        return {"type": "tool_calls", "calls": calls}
    code = _CODE_RE.search(text)
    if code is not None:
        return {"type": "code", "code": code.group(1)}
    return {"type": "none"}


def assemble_context(shared_state: SharedState, agent: AgentSpec, window_k: int) -> list[tuple[str, str]]:
    """Agent prompt plus the newest window_k node outputs, oldest first,
    each labeled with its producing node. Context size never depends on
    outputs older than the window."""
    if window_k < 1:
        raise ValueError("window_k must be >= 1")
    messages = [("system", f"{AGENT_RULES}\n\n{agent.prompt}")]
    for node_id, text in shared_state.recent_outputs(window_k):
        messages.append(("user", f"[output from {node_id}]\n{text}"))
    return messages


def _run_tool_calls(agent: AgentSpec, calls: list[dict], env: ExecutionEnv) -> str:
    observations = []
    for call in calls:
        tool_key = call["tool_key"]
        if tool_key not in agent.tools:
            observations.append(f"[permission denied] tool {tool_key!r} is not allocated to this agent")
            continue
        if tool_key not in env.registry:
            observations.append(f"[unknown tool] {tool_key!r} is not in the registry")
            continue
        try:
            args = json.loads(call["args_text"])
        except json.JSONDecodeError as exc:
            observations.append(f"[bad arguments] {tool_key}: {exc.msg}")
            continue
        descriptor = env.registry.lookup(tool_key)
        if env.client is None:
            observations.append(f"[tool unavailable] no MCP client configured for {tool_key}")
            continue
        try:
            result = env.client.call_tool(descriptor.server, descriptor.name, args)
        except SchemaError as exc:
            observations.append(f"[arguments rejected] {tool_key}: {exc}")
        except (TransportError, ProtocolError, ToolError, UnknownTool) as exc:
            observations.append(f"[tool failed] {tool_key}: {exc}")
        else:
            marker = "[tool error]" if result.is_error else "[tool ok]"
            observations.append(f"{marker} {tool_key}: {result.text()}")
    return "\n".join(observations)


def _run_code(agent: AgentSpec, step_index: int, code: str, env: ExecutionEnv) -> str:
    result = sandbox_exec(
        code,
        env.sandbox_policy,
        workspace=env.workspace,
        tag=f"{agent.id}-step{step_index}",
    )
    parts = [f"[exit {result.exit_code}{' timeout' if result.timed_out else ''}]"]
    if result.stdout:
        parts.append("stdout:\n" + result.stdout + ("\n[stdout truncated]" if result.stdout_truncated else ""))
    if result.stderr:
        parts.append("stderr:\n" + result.stderr + ("\n[stderr truncated]" if result.stderr_truncated else ""))
    return "\n".join(parts)


def run_agent(
    agent: AgentSpec,
    context: list[tuple[str, str]],
    env: ExecutionEnv,
) -> tuple[str, tuple[StepRecord, ...], str]:
    """Bounded step loop for one agent node.

    Returns (final_output, steps, status). Failures are encoded in the
    status, never raised: the trace must stay scoreable.
    """
    messages = list(context)
    steps: list[StepRecord] = []
    zero_usage = UsageRecord(0, 0, agent.model_ref, estimated=True)

    for index in range(agent.step_budget):
        started = time.monotonic()
        try:
            response = env.provider.chat(
                ChatRequest(model_ref=agent.model_ref, messages=tuple(messages))
            )
        except BackendError as exc:
            observation = f"[model backend error] {exc}"
            steps.append(
                StepRecord(
                    index=index,
                    model_output="",
                    action={"type": "error"},
                    observation=observation,
                    usage=zero_usage,
                    wall_time_s=time.monotonic() - started,
                )
            )
            return observation, tuple(steps), STATUS_ERROR

        action = parse_action(response.text)
        if action["type"] == "final":
            steps.append(
                StepRecord(
                    index=index,
                    model_output=response.text,
                    action=action,
                    observation="final answer",
                    usage=response.usage,
                    wall_time_s=time.monotonic() - started,
                )
            )
            return action["text"], tuple(steps), STATUS_OK

        if action["type"] == "tool_calls":
            observation = _run_tool_calls(agent, action["calls"], env)
        elif action["type"] == "code":
            observation = _run_code(agent, index, action["code"], env)
        else:
            observation = NO_ACTION_HINT
        observation = _cap_text(observation, env.observation_cap)
        steps.append(
            StepRecord(
                index=index,
                model_output=response.text,
                action=action,
                observation=observation,
                usage=response.usage,
                wall_time_s=time.monotonic() - started,
            )
        )
        messages.append(("assistant", response.text))
        messages.append(("user", observation))

    # Budget exhausted without a final answer: the last observation is the
    # best available stand-in for a final output.
    return steps[-1].observation, tuple(steps), STATUS_BUDGET


def _eval_gate_detail(gate: GateSpec, shared_state: SharedState) -> tuple[str, str, str]:
    try:
        value = evaluate_predicate(gate.predicate, shared_state.aux)
    except MissingKey as exc:
        outcome = "default"
        note = f"missing state key {exc.key!r}; default branch taken"
    else:
        outcome = "true" if value else "false"
        note = ""
    if outcome == "default":
        target = gate.branch_map.get("default", gate.branch_map.get("false"))
    else:
        target = gate.branch_map.get(outcome)
    if target is None:
        raise GateConfigError(f"gate {gate.id!r} has no branch for outcome {outcome!r}")
    return target, outcome, note


def eval_gate(gate: GateSpec, shared_state: SharedState) -> str:
    """Deterministic branch selection; missing keys take the default branch."""
    target, _, _ = _eval_gate_detail(gate, shared_state)
    return target


def execute_workflow(
    workflow: Workflow,
    env: ExecutionEnv,
    trace_path: str | None = None,
) -> ExecutionTrace:
    """Run every reachable node in topological order and record everything.

    A gate keeps exactly one outgoing edge live; nodes with predecessors but
    no live incoming edge are marked skipped. Node errors degrade the trace's
    overall status but never stop the run.
    """
    order = topological_order(workflow)
    state = SharedState()
    started_at = time.time()
    results: list[NodeResult] = []
    skipped: set[str] = set()
    gate_choice: dict[str, str] = {}

    def edge_live(pred: str, child: str) -> bool:
        if pred in skipped:
            return False
        if pred in gate_choice and gate_choice[pred] != child:
            return False
        return True

    def flush(overall: str, ended: float) -> ExecutionTrace:
        usage = aggregate_usage(u for r in results for s in r.steps for u in [s.usage])
        trace = ExecutionTrace(
            run_id=env.run_id,
            workflow_id=workflow.id,
            node_results=tuple(results),
            overall_status=overall,
            total_usage=usage,
            started_at=started_at,
            ended_at=ended,
        )
        if trace_path:
            save_trace(trace, trace_path)
        return trace

    degraded = False
    for node_id in order:
        node = workflow.node(node_id)
        preds = workflow.predecessors(node_id)
        if preds and not any(edge_live(p, node_id) for p in preds):
            skipped.add(node_id)
            state.aux[f"{node_id}.status"] = STATUS_SKIPPED
            results.append(NodeResult(node_id=node_id, final_output="", steps=(), status=STATUS_SKIPPED))
            flush(OVERALL_DEGRADED if degraded else OVERALL_OK, time.time())
            continue

        if isinstance(node, GateSpec):
            target, outcome, note = _eval_gate_detail(node, state)
            gate_choice[node_id] = target
            summary = f"[gate] {outcome} -> {target}" + (f" ({note})" if note else "")
            state.aux["status"] = STATUS_OK
            state.aux[f"{node_id}.status"] = STATUS_OK
            results.append(NodeResult(node_id=node_id, final_output=summary, steps=(), status=STATUS_OK))
        else:
            context = assemble_context(state, node, env.window_k)
            final_output, steps, status = run_agent(node, context, env)
            # The trace keeps the full output; what flows into downstream
            # context is capped, keeping context size bounded by
            # window_k * observation_cap regardless of node behavior.
            shared_view = _cap_text(final_output, env.observation_cap)
            state.record_output(node_id, shared_view)
            state.aux["status"] = status
            state.aux[f"{node_id}.status"] = status
            state.aux[f"{node_id}.output"] = shared_view
            results.append(
                NodeResult(node_id=node_id, final_output=final_output, steps=steps, status=status)
            )
            if status in (STATUS_ERROR, STATUS_BUDGET):
                degraded = True
        flush(OVERALL_DEGRADED if degraded else OVERALL_OK, time.time())

    return flush(OVERALL_DEGRADED if degraded else OVERALL_OK, time.time())


# Trace (de)serialization ------------------------------------------------------


def _usage_to_dict(usage: UsageRecord) -> dict[str, Any]:
    return {
        "input_tokens": usage.input_tokens,
        "output_tokens": usage.output_tokens,
        "model_ref": usage.model_ref,
        "estimated": usage.estimated,
    }


def _usage_from_dict(raw: dict[str, Any]) -> UsageRecord:
    return UsageRecord(
        input_tokens=int(raw["input_tokens"]),
        output_tokens=int(raw["output_tokens"]),
        model_ref=str(raw["model_ref"]),
        estimated=bool(raw.get("estimated", False)),
    )


def trace_to_dict(trace: ExecutionTrace) -> dict[str, Any]:
    return {
        "format": TRACE_FORMAT,
        "run_id": trace.run_id,
        "workflow_id": trace.workflow_id,
        "overall_status": trace.overall_status,
        "started_at": trace.started_at,
        "ended_at": trace.ended_at,
        "total_usage": [_usage_to_dict(u) for u in trace.total_usage],
        "node_results": [
            {
                "node_id": r.node_id,
                "final_output": r.final_output,
                "status": r.status,
                "steps": [
                    {
                        "index": s.index,
                        "model_output": s.model_output,
                        "action": s.action,
                        "observation": s.observation,
                        "usage": _usage_to_dict(s.usage),
                        "wall_time_s": s.wall_time_s,
                    }
                    for s in r.steps
                ],
            }
            for r in trace.node_results
        ],
    }


def trace_from_dict(raw: dict[str, Any]) -> ExecutionTrace:
    try:
        node_results = tuple(
            NodeResult(
                node_id=str(r["node_id"]),
                final_output=str(r["final_output"]),
                status=str(r["status"]),
                steps=tuple(
                    StepRecord(
                        index=int(s["index"]),
                        model_output=str(s["model_output"]),
                        action=s["action"],
                        observation=str(s["observation"]),
                        usage=_usage_from_dict(s["usage"]),
                        wall_time_s=float(s["wall_time_s"]),
                    )
                    for s in r["steps"]
                ),
            )
            for r in raw["node_results"]
        )
        return ExecutionTrace(
            run_id=str(raw["run_id"]),
            workflow_id=str(raw["workflow_id"]),
            node_results=node_results,
            overall_status=str(raw["overall_status"]),
            total_usage=tuple(_usage_from_dict(u) for u in raw["total_usage"]),
            started_at=float(raw["started_at"]),
            ended_at=float(raw["ended_at"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed trace document: {exc!r}") from exc


def save_trace(trace: ExecutionTrace, path: str) -> None:
    payload = json.dumps(trace_to_dict(trace), indent=2, sort_keys=True, ensure_ascii=False)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "w", encoding="utf-8") as fh:
        fh.write(payload + "\n")
    os.replace(tmp_path, path)


def load_trace(path: str) -> ExecutionTrace:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid trace JSON: {exc.msg}", exc.pos) from exc
    if not isinstance(raw, dict):
        raise ParseError("trace document must be an object")
    return trace_from_dict(raw)
