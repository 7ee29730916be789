"""Meta-orchestration: synthesize a workflow, evolve it, drive run modes.

The evolution loop is single-incumbent local search. Iteration 0 executes and
judges the initial workflow (retrieved-and-adapted from the archive when a
semantically similar task exists, synthesized de novo otherwise). Each
refinement iteration asks the model for exactly one edit, applies it, runs
and judges the candidate, and accepts it only on strict improvement. The
search stops when the incumbent's score exceeds the early-stop threshold or
the iteration cap is reached. Every evaluated candidate lands in the archive.

Evolution logs carry no timestamps or filesystem paths: identical scripted
runs serialize to identical bytes, which is what makes replay testable.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any

from .archive import Archive, put_entry
from .blocks import BlockError, parse_json_block
from .executor import ExecutionEnv, ExecutionTrace, execute_workflow
from .judge import JudgeVerdict, judge_trace
from .mcp.client import McpClient, Registry
from .mutations import (
    ADD_NODE,
    EDIT_KINDS,
    PROMPT_REFINE,
    REMOVE_NODE,
    MutationEdit,
    apply_mutation,
    diff,
)
from .provider import ChatRequest, EmbeddingVector
from .sandbox import SandboxPolicy
from .templates import TemplateSet, render
from .workflow import (
    AgentSpec,
    GateSpec,
    InvalidEdit,
    NodeSpec,
    Workflow,
    WouldCreateCycle,
    validate,
    workflow_to_dict,
)

log = logging.getLogger(__name__)

MODES = ("single_agent", "one_shot", "iterative")

ORIGIN_RETRIEVED = "retrieved_mutated"
ORIGIN_DE_NOVO = "de_novo"
ORIGIN_FIXED = "single_agent"

REASON_THRESHOLD = "threshold"
REASON_CAP = "iteration_cap"
REASON_ONE_SHOT = "one_shot"


class SynthesisError(Exception):
    """Provider could not produce a usable workflow within the retry budget."""


class MutationExhausted(Exception):
    """Every proposed edit was invalid; the incumbent stays as is."""


class PlanParseError(Exception):
    """Planner output unusable after retries."""


class PlanEmptyError(Exception):
    """Planner produced zero tasks."""


@dataclass(frozen=True)
class Task:
    id: str
    prompt: str
    mode: str = "iterative"
    workspace: str = ""

    def __post_init__(self):
        if not self.prompt.strip():
            raise ValueError("task prompt is empty")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class RunConfig:
    max_iterations: int = 10
    early_stop_threshold: float = 0.9
    epsilon: float = 0.7
    window_k: int = 3
    step_budget_multi: int = 64
    step_budget_single: int = 256
    mutation_retries: int = 3
    judge_retries: int = 2
    observation_cap: int = 65536
    trace_byte_budget: int = 16384

    def __post_init__(self):
        if not 0 < self.early_stop_threshold <= 1:
            raise ValueError("early_stop_threshold must be in (0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must be in [0, 1]")
        if self.window_k < 1:
            raise ValueError("window_k must be >= 1")


@dataclass
class RunDeps:
    """Shared services for one task run."""

    provider: Any
    registry: Registry
    archive: Archive
    client: McpClient | None = None
    templates: TemplateSet = field(default_factory=TemplateSet.default)
    sandbox_policy: SandboxPolicy = field(default_factory=SandboxPolicy)
    run_id: str = "run"


@dataclass(frozen=True)
class IncumbentState:
    workflow: Workflow
    verdict: JudgeVerdict
    iteration_found: int


@dataclass(frozen=True)
class EvolutionResult:
    incumbent: IncumbentState
    records: tuple[dict, ...]
    archive_record_ids: tuple[str, ...]
    log_path: str | None


class EvolutionLog:
    """Ordered JSONL records for one run. No timestamps, no paths: two runs
    with identical inputs must serialize to identical bytes."""

    def __init__(self):
        self.records: list[dict] = []

    def add(self, record: dict) -> None:
        self.records.append(record)

    def lines(self) -> list[str]:
        return [json.dumps(r, sort_keys=True, ensure_ascii=False) for r in self.records]

    def dump(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.lines():
                fh.write(line + "\n")


def _verdict_record(verdict: JudgeVerdict) -> dict:
    return {
        "g": verdict.criteria.g,
        "c": verdict.criteria.c,
        "q": verdict.criteria.q,
        "a": verdict.criteria.a,
        "overall": verdict.overall,
        "feedback": verdict.feedback,
    }


def _usage_records(trace: ExecutionTrace) -> list[dict]:
    return [
        {
            "model_ref": u.model_ref,
            "input_tokens": u.input_tokens,
            "output_tokens": u.output_tokens,
            "estimated": u.estimated,
        }
        for u in trace.total_usage
    ]


def tool_listing(registry: Registry) -> str:
    if not len(registry):
        return "(no tools discovered)"
    lines = []
    for key in registry.keys():
        descriptor = registry.lookup(key)
        lines.append(f"- {key}: {descriptor.description}" if descriptor.description else f"- {key}")
    return "\n".join(lines)


def _env_for(task: Task, config: RunConfig, deps: RunDeps) -> ExecutionEnv:
    return ExecutionEnv(
        provider=deps.provider,
        registry=deps.registry,
        client=deps.client,
        sandbox_policy=deps.sandbox_policy,
        workspace=task.workspace,
        window_k=config.window_k,
        observation_cap=config.observation_cap,
        run_id=deps.run_id,
    )


def _chat(deps: RunDeps, messages: list[tuple[str, str]]) -> str:
    response = deps.provider.chat(
        ChatRequest(model_ref="orchestrator_model", messages=tuple(messages), temperature=0.0)
    )
    return response.text


# -- goal planning ---------------------------------------------------------------


def plan_goal(goal_prompt: str, provider, templates: TemplateSet | None = None, retries: int = 2) -> list[Task]:
    """Goal mode only: decompose a high-level goal into an ordered task list.
    Task mode never calls this — single tasks go straight to execution."""
    templates = templates or TemplateSet.default()
    messages: list[tuple[str, str]] = [("user", render(templates.planning, {"goal_prompt": goal_prompt}))]
    last_error = "no attempts made"
    for _ in range(retries + 1):
        response = provider.chat(
            ChatRequest(model_ref="orchestrator_model", messages=tuple(messages), temperature=0.0)
        )
        try:
            payload = parse_json_block(response.text, "tasks")
            raw_tasks = payload.get("tasks")
            if not isinstance(raw_tasks, list):
                raise BlockError("```tasks block needs a tasks array", reason="shape")
            tasks = []
            for i, raw in enumerate(raw_tasks):
                if not isinstance(raw, dict) or not str(raw.get("prompt", "")).strip():
                    raise BlockError(f"task entry {i} lacks a prompt", reason="shape")
                tasks.append(Task(id=str(raw.get("id") or f"task-{i + 1}"), prompt=str(raw["prompt"])))
        except BlockError as exc:
            last_error = str(exc)
            messages = messages + [
                ("assistant", response.text),
                ("user", f"Problem: {last_error}. Resend the full ```tasks block."),
            ]
            continue
        if not tasks:
            raise PlanEmptyError("planner produced zero tasks")
        return tasks
    raise PlanParseError(f"planner output unusable after {retries + 1} attempts: {last_error}")


# -- workflow synthesis -----------------------------------------------------------


class _Rejection(Exception):
    """Internal: proposal unusable for a stated reason; retry with feedback."""


def _node_from_payload(raw: dict, config: RunConfig) -> NodeSpec:
    if not isinstance(raw, dict) or not str(raw.get("id", "")).strip():
        raise _Rejection(f"node entry {raw!r} lacks an id")
    kind = raw.get("kind", "agent")
    node_id = str(raw["id"])
    if kind == "agent":
        prompt = str(raw.get("prompt", ""))
        if not prompt.strip():
            raise _Rejection(f"agent {node_id!r} lacks a prompt")
        tools = raw.get("tools", [])
        if not isinstance(tools, list):
            raise _Rejection(f"agent {node_id!r} tools must be a list")
        budget_raw = raw.get("step_budget", config.step_budget_multi)
        if isinstance(budget_raw, bool) or not isinstance(budget_raw, int):
            raise _Rejection(f"agent {node_id!r} step_budget must be an integer")
        return AgentSpec(
            id=node_id,
            prompt=prompt,
            tools=frozenset(str(t) for t in tools),
            model_ref=str(raw.get("model_ref", "agent_model")),
            step_budget=budget_raw,
        )
    if kind == "gate":
        predicate = str(raw.get("predicate", ""))
        branch_map = raw.get("branch_map")
        if not predicate.strip() or not isinstance(branch_map, dict):
            raise _Rejection(f"gate {node_id!r} needs predicate and branch_map")
        return GateSpec(id=node_id, predicate=predicate, branch_map=branch_map)
    raise _Rejection(f"node {node_id!r} has unknown kind {kind!r}")


def _edges_from_payload(raw, what: str) -> list[tuple[str, str]]:
    if not isinstance(raw, list):
        raise _Rejection(f"{what} must be a list of [from, to] pairs")
    edges = []
    for pair in raw:
        if not isinstance(pair, list) or len(pair) != 2:
            raise _Rejection(f"{what} entry {pair!r} is not a [from, to] pair")
        edges.append((str(pair[0]), str(pair[1])))
    return edges


def _check_tools_resolve(workflow: Workflow, registry: Registry) -> None:
    unknown = sorted(
        {
            key
            for node in workflow.nodes
            if isinstance(node, AgentSpec)
            for key in node.tools
            if key not in registry
        }
    )
    if unknown:
        raise _Rejection(f"unknown tool keys: {', '.join(unknown)}")


def _workflow_from_payload(payload: dict, task_prompt: str, config: RunConfig, registry: Registry) -> Workflow:
    raw_nodes = payload.get("nodes")
    if not isinstance(raw_nodes, list) or not raw_nodes:
        raise _Rejection("```workflow block needs a nonempty nodes array")
    nodes = [_node_from_payload(raw, config) for raw in raw_nodes]
    edges = _edges_from_payload(payload.get("edges", []), "edges")
    workflow = Workflow.create(task_prompt=task_prompt, nodes=nodes, edges=edges, version=1)
    report = validate(workflow)
    if not report.ok:
        raise _Rejection("; ".join(v.detail for v in report.violations))
    _check_tools_resolve(workflow, registry)
    return workflow


def _synthesize(task: Task, deps: RunDeps, config: RunConfig) -> Workflow:
    messages: list[tuple[str, str]] = [
        (
            "user",
            render(
                deps.templates.workflow_generation,
                {"task_prompt": task.prompt, "tool_listing": tool_listing(deps.registry)},
            ),
        )
    ]
    last_error = "no attempts made"
    for _ in range(config.mutation_retries + 1):
        response_text = _chat(deps, messages)
        try:
            payload = parse_json_block(response_text, "workflow")
            return _workflow_from_payload(payload, task.prompt, config, deps.registry)
        except (BlockError, _Rejection) as exc:
            last_error = str(exc)
            log.warning("workflow synthesis attempt rejected: %s", last_error)
            messages = messages + [
                ("assistant", response_text),
                ("user", f"Problem: {last_error}. Fix it and resend the full ```workflow block."),
            ]
    raise SynthesisError(f"workflow synthesis failed: {last_error}")


# -- mutation proposals ------------------------------------------------------------


def _edit_from_payload(payload: dict, config: RunConfig) -> MutationEdit:
    kind = payload.get("kind")
    if kind not in EDIT_KINDS:
        raise InvalidEdit(f"unknown edit kind {kind!r}")
    try:
        if kind == PROMPT_REFINE:
            return MutationEdit.prompt_refine(
                target=str(payload["target"]), new_prompt=str(payload["new_prompt"])
            )
        if kind == ADD_NODE:
            node_raw = payload.get("node")
            if not isinstance(node_raw, dict):
                raise InvalidEdit("add_node needs a node object")
            try:
                node = _node_from_payload(node_raw, config)
            except _Rejection as exc:
                raise InvalidEdit(str(exc)) from exc
            return MutationEdit.add_node(
                node=node,
                before=[str(x) for x in payload.get("attach_before", [])],
                after=[str(x) for x in payload.get("attach_after", [])],
            )
        if kind == REMOVE_NODE:
            return MutationEdit.remove_node(target=str(payload["target"]))
        try:
            add = _edges_from_payload(payload.get("add_edges", []), "add_edges")
            remove = _edges_from_payload(payload.get("remove_edges", []), "remove_edges")
        except _Rejection as exc:
            raise InvalidEdit(str(exc)) from exc
        return MutationEdit.rewire_edges(add=add, remove=remove)
    except KeyError as exc:
        raise InvalidEdit(f"{kind} edit missing field {exc}") from exc


def _propose_edit(
    workflow: Workflow,
    feedback: str,
    deps: RunDeps,
    config: RunConfig,
) -> MutationEdit:
    workflow_json = json.dumps(workflow_to_dict(workflow), indent=2, sort_keys=True, ensure_ascii=False)
    messages: list[tuple[str, str]] = [
        (
            "user",
            render(
                deps.templates.workflow_improvement,
                {
                    "task_prompt": workflow.task_prompt,
                    "workflow_json": workflow_json,
                    "verdict_feedback": feedback,
                    "tool_listing": tool_listing(deps.registry),
                },
            ),
        )
    ]
    last_error = "no attempts made"
    for _ in range(config.mutation_retries + 1):
        response_text = _chat(deps, messages)
        try:
            payload = parse_json_block(response_text, "mutation")
            edit = _edit_from_payload(payload, config)
            candidate = apply_mutation(workflow, edit)
            _check_tools_resolve(candidate, deps.registry)
            delta = diff(workflow, candidate)
            if delta.edit_class_count != 1:
                raise InvalidEdit(
                    f"proposal changes {delta.edit_class_count} things; exactly one edit is allowed"
                )
        except (BlockError, InvalidEdit, WouldCreateCycle, _Rejection) as exc:
            last_error = str(exc)
            log.warning("mutation proposal rejected: %s", last_error)
            messages = messages + [
                ("assistant", response_text),
                ("user", f"Problem: {last_error}. Propose ONE corrected edit in a ```mutation block."),
            ]
            continue
        return edit
    raise MutationExhausted(f"no valid edit after {config.mutation_retries + 1} attempts: {last_error}")


def propose_mutation(
    incumbent: Workflow,
    verdict: JudgeVerdict,
    deps: RunDeps,
    config: RunConfig,
) -> MutationEdit:
    """One validated single-edit proposal derived from judge feedback."""
    feedback = (
        f"scores: g={verdict.criteria.g} c={verdict.criteria.c} "
        f"q={verdict.criteria.q} a={verdict.criteria.a} overall={verdict.overall}\n"
        f"{verdict.feedback}"
    )
    return _propose_edit(incumbent, feedback, deps, config)


# -- initialization ----------------------------------------------------------------


def _adapt_retrieved(base: Workflow, task: Task, similarity: float, deps: RunDeps, config: RunConfig) -> Workflow:
    working = Workflow.create(
        task_prompt=task.prompt,
        nodes=base.nodes,
        edges=base.edges,
        parent_id=base.id,
        version=base.version,
    )
    feedback = (
        f"this workflow was retrieved from the archive for a similar prior task "
        f"(similarity {similarity:.3f}); propose the one edit that best adapts it "
        f"to the task above"
    )
    try:
        edit = _propose_edit(working, feedback, deps, config)
    except MutationExhausted as exc:
        raise SynthesisError(f"could not adapt retrieved workflow: {exc}") from exc
    mutated = apply_mutation(working, edit)
    # Re-anchor lineage on the archived ancestor; the working copy is internal.
    return Workflow.create(
        task_prompt=task.prompt,
        nodes=mutated.nodes,
        edges=mutated.edges,
        parent_id=base.id,
        version=base.version + 1,
    )


def initialize_workflow(
    task: Task,
    deps: RunDeps,
    config: RunConfig,
    task_embedding: EmbeddingVector | None = None,
) -> tuple[Workflow, str]:
    """Archive hit: retrieved workflow adapted by exactly one edit.
    Archive miss: one-shot synthesis from the generation template."""
    embedding = task_embedding if task_embedding is not None else deps.provider.embed(task.prompt)
    retrieval = deps.archive.retrieve(embedding, config.epsilon)
    if retrieval.entry is not None:
        adapted = _adapt_retrieved(retrieval.entry.workflow, task, retrieval.similarity, deps, config)
        return adapted, ORIGIN_RETRIEVED
    return _synthesize(task, deps, config), ORIGIN_DE_NOVO


# -- run modes ----------------------------------------------------------------------


def _evaluate(
    workflow: Workflow,
    task: Task,
    config: RunConfig,
    deps: RunDeps,
    trace_path: str | None,
) -> tuple[ExecutionTrace, JudgeVerdict]:
    trace = execute_workflow(workflow, _env_for(task, config, deps), trace_path=trace_path)
    verdict = judge_trace(
        trace,
        task.prompt,
        deps.provider,
        deps.templates,
        retries=config.judge_retries,
        byte_budget=config.trace_byte_budget,
    )
    return trace, verdict


def _header(task: Task, mode: str, config: RunConfig, deps: RunDeps, origin: str, initial_id: str) -> dict:
    return {
        "record": "header",
        "run_id": deps.run_id,
        "task_id": task.id,
        "mode": mode,
        "origin": origin,
        "initial_workflow_id": initial_id,
        "config": {
            "max_iterations": config.max_iterations,
            "early_stop_threshold": config.early_stop_threshold,
            "epsilon": config.epsilon,
            "window_k": config.window_k,
            "step_budget_multi": config.step_budget_multi,
            "step_budget_single": config.step_budget_single,
            "mutation_retries": config.mutation_retries,
            "judge_retries": config.judge_retries,
        },
        "models": dict(getattr(deps.provider, "model_bindings", {}) or {}),
    }


def evolve(task: Task, config: RunConfig, deps: RunDeps, log_path: str | None = None) -> EvolutionResult:
    """Single-incumbent refinement until the threshold is beaten or the
    iteration cap is hit. Every evaluated candidate is archived."""
    os.makedirs(task.workspace or ".", exist_ok=True)
    workspace = task.workspace or "."
    embedding = deps.provider.embed(task.prompt)
    initial, origin = initialize_workflow(task, deps, config, task_embedding=embedding)

    logbook = EvolutionLog()
    logbook.add(_header(task, "iterative", config, deps, origin, initial.id))
    archive_ids: list[str] = []

    trace, verdict = _evaluate(
        initial, task, config, deps, os.path.join(workspace, f"{deps.run_id}-iter0-trace.json")
    )
    archive_ids.append(
        put_entry(deps.archive, initial, task.prompt, embedding, verdict.overall, deps.run_id)
    )
    incumbent = IncumbentState(workflow=initial, verdict=verdict, iteration_found=0)
    logbook.add(
        {
            "record": "iteration",
            "iteration": 0,
            "candidate_workflow_id": initial.id,
            "mutation": None,
            "verdict": _verdict_record(verdict),
            "accepted": True,
            "incumbent_before": None,
            "incumbent_after": verdict.overall,
            "usage": _usage_records(trace),
        }
    )

    iterations_run = 0
    reason = REASON_CAP
    if incumbent.verdict.overall > config.early_stop_threshold:
        reason = REASON_THRESHOLD
    else:
        for iteration in range(1, config.max_iterations + 1):
            iterations_run = iteration
            before = incumbent.verdict.overall
            try:
                edit = propose_mutation(incumbent.workflow, incumbent.verdict, deps, config)
            except MutationExhausted as exc:
                log.warning("iteration %d: %s", iteration, exc)
                logbook.add(
                    {
                        "record": "iteration",
                        "iteration": iteration,
                        "candidate_workflow_id": None,
                        "mutation": None,
                        "mutation_error": str(exc),
                        "verdict": None,
                        "accepted": False,
                        "incumbent_before": before,
                        "incumbent_after": before,
                        "usage": [],
                    }
                )
                continue
            candidate = apply_mutation(incumbent.workflow, edit)
            trace, verdict = _evaluate(
                candidate,
                task,
                config,
                deps,
                os.path.join(workspace, f"{deps.run_id}-iter{iteration}-trace.json"),
            )
            archive_ids.append(
                put_entry(deps.archive, candidate, task.prompt, embedding, verdict.overall, deps.run_id)
            )
            accepted = verdict.overall > before
            if accepted:
                incumbent = IncumbentState(workflow=candidate, verdict=verdict, iteration_found=iteration)
            logbook.add(
                {
                    "record": "iteration",
                    "iteration": iteration,
                    "candidate_workflow_id": candidate.id,
                    "mutation": edit.summary(),
                    "verdict": _verdict_record(verdict),
                    "accepted": accepted,
                    "incumbent_before": before,
                    "incumbent_after": incumbent.verdict.overall,
                    "usage": _usage_records(trace),
                }
            )
            if incumbent.verdict.overall > config.early_stop_threshold:
                reason = REASON_THRESHOLD
                break

    logbook.add(
        {
            "record": "terminal",
            "reason": reason,
            "iterations": iterations_run,
            "incumbent_workflow_id": incumbent.workflow.id,
            "incumbent_overall": incumbent.verdict.overall,
            "incumbent_found_at": incumbent.iteration_found,
        }
    )
    if log_path:
        logbook.dump(log_path)
    return EvolutionResult(
        incumbent=incumbent,
        records=tuple(logbook.records),
        archive_record_ids=tuple(archive_ids),
        log_path=log_path,
    )


def run_one_shot(
    task: Task,
    config: RunConfig,
    deps: RunDeps,
    log_path: str | None = None,
) -> tuple[ExecutionTrace, JudgeVerdict]:
    """Generate once, execute once, judge once, archive once. No refinement."""
    os.makedirs(task.workspace or ".", exist_ok=True)
    workspace = task.workspace or "."
    embedding = deps.provider.embed(task.prompt)
    workflow, origin = initialize_workflow(task, deps, config, task_embedding=embedding)
    trace, verdict = _evaluate(
        workflow, task, config, deps, os.path.join(workspace, f"{deps.run_id}-trace.json")
    )
    put_entry(deps.archive, workflow, task.prompt, embedding, verdict.overall, deps.run_id)
    logbook = EvolutionLog()
    logbook.add(_header(task, "one_shot", config, deps, origin, workflow.id))
    logbook.add(
        {
            "record": "iteration",
            "iteration": 0,
            "candidate_workflow_id": workflow.id,
            "mutation": None,
            "verdict": _verdict_record(verdict),
            "accepted": True,
            "incumbent_before": None,
            "incumbent_after": verdict.overall,
            "usage": _usage_records(trace),
        }
    )
    logbook.add(
        {
            "record": "terminal",
            "reason": REASON_ONE_SHOT,
            "iterations": 0,
            "incumbent_workflow_id": workflow.id,
            "incumbent_overall": verdict.overall,
            "incumbent_found_at": 0,
        }
    )
    if log_path:
        logbook.dump(log_path)
    return trace, verdict


def run_single_agent(
    task: Task,
    config: RunConfig,
    deps: RunDeps,
    log_path: str | None = None,
) -> tuple[ExecutionTrace, JudgeVerdict]:
    """One standalone agent holding the full tool set and the large budget."""
    os.makedirs(task.workspace or ".", exist_ok=True)
    workspace = task.workspace or "."
    embedding = deps.provider.embed(task.prompt)
    solo = AgentSpec(
        id="solo",
        prompt=render(deps.templates.single_agent, {"task_prompt": task.prompt}),
        tools=frozenset(deps.registry.keys()),
        model_ref="agent_model",
        step_budget=config.step_budget_single,
    )
    workflow = Workflow.create(task_prompt=task.prompt, nodes=[solo], edges=[])
    trace, verdict = _evaluate(
        workflow, task, config, deps, os.path.join(workspace, f"{deps.run_id}-trace.json")
    )
    put_entry(deps.archive, workflow, task.prompt, embedding, verdict.overall, deps.run_id)
    logbook = EvolutionLog()
    logbook.add(_header(task, "single_agent", config, deps, ORIGIN_FIXED, workflow.id))
    logbook.add(
        {
            "record": "iteration",
            "iteration": 0,
            "candidate_workflow_id": workflow.id,
            "mutation": None,
            "verdict": _verdict_record(verdict),
            "accepted": True,
            "incumbent_before": None,
            "incumbent_after": verdict.overall,
            "usage": _usage_records(trace),
        }
    )
    logbook.add(
        {
            "record": "terminal",
            "reason": REASON_ONE_SHOT,
            "iterations": 0,
            "incumbent_workflow_id": workflow.id,
            "incumbent_overall": verdict.overall,
            "incumbent_found_at": 0,
        }
    )
    if log_path:
        logbook.dump(log_path)
    return trace, verdict
