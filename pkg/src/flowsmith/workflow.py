"""Workflow graphs: immutable DAGs of agent and gate nodes.

A workflow is the unit the engine evolves. Nodes are either agents (a prompt,
a tool allocation, a model reference, a step budget) or gates (a deterministic
predicate routing execution to one successor). Edges order execution; the
graph must be acyclic.

All values here are immutable after construction; operations are pure and
return new workflows. Serialization is byte-deterministic: nodes sorted by
id, edges lexicographic, canonical key order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Union

from .predicates import PredicateError, referenced_keys

NodeId = str

GATE_OUTCOMES = ("true", "false", "default")
"""Valid branch_map keys; "default" is taken when a predicate key is absent."""

SERIAL_VERSION = 1
"""Format marker embedded in serialized workflow documents."""


class CycleError(Exception):
    """Topological order requested for a graph that is not a valid DAG."""


class InvalidEdit(Exception):
    """Mutation edit malformed or targeting nonexistent graph elements."""


class WouldCreateCycle(Exception):
    """Mutation rejected: the resulting graph would not be acyclic."""


class ParseError(ValueError):
    """Serialized workflow bytes are malformed; offset is the byte position."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class AgentSpec:
    """One agent node: prompt, tool allocation, model reference, step budget."""

    id: NodeId
    prompt: str
    tools: frozenset[str] = frozenset()
    model_ref: str = "agent_model"
    step_budget: int = 64

    def __post_init__(self):
        object.__setattr__(self, "tools", frozenset(self.tools))


@dataclass(frozen=True)
class GateSpec:
    """One gate node: a predicate selecting exactly one successor branch."""

    id: NodeId
    predicate: str
    branch_map: Any  # mapping outcome ("true"/"false"/"default") -> NodeId

    def __post_init__(self):
        object.__setattr__(self, "branch_map", MappingProxyType(dict(self.branch_map)))

    def __hash__(self):  # branch_map proxies are unhashable; identity by fields
        return hash((self.id, self.predicate, tuple(sorted(self.branch_map.items()))))


NodeSpec = Union[AgentSpec, GateSpec]


@dataclass(frozen=True)
class Workflow:
    """An immutable DAG of nodes with lineage metadata."""

    id: str
    task_prompt: str
    nodes: tuple[NodeSpec, ...]
    edges: frozenset[tuple[NodeId, NodeId]]
    parent_id: str | None = None
    version: int = 1

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes, key=lambda n: n.id)))
        object.__setattr__(self, "edges", frozenset(tuple(e) for e in self.edges))

    @classmethod
    def create(
        cls,
        task_prompt: str,
        nodes,
        edges,
        parent_id: str | None = None,
        version: int = 1,
    ) -> "Workflow":
        """Build a workflow with a content-derived id."""
        nodes = tuple(sorted(nodes, key=lambda n: n.id))
        edges = frozenset(tuple(e) for e in edges)
        wf_id = _content_id(task_prompt, nodes, edges, version)
        return cls(
            id=wf_id,
            task_prompt=task_prompt,
            nodes=nodes,
            edges=edges,
            parent_id=parent_id,
            version=version,
        )

    @property
    def node_ids(self) -> tuple[NodeId, ...]:
        return tuple(n.id for n in self.nodes)

    def node(self, node_id: NodeId) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def has_node(self, node_id: NodeId) -> bool:
        return any(n.id == node_id for n in self.nodes)

    def successors(self, node_id: NodeId) -> tuple[NodeId, ...]:
        return tuple(sorted(v for (u, v) in self.edges if u == node_id))

    def predecessors(self, node_id: NodeId) -> tuple[NodeId, ...]:
        return tuple(sorted(u for (u, v) in self.edges if v == node_id))


def _content_id(task_prompt: str, nodes, edges, version: int) -> str:
    payload = json.dumps(
        {
            "task_prompt": task_prompt,
            "nodes": [_node_to_dict(n) for n in nodes],
            "edges": sorted([u, v] for (u, v) in edges),
            "version": version,
        },
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    )
    digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()
    return f"wf-{digest[:12]}-v{version}"


# Validation ------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    """One invariant failure found by validate()."""

    code: str
    detail: str
    node_id: NodeId | None = None


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> tuple[str, ...]:
        return tuple(v.code for v in self.violations)


def gate_state_vocabulary(workflow: Workflow) -> frozenset[str]:
    """State keys a gate predicate may reference.

    The executor maintains, after each visited node: "status" (most recent
    node's status), "<node>.status", and "<node>.output" for agent nodes.
    """
    keys = {"status"}
    for nid in workflow.node_ids:
        keys.add(f"{nid}.status")
        keys.add(f"{nid}.output")
    return frozenset(keys)


def validate(workflow: Workflow) -> ValidationReport:
    """Check every workflow invariant; returns a report, never raises."""
    violations: list[Violation] = []
    if not workflow.nodes:
        violations.append(Violation("empty_workflow", "workflow has no nodes"))
    seen: set[NodeId] = set()
    for node in workflow.nodes:
        if not node.id:
            violations.append(Violation("empty_node_id", "node id is empty"))
        elif node.id in seen:
            violations.append(Violation("duplicate_node_id", f"duplicate node id {node.id!r}", node.id))
        seen.add(node.id)
        if isinstance(node, AgentSpec):
            if not node.prompt.strip():
                violations.append(Violation("empty_prompt", f"agent {node.id!r} has an empty prompt", node.id))
            if node.step_budget < 1:
                violations.append(
                    Violation("bad_step_budget", f"agent {node.id!r} step_budget must be >= 1", node.id)
                )

    node_ids = set(workflow.node_ids)
    for u, v in sorted(workflow.edges):
        if u not in node_ids or v not in node_ids:
            violations.append(Violation("dangling_edge", f"edge ({u!r}, {v!r}) references undeclared node"))
        elif u == v:
            violations.append(Violation("self_loop", f"self-loop on {u!r}", u))

    # Cycle detection only makes sense once edges are structurally sound.
    if not any(v.code in ("dangling_edge", "self_loop") for v in violations):
        try:
            topological_order(workflow)
        except CycleError as exc:
            violations.append(Violation("cycle", str(exc)))

    vocabulary = gate_state_vocabulary(workflow)
    for node in workflow.nodes:
        if not isinstance(node, GateSpec):
            continue
        for outcome, target in sorted(node.branch_map.items()):
            if outcome not in GATE_OUTCOMES:
                violations.append(
                    Violation("bad_branch_outcome", f"gate {node.id!r} has unknown outcome {outcome!r}", node.id)
                )
            if target not in node_ids:
                violations.append(
                    Violation("missing_branch_target", f"gate {node.id!r} branch {outcome!r} -> missing node {target!r}", node.id)
                )
            elif (node.id, target) not in workflow.edges:
                violations.append(
                    Violation("branch_not_successor", f"gate {node.id!r} branch {outcome!r} -> {target!r} is not a graph successor", node.id)
                )
        for required in ("true", "false"):
            if required not in node.branch_map:
                violations.append(
                    Violation("missing_branch", f"gate {node.id!r} lacks a {required!r} branch", node.id)
                )
        try:
            keys = referenced_keys(node.predicate)
        except PredicateError as exc:
            violations.append(Violation("bad_predicate", f"gate {node.id!r}: {exc}", node.id))
        else:
            for key in sorted(keys - vocabulary):
                violations.append(
                    Violation("undeclared_state_key", f"gate {node.id!r} predicate reads undeclared key {key!r}", node.id)
                )
    return ValidationReport(tuple(violations))


def topological_order(workflow: Workflow) -> list[NodeId]:
    """Kahn's algorithm with lexicographic tie-break for determinism."""
    import heapq

    node_ids = set(workflow.node_ids)
    for u, v in workflow.edges:
        if u not in node_ids or v not in node_ids:
            raise CycleError(f"edge ({u!r}, {v!r}) references undeclared node")
    indegree = {nid: 0 for nid in node_ids}
    adjacency: dict[NodeId, list[NodeId]] = {nid: [] for nid in node_ids}
    for u, v in workflow.edges:
        indegree[v] += 1
        adjacency[u].append(v)
    ready = [nid for nid, deg in indegree.items() if deg == 0]
    heapq.heapify(ready)
    order: list[NodeId] = []
    while ready:
        nid = heapq.heappop(ready)
        order.append(nid)
        for succ in adjacency[nid]:
            indegree[succ] -= 1
            if indegree[succ] == 0:
                heapq.heappush(ready, succ)
    if len(order) != len(node_ids):
        stuck = sorted(nid for nid, deg in indegree.items() if deg > 0)
        raise CycleError(f"cycle involving nodes {stuck}")
    return order


# Serialization ---------------------------------------------------------------


def _node_to_dict(node: NodeSpec) -> dict[str, Any]:
    if isinstance(node, AgentSpec):
        return {
            "kind": "agent",
            "id": node.id,
            "prompt": node.prompt,
            "tools": sorted(node.tools),
            "model_ref": node.model_ref,
            "step_budget": node.step_budget,
        }
    return {
        "kind": "gate",
        "id": node.id,
        "predicate": node.predicate,
        "branch_map": dict(sorted(node.branch_map.items())),
    }


def _node_from_dict(raw: dict[str, Any]) -> NodeSpec:
    kind = raw.get("kind")
    if kind == "agent":
        return AgentSpec(
            id=_expect(raw, "id", str),
            prompt=_expect(raw, "prompt", str),
            tools=frozenset(_expect(raw, "tools", list)),
            model_ref=_expect(raw, "model_ref", str),
            step_budget=_expect(raw, "step_budget", int),
        )
    if kind == "gate":
        return GateSpec(
            id=_expect(raw, "id", str),
            predicate=_expect(raw, "predicate", str),
            branch_map=_expect(raw, "branch_map", dict),
        )
    raise ParseError(f"unknown node kind {kind!r}")


def _expect(raw: dict[str, Any], key: str, typ: type) -> Any:
    if key not in raw:
        raise ParseError(f"missing field {key!r}")
    value = raw[key]
    if typ is int and isinstance(value, bool):
        raise ParseError(f"field {key!r} must be {typ.__name__}")
    if not isinstance(value, typ):
        raise ParseError(f"field {key!r} must be {typ.__name__}")
    return value


def workflow_to_dict(workflow: Workflow) -> dict[str, Any]:
    """Plain-data form of a workflow (the documented file format)."""
    return {
        "format": SERIAL_VERSION,
        "id": workflow.id,
        "task_prompt": workflow.task_prompt,
        "version": workflow.version,
        "parent_id": workflow.parent_id,
        "nodes": [_node_to_dict(n) for n in workflow.nodes],
        "edges": sorted([u, v] for (u, v) in workflow.edges),
    }


def workflow_from_dict(raw: dict[str, Any]) -> Workflow:
    if not isinstance(raw, dict):
        raise ParseError("workflow document must be an object")
    document_format = raw.get("format", SERIAL_VERSION)
    if document_format != SERIAL_VERSION:
        raise ParseError(f"unsupported workflow format {document_format!r}")
    parent_id = raw.get("parent_id")
    if parent_id is not None and not isinstance(parent_id, str):
        raise ParseError("field 'parent_id' must be str or null")
    edges_raw = _expect(raw, "edges", list)
    edges = set()
    for pair in edges_raw:
        if not isinstance(pair, list) or len(pair) != 2 or not all(isinstance(x, str) for x in pair):
            raise ParseError(f"edge {pair!r} must be a [from, to] string pair")
        edges.add((pair[0], pair[1]))
    nodes_raw = _expect(raw, "nodes", list)
    nodes = []
    for node_raw in nodes_raw:
        if not isinstance(node_raw, dict):
            raise ParseError(f"node entry {node_raw!r} must be an object")
        nodes.append(_node_from_dict(node_raw))
    return Workflow(
        id=_expect(raw, "id", str),
        task_prompt=_expect(raw, "task_prompt", str),
        nodes=tuple(nodes),
        edges=frozenset(edges),
        parent_id=parent_id,
        version=_expect(raw, "version", int),
    )


def serialize(workflow: Workflow) -> bytes:
    """Canonical UTF-8 JSON bytes; identical workflows serialize identically."""
    text = json.dumps(workflow_to_dict(workflow), sort_keys=True, indent=2, ensure_ascii=False)
    return (text + "\n").encode("utf-8")


def deserialize(data: bytes | str) -> Workflow:
    """Inverse of serialize. Raises ParseError with a byte offset on bad input."""
    if not data:
        raise ParseError("empty input")
    if isinstance(data, str):
        data = data.encode("utf-8")
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"invalid UTF-8: {exc.reason}", exc.start) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ParseError(f"invalid JSON: {exc.msg}", offset) from exc
    return workflow_from_dict(raw)
