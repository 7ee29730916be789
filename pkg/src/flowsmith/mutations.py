"""Single-edit workflow mutations and the diff that polices them.

The refinement loop moves through workflow space one edit at a time: rewrite
one agent's prompt, insert one node, delete one node (predecessors reconnect
to successors), or rewire edges. apply_mutation enforces that discipline;
diff measures how many edit classes separate two workflows so the single-edit
law is checkable after the fact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .workflow import (
    AgentSpec,
    GateSpec,
    InvalidEdit,
    NodeId,
    NodeSpec,
    Workflow,
    WouldCreateCycle,
    validate,
)

PROMPT_REFINE = "prompt_refine"
ADD_NODE = "add_node"
REMOVE_NODE = "remove_node"
REWIRE_EDGES = "rewire_edges"

EDIT_KINDS = (PROMPT_REFINE, ADD_NODE, REMOVE_NODE, REWIRE_EDGES)
"""The complete move set available to the refinement loop."""


@dataclass(frozen=True)
class MutationEdit:
    """One proposed edit. Exactly the fields for its kind are populated."""

    kind: str
    target: NodeId | None = None
    new_prompt: str | None = None
    node: NodeSpec | None = None
    attach_before: tuple[NodeId, ...] = ()
    attach_after: tuple[NodeId, ...] = ()
    add_edges: tuple[tuple[NodeId, NodeId], ...] = ()
    remove_edges: tuple[tuple[NodeId, NodeId], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "attach_before", tuple(self.attach_before))
        object.__setattr__(self, "attach_after", tuple(self.attach_after))
        object.__setattr__(self, "add_edges", tuple(tuple(e) for e in self.add_edges))
        object.__setattr__(self, "remove_edges", tuple(tuple(e) for e in self.remove_edges))
        if self.kind not in EDIT_KINDS:
            raise InvalidEdit(f"unknown edit kind {self.kind!r}")
        populated = {
            PROMPT_REFINE: self.target is not None and self.new_prompt is not None,
            ADD_NODE: self.node is not None,
            REMOVE_NODE: self.target is not None,
            REWIRE_EDGES: bool(self.add_edges or self.remove_edges),
        }[self.kind]
        if not populated:
            raise InvalidEdit(f"{self.kind} edit is missing its payload")
        stray = {
            PROMPT_REFINE: self.node or self.attach_before or self.attach_after or self.add_edges or self.remove_edges,
            ADD_NODE: self.target or self.new_prompt or self.add_edges or self.remove_edges,
            REMOVE_NODE: self.new_prompt or self.node or self.attach_before or self.attach_after or self.add_edges or self.remove_edges,
            REWIRE_EDGES: self.target or self.new_prompt or self.node or self.attach_before or self.attach_after,
        }[self.kind]
        if stray:
            raise InvalidEdit(f"{self.kind} edit carries payload fields of another kind")

    @classmethod
    def prompt_refine(cls, target: NodeId, new_prompt: str) -> "MutationEdit":
        return cls(kind=PROMPT_REFINE, target=target, new_prompt=new_prompt)

    @classmethod
    def add_node(cls, node: NodeSpec, before=(), after=()) -> "MutationEdit":
        return cls(kind=ADD_NODE, node=node, attach_before=tuple(before), attach_after=tuple(after))

    @classmethod
    def remove_node(cls, target: NodeId) -> "MutationEdit":
        return cls(kind=REMOVE_NODE, target=target)

    @classmethod
    def rewire_edges(cls, add=(), remove=()) -> "MutationEdit":
        return cls(kind=REWIRE_EDGES, add_edges=tuple(add), remove_edges=tuple(remove))

    def summary(self) -> dict[str, Any]:
        """Loggable shape of the edit (used by evolution logs)."""
        out: dict[str, Any] = {"kind": self.kind}
        if self.kind == PROMPT_REFINE:
            out["target"] = self.target
        elif self.kind == ADD_NODE:
            out["node_id"] = self.node.id
            out["attach_before"] = sorted(self.attach_before)
            out["attach_after"] = sorted(self.attach_after)
        elif self.kind == REMOVE_NODE:
            out["target"] = self.target
        else:
            out["add_edges"] = sorted([u, v] for u, v in self.add_edges)
            out["remove_edges"] = sorted([u, v] for u, v in self.remove_edges)
        return out


def apply_mutation(workflow: Workflow, edit: MutationEdit) -> Workflow:
    """Apply one edit; the result is validated before being returned.

    Raises InvalidEdit when the edit references missing elements or would
    break a non-cycle invariant, WouldCreateCycle when the edited graph is
    no longer a DAG. The input workflow is never modified.
    """
    if edit.kind == PROMPT_REFINE:
        nodes, edges = _refine_prompt(workflow, edit)
    elif edit.kind == ADD_NODE:
        nodes, edges = _add_node(workflow, edit)
    elif edit.kind == REMOVE_NODE:
        nodes, edges = _remove_node(workflow, edit)
    else:
        nodes, edges = _rewire(workflow, edit)

    result = Workflow.create(
        task_prompt=workflow.task_prompt,
        nodes=nodes,
        edges=edges,
        parent_id=workflow.id,
        version=workflow.version + 1,
    )
    report = validate(result)
    if not report.ok:
        codes = report.codes()
        if "cycle" in codes or "self_loop" in codes:
            raise WouldCreateCycle("; ".join(v.detail for v in report.violations))
        raise InvalidEdit("; ".join(v.detail for v in report.violations))
    return result


def _refine_prompt(workflow: Workflow, edit: MutationEdit):
    if not workflow.has_node(edit.target):
        raise InvalidEdit(f"prompt_refine target {edit.target!r} not in workflow")
    node = workflow.node(edit.target)
    if not isinstance(node, AgentSpec):
        raise InvalidEdit(f"prompt_refine target {edit.target!r} is not an agent")
    if not edit.new_prompt.strip():
        raise InvalidEdit("prompt_refine with an empty prompt")
    if edit.new_prompt == node.prompt:
        raise InvalidEdit("prompt_refine changes nothing")
    replaced = AgentSpec(
        id=node.id,
        prompt=edit.new_prompt,
        tools=node.tools,
        model_ref=node.model_ref,
        step_budget=node.step_budget,
    )
    nodes = tuple(replaced if n.id == node.id else n for n in workflow.nodes)
    return nodes, workflow.edges


def _add_node(workflow: Workflow, edit: MutationEdit):
    new = edit.node
    if workflow.has_node(new.id):
        raise InvalidEdit(f"add_node id {new.id!r} already present")
    for nid in (*edit.attach_before, *edit.attach_after):
        if not workflow.has_node(nid):
            raise InvalidEdit(f"add_node attachment {nid!r} not in workflow")
    edges = set(workflow.edges)
    edges.update((b, new.id) for b in edit.attach_before)
    edges.update((new.id, a) for a in edit.attach_after)
    return (*workflow.nodes, new), edges


def _remove_node(workflow: Workflow, edit: MutationEdit):
    if not workflow.has_node(edit.target):
        raise InvalidEdit(f"remove_node target {edit.target!r} not in workflow")
    if len(workflow.nodes) == 1:
        raise InvalidEdit("remove_node would leave an empty workflow")
    preds = workflow.predecessors(edit.target)
    succs = workflow.successors(edit.target)
    edges = {(u, v) for (u, v) in workflow.edges if edit.target not in (u, v)}
    # Full bipartite reconnection preserves reachability across the gap.
    edges.update((p, s) for p in preds for s in succs)
    nodes = tuple(n for n in workflow.nodes if n.id != edit.target)
    return nodes, edges


def _rewire(workflow: Workflow, edit: MutationEdit):
    edges = set(workflow.edges)
    node_ids = set(workflow.node_ids)
    for u, v in edit.remove_edges:
        if (u, v) not in edges:
            raise InvalidEdit(f"rewire_edges removes nonexistent edge ({u!r}, {v!r})")
        edges.discard((u, v))
    for u, v in edit.add_edges:
        if u not in node_ids or v not in node_ids:
            raise InvalidEdit(f"rewire_edges adds edge with undeclared endpoint ({u!r}, {v!r})")
        if u == v:
            raise WouldCreateCycle(f"rewire_edges adds self-loop on {u!r}")
        if (u, v) in edges:
            raise InvalidEdit(f"rewire_edges adds duplicate edge ({u!r}, {v!r})")
        edges.add((u, v))
    if edges == workflow.edges:
        raise InvalidEdit("rewire_edges changes nothing")
    return workflow.nodes, edges


# Diff -------------------------------------------------------------------------


@dataclass(frozen=True)
class WorkflowDiff:
    """Edit classes separating two workflows.

    Edge deltas explained by a node addition (its incident edges) or a node
    removal (incident edges plus predecessor-to-successor reconnections) are
    folded into that node's class; whatever edge deltas remain count as one
    rewiring class regardless of how many edges moved.
    """

    prompt_changes: int
    nodes_added: int
    nodes_removed: int
    edges_changed: int
    details: dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def edit_class_count(self) -> int:
        return (
            self.prompt_changes
            + self.nodes_added
            + self.nodes_removed
            + (1 if self.edges_changed else 0)
            + len(self.details.get("nodes_modified", ()))
        )

    @property
    def empty(self) -> bool:
        return self.edit_class_count == 0


def _node_fingerprint(node: NodeSpec) -> tuple:
    if isinstance(node, AgentSpec):
        return ("agent", tuple(sorted(node.tools)), node.model_ref, node.step_budget)
    return ("gate", node.predicate, tuple(sorted(node.branch_map.items())))


def diff(w1: Workflow, w2: Workflow) -> WorkflowDiff:
    """Classify every difference between two workflows. Pure and symmetric
    in detection: diff(a, b) and diff(b, a) find the same classes with the
    added/removed roles swapped."""
    ids1 = set(w1.node_ids)
    ids2 = set(w2.node_ids)
    added = sorted(ids2 - ids1)
    removed = sorted(ids1 - ids2)
    common = ids1 & ids2

    prompt_changed: list[NodeId] = []
    modified: list[NodeId] = []
    for nid in sorted(common):
        n1, n2 = w1.node(nid), w2.node(nid)
        p1 = n1.prompt if isinstance(n1, AgentSpec) else None
        p2 = n2.prompt if isinstance(n2, AgentSpec) else None
        if p1 != p2:
            prompt_changed.append(nid)
        if _node_fingerprint(n1) != _node_fingerprint(n2):
            modified.append(nid)

    edges_gained = w2.edges - w1.edges
    edges_lost = w1.edges - w2.edges

    attributed: set[tuple[NodeId, NodeId]] = set()
    for e in edges_gained:
        if e[0] in added or e[1] in added:
            attributed.add(e)
    for e in edges_lost:
        if e[0] in removed or e[1] in removed:
            attributed.add(e)
    # Reconnections: a removed node's predecessors wired to its successors.
    for r in removed:
        preds = set(w1.predecessors(r))
        succs = set(w1.successors(r))
        for e in edges_gained - attributed:
            if e[0] in preds and e[1] in succs:
                attributed.add(e)
    # Mirror case: an added node spliced into what was a direct edge.
    for a in added:
        preds = set(w2.predecessors(a))
        succs = set(w2.successors(a))
        for e in edges_lost - attributed:
            if e[0] in preds and e[1] in succs:
                attributed.add(e)

    residual_gained = sorted(edges_gained - attributed)
    residual_lost = sorted(edges_lost - attributed)
    residual = len(residual_gained) + len(residual_lost)

    details: dict[str, Any] = {
        "prompt_changes": prompt_changed,
        "nodes_added": added,
        "nodes_removed": removed,
        "edges_added": residual_gained,
        "edges_removed": residual_lost,
    }
    if modified:
        details["nodes_modified"] = modified
    if w1.task_prompt != w2.task_prompt:
        details["task_prompt_changed"] = True
    return WorkflowDiff(
        prompt_changes=len(prompt_changed),
        nodes_added=len(added),
        nodes_removed=len(removed),
        edges_changed=residual,
        details=details,
    )
