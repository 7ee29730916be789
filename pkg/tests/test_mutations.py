"""Mutation operators: single-edit application, rejection, and diffing."""

from __future__ import annotations

import random

import pytest

from conftest import graph_has_cycle, linear_workflow, random_workflow
from flowsmith.mutations import MutationEdit, apply_mutation, diff
from flowsmith.workflow import (
    AgentSpec,
    GateSpec,
    InvalidEdit,
    Workflow,
    WouldCreateCycle,
    validate,
)


def test_prompt_refine_changes_one_prompt_and_bumps_lineage():
    base = linear_workflow("draft", "review")
    edit = MutationEdit.prompt_refine(target="s00", new_prompt="draft with citations")
    out = apply_mutation(base, edit)
    assert out.node("s00").prompt == "draft with citations"
    assert out.node("s01").prompt == "review"
    assert out.parent_id == base.id
    assert out.version == base.version + 1
    assert out.id != base.id
    # original untouched
    assert base.node("s00").prompt == "draft"


def test_prompt_refine_rejects_missing_gate_or_identical():
    base = linear_workflow("draft", "review")
    with pytest.raises(InvalidEdit):
        apply_mutation(base, MutationEdit.prompt_refine(target="ghost", new_prompt="x"))
    with pytest.raises(InvalidEdit):
        apply_mutation(base, MutationEdit.prompt_refine(target="s00", new_prompt="draft"))
    gated = Workflow.create(
        task_prompt="t",
        nodes=[
            GateSpec(id="g", predicate='status == "ok"', branch_map={"true": "a", "false": "a"}),
            AgentSpec(id="a", prompt="x"),
        ],
        edges=[("g", "a")],
    )
    with pytest.raises(InvalidEdit):
        apply_mutation(gated, MutationEdit.prompt_refine(target="g", new_prompt="x"))


def test_add_node_splices_between_attachments():
    base = linear_workflow("draft", "review")
    node = AgentSpec(id="cite", prompt="add citations", tools=frozenset())
    edit = MutationEdit.add_node(node=node, before=["s00"], after=["s01"])
    out = apply_mutation(base, edit)
    assert out.has_node("cite")
    assert ("s00", "cite") in out.edges
    assert ("cite", "s01") in out.edges
    assert validate(out).ok


def test_add_node_rejects_duplicate_id_and_unknown_anchor():
    base = linear_workflow("draft")
    with pytest.raises(InvalidEdit):
        apply_mutation(
            base,
            MutationEdit.add_node(node=AgentSpec(id="s00", prompt="dup"), before=[], after=[]),
        )
    with pytest.raises(InvalidEdit):
        apply_mutation(
            base,
            MutationEdit.add_node(node=AgentSpec(id="new", prompt="x"), before=["ghost"], after=[]),
        )


def test_remove_node_reconnects_predecessors_to_successors():
    base = linear_workflow("draft", "polish", "publish")
    out = apply_mutation(base, MutationEdit.remove_node(target="s01"))
    assert not out.has_node("s01")
    assert ("s00", "s02") in out.edges
    assert validate(out).ok


def test_remove_last_node_rejected():
    base = linear_workflow("only")
    with pytest.raises(InvalidEdit):
        apply_mutation(base, MutationEdit.remove_node(target="s00"))


def test_rewire_add_and_remove_edges():
    base = linear_workflow("a", "b", "c")
    edit = MutationEdit.rewire_edges(add=[("s00", "s02")], remove=[("s00", "s01")])
    out = apply_mutation(base, edit)
    assert ("s00", "s02") in out.edges
    assert ("s00", "s01") not in out.edges


def test_rewire_rejections():
    base = linear_workflow("a", "b")
    with pytest.raises(InvalidEdit):
        apply_mutation(base, MutationEdit.rewire_edges(add=[], remove=[("s01", "s00")]))
    with pytest.raises(InvalidEdit):
        apply_mutation(base, MutationEdit.rewire_edges(add=[("s00", "s01")], remove=[]))
    with pytest.raises(InvalidEdit):
        apply_mutation(base, MutationEdit.rewire_edges(add=[("s00", "ghost")], remove=[]))


def test_cycle_inducing_rewire_rejected():
    base = linear_workflow("a", "b", "c")
    with pytest.raises(WouldCreateCycle):
        apply_mutation(base, MutationEdit.rewire_edges(add=[("s02", "s00")], remove=[]))
    with pytest.raises(WouldCreateCycle):
        apply_mutation(base, MutationEdit.rewire_edges(add=[("s00", "s00")], remove=[]))


def test_edit_payload_must_match_kind():
    with pytest.raises(InvalidEdit):
        MutationEdit(kind="prompt_refine", target="a")  # missing new_prompt
    with pytest.raises(InvalidEdit):
        MutationEdit(kind="remove_node", target="a", new_prompt="stray")
    with pytest.raises(InvalidEdit):
        MutationEdit(kind="bogus_kind", target="a")


def test_diff_counts_each_class_once():
    base = linear_workflow("draft", "review")

    refined = apply_mutation(base, MutationEdit.prompt_refine(target="s00", new_prompt="draft well"))
    d = diff(base, refined)
    assert d.edit_class_count == 1
    assert d.prompt_changes == 1

    grown = apply_mutation(
        base,
        MutationEdit.add_node(node=AgentSpec(id="cite", prompt="x"), before=["s00"], after=["s01"]),
    )
    d = diff(base, grown)
    assert d.edit_class_count == 1
    assert d.nodes_added == 1

    shrunk = apply_mutation(
        linear_workflow("a", "b", "c"), MutationEdit.remove_node(target="s01")
    )
    d = diff(linear_workflow("a", "b", "c"), shrunk)
    assert d.edit_class_count == 1
    assert d.nodes_removed == 1

    rewired = apply_mutation(
        linear_workflow("a", "b", "c"),
        MutationEdit.rewire_edges(add=[("s00", "s02")], remove=[]),
    )
    d = diff(linear_workflow("a", "b", "c"), rewired)
    assert d.edit_class_count == 1
    assert d.edges_changed


def test_diff_empty_for_identical():
    base = linear_workflow("draft", "review")
    d = diff(base, base)
    assert d.empty
    assert d.edit_class_count == 0


def test_diff_reports_task_prompt_change_without_edit_class():
    base = linear_workflow("draft", "review", task_prompt="old task")
    retargeted = Workflow.create(
        task_prompt="new task", nodes=base.nodes, edges=base.edges, version=base.version
    )
    d = diff(base, retargeted)
    assert d.edit_class_count == 0
    assert d.details.get("task_prompt_changed") is True


def test_summary_is_loggable():
    edit = MutationEdit.prompt_refine(target="s00", new_prompt="better")
    summary = edit.summary()
    assert summary["kind"] == "prompt_refine"
    assert summary["target"] == "s00"


def test_fuzz_applied_edits_stay_single_class_and_acyclic():
    rng = random.Random(99010)
    applied = 0
    rejected = 0
    for _ in range(300):
        base = random_workflow(rng, max_nodes=10)
        edit, would_cycle = _random_edit(rng, base)
        if edit is None:
            continue
        try:
            out = apply_mutation(base, edit)
        except WouldCreateCycle:
            rejected += 1
            assert would_cycle is not False
            continue
        except InvalidEdit:
            rejected += 1
            continue
        applied += 1
        assert validate(out).ok, validate(out).codes()
        assert not graph_has_cycle(out.node_ids, out.edges)
        assert diff(base, out).edit_class_count == 1
        assert out.parent_id == base.id
        assert out.version == base.version + 1
    assert applied >= 100
    assert rejected >= 10


def _random_edit(rng, workflow):
    """Random edit; second element reports whether the edit is known to close
    a cycle (None: unknown / not applicable)."""
    agents = [n.id for n in workflow.nodes if isinstance(n, AgentSpec)]
    ids = list(workflow.node_ids)
    kind = rng.choice(["refine", "add", "remove", "rewire", "cycle_probe"])
    if kind == "refine":
        return MutationEdit.prompt_refine(
            target=rng.choice(agents), new_prompt=f"revised {rng.random():.6f}"
        ), None
    if kind == "add":
        before = rng.sample(ids, k=min(len(ids), rng.randint(0, 2)))
        after = rng.sample(ids, k=min(len(ids), rng.randint(0, 2)))
        return MutationEdit.add_node(
            node=AgentSpec(id="zz-new", prompt="spliced in"), before=before, after=after
        ), None
    if kind == "remove":
        return MutationEdit.remove_node(target=rng.choice(ids)), None
    if kind == "rewire":
        add = []
        remove = []
        if workflow.edges and rng.random() < 0.7:
            remove.append(rng.choice(sorted(workflow.edges)))
        if rng.random() < 0.7 and len(ids) >= 2:
            add.append(tuple(rng.sample(ids, k=2)))
        if not add and not remove:
            return None, None
        return MutationEdit.rewire_edges(add=add, remove=remove), None
    # deliberately close a cycle over an existing edge u -> v
    if not workflow.edges:
        return None, None
    u, v = rng.choice(sorted(workflow.edges))
    return MutationEdit.rewire_edges(add=[(v, u)], remove=[]), True
