"""Shared test helpers: fence builders, random workflow generation, fixtures."""

from __future__ import annotations

import json
import random

import pytest

from flowsmith.mcp.client import Registry
from flowsmith.provider import ScriptedProvider
from flowsmith.workflow import AgentSpec, GateSpec, Workflow


def verdict_text(g, c=None, q=None, a=None, feedback="looks fine", evidence=()):
    """Render a judge response carrying one ```verdict block. A single
    positional argument scores every criterion identically."""
    if c is None:
        c = q = a = g
    payload = {"g": g, "c": c, "q": q, "a": a, "feedback": feedback, "evidence": list(evidence)}
    return "Assessment follows.\n```verdict\n" + json.dumps(payload) + "\n```"


def mutation_text(**payload):
    return "```mutation\n" + json.dumps(payload) + "\n```"


def workflow_text(nodes, edges):
    return "```workflow\n" + json.dumps({"nodes": nodes, "edges": edges}) + "\n```"


def refine_text(target, new_prompt):
    return mutation_text(kind="prompt_refine", target=target, new_prompt=new_prompt)


def linear_workflow(*prompts, task_prompt="do the thing"):
    """n agents chained in name order: s00 -> s01 -> ..."""
    nodes = [
        AgentSpec(id=f"s{i:02d}", prompt=p, tools=frozenset(), step_budget=8)
        for i, p in enumerate(prompts)
    ]
    edges = [(f"s{i:02d}", f"s{i + 1:02d}") for i in range(len(prompts) - 1)]
    return Workflow.create(task_prompt=task_prompt, nodes=nodes, edges=edges)


def random_workflow(rng: random.Random, max_nodes: int = 8) -> Workflow:
    """A random valid DAG workflow: edges only run from lower-numbered names
    to higher, so acyclicity holds by construction; nodes with successors
    sometimes become gates."""
    n = rng.randint(1, max_nodes)
    names = [f"n{i:02d}" for i in range(n)]
    edges: set[tuple[str, str]] = set()
    for j in range(1, n):
        for _ in range(rng.randint(0, 2)):
            edges.add((names[rng.randrange(j)], names[j]))
    nodes = []
    for idx, name in enumerate(names):
        succs = sorted({v for (u, v) in edges if u == name})
        if succs and rng.random() < 0.25:
            nodes.append(
                GateSpec(
                    id=name,
                    predicate='status == "ok"',
                    branch_map={"true": succs[0], "false": succs[-1]},
                )
            )
        else:
            nodes.append(
                AgentSpec(
                    id=name,
                    prompt=f"Handle part {idx} of the task.",
                    tools=frozenset(),
                    step_budget=rng.choice([1, 4, 64]),
                )
            )
    return Workflow.create(task_prompt="fuzz task", nodes=nodes, edges=sorted(edges))


def graph_has_cycle(node_ids, edges) -> bool:
    """Independent cycle oracle: recursive-stack DFS, no engine code."""
    out: dict[str, list[str]] = {nid: [] for nid in node_ids}
    for u, v in edges:
        out.setdefault(u, []).append(v)
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {nid: WHITE for nid in out}
    def visit(u):
        color[u] = GRAY
        for v in out.get(u, ()):
            if color.get(v) == GRAY:
                return True
            if color.get(v) == WHITE and visit(v):
                return True
        color[u] = BLACK
        return False
    return any(color[nid] == WHITE and visit(nid) for nid in list(out))


@pytest.fixture
def provider():
    return ScriptedProvider(embedding_dim=16)


@pytest.fixture
def empty_registry():
    return Registry(tools={})


@pytest.fixture
def fixture_server():
    from flowsmith.mcp.fixture import FixtureServer

    with FixtureServer() as server:
        yield server
