"""Workflow execution: action grammar, context windows, gates, budgets, traces."""

from __future__ import annotations

import json

import pytest

from conftest import linear_workflow, verdict_text
from flowsmith.executor import (
    STATUS_BUDGET,
    STATUS_ERROR,
    STATUS_OK,
    STATUS_SKIPPED,
    ExecutionEnv,
    SharedState,
    assemble_context,
    eval_gate,
    execute_workflow,
    load_trace,
    parse_action,
    save_trace,
    trace_from_dict,
    trace_to_dict,
)
from flowsmith.mcp.client import McpClient, Registry, build_registry
from flowsmith.provider import ScriptedProvider
from flowsmith.sandbox import SandboxPolicy
from flowsmith.workflow import AgentSpec, GateSpec, ParseError, Workflow


def make_env(provider, tmp_path, registry=None, client=None, **kwargs):
    return ExecutionEnv(
        provider=provider,
        registry=registry if registry is not None else Registry(tools={}),
        client=client,
        sandbox_policy=SandboxPolicy(wall_time_s=10.0),
        workspace=str(tmp_path),
        run_id="test-run",
        **kwargs,
    )


# -- action grammar ----------------------------------------------------------------


def test_parse_action_final():
    action = parse_action("thinking...\nFINAL: the answer\nis 42")
    assert action["type"] == "final"
    assert action["text"] == "the answer\nis 42"


def test_parse_action_tool_calls():
    text = 'CALL h:1/add {"a": 1, "b": 2}\nCALL h:1/echo {"text": "hi"}'
    action = parse_action(text)
    assert action["type"] == "tool_calls"
    assert [c["tool_key"] for c in action["calls"]] == ["h:1/add", "h:1/echo"]


def test_parse_action_code_block():
    action = parse_action("let me compute\n```python\nprint(1 + 1)\n```")
    assert action["type"] == "code"
    assert "print(1 + 1)" in action["code"]


def test_parse_action_priority_final_wins():
    action = parse_action('CALL x {"a": 1}\nFINAL: done')
    assert action["type"] == "final"


def test_parse_action_none():
    assert parse_action("just musing, no action")["type"] == "none"


# -- context assembly ----------------------------------------------------------------


def test_assemble_context_window_bounds_history():
    state = SharedState()
    for i in range(6):
        state.record_output(f"n{i}", f"output {i}")
    agent = AgentSpec(id="a", prompt="do the work")
    messages = assemble_context(state, agent, window_k=3)
    assert messages[0][0] == "system"
    assert "do the work" in messages[0][1]
    user_parts = [text for role, text in messages[1:]]
    assert len(user_parts) == 3
    assert "[output from n3]" in user_parts[0]
    assert "[output from n5]" in user_parts[2]
    with pytest.raises(ValueError):
        assemble_context(state, agent, window_k=0)


def test_shared_state_is_append_only():
    state = SharedState()
    state.record_output("a", "first")
    with pytest.raises(ValueError):
        state.record_output("a", "second")


# -- agent stepping -----------------------------------------------------------------


def test_agent_runs_to_final(provider, tmp_path):
    provider.enqueue("FINAL: finished product")
    workflow = linear_workflow("make a thing")
    trace = execute_workflow(workflow, make_env(provider, tmp_path))
    result = trace.node_results[0]
    assert result.status == STATUS_OK
    assert result.final_output == "finished product"
    assert len(result.steps) == 1
    assert trace.overall_status == "ok"


def test_agent_budget_exhaustion(provider, tmp_path):
    for _ in range(4):
        provider.enqueue("no actionable content here")
    workflow = Workflow.create(
        task_prompt="t",
        nodes=[AgentSpec(id="loops", prompt="never stops", step_budget=4)],
        edges=[],
    )
    trace = execute_workflow(workflow, make_env(provider, tmp_path))
    result = trace.node_results[0]
    assert result.status == STATUS_BUDGET
    assert len(result.steps) == 4
    assert trace.overall_status == "degraded"
    assert provider.depth() == 0


def test_agent_backend_error_degrades_run(provider, tmp_path):
    workflow = linear_workflow("one", "two")
    provider.enqueue("FINAL: first done")  # second agent's chat will fail: queue empty
    trace = execute_workflow(workflow, make_env(provider, tmp_path))
    assert trace.node_results[0].status == STATUS_OK
    assert trace.node_results[1].status == STATUS_ERROR
    assert trace.overall_status == "degraded"


def test_downstream_sees_upstream_output(provider, tmp_path):
    provider.enqueue("FINAL: alpha artifact")
    provider.enqueue("FINAL: consumed")
    workflow = linear_workflow("produce", "consume")
    execute_workflow(workflow, make_env(provider, tmp_path))
    second_request = provider.requests[1]
    joined = "\n".join(text for _, text in second_request.messages)
    assert "alpha artifact" in joined
    assert "[output from s00]" in joined


def test_observation_cap_applies(provider, tmp_path):
    provider.enqueue("FINAL: " + "y" * 5000)
    provider.enqueue("FINAL: done")
    workflow = linear_workflow("produce", "consume")
    execute_workflow(workflow, make_env(provider, tmp_path, observation_cap=256))
    second_request = provider.requests[1]
    joined = "\n".join(text for _, text in second_request.messages)
    assert len(joined) < 2000


def test_tool_call_loop_executes_against_server(fixture_server, tmp_path):
    provider = ScriptedProvider(embedding_dim=16)
    client = McpClient()
    registry = build_registry(client, [fixture_server.endpoint])
    add_key = f"{fixture_server.endpoint.key}/add"
    provider.enqueue(f'CALL {add_key} {{"a": 20, "b": 22}}')
    provider.enqueue("FINAL: sum is 42")
    workflow = Workflow.create(
        task_prompt="t",
        nodes=[AgentSpec(id="solver", prompt="use tools", tools=frozenset([add_key]), step_budget=8)],
        edges=[],
    )
    trace = execute_workflow(workflow, make_env(provider, tmp_path, registry=registry, client=client))
    result = trace.node_results[0]
    assert result.status == STATUS_OK
    tool_step = result.steps[0]
    assert "42" in tool_step.observation
    assert "[tool ok]" in tool_step.observation


def test_tool_call_permission_and_schema_failures_continue(fixture_server, tmp_path):
    provider = ScriptedProvider(embedding_dim=16)
    client = McpClient()
    registry = build_registry(client, [fixture_server.endpoint])
    add_key = f"{fixture_server.endpoint.key}/add"
    echo_key = f"{fixture_server.endpoint.key}/echo"
    provider.enqueue(f'CALL {echo_key} {{"text": "nope"}}')   # not allocated
    provider.enqueue(f'CALL {add_key} {{"a": "bad"}}')         # schema-invalid
    provider.enqueue(f'CALL {add_key} not-json')
    provider.enqueue("FINAL: gave up")
    workflow = Workflow.create(
        task_prompt="t",
        nodes=[AgentSpec(id="solver", prompt="p", tools=frozenset([add_key]), step_budget=8)],
        edges=[],
    )
    trace = execute_workflow(workflow, make_env(provider, tmp_path, registry=registry, client=client))
    result = trace.node_results[0]
    assert result.status == STATUS_OK
    assert "[permission denied]" in result.steps[0].observation
    assert "arguments rejected" in result.steps[1].observation
    assert result.steps[2].observation  # malformed args JSON reported, not fatal


def test_code_action_runs_in_sandbox(provider, tmp_path):
    provider.enqueue("```python\nprint('computed', 6 * 7)\n```")
    provider.enqueue("FINAL: used the sandbox")
    workflow = linear_workflow("compute")
    trace = execute_workflow(workflow, make_env(provider, tmp_path))
    first = trace.node_results[0].steps[0]
    assert "computed 42" in first.observation


# -- gates -------------------------------------------------------------------------


def branchy_workflow():
    return Workflow.create(
        task_prompt="branch",
        nodes=[
            AgentSpec(id="a-work", prompt="produce"),
            GateSpec(
                id="check",
                predicate='a-work.output contains "good"',
                branch_map={"true": "happy", "false": "sad"},
            ),
            AgentSpec(id="happy", prompt="celebrate"),
            AgentSpec(id="sad", prompt="retry"),
        ],
        edges=[("a-work", "check"), ("check", "happy"), ("check", "sad")],
    )


def test_gate_routes_true_branch_and_skips_other(provider, tmp_path):
    provider.enqueue("FINAL: good result")
    provider.enqueue("FINAL: celebrated")
    trace = execute_workflow(branchy_workflow(), make_env(provider, tmp_path))
    by_id = {r.node_id: r for r in trace.node_results}
    assert by_id["happy"].status == STATUS_OK
    assert by_id["sad"].status == STATUS_SKIPPED
    assert by_id["check"].status == STATUS_OK
    assert "true" in by_id["check"].final_output
    assert trace.overall_status == "ok"  # skipping alone does not degrade


def test_gate_routes_false_branch(provider, tmp_path):
    provider.enqueue("FINAL: terrible result")
    provider.enqueue("FINAL: retried")
    trace = execute_workflow(branchy_workflow(), make_env(provider, tmp_path))
    by_id = {r.node_id: r for r in trace.node_results}
    assert by_id["sad"].status == STATUS_OK
    assert by_id["happy"].status == STATUS_SKIPPED


def test_gate_missing_key_falls_back_to_default_then_false():
    gate = GateSpec(
        id="g", predicate='ghost.output == "x"', branch_map={"true": "a", "false": "b"}
    )
    state = SharedState()
    assert eval_gate(gate, state) == "b"
    with_default = GateSpec(
        id="g",
        predicate='ghost.output == "x"',
        branch_map={"true": "a", "false": "b", "default": "c"},
    )
    assert eval_gate(with_default, state) == "c"


def test_skip_propagates_through_chains(provider, tmp_path):
    # check routes true->happy; sad and its dependent never run
    workflow = Workflow.create(
        task_prompt="deep branch",
        nodes=[
            AgentSpec(id="a-work", prompt="produce"),
            GateSpec(
                id="check",
                predicate='a-work.output contains "good"',
                branch_map={"true": "happy", "false": "sad"},
            ),
            AgentSpec(id="happy", prompt="x"),
            AgentSpec(id="sad", prompt="y"),
            AgentSpec(id="after-sad", prompt="z"),
        ],
        edges=[("a-work", "check"), ("check", "happy"), ("check", "sad"), ("sad", "after-sad")],
    )
    provider.enqueue("FINAL: good stuff")
    provider.enqueue("FINAL: joy")
    trace = execute_workflow(workflow, make_env(provider, tmp_path))
    by_id = {r.node_id: r for r in trace.node_results}
    assert by_id["sad"].status == STATUS_SKIPPED
    assert by_id["after-sad"].status == STATUS_SKIPPED
    assert provider.depth() == 0


# -- traces ------------------------------------------------------------------------


def test_trace_round_trip(provider, tmp_path):
    provider.enqueue("FINAL: alpha")
    provider.enqueue("FINAL: beta")
    workflow = linear_workflow("one", "two")
    trace = execute_workflow(workflow, make_env(provider, tmp_path))
    again = trace_from_dict(trace_to_dict(trace))
    assert again == trace


def test_trace_save_load(provider, tmp_path):
    provider.enqueue("FINAL: alpha")
    workflow = linear_workflow("one")
    trace = execute_workflow(workflow, make_env(provider, tmp_path))
    path = tmp_path / "trace.json"
    save_trace(trace, str(path))
    assert load_trace(str(path)) == trace


def test_trace_written_incrementally_during_run(provider, tmp_path):
    provider.enqueue("FINAL: alpha")
    provider.enqueue("FINAL: beta")
    workflow = linear_workflow("one", "two")
    path = tmp_path / "live.json"
    trace = execute_workflow(workflow, make_env(provider, tmp_path), trace_path=str(path))
    assert load_trace(str(path)) == trace


def test_load_trace_rejects_garbage(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ParseError):
        load_trace(str(path))


def test_trace_usage_is_aggregated(provider, tmp_path):
    provider.enqueue("FINAL: alpha")
    provider.enqueue("FINAL: beta")
    workflow = linear_workflow("one", "two")
    trace = execute_workflow(workflow, make_env(provider, tmp_path))
    assert len(trace.total_usage) == 1  # both agents share agent_model
    assert trace.total_usage[0].model_ref == "agent_model"
    assert trace.total_usage[0].estimated
