"""Prompt templates for every model-facing role, with file overrides.

Templates use string.Template placeholders (${name}). A TemplateSet bundles
the five roles plus the judge rubric; defaults ship in this module and any of
them can be replaced by dropping a <field>.txt file into a template directory.

The agent action rules are part of the execution contract, not just prose:
the executor prepends them to every agent prompt, and the parser in the
executor recognizes exactly the three forms they describe.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, fields
from string import Template


class TemplateError(Exception):
    """Template missing a required placeholder, or a value missing at render."""


AGENT_RULES = """\
You are one agent inside a larger workflow. Act in steps. In each step reply
with exactly one of:

1. Tool call lines, one per call:
   CALL <tool_key> <json-arguments>
   Example: CALL 127.0.0.1:8900/add {"a": 2, "b": 3}
2. A fenced code block to run Python in the sandbox:
   ```python
   print("hello")
   ```
3. A final answer that ends your run:
   FINAL: <your complete answer>

Results of tool calls and code appear in the next message. Only tools listed
for you are callable. Finish with FINAL: as soon as you have the answer."""


SINGLE_AGENT = """\
Solve the following task completely on your own, using the tools available
to you and sandboxed code where helpful.

Task:
${task_prompt}"""


WORKFLOW_GENERATION = """\
Design a small multi-agent workflow (a DAG) to solve the task below, then
output it as a fenced block tagged `workflow` containing one JSON object:

```workflow
{
  "nodes": [
    {"kind": "agent", "id": "plan", "prompt": "...", "tools": [], "step_budget": 64},
    {"kind": "agent", "id": "solve", "prompt": "...", "tools": ["host:port/name"]}
  ],
  "edges": [["plan", "solve"]]
}
```

Rules:
- node ids are short, unique, lowercase
- edges form a DAG; every tool key must come from the list below
- gate nodes (optional) use {"kind": "gate", "id": ..., "predicate": ...,
  "branch_map": {"true": ..., "false": ...}} and route on prior node status
- keep it minimal: 2-4 nodes is usually right

Available tools:
${tool_listing}

Task:
${task_prompt}"""


WORKFLOW_IMPROVEMENT = """\
You are refining a workflow. Propose exactly ONE edit, as a fenced block
tagged `mutation` containing one JSON object. Allowed kinds:

```mutation
{"kind": "prompt_refine", "target": "<node-id>", "new_prompt": "..."}
```
or {"kind": "add_node", "node": {"kind": "agent", "id": "...", "prompt": "...",
    "tools": []}, "attach_before": ["<id>"], "attach_after": ["<id>"]}
or {"kind": "remove_node", "target": "<node-id>"}
or {"kind": "rewire_edges", "add_edges": [["a","b"]], "remove_edges": [["a","c"]]}

One edit only. The result must stay a DAG. Tool keys must come from the
available tools.

Task:
${task_prompt}

Current workflow:
${workflow_json}

Evaluation feedback on its last run:
${verdict_feedback}

Available tools:
${tool_listing}"""


PLANNING = """\
Decompose the goal below into an ordered list of self-contained tasks. Output
a fenced block tagged `tasks` containing one JSON object:

```tasks
{"tasks": [{"id": "t1", "prompt": "..."}, {"id": "t2", "prompt": "..."}]}
```

Each task prompt must stand alone; later tasks may assume earlier ones are
done. Goal:
${goal_prompt}"""


RUBRIC = """\
Score each criterion from 0.0 to 1.0:
- g (goal alignment): did the execution pursue and address the stated task?
- c (collaboration): did the nodes hand useful work to each other, with
  little redundancy or dropped context?
- q (output quality): is the final output correct, complete, and usable?
- a (plausibility): are claims in the output consistent with the evidence in
  the trace (and the ground truth, when provided)?"""


JUDGE_SYSTEM = """\
You evaluate one recorded execution of a workflow. Be strict, cite evidence,
and output your verdict as a fenced block tagged `verdict` containing one
JSON object:

```verdict
{"g": 0.0, "c": 0.0, "q": 0.0, "a": 0.0,
 "feedback": "what went wrong / right and what to change",
 "evidence": [{"node_id": "solve", "step_index": 0, "excerpt": "..."}]}
```"""


JUDGE = """\
Task given to the workflow:
${task_prompt}

${rubric}

Ground truth (may be empty):
${ground_truth}

Execution trace:
${trace_summary}

Score the execution now. Reply with the ```verdict block."""


def template_identifiers(text: str) -> set[str]:
    """Placeholder names used in a template (3.10-compatible extraction)."""
    names: set[str] = set()
    for match in re.finditer(Template.pattern, text):
        name = match.group("named") or match.group("braced")
        if name:
            names.add(name)
    return names


def render(text: str, values: dict[str, str]) -> str:
    try:
        return Template(text).substitute(values)
    except (KeyError, ValueError) as exc:
        raise TemplateError(f"template render failed: {exc}") from exc


def require_placeholders(text: str, required: tuple[str, ...]) -> None:
    present = template_identifiers(text)
    missing = [name for name in required if name not in present]
    if missing:
        raise TemplateError(f"template lacks required placeholders: {', '.join(missing)}")


@dataclass(frozen=True)
class TemplateSet:
    """The five role templates plus the judge rubric."""

    judge: str = JUDGE
    rubric: str = RUBRIC
    workflow_generation: str = WORKFLOW_GENERATION
    workflow_improvement: str = WORKFLOW_IMPROVEMENT
    planning: str = PLANNING
    single_agent: str = SINGLE_AGENT

    @classmethod
    def default(cls) -> "TemplateSet":
        return cls()

    @classmethod
    def from_dir(cls, path: str) -> "TemplateSet":
        """Built-ins, overridden by any <field>.txt present in path."""
        overrides = {}
        for f in fields(cls):
            candidate = os.path.join(path, f"{f.name}.txt")
            if os.path.isfile(candidate):
                with open(candidate, encoding="utf-8") as fh:
                    overrides[f.name] = fh.read()
        return cls(**overrides)
