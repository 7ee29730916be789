"""flowsmith: an evolving multi-agent workflow engine.

Synthesizes task-specific agent workflows as DAGs, executes them against
dynamically discovered MCP tools, scores each execution with a four-criterion
judge, and refines the workflow by single-incumbent local search.
"""

__version__ = "0.1.0"
