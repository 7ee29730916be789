"""Command-line entry points.

Exit codes:
  0  command completed (a degraded run still completed);
  2  configuration or usage problem (argparse errors land here too);
  3  provider or tool-server transport failure;
  4  unparseable artifact (trace, log, or model output that never recovered).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .archive import Archive, NotFound
from .blocks import BlockError
from .config import AppConfig, build_price_table, build_provider, load_config
from .judge import VerdictParseError
from .mcp.client import (
    McpClient,
    ProtocolError,
    Registry,
    TransportError,
    VersionError,
    build_registry,
    scan_ports,
)
from .orchestrator import (
    MODES,
    MutationExhausted,
    PlanParseError,
    RunConfig,
    RunDeps,
    SynthesisError,
    Task,
    evolve,
    run_one_shot,
    run_single_agent,
)
from .provider import BackendError, ConfigError, cost
from .stats import LogFormatError, compute_stats, extract_gains_from_paths, load_log, usage_by_model
from .workflow import ParseError

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROVIDER = 3
EXIT_PARSE = 4


def _discover_tools(app: AppConfig) -> tuple[McpClient, Registry]:
    client = McpClient()
    report = scan_ports(
        app.mcp.host,
        range(app.mcp.port_low, app.mcp.port_high),
        timeout_s=app.mcp.timeout_s,
        parallelism=app.mcp.parallelism,
        client=client,
    )
    registry = build_registry(client, report.endpoints)
    log.info(
        "tool discovery: %d ports probed, %d servers, %d tools",
        report.probed,
        len(report.endpoints),
        len(registry),
    )
    return client, registry


def _deps_for(app: AppConfig, run_id: str) -> RunDeps:
    provider = build_provider(app.provider)
    client, registry = _discover_tools(app)
    return RunDeps(
        provider=provider,
        registry=registry,
        archive=Archive(app.archive_dir),
        client=client,
        sandbox_policy=app.sandbox,
        run_id=run_id,
    )


def cmd_run(args: argparse.Namespace) -> int:
    app = load_config(args.config)
    deps = _deps_for(app, args.run_id)
    task = Task(id=args.task_id, prompt=args.task, mode=args.mode, workspace=app.workspace)
    config: RunConfig = app.run
    log_path = args.log or f"{app.workspace}/{args.run_id}-log.jsonl"

    if args.mode == "iterative":
        result = evolve(task, config, deps, log_path=log_path)
        terminal = result.records[-1]
        print(
            f"run {args.run_id}: {terminal['reason']} after {terminal['iterations']} "
            f"refinement iteration(s); incumbent {result.incumbent.workflow.id} "
            f"overall={result.incumbent.verdict.overall}"
        )
    elif args.mode == "one_shot":
        trace, verdict = run_one_shot(task, config, deps, log_path=log_path)
        print(
            f"run {args.run_id}: one shot, workflow {trace.workflow_id} "
            f"status={trace.overall_status} overall={verdict.overall}"
        )
    else:
        trace, verdict = run_single_agent(task, config, deps, log_path=log_path)
        print(
            f"run {args.run_id}: single agent, status={trace.overall_status} "
            f"overall={verdict.overall}"
        )
    print(f"log: {log_path}")
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    from .executor import load_trace

    trace = load_trace(args.trace)
    print(f"trace {trace.run_id}: workflow {trace.workflow_id} [{trace.overall_status}]")
    for result in trace.node_results:
        print(f"  node {result.node_id}: {result.status}, {len(result.steps)} step(s)")
        if args.verbose and result.final_output:
            preview = result.final_output.replace("\n", " ")
            print(f"    final: {preview[:160]}")
    total_in = sum(u.input_tokens for u in trace.total_usage)
    total_out = sum(u.output_tokens for u in trace.total_usage)
    print(f"  usage: {total_in} in / {total_out} out across {len(trace.total_usage)} model ref(s)")
    return EXIT_OK


def cmd_archive(args: argparse.Namespace) -> int:
    app = load_config(args.config)
    archive = Archive(app.archive_dir)
    if args.archive_cmd == "list":
        entries = archive.entries()
        if not entries:
            print("archive is empty")
            return EXIT_OK
        for stored in entries:
            snippet = stored.task_prompt.replace("\n", " ")[:60]
            print(
                f"{stored.record_id}  score={stored.score:.4f}  run={stored.run_id}  "
                f"{stored.workflow_id}  {snippet!r}"
            )
        return EXIT_OK
    if args.archive_cmd == "lineage":
        try:
            chain = archive.lineage(args.workflow_id)
        except NotFound as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for workflow_id in chain:
            print(workflow_id)
        return EXIT_OK
    # query
    provider = build_provider(app.provider)
    embedding = provider.embed(args.prompt)
    result = archive.retrieve(embedding, epsilon=app.run.epsilon)
    if result.entry is None:
        print(f"no entry above similarity {app.run.epsilon} ({result.candidates_considered} considered)")
        return EXIT_OK
    print(
        f"{result.entry.workflow.id}  similarity={result.similarity:.4f}  "
        f"score={result.entry.score:.4f}  run={result.entry.run_id}"
    )
    return EXIT_OK


def cmd_tools(args: argparse.Namespace) -> int:
    app = load_config(args.config)
    client, registry = _discover_tools(app)
    if not len(registry):
        print("no tool servers found")
        return EXIT_OK
    for key in registry.keys():
        descriptor = registry.lookup(key)
        print(f"{key}: {descriptor.description or '(no description)'}")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    samples = extract_gains_from_paths(args.logs)
    if not samples:
        print("no gain samples in the given logs", file=sys.stderr)
        return EXIT_CONFIG
    gains = [s.gain for s in samples]
    stats = compute_stats(gains, seed=args.seed)
    accepted = sum(1 for s in samples if s.accepted)
    print(
        "# ci: bootstrap percentile, 10000 resamples, default_rng(seed); "
        "p: sign-flip permutation, 10000 draws, default_rng(seed+1), "
        "two-sided on |mean|, add-one smoothed"
    )
    print(
        f"n={stats.n} accepted={accepted} mean={stats.mean:.6f} sem={stats.sem:.6f} "
        f"ci95=[{stats.ci_low:.6f}, {stats.ci_high:.6f}] d={stats.cohens_d:.4f} "
        f"p={stats.p_value:.6f}"
    )
    if args.per_model:
        totals: dict[str, dict] = {}
        for path in args.logs:
            for ref, usage in usage_by_model(load_log(path)).items():
                slot = totals.setdefault(
                    ref, {"input_tokens": 0, "output_tokens": 0, "estimated": False}
                )
                slot["input_tokens"] += usage["input_tokens"]
                slot["output_tokens"] += usage["output_tokens"]
                slot["estimated"] = slot["estimated"] or usage["estimated"]
        prices = {}
        if args.config:
            prices = load_config(args.config).prices
        table = build_price_table(prices) if prices else None
        from .provider import UsageRecord

        for ref in sorted(totals):
            usage = totals[ref]
            line = (
                f"{ref}: {usage['input_tokens']} in / {usage['output_tokens']} out"
                f"{' (estimated)' if usage['estimated'] else ''}"
            )
            if table is not None and ref in table.prices:
                record = UsageRecord(
                    input_tokens=usage["input_tokens"],
                    output_tokens=usage["output_tokens"],
                    model_ref=ref,
                    estimated=usage["estimated"],
                )
                line += f"  ${cost([record], table):.6f}"
            print(line)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowsmith", description="Evolve multi-agent workflows.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one task")
    p_run.add_argument("--task", required=True, help="task prompt text")
    p_run.add_argument("--task-id", default="task-1")
    p_run.add_argument("--mode", choices=MODES, default="iterative")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--run-id", default="run")
    p_run.add_argument("--log", default="", help="evolution log path (default: workspace)")
    p_run.set_defaults(func=cmd_run)

    p_inspect = sub.add_parser("inspect", help="summarize a saved trace")
    p_inspect.add_argument("trace")
    p_inspect.set_defaults(func=cmd_inspect)

    p_archive = sub.add_parser("archive", help="inspect the workflow archive")
    archive_sub = p_archive.add_subparsers(dest="archive_cmd", required=True)
    a_list = archive_sub.add_parser("list")
    a_list.add_argument("--config", required=True)
    a_list.set_defaults(func=cmd_archive)
    a_query = archive_sub.add_parser("query")
    a_query.add_argument("--config", required=True)
    a_query.add_argument("--prompt", required=True)
    a_query.set_defaults(func=cmd_archive)
    a_lineage = archive_sub.add_parser("lineage")
    a_lineage.add_argument("--config", required=True)
    a_lineage.add_argument("workflow_id")
    a_lineage.set_defaults(func=cmd_archive)

    p_tools = sub.add_parser("tools", help="scan for tool servers")
    p_tools.add_argument("--config", required=True)
    p_tools.set_defaults(func=cmd_tools)

    p_stats = sub.add_parser("stats", help="summarize gains across evolution logs")
    p_stats.add_argument("logs", nargs="+")
    p_stats.add_argument("--seed", type=int, required=True)
    p_stats.add_argument("--per-model", action="store_true")
    p_stats.add_argument("--config", default="", help="config supplying prices for --per-model")
    p_stats.set_defaults(func=cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BackendError, TransportError, ProtocolError, VersionError) as exc:
        print(f"provider/transport error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (
        ParseError,
        LogFormatError,
        BlockError,
        VerdictParseError,
        SynthesisError,
        MutationExhausted,
        PlanParseError,
        json.JSONDecodeError,
    ) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
