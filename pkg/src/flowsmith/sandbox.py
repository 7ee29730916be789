"""Isolated execution of model-emitted code snippets.

Code actions run in a child Python process under resource limits: an address
space cap, a wall-clock timeout enforced by the parent, and (by default) no
network — a sitecustomize shim injected via PYTHONPATH replaces socket
construction before the snippet gets control. Output streams are captured and
truncated at a byte cap so a chatty snippet cannot blow up the trace.

Timeouts and memory kills are normal results with nonzero exit metadata, not
exceptions; only a failure to spawn at all raises.
"""

from __future__ import annotations

import os
import subprocess
import sys
import time
from dataclasses import dataclass

NETWORK_GUARD = '''\
"""Injected by the sandbox: refuse socket construction (network: deny)."""
import socket


def _denied(*args, **kwargs):
    raise OSError("network access is disabled in this sandbox")


socket.socket = _denied
socket.create_connection = _denied
socket.socketpair = _denied
'''

GUARD_DIR = ".sandbox-guard"
"""Workspace subdirectory holding the injected sitecustomize module."""


class SandboxError(Exception):
    """Child process could not be spawned at all."""


@dataclass(frozen=True)
class SandboxPolicy:
    """Resource envelope for one snippet execution."""

    wall_time_s: float = 10.0
    memory_mb: int = 512
    network: str = "deny"  # deny | allow
    output_cap_bytes: int = 1_048_576
    workspace_root: str | None = None

    def __post_init__(self):
        if self.wall_time_s <= 0 or self.memory_mb <= 0 or self.output_cap_bytes <= 0:
            raise ValueError("sandbox limits must be positive")
        if self.network not in ("deny", "allow"):
            raise ValueError(f"unknown network mode {self.network!r}")


@dataclass(frozen=True)
class ExecResult:
    stdout: str
    stderr: str
    exit_code: int
    timed_out: bool
    stdout_truncated: bool
    stderr_truncated: bool
    wall_time_s: float


def _truncate(data: bytes, cap: int) -> tuple[str, bool]:
    truncated = len(data) > cap
    return data[:cap].decode("utf-8", errors="replace"), truncated


def _ensure_guard(workspace: str) -> str:
    guard_dir = os.path.join(workspace, GUARD_DIR)
    os.makedirs(guard_dir, exist_ok=True)
    guard_path = os.path.join(guard_dir, "sitecustomize.py")
    if not os.path.exists(guard_path):
        with open(guard_path, "w", encoding="utf-8") as fh:
            fh.write(NETWORK_GUARD)
    return guard_dir


def sandbox_exec(
    code_text: str,
    policy: SandboxPolicy,
    workspace: str | None = None,
    tag: str = "snippet",
) -> ExecResult:
    """Run one Python snippet under the policy inside the workspace."""
    workspace = workspace or policy.workspace_root
    if not workspace or not os.path.isdir(workspace):
        raise SandboxError(f"workspace {workspace!r} does not exist")

    script_path = os.path.join(workspace, f"{tag}.py")
    with open(script_path, "w", encoding="utf-8") as fh:
        fh.write(code_text)

    env = {
        "PATH": os.environ.get("PATH", "/usr/bin:/bin"),
        "HOME": workspace,
        "LANG": os.environ.get("LANG", "C.UTF-8"),
    }
    if policy.network == "deny":
        env["PYTHONPATH"] = _ensure_guard(workspace)

    limit_bytes = policy.memory_mb * 1024 * 1024

    def apply_limits():
        import resource

        resource.setrlimit(resource.RLIMIT_AS, (limit_bytes, limit_bytes))
        resource.setrlimit(resource.RLIMIT_CORE, (0, 0))

    started = time.monotonic()
    try:
        # -s keeps the user site out while still importing sitecustomize,
        # which is how the network guard gets in via PYTHONPATH.
        completed = subprocess.run(
            [sys.executable, "-s", script_path],
            cwd=workspace,
            env=env,
            capture_output=True,
            timeout=policy.wall_time_s,
            preexec_fn=apply_limits,
        )
        elapsed = time.monotonic() - started
        stdout, out_trunc = _truncate(completed.stdout or b"", policy.output_cap_bytes)
        stderr, err_trunc = _truncate(completed.stderr or b"", policy.output_cap_bytes)
        return ExecResult(
            stdout=stdout,
            stderr=stderr,
            exit_code=completed.returncode,
            timed_out=False,
            stdout_truncated=out_trunc,
            stderr_truncated=err_trunc,
            wall_time_s=elapsed,
        )
    except subprocess.TimeoutExpired as exc:
        elapsed = time.monotonic() - started
        stdout, out_trunc = _truncate(exc.stdout or b"", policy.output_cap_bytes)
        stderr, err_trunc = _truncate(exc.stderr or b"", policy.output_cap_bytes)
        return ExecResult(
            stdout=stdout,
            stderr=stderr,
            exit_code=-1,
            timed_out=True,
            stdout_truncated=out_trunc,
            stderr_truncated=err_trunc,
            wall_time_s=elapsed,
        )
    except OSError as exc:
        raise SandboxError(f"failed to spawn sandbox process: {exc}") from exc
