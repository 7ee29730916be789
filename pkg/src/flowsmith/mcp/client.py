"""JSON-RPC 2.0 client for MCP servers over streamable HTTP.

Discovery is a bounded-parallelism port scan: every port that completes the
initialize handshake within the timeout becomes an endpoint. Tool schemas are
cached per endpoint and arguments are validated client-side before anything
touches the network, so a schema-invalid call costs zero writes.

Envelope discipline: every request carries a process-unique id; a response
must echo it back or the exchange is rejected as a protocol violation.
"""

from __future__ import annotations

import itertools
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from types import MappingProxyType
from typing import Any

import jsonschema
import requests

PROTOCOL_REVISION = "2025-03-26"
"""Protocol revision sent in the initialize handshake."""

SUPPORTED_REVISIONS = frozenset({"2025-03-26", "2024-11-05"})
"""Server revisions this client accepts in the handshake response."""

MCP_PATH = "/mcp"
DEFAULT_TIMEOUT_S = 5.0
DEFAULT_SCAN_TIMEOUT_S = 0.2
DEFAULT_SCAN_PARALLELISM = 16


class TransportError(Exception):
    """Could not reach the server or complete the HTTP exchange."""


class ProtocolError(Exception):
    """The server spoke, but not valid JSON-RPC / MCP."""


class VersionError(Exception):
    """Server protocol revision is not one this client supports."""


class SchemaError(Exception):
    """Tool arguments rejected client-side against the tool's input schema."""


class DuplicateToolError(Exception):
    """One server advertised the same tool name twice."""


class ToolError(Exception):
    """tools/call failed at the JSON-RPC level (e.g. unknown tool name)."""


class UnknownTool(Exception):
    """Requested tool key or name is not in the registry / server listing."""


@dataclass(frozen=True)
class ServerEndpoint:
    host: str
    port: int
    transport: str = "streamable-http"

    def __post_init__(self):
        if not self.host:
            raise ValueError("endpoint host is empty")
        if not 1 <= self.port <= 65535:
            raise ValueError(f"port {self.port} out of range")
        if self.transport != "streamable-http":
            raise ValueError(f"unsupported transport {self.transport!r}")

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}{MCP_PATH}"

    @property
    def key(self) -> str:
        return f"{self.host}:{self.port}"


@dataclass(frozen=True)
class ServerInfo:
    name: str
    version: str
    protocol_version: str
    capabilities: Any  # mapping, read-only


@dataclass(frozen=True)
class ToolDescriptor:
    server: ServerEndpoint
    name: str
    description: str
    input_schema: Any  # JSON schema document, preserved verbatim
    tool_key: str


@dataclass(frozen=True)
class ContentItem:
    type: str
    text: str = ""


@dataclass(frozen=True)
class ToolCallResult:
    content: tuple[ContentItem, ...]
    is_error: bool
    latency_s: float

    def text(self) -> str:
        return "\n".join(item.text for item in self.content if item.type == "text")


@dataclass(frozen=True)
class Registry:
    """Immutable union of every discovered server's tools, keyed by
    host:port/name so cross-server name collisions stay distinct."""

    tools: Any  # mapping tool_key -> ToolDescriptor
    discovered_at: float = 0.0

    def __post_init__(self):
        ordered = dict(sorted(dict(self.tools).items()))
        object.__setattr__(self, "tools", MappingProxyType(ordered))

    def keys(self) -> tuple[str, ...]:
        return tuple(self.tools)

    def lookup(self, tool_key: str) -> ToolDescriptor:
        try:
            return self.tools[tool_key]
        except KeyError:
            raise UnknownTool(f"tool {tool_key!r} not in registry") from None

    def __len__(self) -> int:
        return len(self.tools)

    def __contains__(self, tool_key: str) -> bool:
        return tool_key in self.tools


@dataclass(frozen=True)
class ScanReport:
    """Outcome of a port scan: live endpoints plus a failure tally."""

    endpoints: tuple[ServerEndpoint, ...]
    probed: int
    failures: int


class _RpcFault(Exception):
    """Internal: JSON-RPC error object returned by the server."""

    def __init__(self, code: int, message: str):
        super().__init__(f"JSON-RPC error {code}: {message}")
        self.code = code
        self.rpc_message = message


class McpClient:
    """Shared client handle. Concurrent calls to distinct endpoints are fine;
    calls to one endpoint serialize on a per-endpoint lock."""

    def __init__(self, timeout_s: float = DEFAULT_TIMEOUT_S):
        self.timeout_s = timeout_s
        self._ids = itertools.count(1)
        self._id_lock = threading.Lock()
        self._guard = threading.Lock()
        self._endpoint_locks: dict[str, threading.Lock] = {}
        self._schemas: dict[str, dict[str, Any]] = {}

    def _next_id(self) -> int:
        with self._id_lock:
            return next(self._ids)

    def _lock_for(self, endpoint: ServerEndpoint) -> threading.Lock:
        with self._guard:
            return self._endpoint_locks.setdefault(endpoint.key, threading.Lock())

    def _post(self, endpoint: ServerEndpoint, body: dict, timeout_s: float | None) -> requests.Response:
        try:
            return requests.post(
                endpoint.url,
                data=json.dumps(body).encode("utf-8"),
                headers={
                    "Content-Type": "application/json",
                    "Accept": "application/json, text/event-stream",
                },
                timeout=timeout_s or self.timeout_s,
            )
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransportError(f"{endpoint.key}: {exc.__class__.__name__}") from exc

    def _rpc(self, endpoint: ServerEndpoint, method: str, params: dict, timeout_s: float | None = None) -> dict:
        request_id = self._next_id()
        body = {"jsonrpc": "2.0", "id": request_id, "method": method, "params": params}
        with self._lock_for(endpoint):
            response = self._post(endpoint, body, timeout_s)
        if response.status_code != 200:
            raise TransportError(f"{endpoint.key}: HTTP {response.status_code} for {method}")
        try:
            raw = response.json()
        except ValueError as exc:
            raise ProtocolError(f"{endpoint.key}: non-JSON response to {method}") from exc
        if not isinstance(raw, dict) or raw.get("jsonrpc") != "2.0":
            raise ProtocolError(f"{endpoint.key}: response missing jsonrpc envelope")
        if raw.get("id") != request_id:
            raise ProtocolError(f"{endpoint.key}: response id {raw.get('id')!r} does not match request id {request_id}")
        if "error" in raw:
            error = raw["error"]
            if not isinstance(error, dict) or "code" not in error or "message" not in error:
                raise ProtocolError(f"{endpoint.key}: malformed error object")
            raise _RpcFault(int(error["code"]), str(error["message"]))
        result = raw.get("result")
        if not isinstance(result, dict):
            raise ProtocolError(f"{endpoint.key}: response has no result object")
        return result

    def _notify(self, endpoint: ServerEndpoint, method: str, timeout_s: float | None = None) -> None:
        body = {"jsonrpc": "2.0", "method": method}
        with self._lock_for(endpoint):
            response = self._post(endpoint, body, timeout_s)
        if response.status_code not in (200, 202):
            raise TransportError(f"{endpoint.key}: HTTP {response.status_code} for {method}")

    # -- protocol operations ----------------------------------------------------

    def initialize(self, endpoint: ServerEndpoint, timeout_s: float | None = None) -> ServerInfo:
        params = {
            "protocolVersion": PROTOCOL_REVISION,
            "capabilities": {"tools": {}},
            "clientInfo": {"name": "flowsmith", "version": "0.1.0"},
        }
        try:
            result = self._rpc(endpoint, "initialize", params, timeout_s)
        except _RpcFault as exc:
            raise ProtocolError(f"{endpoint.key}: initialize rejected: {exc}") from exc
        revision = result.get("protocolVersion")
        if revision not in SUPPORTED_REVISIONS:
            raise VersionError(f"{endpoint.key}: unsupported protocol revision {revision!r}")
        server_info = result.get("serverInfo")
        if not isinstance(server_info, dict) or "name" not in server_info:
            raise ProtocolError(f"{endpoint.key}: initialize result lacks serverInfo")
        self._notify(endpoint, "notifications/initialized", timeout_s)
        return ServerInfo(
            name=str(server_info["name"]),
            version=str(server_info.get("version", "")),
            protocol_version=str(revision),
            capabilities=MappingProxyType(dict(result.get("capabilities") or {})),
        )

    def list_tools(self, endpoint: ServerEndpoint) -> list[ToolDescriptor]:
        try:
            result = self._rpc(endpoint, "tools/list", {})
        except _RpcFault as exc:
            raise ProtocolError(f"{endpoint.key}: tools/list rejected: {exc}") from exc
        raw_tools = result.get("tools")
        if not isinstance(raw_tools, list):
            raise ProtocolError(f"{endpoint.key}: tools/list result lacks tools array")
        descriptors: list[ToolDescriptor] = []
        seen: set[str] = set()
        schemas: dict[str, Any] = {}
        for raw in raw_tools:
            if not isinstance(raw, dict) or not raw.get("name"):
                raise ProtocolError(f"{endpoint.key}: tool entry missing name")
            name = str(raw["name"])
            if name in seen:
                raise DuplicateToolError(f"{endpoint.key}: tool {name!r} advertised twice")
            seen.add(name)
            schema = raw.get("inputSchema") or {"type": "object"}
            schemas[name] = schema
            descriptors.append(
                ToolDescriptor(
                    server=endpoint,
                    name=name,
                    description=str(raw.get("description", "")),
                    input_schema=schema,
                    tool_key=f"{endpoint.key}/{name}",
                )
            )
        with self._guard:
            self._schemas[endpoint.key] = schemas
        descriptors.sort(key=lambda d: d.name)
        return descriptors

    def call_tool(self, endpoint: ServerEndpoint, name: str, args: dict) -> ToolCallResult:
        with self._guard:
            schemas = self._schemas.get(endpoint.key)
        if schemas is None:
            self.list_tools(endpoint)
            with self._guard:
                schemas = self._schemas.get(endpoint.key, {})
        if name not in schemas:
            raise UnknownTool(f"{endpoint.key} does not advertise tool {name!r}")
        try:
            jsonschema.validate(instance=args, schema=schemas[name])
        except jsonschema.ValidationError as exc:
            raise SchemaError(f"arguments rejected for {name!r}: {exc.message}") from exc
        started = time.monotonic()
        try:
            result = self._rpc(endpoint, "tools/call", {"name": name, "arguments": args})
        except _RpcFault as exc:
            raise ToolError(str(exc)) from exc
        latency = time.monotonic() - started
        raw_content = result.get("content")
        if not isinstance(raw_content, list):
            raise ProtocolError(f"{endpoint.key}: tools/call result lacks content array")
        content = tuple(
            ContentItem(type=str(item.get("type", "text")), text=str(item.get("text", "")))
            for item in raw_content
            if isinstance(item, dict)
        )
        is_error = bool(result.get("isError", False))
        if not is_error and not content:
            raise ProtocolError(f"{endpoint.key}: successful tools/call returned no content")
        return ToolCallResult(content=content, is_error=is_error, latency_s=latency)


def scan_ports(
    host: str,
    port_range: range,
    timeout_s: float = DEFAULT_SCAN_TIMEOUT_S,
    parallelism: int = DEFAULT_SCAN_PARALLELISM,
    client: McpClient | None = None,
) -> ScanReport:
    """Probe every port in the range with the initialize handshake.

    Ports that fail for any reason are counted, not raised; endpoints come
    back in ascending port order.
    """
    if timeout_s <= 0:
        raise ValueError("timeout_s must be positive")
    ports = list(port_range)
    if not ports:
        return ScanReport(endpoints=(), probed=0, failures=0)
    client = client or McpClient()

    def probe(port: int) -> ServerEndpoint | None:
        endpoint = ServerEndpoint(host=host, port=port)
        try:
            client.initialize(endpoint, timeout_s=timeout_s)
        except (TransportError, ProtocolError, VersionError):
            return None
        return endpoint

    with ThreadPoolExecutor(max_workers=max(1, min(parallelism, len(ports)))) as pool:
        results = list(pool.map(probe, ports))
    endpoints = tuple(sorted((e for e in results if e is not None), key=lambda e: e.port))
    return ScanReport(endpoints=endpoints, probed=len(ports), failures=len(ports) - len(endpoints))


def build_registry(client: McpClient, endpoints: list[ServerEndpoint] | tuple[ServerEndpoint, ...]) -> Registry:
    """Aggregate every endpoint's tool listing into one immutable registry."""
    tools: dict[str, ToolDescriptor] = {}
    for endpoint in sorted(endpoints, key=lambda e: (e.host, e.port)):
        for descriptor in client.list_tools(endpoint):
            tools[descriptor.tool_key] = descriptor
    return Registry(tools=tools, discovered_at=time.time())
