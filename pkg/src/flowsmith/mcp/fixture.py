"""In-process MCP fixture server for tests.

A minimal streamable-HTTP JSON-RPC server advertising three tools:

    echo(text)  -> the text back
    add(a, b)   -> integer sum as text
    fail()      -> isError=true with a failure message

Every request/response pair is captured in a transcript so tests can assert
envelope discipline (jsonrpc field, unique ids, id correlation) and count
network writes. Failure modes are switchable at runtime: malformed_mode
corrupts responses in controlled ways and protocol_version can be overridden
to provoke handshake rejections.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable

from .client import MCP_PATH, PROTOCOL_REVISION, ServerEndpoint


@dataclass(frozen=True)
class FixtureTool:
    name: str
    description: str
    input_schema: dict[str, Any]
    handler: Callable[[dict], tuple[str, bool]]  # args -> (text, is_error)


def default_tools() -> list[FixtureTool]:
    return [
        FixtureTool(
            name="echo",
            description="Return the provided text unchanged.",
            input_schema={
                "type": "object",
                "properties": {"text": {"type": "string"}},
                "required": ["text"],
                "additionalProperties": False,
            },
            handler=lambda args: (str(args["text"]), False),
        ),
        FixtureTool(
            name="add",
            description="Add two integers and return the sum as text.",
            input_schema={
                "type": "object",
                "properties": {"a": {"type": "integer"}, "b": {"type": "integer"}},
                "required": ["a", "b"],
                "additionalProperties": False,
            },
            handler=lambda args: (str(int(args["a"]) + int(args["b"])), False),
        ),
        FixtureTool(
            name="fail",
            description="Always fail, for error-path testing.",
            input_schema={"type": "object", "properties": {}, "additionalProperties": False},
            handler=lambda args: ("deliberate failure", True),
        ),
    ]


class FixtureServer:
    """Lifecycle wrapper around a ThreadingHTTPServer serving MCP."""

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        tools: list[FixtureTool] | None = None,
        name: str = "fixture",
        version: str = "1.0.0",
        protocol_version: str = PROTOCOL_REVISION,
    ):
        self.host = host
        self.name = name
        self.version = version
        self.protocol_version = protocol_version
        self.tools = list(default_tools() if tools is None else tools)
        self.malformed_mode: str | None = None  # missing_jsonrpc | wrong_id | not_json
        self.transcript: list[dict[str, Any]] = []
        self._transcript_lock = threading.Lock()
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None
        self._requested_port = port
        self.port: int | None = None

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> "FixtureServer":
        if self._server is not None:
            return self
        server = ThreadingHTTPServer((self.host, self._requested_port), _Handler)
        server.fixture = self  # type: ignore[attr-defined]
        self._server = server
        self.port = server.server_address[1]
        self._thread = threading.Thread(target=server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is None:
            return
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
        self._server = None
        self._thread = None

    def __enter__(self) -> "FixtureServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()

    @property
    def endpoint(self) -> ServerEndpoint:
        if self.port is None:
            raise RuntimeError("fixture server not started")
        return ServerEndpoint(host=self.host, port=self.port)

    # -- transcript ----------------------------------------------------------

    def record(self, request: Any, response: Any) -> None:
        with self._transcript_lock:
            self.transcript.append({"request": request, "response": response})

    def clear_transcript(self) -> None:
        with self._transcript_lock:
            self.transcript.clear()

    def requests_seen(self) -> list[Any]:
        with self._transcript_lock:
            return [item["request"] for item in self.transcript]

    # -- protocol logic --------------------------------------------------------

    def dispatch(self, body: dict[str, Any]) -> dict[str, Any] | None:
        method = body.get("method")
        request_id = body.get("id")
        if request_id is None:
            return None  # notification: acknowledged, no envelope
        if method == "initialize":
            result: dict[str, Any] = {
                "protocolVersion": self.protocol_version,
                "capabilities": {"tools": {}},
                "serverInfo": {"name": self.name, "version": self.version},
            }
            return {"jsonrpc": "2.0", "id": request_id, "result": result}
        if method == "tools/list":
            listing = [
                {"name": t.name, "description": t.description, "inputSchema": t.input_schema}
                for t in self.tools
            ]
            return {"jsonrpc": "2.0", "id": request_id, "result": {"tools": listing}}
        if method == "tools/call":
            params = body.get("params") or {}
            name = params.get("name")
            tool = next((t for t in self.tools if t.name == name), None)
            if tool is None:
                return _error(request_id, -32602, f"unknown tool {name!r}")
            try:
                text, is_error = tool.handler(params.get("arguments") or {})
            except Exception as exc:  # noqa: BLE001 - surfaced as JSON-RPC fault
                return _error(request_id, -32603, f"tool raised: {exc}")
            result = {"content": [{"type": "text", "text": text}], "isError": is_error}
            return {"jsonrpc": "2.0", "id": request_id, "result": result}
        return _error(request_id, -32601, f"method {method!r} not found")

    def corrupt(self, envelope: dict[str, Any]) -> bytes:
        """Apply the active malformed_mode to an outgoing envelope."""
        if self.malformed_mode == "missing_jsonrpc":
            envelope = {k: v for k, v in envelope.items() if k != "jsonrpc"}
        elif self.malformed_mode == "wrong_id" and "id" in envelope:
            envelope = dict(envelope, id=envelope["id"] + 1000 if isinstance(envelope["id"], int) else -1)
        elif self.malformed_mode == "not_json":
            return b"this is not json"
        return json.dumps(envelope).encode("utf-8")


def _error(request_id: Any, code: int, message: str) -> dict[str, Any]:
    return {"jsonrpc": "2.0", "id": request_id, "error": {"code": code, "message": message}}


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    def do_POST(self):  # noqa: N802 - http.server API
        fixture: FixtureServer = self.server.fixture  # type: ignore[attr-defined]
        if self.path != MCP_PATH:
            self.send_error(404)
            return
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length)
        try:
            body = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            fixture.record({"raw": raw.decode("utf-8", errors="replace")}, None)
            self._reply(400, b'{"error": "bad request"}')
            return
        envelope = fixture.dispatch(body)
        if envelope is None:
            fixture.record(body, None)
            self._reply(202, b"")
            return
        payload = fixture.corrupt(envelope)
        fixture.record(body, envelope if fixture.malformed_mode != "not_json" else payload.decode("utf-8", "replace"))
        self._reply(200, payload)

    def _reply(self, status: int, payload: bytes) -> None:
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        if payload:
            self.wfile.write(payload)
