"""MCP tool layer: port-scan discovery, JSON-RPC client, tool registry."""

from .client import (
    DuplicateToolError,
    McpClient,
    ProtocolError,
    Registry,
    ScanReport,
    SchemaError,
    ServerEndpoint,
    ServerInfo,
    ToolCallResult,
    ToolDescriptor,
    ToolError,
    TransportError,
    UnknownTool,
    VersionError,
    build_registry,
    scan_ports,
)

__all__ = [
    "DuplicateToolError",
    "McpClient",
    "ProtocolError",
    "Registry",
    "ScanReport",
    "SchemaError",
    "ServerEndpoint",
    "ServerInfo",
    "ToolCallResult",
    "ToolDescriptor",
    "ToolError",
    "TransportError",
    "UnknownTool",
    "VersionError",
    "build_registry",
    "scan_ports",
]
