"""Node identities and the shared static-nodes membership file.

Every peer is named by a URI of the form
``rnode://<64-hex-pubkey>@<host>:<port>?raftport=<port>`` where the query
port carries consensus traffic. The file is a JSON array of these URIs and
must round-trip bit-exactly through parse/render.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

_URI_RE = re.compile(
    r"^rnode://(?P<pub>[0-9a-f]{64})@(?P<host>[^@:/?#\s]+):(?P<port>\d{1,5})"
    r"\?raftport=(?P<raftport>\d{1,5})$"
)


class MembershipError(ValueError):
    pass


@dataclass(frozen=True)
class NodeId:
    pubkey: bytes
    host: str
    port: int
    raftport: int

    def __post_init__(self):
        if len(self.pubkey) != 32:
            raise MembershipError("pubkey must be 32 bytes")
        if not self.host or _URI_RE.match(self.render()) is None:
            raise MembershipError(f"unrenderable node identity: {self!r}")

    def render(self) -> str:
        return (
            f"rnode://{self.pubkey.hex()}@{self.host}:{self.port}"
            f"?raftport={self.raftport}"
        )

    @property
    def api_address(self) -> tuple[str, int]:
        return (self.host, self.port)

    @property
    def raft_address(self) -> tuple[str, int]:
        return (self.host, self.raftport)


def parse_node_uri(uri: str) -> NodeId:
    m = _URI_RE.match(uri)
    if m is None:
        raise MembershipError(f"malformed node URI: {uri!r}")
    port = int(m.group("port"))
    raftport = int(m.group("raftport"))
    for p in (port, raftport):
        if not 1 <= p <= 65535:
            raise MembershipError(f"port out of range in {uri!r}")
    return NodeId(
        pubkey=bytes.fromhex(m.group("pub")),
        host=m.group("host"),
        port=port,
        raftport=raftport,
    )


def render_static_nodes(nodes: list[NodeId]) -> str:
    return json.dumps([n.render() for n in nodes], indent=2) + "\n"


def parse_static_nodes(text: str) -> list[NodeId]:
    try:
        entries = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MembershipError(f"static-nodes file is not JSON: {exc}") from exc
    if not isinstance(entries, list) or not all(isinstance(e, str) for e in entries):
        raise MembershipError("static-nodes file must be a JSON array of strings")
    nodes = [parse_node_uri(e) for e in entries]
    seen: set[bytes] = set()
    for node in nodes:
        if node.pubkey in seen:
            raise MembershipError(f"duplicate pubkey {node.pubkey.hex()}")
        seen.add(node.pubkey)
    return nodes


def load_static_nodes(path: str | Path) -> list[NodeId]:
    return parse_static_nodes(Path(path).read_text())


def save_static_nodes(nodes: list[NodeId], path: str | Path) -> None:
    Path(path).write_text(render_static_nodes(nodes))
