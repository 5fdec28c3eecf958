"""Signed JSON wire protocol for consensus traffic.

Frames are 32-bit big-endian length-prefixed JSON objects over TCP on
each peer's raftport.  Every message carries type, term, from, and sig;
blocks travel as base64 of their canonical bytes.  The signature covers
the JSON object minus sig, serialized with sorted keys, so any field
tampering invalidates it.

Senders are fire-and-forget: consensus tolerates loss, so a failed or
slow connection drops messages instead of blocking the core.
"""

from __future__ import annotations

import base64
import json
import socket
import struct
import threading
from collections import deque
from typing import Callable, Optional, Union

from .consensus import (
    AppendEntries,
    AppendResponse,
    LogEntry,
    Message,
    VoteRequest,
    VoteResponse,
)
from .keys import Signer, verify
from .ledger import Transaction, block_from_bytes, transaction_from_bytes

MAX_FRAME_BYTES = 32 * 1024 * 1024
CONNECT_TIMEOUT_S = 2.0
SEND_QUEUE_LIMIT = 256


class WireError(ValueError):
    """A frame failed to decode or authenticate."""


class ForwardTx:
    """Service-level envelope: a non-leader hands client transactions
    to the leader over the consensus transport."""

    def __init__(self, txs: tuple[Transaction, ...]):
        self.txs = tuple(txs)

    def __eq__(self, other):
        return isinstance(other, ForwardTx) and self.txs == other.txs

    def __repr__(self):
        return f"ForwardTx({len(self.txs)} txs)"


WireMessage = Union[Message, ForwardTx]


def _b64(raw: bytes) -> str:
    return base64.b64encode(raw).decode("ascii")


def _unb64(text: str) -> bytes:
    try:
        return base64.b64decode(text, validate=True)
    except (ValueError, TypeError) as exc:
        raise WireError(f"bad base64: {exc}") from exc


def _entry_to_json(entry: LogEntry) -> dict:
    return {"term": entry.term, "block": _b64(entry.block.canonical_bytes())}


def _entry_from_json(row: dict) -> LogEntry:
    try:
        return LogEntry(term=int(row["term"]),
                        block=block_from_bytes(_unb64(row["block"])))
    except (KeyError, TypeError, ValueError) as exc:
        raise WireError(f"bad log entry: {exc}") from exc


def message_to_json(msg: WireMessage, sender: bytes) -> dict:
    body: dict
    if isinstance(msg, VoteRequest):
        body = {
            "type": "vote_request", "term": msg.term,
            "candidate": msg.candidate.hex(),
            "last_height": msg.last_height, "last_term": msg.last_term,
            "last_hash": msg.last_hash.hex(),
        }
    elif isinstance(msg, VoteResponse):
        body = {
            "type": "vote_response", "term": msg.term,
            "voter": msg.voter.hex(), "granted": msg.granted,
        }
    elif isinstance(msg, AppendEntries):
        body = {
            "type": "append_entries", "term": msg.term,
            "leader": msg.leader.hex(),
            "prev_height": msg.prev_height, "prev_hash": msg.prev_hash.hex(),
            "entries": [_entry_to_json(e) for e in msg.entries],
            "leader_commit": msg.leader_commit,
        }
    elif isinstance(msg, AppendResponse):
        body = {
            "type": "append_response", "term": msg.term,
            "follower": msg.follower.hex(), "success": msg.success,
            "match_height": msg.match_height,
        }
    elif isinstance(msg, ForwardTx):
        body = {
            "type": "forward_tx", "term": 0,
            "txs": [_b64(tx.canonical_bytes()) for tx in msg.txs],
        }
    else:
        raise WireError(f"unsendable message {type(msg).__name__}")
    body["from"] = sender.hex()
    return body


def signing_bytes(body: dict) -> bytes:
    unsigned = {k: v for k, v in body.items() if k != "sig"}
    return json.dumps(unsigned, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")


def encode_message(msg: WireMessage, signer: Signer) -> bytes:
    body = message_to_json(msg, signer.pubkey)
    body["sig"] = signer.sign(signing_bytes(body)).hex()
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")


def decode_message(raw: bytes) -> tuple[WireMessage, bytes]:
    """Parse and authenticate one frame; returns (message, sender pubkey)."""
    try:
        body = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WireError(f"frame is not JSON: {exc}") from exc
    if not isinstance(body, dict):
        raise WireError("frame is not a JSON object")
    for field in ("type", "term", "from", "sig"):
        if field not in body:
            raise WireError(f"missing field {field!r}")
    try:
        sender = bytes.fromhex(body["from"])
        sig = bytes.fromhex(body["sig"])
    except ValueError as exc:
        raise WireError(f"bad hex field: {exc}") from exc
    if not verify(sender, sig, signing_bytes(body)):
        raise WireError("message signature does not verify")
    try:
        msg = _parse_body(body)
    except (KeyError, TypeError, ValueError) as exc:
        raise WireError(f"malformed {body.get('type')}: {exc}") from exc
    return msg, sender


def _parse_body(body: dict) -> WireMessage:
    kind = body["type"]
    term = int(body["term"])
    if kind == "vote_request":
        return VoteRequest(
            term=term, candidate=bytes.fromhex(body["candidate"]),
            last_height=int(body["last_height"]),
            last_term=int(body["last_term"]),
            last_hash=bytes.fromhex(body["last_hash"]))
    if kind == "vote_response":
        return VoteResponse(term=term, voter=bytes.fromhex(body["voter"]),
                            granted=bool(body["granted"]))
    if kind == "append_entries":
        return AppendEntries(
            term=term, leader=bytes.fromhex(body["leader"]),
            prev_height=int(body["prev_height"]),
            prev_hash=bytes.fromhex(body["prev_hash"]),
            entries=tuple(_entry_from_json(e) for e in body["entries"]),
            leader_commit=int(body["leader_commit"]))
    if kind == "append_response":
        return AppendResponse(
            term=term, follower=bytes.fromhex(body["follower"]),
            success=bool(body["success"]),
            match_height=int(body["match_height"]))
    if kind == "forward_tx":
        return ForwardTx(
            txs=tuple(transaction_from_bytes(_unb64(t))
                      for t in body["txs"]))
    raise WireError(f"unknown message type {kind!r}")


# -- framing ---------------------------------------------------------------------


def write_frame(sock: socket.socket, payload: bytes) -> None:
    if len(payload) > MAX_FRAME_BYTES:
        raise WireError(f"frame of {len(payload)} bytes exceeds cap")
    sock.sendall(struct.pack(">I", len(payload)) + payload)


def read_frame(sock: socket.socket) -> Optional[bytes]:
    """Read one frame; None on clean EOF at a frame boundary."""
    header = _read_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME_BYTES:
        raise WireError(f"frame of {length} bytes exceeds cap")
    payload = _read_exact(sock, length)
    if payload is None:
        raise WireError("connection closed before frame payload")
    return payload


def _read_exact(sock: socket.socket, n: int) -> Optional[bytes]:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if buf:
                raise WireError("connection closed mid-frame")
            return None
        buf += chunk
    return bytes(buf)


# -- peer connections ---------------------------------------------------------------


class PeerSender:
    """One outbound connection worker per peer.

    send() never blocks the caller: frames go onto a bounded queue and a
    worker thread owns the socket.  When the queue is full the oldest
    frame is discarded, which is safe because every consensus message is
    superseded by a later one.
    """

    def __init__(self, address: tuple[str, int]):
        self.address = address
        self._queue: deque[bytes] = deque()
        self._cond = threading.Condition()
        self._sock: Optional[socket.socket] = None
        self._closed = False
        self._thread = threading.Thread(
            target=self._run, name=f"peer-send-{address[0]}:{address[1]}",
            daemon=True)
        self._thread.start()

    def send(self, frame: bytes) -> None:
        with self._cond:
            if self._closed:
                return
            if len(self._queue) >= SEND_QUEUE_LIMIT:
                self._queue.popleft()
            self._queue.append(frame)
            self._cond.notify()

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify()

    def _run(self) -> None:
        while True:
            with self._cond:
                while not self._queue and not self._closed:
                    self._cond.wait()
                if self._closed:
                    break
                frame = self._queue.popleft()
            try:
                if self._sock is None:
                    self._sock = socket.create_connection(
                        self.address, timeout=CONNECT_TIMEOUT_S)
                write_frame(self._sock, frame)
            except OSError:
                if self._sock is not None:
                    try:
                        self._sock.close()
                    except OSError:
                        pass
                    self._sock = None
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass


class RaftTransport:
    """Listener plus a sender pool, delivering decoded messages upward.

    deliver(msg, sender) runs on listener threads; the node runtime
    bridges it into its single consensus queue.
    """

    def __init__(self, signer: Signer, listen: tuple[str, int],
                 deliver: Callable[[WireMessage, bytes], None]):
        self._signer = signer
        self._deliver = deliver
        self._senders: dict[bytes, PeerSender] = {}
        self._lock = threading.Lock()
        self._closed = False
        self._server = socket.create_server(listen, reuse_port=False)
        self._server.settimeout(0.5)
        self.listen_address = self._server.getsockname()
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name="raft-accept", daemon=True)
        self._accept_thread.start()

    def send(self, pubkey: bytes, address: tuple[str, int],
             msg: WireMessage) -> None:
        frame = encode_message(msg, self._signer)
        with self._lock:
            if self._closed:
                return
            sender = self._senders.get(pubkey)
            if sender is None or sender.address != address:
                if sender is not None:
                    sender.close()
                sender = PeerSender(address)
                self._senders[pubkey] = sender
        sender.send(frame)

    def close(self) -> None:
        with self._lock:
            if self._closed:
                return
            self._closed = True
            senders = list(self._senders.values())
        for sender in senders:
            sender.close()
        try:
            self._server.close()
        except OSError:
            pass
        # a thread parked in accept() pins the listening port until it
        # wakes; join so the port is reusable once close() returns
        if threading.current_thread() is not self._accept_thread:
            self._accept_thread.join(timeout=2.0)

    def _accept_loop(self) -> None:
        while not self._closed:
            try:
                conn, _ = self._server.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            threading.Thread(target=self._read_loop, args=(conn,),
                             name="raft-read", daemon=True).start()

    def _read_loop(self, conn: socket.socket) -> None:
        conn.settimeout(None)
        try:
            while not self._closed:
                frame = read_frame(conn)
                if frame is None:
                    break
                try:
                    msg, sender = decode_message(frame)
                except WireError:
                    continue  # unauthenticated or malformed: ignore
                self._deliver(msg, sender)
        except (OSError, WireError):
            pass
        finally:
            try:
                conn.close()
            except OSError:
                pass
