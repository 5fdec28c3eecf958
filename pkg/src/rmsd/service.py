"""Node runtime: one consensus loop thread plus durable state.

All RaftCore interaction happens on a single loop thread fed by a
queue; network listeners and HTTP handlers enqueue work and wait on the
reply.  Reads never enter the loop: every commit publishes an immutable
snapshot of the committed state that handler threads use lock-free.

Data directory layout:
    node.key / node.pub        consensus identity
    service.key / service.pub  account that signs anonymous applications
    genesis.json               genesis block, canonical bytes in base64
    genesis-nodes.json         membership baseline the chain builds on
    static-nodes.json          current rendering, rewritten on commits
    chain.jsonl                log entries, one {"term", "block"} per line
    raft-meta.json             term, vote, commit height
    personal.db                off-chain personal records
    personal-access.log        audit trail for personal data access
"""

from __future__ import annotations

import base64
import json
import os
import queue
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from .consensus import CoreStorage, LogEntry, Outputs, RaftCore
from .contract import ContractState
from .keys import Signer, save_pubkey
from .ledger import (
    Block,
    Transaction,
    TxRejected,
    block_from_bytes,
    make_genesis,
    verify_transaction,
)
from .membership import NodeId, load_static_nodes, save_static_nodes
from .payloads import Role
from .privacy import PersonalStore
from .transport import ForwardTx, RaftTransport, WireMessage

RECEIPT_PENDING = "pending"
RECEIPT_COMMITTED = "committed"
RECEIPT_REJECTED = "rejected"

RESUBMIT_MS = 1200
DIAGNOSE_MS = 2500
SWEEP_MS = 400
LEADER_WAIT_MS = 4000

CODE_NO_QUORUM = "no_quorum"


class NoQuorumError(Exception):
    """The cluster had no reachable leader within the wait budget."""


class NodePaths:
    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.node_key = self.data_dir / "node.key"
        self.node_pub = self.data_dir / "node.pub"
        self.service_key = self.data_dir / "service.key"
        self.service_pub = self.data_dir / "service.pub"
        self.genesis = self.data_dir / "genesis.json"
        self.genesis_nodes = self.data_dir / "genesis-nodes.json"
        self.static_nodes = self.data_dir / "static-nodes.json"
        self.chain = self.data_dir / "chain.jsonl"
        self.meta = self.data_dir / "raft-meta.json"
        self.personal_db = self.data_dir / "personal.db"
        self.personal_audit = self.data_dir / "personal-access.log"


def _write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def save_genesis(path: Path, block: Block) -> None:
    payload = {"block": base64.b64encode(block.canonical_bytes()).decode()}
    _write_atomic(path, (json.dumps(payload) + "\n").encode())


def load_genesis(path: Path) -> Block:
    payload = json.loads(path.read_text())
    return block_from_bytes(base64.b64decode(payload["block"]))


class FileStorage(CoreStorage):
    """Durable log and vote state under the data dir.

    Entries are fsynced before the core acts on them, so an acknowledged
    vote or append survives a crash; truncation rewrites the whole file,
    which stays cheap because conflicts can only touch the short
    uncommitted suffix.
    """

    def __init__(self, paths: NodePaths):
        self._paths = paths
        self._chain_fh = open(paths.chain, "ab")

    @staticmethod
    def entry_line(entry: LogEntry) -> bytes:
        row = {"term": entry.term,
               "block": base64.b64encode(entry.block.canonical_bytes()).decode()}
        return (json.dumps(row, sort_keys=True) + "\n").encode()

    def append_entry(self, entry: LogEntry) -> None:
        self._chain_fh.write(self.entry_line(entry))
        self._chain_fh.flush()
        os.fsync(self._chain_fh.fileno())

    def truncate(self, height: int) -> None:
        entries = load_entries(self._paths.chain)[:height]
        self._chain_fh.close()
        _write_atomic(self._paths.chain,
                      b"".join(self.entry_line(e) for e in entries))
        self._chain_fh = open(self._paths.chain, "ab")

    def save_meta(self, term: int, voted_for: Optional[bytes],
                  commit_height: int) -> None:
        row = {"term": term,
               "voted_for": voted_for.hex() if voted_for else None,
               "commit_height": commit_height}
        _write_atomic(self._paths.meta,
                      (json.dumps(row, sort_keys=True) + "\n").encode())

    def close(self) -> None:
        self._chain_fh.close()


def load_entries(path: Path) -> list[LogEntry]:
    """Parse chain.jsonl, dropping a torn trailing line from a crash."""
    if not path.exists():
        return []
    entries: list[LogEntry] = []
    for line in path.read_bytes().splitlines():
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            entries.append(LogEntry(
                term=int(row["term"]),
                block=block_from_bytes(base64.b64decode(row["block"]))))
        except (ValueError, KeyError, TypeError):
            break
    return entries


def load_meta(path: Path) -> tuple[int, Optional[bytes], int]:
    if not path.exists():
        return 0, None, 0
    row = json.loads(path.read_text())
    voted = bytes.fromhex(row["voted_for"]) if row.get("voted_for") else None
    return int(row.get("term", 0)), voted, int(row.get("commit_height", 0))


@dataclass
class Receipt:
    tx: Transaction
    status: str = RECEIPT_PENDING
    height: Optional[int] = None
    code: Optional[str] = None
    message: Optional[str] = None
    created_ms: int = 0
    pushed_ms: int = 0

    def to_json(self) -> dict:
        out: dict = {"tx_id": self.tx.tx_id.hex(), "status": self.status}
        if self.status == RECEIPT_COMMITTED:
            out["height"] = self.height
        if self.status == RECEIPT_REJECTED:
            out["code"] = self.code
            out["message"] = self.message or self.code
        return out


@dataclass(frozen=True)
class ReadView:
    """Immutable committed-state snapshot handed to reader threads."""

    height: int
    tip_hash: bytes
    term: int
    leader: Optional[bytes]
    is_leader: bool
    state: ContractState
    nonces: dict
    tx_index: dict
    members: dict
    node: NodeId
    state_digest: bytes


@dataclass
class NodeConfig:
    data_dir: str
    listen: Optional[tuple[str, int]] = None
    raft_listen: Optional[tuple[str, int]] = None
    static_nodes_path: Optional[str] = None
    genesis_admin: Optional[bytes] = None
    seed: Optional[int] = None
    require_auth_applications: bool = False
    console_dir: Optional[str] = None


def now_ms() -> int:
    return int(time.time() * 1000)


class NodeRuntime:
    """Wires RaftCore to disk, the raft transport, and the HTTP API."""

    def __init__(self, config: NodeConfig):
        self.config = config
        self.paths = NodePaths(config.data_dir)
        paths = self.paths
        if config.static_nodes_path:
            paths.static_nodes = Path(config.static_nodes_path)
        if not paths.node_key.exists():
            raise FileNotFoundError(f"no node key under {paths.data_dir}")
        self.signer = Signer.load(paths.node_key)
        self.service_signer = (Signer.load(paths.service_key)
                               if paths.service_key.exists()
                               else self._make_service_key())

        if paths.genesis.exists():
            genesis = load_genesis(paths.genesis)
        elif config.genesis_admin:
            genesis = make_genesis(config.genesis_admin)
            save_genesis(paths.genesis, genesis)
        else:
            raise FileNotFoundError(
                "no genesis block and no --genesis-admin to create one")
        baseline = (load_static_nodes(paths.genesis_nodes)
                    if paths.genesis_nodes.exists()
                    else load_static_nodes(paths.static_nodes))
        self.node_id = self._resolve_self(baseline)

        term, voted_for, commit_height = load_meta(paths.meta)
        entries = load_entries(paths.chain)
        if commit_height > len(entries):
            commit_height = len(entries)
        self.storage = FileStorage(paths)
        rng = random.Random(config.seed if config.seed is not None
                            else int.from_bytes(os.urandom(8), "big"))
        self.core = RaftCore(
            self.node_id,
            list(baseline),
            genesis,
            rng=rng,
            now=now_ms(),
            storage=self.storage,
            entries=entries,
            current_term=term,
            voted_for=voted_for,
            commit_height=commit_height,
        )
        self.store = PersonalStore(
            paths.personal_db, paths.personal_audit,
            role_lookup=self._committed_role)

        self._queue: "queue.Queue[tuple]" = queue.Queue()
        self._receipts: dict[bytes, Receipt] = {}
        self._receipt_lock = threading.Lock()
        self._service_nonce_next: Optional[int] = None
        self._view: ReadView = self._snapshot()
        self._view_lock = threading.Lock()
        self._published_key: tuple = ()
        self._stop = threading.Event()
        self._loop_thread: Optional[threading.Thread] = None
        self.transport: Optional[RaftTransport] = None
        self._last_sweep = 0

    # -- construction helpers --

    def _make_service_key(self) -> Signer:
        signer = Signer.generate()
        signer.save(self.paths.service_key)
        save_pubkey(signer.pubkey, self.paths.service_pub)
        return signer

    def _resolve_self(self, baseline: list[NodeId]) -> NodeId:
        for node in baseline:
            if node.pubkey == self.signer.pubkey:
                return node
        if self.paths.static_nodes.exists():
            for node in load_static_nodes(self.paths.static_nodes):
                if node.pubkey == self.signer.pubkey:
                    return node
        raise ValueError(
            "this node's public key appears in neither genesis-nodes.json "
            "nor static-nodes.json; cannot determine listen addresses")

    # -- lifecycle --

    def start(self) -> None:
        raft_bind = self.config.raft_listen or ("", self.node_id.raftport)
        self.transport = RaftTransport(
            self.signer, raft_bind, deliver=self._deliver)
        self._loop_thread = threading.Thread(
            target=self._loop, name="consensus-loop", daemon=True)
        self._loop_thread.start()

    def stop(self) -> None:
        self._stop.set()
        self._queue.put(("wake",))
        if self._loop_thread is not None:
            self._loop_thread.join(timeout=5)
        if self.transport is not None:
            self.transport.close()
        self.storage.close()

    # -- views for reader threads --

    def view(self) -> ReadView:
        with self._view_lock:
            return self._view

    def _committed_role(self, pubkey: bytes) -> Role:
        return self.view().state.get_user_auth(pubkey)

    def _snapshot(self) -> ReadView:
        ledger = self.core.ledger
        return ReadView(
            height=ledger.height,
            tip_hash=ledger.tip_hash,
            term=self.core.current_term,
            leader=(self.core.pubkey if self.core.is_leader
                    else self.core.leader_hint),
            is_leader=self.core.is_leader,
            state=ledger.state.copy(),
            nonces=dict(ledger.nonces),
            tx_index=dict(ledger.tx_index),
            members=dict(self.core.members),
            node=self.node_id,
            state_digest=ledger.state.digest(),
        )

    def _publish(self) -> None:
        key = (self.core.current_term, self.core.leader_hint,
               self.core.is_leader, self.core.ledger.height,
               len(self.core.members))
        if key == self._published_key:
            return
        self._published_key = key
        snap = self._snapshot()
        with self._view_lock:
            self._view = snap

    # -- consensus loop --

    def _deliver(self, msg: WireMessage, sender: bytes) -> None:
        self._queue.put(("msg", msg, sender))

    def call(self, fn: Callable, timeout: float = 10.0):
        """Run fn() on the consensus loop thread and return its result."""
        if self._stop.is_set():
            raise RuntimeError("node is stopped")
        done = threading.Event()
        box: list = [None, None]

        def task():
            try:
                box[0] = fn()
            except BaseException as exc:  # propagated to the caller
                box[1] = exc
            finally:
                done.set()

        self._queue.put(("call", task))
        if not done.wait(timeout):
            if self._stop.is_set():
                raise RuntimeError("node is stopped")
            raise TimeoutError("consensus loop did not answer in time")
        if box[1] is not None:
            raise box[1]
        return box[0]

    def _loop(self) -> None:
        while not self._stop.is_set():
            deadline = self.core.next_deadline()
            now = now_ms()
            if deadline is None:
                wait_s = 0.05
            else:
                wait_s = min(max((deadline - now) / 1000.0, 0.0), 0.05)
            try:
                item = self._queue.get(timeout=wait_s)
            except queue.Empty:
                item = None
            while item is not None:
                self._dispatch(item)
                try:
                    item = self._queue.get_nowait()
                except queue.Empty:
                    item = None
            now = now_ms()
            self._handle_outputs(self.core.tick(now))
            if now - self._last_sweep >= SWEEP_MS:
                self._last_sweep = now
                self._sweep_receipts(now)
            self._publish()

    def _dispatch(self, item: tuple) -> None:
        kind = item[0]
        if kind == "msg":
            _, msg, sender = item
            if isinstance(msg, ForwardTx):
                self._on_forward(msg)
            else:
                self._handle_outputs(self.core.receive(msg, now_ms()))
        elif kind == "call":
            item[1]()

    def _handle_outputs(self, out: Outputs) -> None:
        for block, _, _ in out.committed:
            self._on_commit(block)
        for tx_id, code in out.rejected:
            self._resolve_receipt(tx_id, RECEIPT_REJECTED, code=code)
        if out.new_members:
            self._write_static_nodes()
        for dest, msg in out.messages:
            self._send(dest, msg)

    def _send(self, dest: bytes, msg: WireMessage) -> None:
        peer = self.core.members.get(dest)
        if peer is None or self.transport is None:
            return
        self.transport.send(dest, peer.raft_address, msg)

    def _on_commit(self, block: Block) -> None:
        with self._receipt_lock:
            for tx in block.transactions:
                receipt = self._receipts.get(tx.tx_id)
                if receipt is not None:
                    receipt.status = RECEIPT_COMMITTED
                    receipt.height = block.height
                    receipt.code = None

    def _resolve_receipt(self, tx_id: bytes, status: str,
                         code: Optional[str] = None,
                         message: Optional[str] = None) -> None:
        with self._receipt_lock:
            receipt = self._receipts.get(tx_id)
            if receipt is None or receipt.status == RECEIPT_COMMITTED:
                return
            receipt.status = status
            receipt.code = code
            receipt.message = message or code

    def _write_static_nodes(self) -> None:
        save_static_nodes(list(self.core.members.values()),
                          self.paths.static_nodes)

    # -- client transactions --

    def _on_forward(self, msg: ForwardTx) -> None:
        if not self.core.is_leader:
            return
        now = now_ms()
        fresh = []
        with self._receipt_lock:
            for tx in msg.txs:
                if tx.tx_id not in self._receipts:
                    self._receipts[tx.tx_id] = Receipt(
                        tx=tx, created_ms=now, pushed_ms=now)
                fresh.append(tx)
        self._handle_outputs(self.core.submit(fresh, now))

    def _push_tx(self, tx: Transaction, now: int) -> None:
        """Leader: submit locally.  Follower: forward to the leader."""
        if self.core.is_leader:
            self._handle_outputs(self.core.submit([tx], now))
            return
        hint = self.core.leader_hint
        if hint is not None and hint != self.core.pubkey:
            self._send(hint, ForwardTx((tx,)))

    def submit_transactions(self, txs: list[Transaction]) -> list[dict]:
        """Register receipts and route txs; returns receipt JSON rows."""

        def task():
            now = now_ms()
            rows = []
            for tx in txs:
                with self._receipt_lock:
                    existing = self._receipts.get(tx.tx_id)
                    if existing is None:
                        self._receipts[tx.tx_id] = Receipt(
                            tx=tx, created_ms=now, pushed_ms=now)
                if existing is None:
                    self._push_tx(tx, now)
                rows.append(self.receipt_json(tx.tx_id))
            return rows

        return self.call(task)

    def submit_service_payload(self, payload) -> dict:
        """Sign a payload with the node's service key and submit it."""

        def task():
            now = now_ms()
            nonce = self._allocate_service_nonce()
            tx = Transaction.create(self.service_signer, nonce, payload)
            with self._receipt_lock:
                self._receipts[tx.tx_id] = Receipt(
                    tx=tx, created_ms=now, pushed_ms=now)
            self._push_tx(tx, now)
            return self.receipt_json(tx.tx_id)

        if not self.wait_for_leader(LEADER_WAIT_MS):
            raise NoQuorumError("no leader reachable")
        return self.call(task)

    def _allocate_service_nonce(self) -> int:
        hint = self.core.next_nonce_hint(self.service_signer.pubkey)
        with self._receipt_lock:
            inflight = sum(
                1 for r in self._receipts.values()
                if r.status == RECEIPT_PENDING
                and r.tx.sender == self.service_signer.pubkey
                and r.tx.nonce >= hint)
        nonce = hint + inflight
        if self._service_nonce_next is not None:
            nonce = max(nonce, self._service_nonce_next)
        self._service_nonce_next = nonce + 1
        return nonce

    def wait_for_leader(self, budget_ms: int) -> bool:
        deadline = time.monotonic() + budget_ms / 1000.0
        while True:
            view = self.view()
            if view.leader is not None and (
                    view.is_leader or view.leader in view.members):
                return True
            if time.monotonic() >= deadline:
                return False
            time.sleep(0.05)

    def request_add_peer(self, uri: str) -> None:
        """Leader-only; raises NotLeaderError elsewhere."""

        def task():
            self._handle_outputs(
                self.core.request_add_peer(uri, now_ms()))

        self.call(task)

    # -- receipts --

    def receipt_json(self, tx_id: bytes) -> Optional[dict]:
        view = self.view()
        height = view.tx_index.get(tx_id)
        if height is not None:
            return {"tx_id": tx_id.hex(), "status": RECEIPT_COMMITTED,
                    "height": height}
        with self._receipt_lock:
            receipt = self._receipts.get(tx_id)
            return None if receipt is None else receipt.to_json()

    def _sweep_receipts(self, now: int) -> None:
        ledger = self.core.ledger
        with self._receipt_lock:
            pending = [r for r in self._receipts.values()
                       if r.status == RECEIPT_PENDING]
        for receipt in pending:
            tx = receipt.tx
            height = ledger.tx_index.get(tx.tx_id)
            if height is not None:
                with self._receipt_lock:
                    receipt.status = RECEIPT_COMMITTED
                    receipt.height = height
                continue
            if now - receipt.pushed_ms >= RESUBMIT_MS:
                receipt.pushed_ms = now
                self._push_tx(tx, now)
            if now - receipt.created_ms >= DIAGNOSE_MS:
                self._diagnose(receipt, ledger)

    def _diagnose(self, receipt: Receipt, ledger) -> None:
        """Reject a pending tx that committed state proves can never
        commit; a late commit still wins because tx_index is checked
        first on every receipt read."""
        tx = receipt.tx
        expected = ledger.next_nonce(tx.sender)
        if tx.nonce > expected:
            return  # awaiting earlier traffic from the same sender
        try:
            verify_transaction(tx, ledger.state, ledger.nonces)
        except TxRejected as exc:
            self._resolve_receipt(tx.tx_id, RECEIPT_REJECTED,
                                  code=exc.code, message=exc.message)

    # -- status --

    def chain_info(self) -> dict:
        view = self.view()
        return {
            "height": view.height,
            "tip_hash": view.tip_hash.hex(),
            "state_digest": view.state_digest.hex(),
            "term": view.term,
            "leader": view.leader.hex() if view.leader else None,
            "node": view.node.pubkey.hex(),
            "peers": len(view.members),
            "members": sorted(n.render() for n in view.members.values()),
        }
