"""Deterministic discrete-event simulator for consensus cores.

N cores run in one process against a virtual millisecond clock and a
fault-injectable network.  Every source of nondeterminism draws from one
seeded generator, and the event heap breaks time ties with a seeded draw,
so one SimConfig always produces one byte-identical trace.  The trace is
a flat list of event dicts; trace_to_jsonl renders the canonical file
form and simcheck evaluates the safety properties over it.

Faults: Partition(groups) / Heal / Crash(node) / Restart(node) /
Drop(rate, until).  Crash loses volatile state only; term, vote, log and
committed prefix survive, mirroring what a real node persists.

The client driver replays a workload of contract operations: it signs
real transactions, tracks per-account nonces, waits for dependencies
(an approval waits for its application's commit), resubmits after leader
changes, and records submissions in the trace.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Any, Optional

from .consensus import (
    ConfigChangeInFlight,
    DuplicatePeerError,
    LogEntry,
    NotLeaderError,
    RaftCore,
    RaftRole,
)
from .keys import Signer
from .ledger import AddPeerConfig, Transaction, make_genesis
from .membership import NodeId
from .payloads import (
    ApproveNeed,
    ApproveSupport,
    CreateNeed,
    CreateSupport,
    Role,
    SetUser,
)

RESUBMIT_AFTER_MS = 800
DRIVER_POLL_MS = 100

EV_DELIVER = 0
EV_TIMER = 1
EV_FAULT = 2
EV_CLIENT = 3


class TimeCapExceeded(Exception):
    pass


@dataclass
class SimConfig:
    node_count: int = 3
    seed: int = 0
    latency_min: int = 5
    latency_max: int = 25
    limit_ms: int = 60_000
    faults: list[dict] = field(default_factory=list)
    workload: list[dict] = field(default_factory=list)
    # Nodes beyond this count start outside the membership and join only
    # when an add_peer op commits; default is every node a member.
    initial_members: Optional[int] = None
    trace_net: bool = True


@dataclass
class SimResult:
    trace: list[dict]
    quiesced: bool
    cap_hit: bool
    ops_total: int
    ops_done: int
    final_heights: list[int]


def node_id_for(index: int, signer: Signer) -> NodeId:
    return NodeId(
        pubkey=signer.pubkey,
        host=f"node{index}.sim",
        port=7000 + index,
        raftport=8000 + index,
    )


def _account_signer(seed: int, name: str) -> Signer:
    raw = hashlib.sha256(f"rmsd-sim:{seed}:account:{name}".encode()).digest()
    return Signer.from_seed(raw)


def _node_signer(seed: int, index: int) -> Signer:
    raw = hashlib.sha256(f"rmsd-sim:{seed}:node:{index}".encode()).digest()
    return Signer.from_seed(raw)


@dataclass
class _Op:
    index: int
    at: int
    spec: dict
    account: Optional[str]
    status: str = "waiting"  # waiting -> ready -> inflight -> done
    tx: Optional[Transaction] = None
    submitted_at: int = -1
    attempts: int = 0
    created_id: Optional[int] = None


class ClientDriver:
    """Omniscient in-process client: signs, submits, resubmits, and
    follows commits to resolve dependencies between workload ops."""

    def __init__(self, sim: "Sim", workload: list[dict]):
        self.sim = sim
        self.admin = _account_signer(sim.cfg.seed, "admin")
        self._signers: dict[str, Signer] = {"admin": self.admin}
        self.nonces: dict[str, int] = {}
        self.ops: list[_Op] = []
        for i, spec in enumerate(workload):
            account = spec.get("actor")
            if spec["op"] in ("set_role",):
                account = account or "admin"
            self.ops.append(_Op(index=i, at=int(spec["at"]),
                                spec=spec, account=account))
        self._inflight_accounts: set[str] = set()
        self._need_counter = 0
        self._support_counter = 0
        self._processed_height = 0
        self._seen_commit: dict[int, bytes] = {}

    def signer(self, name: str) -> Signer:
        if name not in self._signers:
            self._signers[name] = _account_signer(self.sim.cfg.seed, name)
        return self._signers[name]

    def personal_ref(self, op_index: int) -> bytes:
        # The preimage is the sentinel the privacy check scans for; only
        # its digest may ever reach a transaction.
        secret = f"PII:applicant-{self.sim.cfg.seed}-{op_index}".encode()
        return hashlib.sha256(secret).digest()

    def all_done(self) -> bool:
        return all(op.status == "done" for op in self.ops)

    def done_count(self) -> int:
        return sum(1 for op in self.ops if op.status == "done")

    def _dependency_met(self, op: _Op) -> bool:
        ref = op.spec.get("ref")
        if ref is None:
            return True
        dep = self.ops[int(ref)]
        return dep.status == "done" and (
            dep.created_id is not None or op.spec["op"] == "add_peer")

    def _build_payload(self, op: _Op):
        spec = op.spec
        kind = spec["op"]
        if kind == "set_role":
            target = self.signer(spec["target"]).pubkey
            return SetUser(target=target, role=Role[spec["role"].upper()])
        if kind == "create_need":
            return CreateNeed(
                kind=spec.get("kind", "water"),
                amount=int(spec.get("amount", 1)),
                unit=spec.get("unit", "box"),
                personal_ref=self.personal_ref(op.index),
            )
        if kind == "create_support":
            return CreateSupport(
                kind=spec.get("kind", "water"),
                amount=int(spec.get("amount", 1)),
                unit=spec.get("unit", "box"),
                shipping=spec.get("shipping", "courier"),
                personal_ref=self.personal_ref(op.index),
            )
        if kind == "approve_need":
            dep = self.ops[int(spec["ref"])]
            return ApproveNeed(need_id=dep.created_id)
        if kind == "approve_support":
            dep = self.ops[int(spec["ref"])]
            return ApproveSupport(support_id=dep.created_id)
        raise ValueError(f"unknown workload op {kind!r}")

    def poll(self, now: int) -> None:
        for op in self.ops:
            if op.status == "waiting" and op.at <= now:
                op.status = "ready"
        leader = self.sim.current_leader()
        if leader is None:
            return
        batch: list[Transaction] = []
        for op in self.ops:
            if op.status == "inflight":
                if (op.spec["op"] != "add_peer"
                        and now - op.submitted_at >= RESUBMIT_AFTER_MS):
                    batch.append(op.tx)
                    op.submitted_at = now
                    op.attempts += 1
                    self.sim.trace_submit(now, leader, op)
                if (op.spec["op"] == "add_peer"
                        and now - op.submitted_at >= RESUBMIT_AFTER_MS):
                    self._submit_add_peer(op, leader, now)
                continue
            if op.status != "ready" or not self._dependency_met(op):
                continue
            if op.spec["op"] == "add_peer":
                op.status = "inflight"
                self._submit_add_peer(op, leader, now)
                continue
            if op.account in self._inflight_accounts:
                continue
            nonce = self.nonces.get(op.account, 0)
            op.tx = Transaction.create(
                self.signer(op.account), nonce, self._build_payload(op))
            op.status = "inflight"
            op.submitted_at = now
            op.attempts = 1
            self._inflight_accounts.add(op.account)
            batch.append(op.tx)
            self.sim.trace_submit(now, leader, op)
        if batch:
            out = self.sim.cores[leader].submit(batch, now)
            self.sim.process_outputs(leader, out, now)

    def _submit_add_peer(self, op: _Op, leader: int, now: int) -> None:
        target = int(op.spec["node"])
        uri = self.sim.nodes[target].render()
        op.submitted_at = now
        op.attempts += 1
        try:
            out = self.sim.cores[leader].request_add_peer(uri, now)
        except (NotLeaderError, ConfigChangeInFlight):
            return
        except DuplicatePeerError:
            op.status = "done"
            return
        self.sim.trace_submit(now, leader, op)
        self.sim.process_outputs(leader, out, now)

    def observe_commit(self, block) -> None:
        """Feed each distinct committed block once, in height order."""
        if block.height != self._processed_height + 1:
            return
        self._processed_height = block.height
        inflight = {op.tx.tx_id: op for op in self.ops
                    if op.status == "inflight" and op.tx is not None}
        for tx in block.transactions:
            created = None
            if isinstance(tx.payload, CreateNeed):
                created = self._need_counter
                self._need_counter += 1
            elif isinstance(tx.payload, CreateSupport):
                created = self._support_counter
                self._support_counter += 1
            op = inflight.get(tx.tx_id)
            if op is None:
                continue
            op.status = "done"
            op.created_id = created
            self.nonces[op.account] = tx.nonce + 1
            self._inflight_accounts.discard(op.account)
        if isinstance(block.config, AddPeerConfig):
            for op in self.ops:
                if op.status == "inflight" and op.spec["op"] == "add_peer":
                    target = int(op.spec["node"])
                    if block.config.uri == self.sim.nodes[target].render():
                        op.status = "done"


class Sim:
    def __init__(self, cfg: SimConfig):
        if cfg.node_count < 1:
            raise ValueError("node_count must be at least 1")
        self.cfg = cfg
        self.rng = random.Random(f"rmsd-sim:{cfg.seed}")
        self.trace: list[dict] = []
        self.now = 0
        self._heap: list[tuple[int, int, int, int, Any]] = []
        self._seq = 0
        self._outstanding = 0  # deliveries + fault + client events in heap

        self.driver = ClientDriver(self, cfg.workload)
        self.signers = [_node_signer(cfg.seed, i)
                        for i in range(cfg.node_count)]
        self.nodes = [node_id_for(i, s) for i, s in enumerate(self.signers)]
        self._index = {n.pubkey: i for i, n in enumerate(self.nodes)}
        initial = cfg.initial_members or cfg.node_count
        self.members0 = self.nodes[:initial]
        self.genesis = make_genesis(self.driver.admin.pubkey)
        self.cores: list[RaftCore] = [
            RaftCore(self.nodes[i], self.members0, self.genesis,
                     rng=random.Random(f"rmsd-sim:{cfg.seed}:core:{i}"),
                     now=0)
            for i in range(cfg.node_count)
        ]
        self.alive = [True] * cfg.node_count
        self.groups = [0] * cfg.node_count
        self.drop_rate = 0.0
        self.drop_until = 0
        self._restarts = [0] * cfg.node_count
        self._timer_at = [-1] * cfg.node_count
        self._faults_left = 0
        self.cap_hit = False

    # -- event plumbing --

    def _push(self, time: int, kind: int, a: int, payload: Any) -> None:
        tiebreak = self.rng.randrange(1 << 20)
        self._seq += 1
        heapq.heappush(self._heap, (time, tiebreak, self._seq, kind, (a, payload)))
        if kind != EV_TIMER:
            self._outstanding += 1

    def emit(self, event: dict) -> None:
        self.trace.append(event)

    def trace_submit(self, now: int, node: int, op: _Op) -> None:
        self.emit({
            "t": now, "ev": "submit", "node": node, "op": op.index,
            "what": op.spec["op"],
            "tx": op.tx.tx_id.hex() if op.tx else None,
            "attempt": op.attempts,
        })

    # -- network --

    def _send(self, src: int, dest_pub: bytes, msg, now: int) -> None:
        dest = self._index.get(dest_pub)
        if dest is None:
            return
        latency = self.rng.randint(self.cfg.latency_min, self.cfg.latency_max)
        fate = self.rng.random()
        if self.cfg.trace_net:
            self.emit({"t": now, "ev": "send", "from": src, "to": dest,
                       "kind": type(msg).__name__, "term": msg.term})
        self._push(now + latency, EV_DELIVER, dest, (src, msg, fate))

    def _deliverable(self, src: int, dest: int, fate: float, now: int) -> bool:
        if not self.alive[dest]:
            return False
        if self.groups[src] != self.groups[dest]:
            return False
        if now < self.drop_until and fate < self.drop_rate:
            return False
        return True

    # -- node lifecycle --

    def _crash(self, node: int, now: int) -> None:
        if not self.alive[node]:
            return
        self.alive[node] = False
        self.emit({"t": now, "ev": "crash", "node": node})

    def _restart(self, node: int, now: int) -> None:
        if self.alive[node]:
            return
        old = self.cores[node]
        self._restarts[node] += 1
        tag = f"rmsd-sim:{self.cfg.seed}:core:{node}:r{self._restarts[node]}"
        self.cores[node] = RaftCore(
            self.nodes[node], self.members0, self.genesis,
            rng=random.Random(tag), now=now,
            entries=list(old.log),
            current_term=old.current_term,
            voted_for=old.voted_for,
            commit_height=old.commit_height,
        )
        self.alive[node] = True
        self.emit({"t": now, "ev": "restart", "node": node})
        self._schedule_timer(node, now)

    def _apply_fault(self, fault: dict, now: int) -> None:
        kind = fault["kind"]
        if kind == "partition":
            groups = fault["groups"]
            for gi, members in enumerate(groups):
                for node in members:
                    self.groups[node] = gi
            self.emit({"t": now, "ev": "partition", "groups": groups})
        elif kind == "heal":
            self.groups = [0] * self.cfg.node_count
            self.emit({"t": now, "ev": "heal"})
        elif kind == "crash":
            self._crash(int(fault["node"]), now)
        elif kind == "restart":
            self._restart(int(fault["node"]), now)
        elif kind == "drop":
            self.drop_rate = float(fault["rate"])
            self.drop_until = now + int(fault["duration"])
            self.emit({"t": now, "ev": "drop_window", "rate": self.drop_rate,
                       "until": self.drop_until})
        else:
            raise ValueError(f"unknown fault kind {kind!r}")

    # -- core interaction --

    def current_leader(self) -> Optional[int]:
        best = None
        for i, core in enumerate(self.cores):
            if self.alive[i] and core.is_leader:
                if best is None or core.current_term > self.cores[best].current_term:
                    best = i
        return best

    def process_outputs(self, node: int, out, now: int) -> None:
        core = self.cores[node]
        for role, term in out.role_changes:
            self.emit({"t": now, "ev": "role", "node": node,
                       "role": role, "term": term})
        for block, entry_term, digest in out.committed:
            cfg = block.config
            self.emit({
                "t": now, "ev": "commit", "node": node,
                "height": block.height, "term": entry_term,
                "cterm": core.current_term,
                "hash": block.block_hash.hex(),
                "digest": digest.hex(),
                "config": cfg.uri if isinstance(cfg, AddPeerConfig) else None,
                "txs": [tx.tx_id.hex() for tx in block.transactions],
            })
            self.driver.observe_commit(block)
        for tx_id, code in out.rejected:
            self.emit({"t": now, "ev": "reject", "node": node,
                       "tx": tx_id.hex(), "code": code})
        for peer in out.new_members:
            self.emit({"t": now, "ev": "member", "node": node,
                       "peer": peer.pubkey.hex()})
        for dest_pub, msg in out.messages:
            self._send(node, dest_pub, msg, now)
        self._schedule_timer(node, now)

    def _schedule_timer(self, node: int, now: int) -> None:
        deadline = self.cores[node].next_deadline()
        if deadline is None:
            return
        deadline = max(deadline, now)
        if self._timer_at[node] == -1 or deadline < self._timer_at[node] \
                or self._timer_at[node] < now:
            self._push(deadline, EV_TIMER, node, None)
            self._timer_at[node] = deadline

    # -- main loop --

    def run(self) -> SimResult:
        for fault in self.cfg.faults:
            self._push(int(fault["at"]), EV_FAULT, 0, fault)
            self._faults_left += 1
        if self.driver.ops:
            self._push(0, EV_CLIENT, -1, "poll")
        for i in range(self.cfg.node_count):
            self._schedule_timer(i, 0)

        quiesced = False
        while self._heap:
            time, _, _, kind, (a, payload) = heapq.heappop(self._heap)
            if time > self.cfg.limit_ms:
                self.cap_hit = True
                break
            self.now = time
            if kind != EV_TIMER:
                self._outstanding -= 1

            if kind == EV_DELIVER:
                src, msg, fate = payload
                if self._deliverable(src, a, fate, time):
                    if self.cfg.trace_net:
                        self.emit({"t": time, "ev": "deliver", "from": src,
                                   "to": a, "kind": type(msg).__name__})
                    out = self.cores[a].receive(msg, time)
                    self.process_outputs(a, out, time)
                elif self.cfg.trace_net:
                    self.emit({"t": time, "ev": "dropped", "from": src,
                               "to": a, "kind": type(msg).__name__})
            elif kind == EV_TIMER:
                if self._timer_at[a] == time:
                    self._timer_at[a] = -1
                if self.alive[a]:
                    out = self.cores[a].tick(time)
                    if out.role_changes and self.cfg.trace_net:
                        self.emit({"t": time, "ev": "timeout", "node": a})
                    self.process_outputs(a, out, time)
            elif kind == EV_FAULT:
                self._apply_fault(payload, time)
                self._faults_left -= 1
            elif kind == EV_CLIENT:
                self.driver.poll(time)
                if not self.driver.all_done():
                    self._push(time + DRIVER_POLL_MS, EV_CLIENT, -1, "poll")

            if self._quiescent():
                quiesced = True
                break

        self._finalize(quiesced)
        return SimResult(
            trace=self.trace,
            quiesced=quiesced,
            cap_hit=self.cap_hit,
            ops_total=len(self.driver.ops),
            ops_done=self.driver.done_count(),
            final_heights=[c.commit_height for c in self.cores],
        )

    def _quiescent(self) -> bool:
        if self._faults_left or self._outstanding:
            return False
        if not self.driver.all_done():
            return False
        heights = set()
        digests = set()
        for i, core in enumerate(self.cores):
            if not self.alive[i]:
                continue
            if core.tip_height != core.commit_height or core.pending_count:
                return False
            heights.add(core.commit_height)
            digests.add(core.ledger.state.digest())
        return len(heights) == 1 and len(digests) == 1

    def _finalize(self, quiesced: bool) -> None:
        for i, core in enumerate(self.cores):
            self.emit({
                "t": self.now, "ev": "final", "node": i,
                "alive": self.alive[i],
                "term": core.current_term,
                "commit": core.commit_height,
                "tip": core.tip_height,
                "digest": core.ledger.state.digest().hex(),
                "log": [[j + 1, e.term, e.block.block_hash.hex()]
                        for j, e in enumerate(core.log)],
            })
        self.emit({
            "t": self.now, "ev": "result",
            "quiesced": quiesced, "cap_hit": self.cap_hit,
            "ops_total": len(self.driver.ops),
            "ops_done": self.driver.done_count(),
            "privacy_ok": self._privacy_scan(),
        })

    def _privacy_scan(self) -> bool:
        """No personal-data sentinel may appear in any chain's bytes."""
        sentinel = b"PII:"
        for core in self.cores:
            for block in core.ledger.blocks:
                if sentinel in block.canonical_bytes():
                    return False
            for entry in core.log:
                if sentinel in entry.block.canonical_bytes():
                    return False
        return True


def run_sim(cfg: SimConfig) -> SimResult:
    return Sim(cfg).run()


def trace_to_jsonl(trace: list[dict]) -> str:
    return "".join(
        json.dumps(ev, sort_keys=True, separators=(",", ":")) + "\n"
        for ev in trace)


def paper_flow_workload() -> list[dict]:
    """The canonical three-block flow: one block granting the checker
    role and creating the need, one block approving it."""
    return [
        {"at": 600, "op": "set_role", "target": "checker1", "role": "checker"},
        {"at": 600, "op": "create_need", "actor": "applicant1",
         "kind": "water", "amount": 100, "unit": "bottle"},
        {"at": 1400, "op": "approve_need", "actor": "checker1", "ref": 1},
    ]


def random_workload(rng: random.Random, horizon_ms: int,
                    joiner: Optional[int] = None) -> list[dict]:
    """A recoverable random workload: roles first, then creations, then
    approvals referencing them, optionally one membership addition."""
    ops: list[dict] = [
        {"at": 300, "op": "set_role", "target": "checker1", "role": "checker"},
    ]
    t = 600
    creates = []
    for i in range(rng.randint(1, 4)):
        kind = rng.choice(["water", "food", "tent", "blanket", "medicine"])
        op = {
            "at": t, "op": rng.choice(["create_need", "create_support"]),
            "actor": f"applicant{i}", "kind": kind,
            "amount": rng.randint(1, 500), "unit": "box",
        }
        if op["op"] == "create_support":
            op["shipping"] = rng.choice(["courier", "truck", "air"])
        creates.append(len(ops))
        ops.append(op)
        t += rng.randint(100, 700)
    for ref in creates:
        if rng.random() < 0.8:
            ops.append({
                "at": t,
                "op": ("approve_need"
                       if ops[ref]["op"] == "create_need"
                       else "approve_support"),
                "actor": "checker1", "ref": ref,
            })
            t += rng.randint(100, 500)
    if joiner is not None:
        ops.append({"at": rng.randint(500, max(600, t)),
                    "op": "add_peer", "node": joiner})
    return ops


def random_faults(rng: random.Random, node_count: int,
                  horizon_ms: int) -> list[dict]:
    """A recoverable random fault schedule: every partition heals and
    every crashed node restarts well before the horizon."""
    faults: list[dict] = []
    t = rng.randint(200, 1500)
    for _ in range(rng.randint(0, 2)):
        kind = rng.choice(["partition", "crash", "drop"])
        if kind == "partition" and node_count >= 2:
            nodes = list(range(node_count))
            rng.shuffle(nodes)
            cut = rng.randint(1, max(1, node_count // 2))
            faults.append({"at": t, "kind": "partition",
                           "groups": [sorted(nodes[:cut]),
                                      sorted(nodes[cut:])]})
            t += rng.randint(400, 1500)
            faults.append({"at": t, "kind": "heal"})
        elif kind == "crash":
            node = rng.randrange(node_count)
            faults.append({"at": t, "kind": "crash", "node": node})
            t += rng.randint(400, 1200)
            faults.append({"at": t, "kind": "restart", "node": node})
        else:
            faults.append({"at": t, "kind": "drop",
                           "rate": rng.uniform(0.05, 0.25),
                           "duration": rng.randint(300, 1200)})
            t += rng.randint(300, 1200)
        t += rng.randint(200, 800)
    return faults
