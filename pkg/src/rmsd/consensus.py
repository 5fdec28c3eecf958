"""RAFT consensus over whole blocks.

One log entry carries one block; the entry at log position i is the block
at chain height i + 1.  The core is a pure state machine: callers feed it
messages and clock readings, and it returns the messages to send, the
blocks that reached commitment, and the transactions it dropped.  It never
touches sockets, threads, or wall clocks, so the simulator and the real
node run the same code.

Election votes compare (last log term, last height) lexicographically.
A commit requires a majority of the current membership to hold the entry
and the entry to belong to the leader's own term.  Membership grows by
committing a config block that names the new node; the addition takes
effect, on every node independently, at the moment that block commits.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Optional, Union

from .ledger import (
    BAD_NONCE,
    AddPeerConfig,
    Block,
    BlockRejected,
    Ledger,
    MAX_BLOCK_TXS,
    Transaction,
    TxRejected,
    verify_transaction,
)
from .membership import MembershipError, NodeId, parse_node_uri

ELECTION_TIMEOUT_MIN_MS = 150
ELECTION_TIMEOUT_MAX_MS = 300
HEARTBEAT_INTERVAL_MS = 50

# Cap on log entries shipped in one AppendEntries, so a far-behind node
# catches up over several round trips instead of one huge message.
MAX_ENTRIES_PER_MESSAGE = 64

NOT_LEADER = "not_leader"


class RaftRole(enum.Enum):
    FOLLOWER = "follower"
    CANDIDATE = "candidate"
    LEADER = "leader"


@dataclass(frozen=True)
class LogEntry:
    term: int
    block: Block


@dataclass(frozen=True)
class VoteRequest:
    term: int
    candidate: bytes
    last_height: int
    last_term: int
    last_hash: bytes


@dataclass(frozen=True)
class VoteResponse:
    term: int
    voter: bytes
    granted: bool


@dataclass(frozen=True)
class AppendEntries:
    term: int
    leader: bytes
    prev_height: int
    prev_hash: bytes
    entries: tuple[LogEntry, ...]
    leader_commit: int


@dataclass(frozen=True)
class AppendResponse:
    term: int
    follower: bytes
    success: bool
    # On success: highest height this response confirms replicated.
    # On failure: the follower's tip, a restart hint for the leader.
    match_height: int


Message = Union[VoteRequest, VoteResponse, AppendEntries, AppendResponse]


class NotLeaderError(Exception):
    """Raised when a leader-only operation hits a non-leader node."""

    def __init__(self, leader_hint: Optional[bytes]):
        super().__init__("not the leader")
        self.leader_hint = leader_hint


class DuplicatePeerError(Exception):
    pass


class ConfigChangeInFlight(Exception):
    """A different membership change is still waiting for commitment."""


@dataclass
class Outputs:
    """Everything one core interaction asks the caller to do.

    committed carries (block, entry term, state digest after applying it)
    so observers can compare state evolution across nodes height by height.
    """

    messages: list[tuple[bytes, Message]] = field(default_factory=list)
    committed: list[tuple[Block, int, bytes]] = field(default_factory=list)
    rejected: list[tuple[bytes, str]] = field(default_factory=list)
    role_changes: list[tuple[str, int]] = field(default_factory=list)
    new_members: list[NodeId] = field(default_factory=list)


class CoreStorage:
    """Persistence hooks; the default keeps nothing (simulator mode)."""

    def save_meta(self, term: int, voted_for: Optional[bytes],
                  commit_height: int) -> None:
        pass

    def append_entry(self, entry: LogEntry) -> None:
        pass

    def truncate(self, height: int) -> None:
        pass


class RaftCore:
    def __init__(
        self,
        node: NodeId,
        members: list[NodeId],
        genesis: Block,
        *,
        rng: random.Random,
        now: int = 0,
        storage: Optional[CoreStorage] = None,
        entries: Optional[list[LogEntry]] = None,
        current_term: int = 0,
        voted_for: Optional[bytes] = None,
        commit_height: int = 0,
        revalidate: bool = False,
    ):
        self.node = node
        self.pubkey = node.pubkey
        self.members: dict[bytes, NodeId] = {}
        for m in members:
            if m.pubkey not in self.members:
                self.members[m.pubkey] = m
        self.ledger = Ledger(genesis)
        self.log: list[LogEntry] = []
        self.role = RaftRole.FOLLOWER
        self.current_term = current_term
        self.voted_for = voted_for
        self.commit_height = 0
        self.leader_hint: Optional[bytes] = None
        self._rng = rng
        self._storage = storage or CoreStorage()
        self._votes: set[bytes] = set()
        self._next: dict[bytes, int] = {}
        self._match: dict[bytes, int] = {}
        self._pending: list[Transaction] = []
        self._heartbeat_deadline = 0
        self._election_deadline = 0
        self._restore(entries or [], commit_height, revalidate)
        self._reset_election(now)

    # -- restore --

    def _restore(self, entries: list[LogEntry], commit_height: int,
                 revalidate: bool) -> None:
        if commit_height > len(entries):
            raise ValueError("commit height beyond persisted log")
        for entry in entries:
            self.log.append(entry)
            height = len(self.log)
            if height <= commit_height:
                self.ledger.append(entry.block, assume_valid=not revalidate)
                self.commit_height = height
                cfg = entry.block.config
                if isinstance(cfg, AddPeerConfig):
                    peer = parse_node_uri(cfg.uri)
                    self.members.setdefault(peer.pubkey, peer)

    # -- basic views --

    @property
    def active(self) -> bool:
        """A node outside the membership holds log and votes but never
        starts elections; it activates when its own addition commits."""
        return self.pubkey in self.members

    @property
    def is_leader(self) -> bool:
        return self.role is RaftRole.LEADER

    @property
    def tip_height(self) -> int:
        return len(self.log)

    @property
    def pending_count(self) -> int:
        return len(self._pending)

    def _quorum(self) -> int:
        return len(self.members) // 2 + 1

    def _hash_at(self, height: int) -> bytes:
        if height <= self.commit_height:
            return self.ledger.blocks[height].block_hash
        return self.log[height - 1].block.block_hash

    def _last_term(self) -> int:
        return self.log[-1].term if self.log else 0

    def _tip_timestamp(self) -> int:
        if self.log:
            return self.log[-1].block.timestamp
        return self.ledger.genesis.timestamp

    def _scratch_at_tip(self) -> Ledger:
        scratch = self.ledger.copy()
        for entry in self.log[self.commit_height:]:
            scratch.append(entry.block, assume_valid=True)
        return scratch

    def next_nonce_hint(self, sender: bytes) -> int:
        """Next unused nonce for sender, counting uncommitted log entries
        and held pending transactions."""
        n = self._scratch_at_tip().next_nonce(sender)
        for tx in self._pending:
            if tx.sender == sender and tx.nonce >= n:
                n = tx.nonce + 1
        return n

    def next_deadline(self) -> Optional[int]:
        if self.role is RaftRole.LEADER:
            return self._heartbeat_deadline
        if self.active:
            return self._election_deadline
        return None

    def _reset_election(self, now: int) -> None:
        self._election_deadline = now + self._rng.randint(
            ELECTION_TIMEOUT_MIN_MS, ELECTION_TIMEOUT_MAX_MS)

    # -- clock --

    def tick(self, now: int) -> Outputs:
        out = Outputs()
        if self.role is RaftRole.LEADER:
            if now >= self._heartbeat_deadline:
                self._send_heartbeats(now, out)
        elif self.active and now >= self._election_deadline:
            self._start_election(now, out)
        return out

    # -- elections --

    def _become_follower(self, term: int) -> None:
        if term > self.current_term:
            self.current_term = term
            self.voted_for = None
            self._save_meta()
        self.role = RaftRole.FOLLOWER
        self.leader_hint = None
        self._votes = set()

    def _start_election(self, now: int, out: Outputs) -> None:
        self.current_term += 1
        self.role = RaftRole.CANDIDATE
        self.voted_for = self.pubkey
        self.leader_hint = None
        self._save_meta()
        self._votes = {self.pubkey}
        self._reset_election(now)
        out.role_changes.append(("candidate", self.current_term))
        if len(self._votes) >= self._quorum():
            self._become_leader(now, out)
            return
        request = VoteRequest(
            term=self.current_term,
            candidate=self.pubkey,
            last_height=self.tip_height,
            last_term=self._last_term(),
            last_hash=self._hash_at(self.tip_height),
        )
        for peer in self.members:
            if peer != self.pubkey:
                out.messages.append((peer, request))

    def _become_leader(self, now: int, out: Outputs) -> None:
        self.role = RaftRole.LEADER
        self.leader_hint = self.pubkey
        self._next = {p: self.tip_height + 1 for p in self.members
                      if p != self.pubkey}
        self._match = {p: 0 for p in self._next}
        out.role_changes.append(("leader", self.current_term))
        self._send_heartbeats(now, out)
        if self.tip_height > self.commit_height:
            # Entries from older terms are dangling; they can only commit
            # under an entry of this term, so seal them with an empty block.
            block = Block.build(
                height=self.tip_height + 1,
                prev_hash=self._hash_at(self.tip_height),
                timestamp=max(now, self._tip_timestamp()),
                proposer=self.pubkey,
                transactions=(),
            )
            self._append_own(block, now, out)
        self._maybe_propose(now, out)
        self._advance_commit(now, out)

    def _candidate_up_to_date(self, msg: VoteRequest) -> bool:
        mine = (self._last_term(), self.tip_height)
        theirs = (msg.last_term, msg.last_height)
        if theirs != mine:
            return theirs > mine
        return msg.last_hash == self._hash_at(self.tip_height)

    def _on_vote_request(self, msg: VoteRequest, now: int) -> Outputs:
        out = Outputs()
        if msg.term > self.current_term:
            self._become_follower(msg.term)
        granted = False
        if (msg.term == self.current_term
                and self.voted_for in (None, msg.candidate)
                and self._candidate_up_to_date(msg)):
            granted = True
            if self.voted_for is None:
                self.voted_for = msg.candidate
                self._save_meta()
            self._reset_election(now)
        out.messages.append((msg.candidate, VoteResponse(
            term=self.current_term, voter=self.pubkey, granted=granted)))
        return out

    def _on_vote_response(self, msg: VoteResponse, now: int) -> Outputs:
        out = Outputs()
        if msg.term > self.current_term:
            self._become_follower(msg.term)
            return out
        if (self.role is RaftRole.CANDIDATE and msg.term == self.current_term
                and msg.granted and msg.voter in self.members):
            self._votes.add(msg.voter)
            if len(self._votes) >= self._quorum():
                self._become_leader(now, out)
        return out

    # -- replication --

    def _send_heartbeats(self, now: int, out: Outputs) -> None:
        for peer in self.members:
            if peer != self.pubkey:
                self._send_append(peer, out)
        self._heartbeat_deadline = now + HEARTBEAT_INTERVAL_MS

    def _send_append(self, peer: bytes, out: Outputs) -> None:
        nxt = self._next.get(peer, self.tip_height + 1)
        prev_height = nxt - 1
        entries = tuple(
            self.log[prev_height:prev_height + MAX_ENTRIES_PER_MESSAGE])
        out.messages.append((peer, AppendEntries(
            term=self.current_term,
            leader=self.pubkey,
            prev_height=prev_height,
            prev_hash=self._hash_at(prev_height),
            entries=entries,
            leader_commit=self.commit_height,
        )))

    def _on_append_entries(self, msg: AppendEntries, now: int) -> Outputs:
        out = Outputs()
        if msg.term < self.current_term:
            out.messages.append((msg.leader, AppendResponse(
                term=self.current_term, follower=self.pubkey,
                success=False, match_height=self.tip_height)))
            return out
        if msg.term > self.current_term:
            self._become_follower(msg.term)
        if self.role is not RaftRole.FOLLOWER:
            self.role = RaftRole.FOLLOWER
            self._votes = set()
        self.leader_hint = msg.leader
        self._reset_election(now)

        def refuse() -> Outputs:
            out.messages.append((msg.leader, AppendResponse(
                term=self.current_term, follower=self.pubkey,
                success=False, match_height=self.tip_height)))
            return out

        if msg.prev_height > self.tip_height:
            return refuse()
        if self._hash_at(msg.prev_height) != msg.prev_hash:
            return refuse()

        # Skip entries already in place; truncate at the first conflict.
        idx = 0
        while idx < len(msg.entries):
            height = msg.prev_height + 1 + idx
            if height > self.tip_height:
                break
            if (self.log[height - 1].block.block_hash
                    == msg.entries[idx].block.block_hash):
                idx += 1
                continue
            if height <= self.commit_height:
                # A conflict below the commit point means the sender is
                # not a legitimate leader; never unwind committed blocks.
                return refuse()
            del self.log[height - 1:]
            self._storage.truncate(height - 1)
            break
        to_append = msg.entries[idx:]

        if to_append:
            scratch = self._scratch_at_tip()
            try:
                for entry in to_append:
                    if isinstance(entry.block.config, AddPeerConfig):
                        parse_node_uri(entry.block.config.uri)
                    scratch.append(entry.block)
            except (BlockRejected, MembershipError):
                # Blocks that fail verification are not appended, no
                # matter who sent them.
                return refuse()
            for entry in to_append:
                self.log.append(entry)
                self._storage.append_entry(entry)

        new_commit = min(msg.leader_commit, self.tip_height)
        if new_commit > self.commit_height:
            self._commit_to(new_commit, now, out)

        out.messages.append((msg.leader, AppendResponse(
            term=self.current_term, follower=self.pubkey, success=True,
            match_height=msg.prev_height + len(msg.entries))))
        return out

    def _on_append_response(self, msg: AppendResponse, now: int) -> Outputs:
        out = Outputs()
        if msg.term > self.current_term:
            self._become_follower(msg.term)
            return out
        if self.role is not RaftRole.LEADER or msg.term < self.current_term:
            return out
        peer = msg.follower
        if peer not in self.members or peer == self.pubkey:
            return out
        if msg.success:
            if msg.match_height > self._match.get(peer, 0):
                self._match[peer] = msg.match_height
            self._next[peer] = max(
                self._next.get(peer, 1), msg.match_height + 1)
            self._advance_commit(now, out)
            if self._next[peer] <= self.tip_height:
                self._send_append(peer, out)
        else:
            nxt = self._next.get(peer, self.tip_height + 1)
            self._next[peer] = max(1, min(nxt - 1, msg.match_height + 1))
            self._send_append(peer, out)
        return out

    def _advance_commit(self, now: int, out: Outputs) -> None:
        if self.role is not RaftRole.LEADER:
            return
        for height in range(self.tip_height, self.commit_height, -1):
            if self.log[height - 1].term != self.current_term:
                # Terms only fall from here on down; older-term entries
                # commit by carrying a current-term entry above them.
                break
            acks = sum(
                1 for p in self.members
                if p == self.pubkey or self._match.get(p, 0) >= height)
            if acks >= self._quorum():
                self._commit_to(height, now, out)
                break

    def _commit_to(self, height: int, now: int, out: Outputs) -> None:
        for h in range(self.commit_height + 1, height + 1):
            entry = self.log[h - 1]
            self.ledger.append(entry.block, assume_valid=True)
            # advance before membership side effects so appends sent to a
            # just-added peer already carry this commit height
            self.commit_height = h
            out.committed.append(
                (entry.block, entry.term, self.ledger.state.digest()))
            cfg = entry.block.config
            if isinstance(cfg, AddPeerConfig):
                self._apply_membership(cfg, out)
        self._save_meta()
        if self.role is RaftRole.LEADER and self._pending:
            self._maybe_propose(now, out)

    def _apply_membership(self, cfg: AddPeerConfig, out: Outputs) -> None:
        peer = parse_node_uri(cfg.uri)
        if peer.pubkey not in self.members:
            self.members[peer.pubkey] = peer
            out.new_members.append(peer)
            if self.role is RaftRole.LEADER and peer.pubkey != self.pubkey:
                self._next[peer.pubkey] = self.tip_height + 1
                self._match[peer.pubkey] = 0
                self._send_append(peer.pubkey, out)

    # -- client traffic --

    def receive(self, msg: Message, now: int) -> Outputs:
        if isinstance(msg, VoteRequest):
            return self._on_vote_request(msg, now)
        if isinstance(msg, VoteResponse):
            return self._on_vote_response(msg, now)
        if isinstance(msg, AppendEntries):
            return self._on_append_entries(msg, now)
        if isinstance(msg, AppendResponse):
            return self._on_append_response(msg, now)
        raise TypeError(f"unknown message {type(msg).__name__}")

    def submit(self, txs: list[Transaction], now: int) -> Outputs:
        """Queue client transactions for the next block (leader only)."""
        if self.role is not RaftRole.LEADER:
            raise NotLeaderError(self.leader_hint)
        out = Outputs()
        known = {t.tx_id for t in self._pending}
        for entry in self.log[self.commit_height:]:
            known.update(t.tx_id for t in entry.block.transactions)
        for tx in txs:
            if tx.tx_id not in known and tx.tx_id not in self.ledger.tx_index:
                self._pending.append(tx)
                known.add(tx.tx_id)
        self._maybe_propose(now, out)
        return out

    def request_add_peer(self, uri: str, now: int) -> Outputs:
        """Propose a membership addition as a config block (leader only)."""
        if self.role is not RaftRole.LEADER:
            raise NotLeaderError(self.leader_hint)
        peer = parse_node_uri(uri)
        if peer.pubkey in self.members:
            raise DuplicatePeerError(f"{peer.pubkey.hex()} already a member")
        for entry in self.log[self.commit_height:]:
            cfg = entry.block.config
            if isinstance(cfg, AddPeerConfig):
                if parse_node_uri(cfg.uri).pubkey == peer.pubkey:
                    return Outputs()
                raise ConfigChangeInFlight(
                    "another membership change awaits commitment")
        out = Outputs()
        block = Block.build(
            height=self.tip_height + 1,
            prev_hash=self._hash_at(self.tip_height),
            timestamp=max(now, self._tip_timestamp()),
            proposer=self.pubkey,
            transactions=(),
            config=AddPeerConfig(uri=peer.render()),
        )
        self._append_own(block, now, out)
        return out

    def _maybe_propose(self, now: int, out: Outputs) -> None:
        if self.role is not RaftRole.LEADER or not self._pending:
            return
        scratch = self._scratch_at_tip()
        height = self.tip_height + 1
        included: list[Transaction] = []
        kept: list[Transaction] = []
        for tx in self._pending:
            if len(included) >= MAX_BLOCK_TXS:
                kept.append(tx)
                continue
            if tx.tx_id in self.ledger.tx_index:
                continue  # committed while queued; drop silently
            try:
                verify_transaction(tx, scratch.state, scratch.nonces)
            except TxRejected as exc:
                if (exc.code == BAD_NONCE
                        and tx.nonce > scratch.next_nonce(tx.sender)):
                    kept.append(tx)  # a gap; earlier tx may still arrive
                else:
                    out.rejected.append((tx.tx_id, exc.code))
                continue
            scratch.state.apply_payload(tx.sender, tx.payload, height)
            scratch.nonces[tx.sender] = tx.nonce
            included.append(tx)
        self._pending = kept
        if included:
            block = Block.build(
                height=height,
                prev_hash=self._hash_at(self.tip_height),
                timestamp=max(now, self._tip_timestamp()),
                proposer=self.pubkey,
                transactions=tuple(included),
            )
            self._append_own(block, now, out)

    def _append_own(self, block: Block, now: int, out: Outputs) -> None:
        entry = LogEntry(term=self.current_term, block=block)
        self.log.append(entry)
        self._storage.append_entry(entry)
        for peer in self.members:
            if peer != self.pubkey:
                self._send_append(peer, out)
        self._heartbeat_deadline = now + HEARTBEAT_INTERVAL_MS
        self._advance_commit(now, out)

    def _save_meta(self) -> None:
        self._storage.save_meta(
            self.current_term, self.voted_for, self.commit_height)
