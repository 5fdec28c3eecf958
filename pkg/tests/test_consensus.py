"""RaftCore unit tests: elections, vote safety, replication, membership.

These drive cores synchronously by routing their output messages by hand,
with no simulator in between, so each rule is visible in isolation.
"""

import random
from collections import deque

import pytest

from conftest import seeded_signer
from rmsd.consensus import (
    AppendEntries,
    AppendResponse,
    ConfigChangeInFlight,
    CoreStorage,
    DuplicatePeerError,
    LogEntry,
    MAX_ENTRIES_PER_MESSAGE,
    NotLeaderError,
    RaftCore,
    VoteRequest,
    VoteResponse,
)
from rmsd.ledger import Block, Transaction, make_genesis
from rmsd.membership import MembershipError, NodeId
from rmsd.payloads import CreateNeed, Role, SetUser

ADMIN = seeded_signer("admin")
REF = b"\xe1" * 32


def node_identity(i: int) -> NodeId:
    signer = seeded_signer(f"node{i}")
    return NodeId(pubkey=signer.pubkey, host=f"n{i}.test",
                  port=7000 + i, raftport=8000 + i)


def make_cluster(n: int, seed: str = "cluster"):
    nodes = [node_identity(i) for i in range(n)]
    genesis = make_genesis(ADMIN.pubkey)
    cores = {}
    for i, node in enumerate(nodes):
        cores[node.pubkey] = RaftCore(
            node, list(nodes), genesis,
            rng=random.Random(f"{seed}:{i}"), now=0)
    return cores, nodes


def pump(cores, outputs_by_node, now, drop=frozenset()):
    """Deliver all produced messages until quiescent; return commits seen."""
    commits = {pk: [] for pk in cores}
    queue = deque()

    def absorb(pk, out):
        commits[pk].extend(out.committed)
        for dest, msg in out.messages:
            queue.append((dest, msg))

    for pk, out in outputs_by_node.items():
        absorb(pk, out)
    while queue:
        dest, msg = queue.popleft()
        if dest in drop or dest not in cores:
            continue
        absorb(dest, cores[dest].receive(msg, now))
    return commits


def elect(cores, pubkey, drop=frozenset()):
    """Fire the node's own election timer and deliver the fallout."""
    core = cores[pubkey]
    t = core.next_deadline()
    pump(cores, {pubkey: core.tick(t)}, now=t, drop=drop)
    return t


def beat(cores, leader_pk, drop=frozenset()):
    """One leader heartbeat round; commit heights piggyback on it."""
    leader = cores[leader_pk]
    t = leader.next_deadline()
    return pump(cores, {leader_pk: leader.tick(t)}, now=t, drop=drop)


def admin_tx(nonce, target=None, role=Role.CHECKER):
    target = target or seeded_signer("grantee").pubkey
    return Transaction.create(ADMIN, nonce, SetUser(target, role))


# -- elections ----------------------------------------------------------------


def test_single_node_elects_itself_and_commits_alone():
    cores, nodes = make_cluster(1)
    core = cores[nodes[0].pubkey]
    assert not core.is_leader
    t = core.next_deadline()
    out = core.tick(t)
    assert core.is_leader
    assert ("leader", 1) in out.role_changes

    out = core.submit([admin_tx(0)], t)
    assert core.commit_height == 1
    assert [b.height for b, _, _ in out.committed] == [1]


def test_three_node_election_elects_first_timer():
    cores, nodes = make_cluster(3)
    leader_pk = nodes[0].pubkey
    elect(cores, leader_pk)
    assert cores[leader_pk].is_leader
    assert all(not cores[n.pubkey].is_leader for n in nodes[1:])
    assert all(cores[n.pubkey].leader_hint == leader_pk for n in nodes[1:])
    assert all(cores[n.pubkey].current_term == 1 for n in nodes)


def test_clean_election_appends_no_block():
    cores, nodes = make_cluster(3)
    elect(cores, nodes[0].pubkey)
    assert all(cores[n.pubkey].tip_height == 0 for n in nodes)


def test_vote_granted_once_per_term():
    cores, nodes = make_cluster(3)
    voter = cores[nodes[2].pubkey]
    req_a = VoteRequest(term=1, candidate=nodes[0].pubkey,
                        last_height=0, last_term=0,
                        last_hash=voter.ledger.tip_hash)
    req_b = VoteRequest(term=1, candidate=nodes[1].pubkey,
                        last_height=0, last_term=0,
                        last_hash=voter.ledger.tip_hash)
    first = voter.receive(req_a, 10).messages[0][1]
    assert first.granted
    second = voter.receive(req_b, 20).messages[0][1]
    assert not second.granted
    again = voter.receive(req_a, 30).messages[0][1]
    assert again.granted  # same candidate may retry


def test_vote_refused_for_stale_term_request():
    cores, nodes = make_cluster(3)
    voter = cores[nodes[2].pubkey]
    voter.receive(VoteRequest(term=5, candidate=nodes[0].pubkey,
                              last_height=0, last_term=0,
                              last_hash=voter.ledger.tip_hash), 10)
    assert voter.current_term == 5
    resp = voter.receive(VoteRequest(term=3, candidate=nodes[1].pubkey,
                                     last_height=0, last_term=0,
                                     last_hash=voter.ledger.tip_hash),
                         20).messages[0][1]
    assert not resp.granted
    assert resp.term == 5


def _feed_entry(core, leader_pk, term, height, prev_hash, block):
    """Push one log entry into core as if replicated from a leader."""
    out = core.receive(AppendEntries(
        term=term, leader=leader_pk, prev_height=height - 1,
        prev_hash=prev_hash, entries=(LogEntry(term=term, block=block),),
        leader_commit=0), 0)
    resp = out.messages[0][1]
    assert resp.success
    return out


def test_vote_refused_when_candidate_log_is_behind():
    cores, nodes = make_cluster(3)
    voter = cores[nodes[2].pubkey]
    block = Block.build(height=1, prev_hash=voter.ledger.tip_hash,
                        timestamp=0, proposer=nodes[0].pubkey,
                        transactions=())
    _feed_entry(voter, nodes[0].pubkey, 2, 1, voter.ledger.tip_hash, block)
    assert voter.tip_height == 1

    # shorter log, same last term: refuse
    resp = voter.receive(VoteRequest(term=3, candidate=nodes[1].pubkey,
                                     last_height=0, last_term=2,
                                     last_hash=voter.ledger.tip_hash),
                         50).messages[0][1]
    assert not resp.granted

    # longer log but lower last term: refuse; height alone must not win,
    # or a stale fork that grew long could steal leadership and unwind
    # a committed entry
    resp = voter.receive(VoteRequest(term=3, candidate=nodes[1].pubkey,
                                     last_height=5, last_term=1,
                                     last_hash=b"\x99" * 32),
                         60).messages[0][1]
    assert not resp.granted

    # same last term, longer log: grant
    resp = voter.receive(VoteRequest(term=3, candidate=nodes[1].pubkey,
                                     last_height=2, last_term=2,
                                     last_hash=b"\x99" * 32),
                         70).messages[0][1]
    assert resp.granted


def test_vote_requires_matching_tip_hash_on_equal_logs():
    cores, nodes = make_cluster(3)
    voter = cores[nodes[2].pubkey]
    resp = voter.receive(VoteRequest(term=1, candidate=nodes[0].pubkey,
                                     last_height=0, last_term=0,
                                     last_hash=b"\x44" * 32),
                         10).messages[0][1]
    assert not resp.granted  # claims an equal log on a different genesis


# -- replication and commitment -------------------------------------------------


def test_leader_replicates_and_all_nodes_commit():
    cores, nodes = make_cluster(3)
    leader_pk = nodes[0].pubkey
    t = elect(cores, leader_pk)
    tx = admin_tx(0)
    commits = pump(cores, {leader_pk: cores[leader_pk].submit([tx], t)}, now=t)
    assert len(commits[leader_pk]) == 1  # leader commits on majority ack
    late = beat(cores, leader_pk)  # followers learn via the next heartbeat
    for node in nodes:
        core = cores[node.pubkey]
        assert core.commit_height == 1
        assert core.ledger.height == 1
        assert core.ledger.blocks[1].transactions[0].tx_id == tx.tx_id
        assert len(commits[node.pubkey]) + len(late[node.pubkey]) == 1
    digests = {cores[n.pubkey].ledger.state.digest() for n in nodes}
    assert len(digests) == 1


def test_commit_requires_quorum():
    cores, nodes = make_cluster(3)
    leader_pk = nodes[0].pubkey
    t = elect(cores, leader_pk)
    leader = cores[leader_pk]
    # both followers unreachable: no commit
    pump(cores, {leader_pk: leader.submit([admin_tx(0)], t)}, now=t,
         drop={nodes[1].pubkey, nodes[2].pubkey})
    assert leader.tip_height == 1
    assert leader.commit_height == 0
    # one follower reachable: quorum of 2 reached via heartbeat retry
    pump(cores, {leader_pk: leader.tick(leader.next_deadline())},
         now=leader.next_deadline(), drop={nodes[2].pubkey})
    assert leader.commit_height == 1
    assert cores[nodes[1].pubkey].commit_height <= 1  # learns on next beat


def test_submit_on_follower_raises_with_hint():
    cores, nodes = make_cluster(3)
    elect(cores, nodes[0].pubkey)
    follower = cores[nodes[1].pubkey]
    with pytest.raises(NotLeaderError) as err:
        follower.submit([admin_tx(0)], 1000)
    assert err.value.leader_hint == nodes[0].pubkey


def test_duplicate_submission_is_dropped():
    cores, nodes = make_cluster(1)
    core = cores[nodes[0].pubkey]
    core.tick(core.next_deadline())
    tx = admin_tx(0)
    core.submit([tx], 0)
    assert core.commit_height == 1
    out = core.submit([tx], 1)
    assert core.commit_height == 1
    assert core.pending_count == 0
    assert not out.rejected  # an already committed tx is success, not noise


def test_future_nonce_waits_for_gap_to_fill():
    cores, nodes = make_cluster(1)
    core = cores[nodes[0].pubkey]
    core.tick(core.next_deadline())
    tx0, tx1 = admin_tx(0), admin_tx(1, role=Role.CREATOR)
    core.submit([tx1], 0)
    assert core.pending_count == 1  # held, not rejected
    assert core.commit_height == 0
    core.submit([tx0], 1)
    assert core.commit_height == 2  # gap filled: both commit in order
    assert core.pending_count == 0


def test_invalid_tx_is_rejected_with_code():
    cores, nodes = make_cluster(1)
    core = cores[nodes[0].pubkey]
    core.tick(core.next_deadline())
    intruder = seeded_signer("intruder")
    bad = Transaction.create(
        intruder, 0, SetUser(intruder.pubkey, Role.ADMIN))
    out = core.submit([bad], 0)
    assert out.rejected == [(bad.tx_id, "unauthorized")]
    assert core.tip_height == 0


def test_follower_refuses_invalid_block_from_fake_leader():
    cores, nodes = make_cluster(3)
    follower = cores[nodes[2].pubkey]
    tx = admin_tx(0)
    forged = Transaction(tx_id=tx.tx_id, sender=tx.sender, nonce=tx.nonce,
                         payload=tx.payload, signature=b"\x00" * 64)
    block = Block.build(height=1, prev_hash=follower.ledger.tip_hash,
                        timestamp=0, proposer=nodes[0].pubkey,
                        transactions=(forged,))
    out = follower.receive(AppendEntries(
        term=1, leader=nodes[0].pubkey, prev_height=0,
        prev_hash=follower.ledger.tip_hash,
        entries=(LogEntry(term=1, block=block),), leader_commit=1), 0)
    resp = out.messages[0][1]
    assert not resp.success
    assert follower.tip_height == 0
    assert follower.commit_height == 0


def test_append_refused_on_prev_gap_then_leader_backs_off():
    cores, nodes = make_cluster(2)
    leader_pk, follower_pk = nodes[0].pubkey, nodes[1].pubkey
    t = elect(cores, leader_pk)
    leader = cores[leader_pk]
    # three blocks appended while the follower is offline
    for nonce in range(3):
        pump(cores, {leader_pk: leader.submit([admin_tx(nonce)], t)},
             now=t, drop={follower_pk})
    assert leader.tip_height == 3
    assert leader.commit_height == 0
    # next heartbeat reaches it, catch-up replicates, the one after
    # carries the commit height
    beat(cores, leader_pk)
    follower = cores[follower_pk]
    assert follower.tip_height == 3
    assert leader.commit_height == 3
    beat(cores, leader_pk)
    assert follower.commit_height == 3
    assert follower.ledger.state.digest() == leader.ledger.state.digest()


def test_catchup_ships_at_most_the_batch_cap():
    cores, nodes = make_cluster(2)
    leader_pk, follower_pk = nodes[0].pubkey, nodes[1].pubkey
    t = elect(cores, leader_pk)
    leader = cores[leader_pk]
    for nonce in range(MAX_ENTRIES_PER_MESSAGE + 6):
        pump(cores, {leader_pk: leader.submit([admin_tx(nonce)], t)},
             now=t, drop={follower_pk})
    out = leader.tick(leader.next_deadline())
    (dest, msg), = out.messages
    assert dest == follower_pk
    assert len(msg.entries) == MAX_ENTRIES_PER_MESSAGE
    pump(cores, {leader_pk: out}, now=t + 50)
    assert cores[follower_pk].tip_height == MAX_ENTRIES_PER_MESSAGE + 6
    assert leader.commit_height == MAX_ENTRIES_PER_MESSAGE + 6


# -- term changes, conflicts, dangling entries -----------------------------------


def test_new_leader_seals_dangling_entries_with_empty_block():
    cores, nodes = make_cluster(3)
    pk0, pk1, pk2 = (n.pubkey for n in nodes)
    t = elect(cores, pk0)
    leader = cores[pk0]
    tx = admin_tx(0)
    # the entry lands on disk but never reaches a follower
    pump(cores, {pk0: leader.submit([tx], t)}, now=t, drop={pk1, pk2})
    assert leader.tip_height == 1
    assert leader.commit_height == 0

    # a higher-term response forces it out of leadership
    leader.receive(AppendResponse(term=2, follower=pk1, success=False,
                                  match_height=0), t + 10)
    assert not leader.is_leader

    # it re-elects itself; its log is longest, so votes arrive
    elect(cores, pk0)
    assert leader.is_leader
    assert leader.current_term == 3
    # dangling term-1 entry sealed under a term-3 empty block and committed
    assert leader.tip_height == 2
    assert leader.log[0].term == 1
    assert leader.log[1].term == 3
    assert leader.log[1].block.transactions == ()
    assert leader.commit_height == 2
    assert tx.tx_id in leader.ledger.tx_index
    beat(cores, pk0)
    for pk in (pk1, pk2):
        assert cores[pk].commit_height == 2
        assert cores[pk].ledger.state.digest() == leader.ledger.state.digest()


def test_old_term_entry_does_not_commit_by_count_alone():
    cores, nodes = make_cluster(3)
    pk0, pk1, pk2 = (n.pubkey for n in nodes)
    voter = cores[pk2]
    block = Block.build(height=1, prev_hash=voter.ledger.tip_hash,
                        timestamp=0, proposer=pk0, transactions=(admin_tx(0),))
    # both followers hold a term-1 entry, then pk1 becomes leader at term 2
    for pk in (pk1, pk2):
        _feed_entry(cores[pk], pk0, 1, 1, cores[pk].ledger.tip_hash, block)
    elect(cores, pk1, drop={pk0})
    new_leader = cores[pk1]
    assert new_leader.is_leader
    assert new_leader.current_term == 2
    # the old entry commits only because the new term sealed it on top
    assert new_leader.commit_height == 2
    assert new_leader.log[0].term == 1
    assert new_leader.log[1].term == 2


def test_conflicting_uncommitted_entry_is_truncated():
    cores, nodes = make_cluster(3)
    pk0, pk1, pk2 = (n.pubkey for n in nodes)
    t = elect(cores, pk0)
    stale_leader = cores[pk0]
    # pk0 appends a block nobody receives
    pump(cores, {pk0: stale_leader.submit([admin_tx(0)], t)},
         now=t, drop={pk1, pk2})
    assert stale_leader.tip_height == 1

    # pk1 wins term 2 with votes from pk2 only
    elect(cores, pk1, drop={pk0})
    new_leader = cores[pk1]
    assert new_leader.is_leader
    # pk1 commits a different block at height 1
    t2 = new_leader.next_deadline()
    other_tx = Transaction.create(
        ADMIN, 0, SetUser(seeded_signer("other").pubkey, Role.CREATOR))
    pump(cores, {pk1: new_leader.submit([other_tx], t2)}, now=t2, drop={pk0})
    assert new_leader.commit_height == 1

    # the heartbeat reaches pk0: its dangling entry conflicts and is replaced
    pump(cores, {pk1: new_leader.tick(new_leader.next_deadline())},
         now=t2 + 50)
    assert not stale_leader.is_leader
    assert stale_leader.log[0].block.block_hash == new_leader.log[0].block.block_hash
    assert stale_leader.commit_height == 1
    assert stale_leader.ledger.state.digest() == new_leader.ledger.state.digest()


def test_committed_entries_never_unwound():
    cores, nodes = make_cluster(3)
    pk0 = nodes[0].pubkey
    t = elect(cores, pk0)
    pump(cores, {pk0: cores[pk0].submit([admin_tx(0)], t)}, now=t)
    beat(cores, pk0)
    follower = cores[nodes[2].pubkey]
    assert follower.commit_height == 1
    committed_hash = follower.ledger.blocks[1].block_hash

    # a forged higher-term leader tries to overwrite height 1
    forged = Block.build(height=1, prev_hash=follower.ledger.blocks[0].block_hash,
                         timestamp=5, proposer=nodes[1].pubkey,
                         transactions=())
    out = follower.receive(AppendEntries(
        term=9, leader=nodes[1].pubkey, prev_height=0,
        prev_hash=follower.ledger.blocks[0].block_hash,
        entries=(LogEntry(term=9, block=forged),), leader_commit=1), t + 100)
    resp = out.messages[0][1]
    assert not resp.success
    assert follower.ledger.blocks[1].block_hash == committed_hash


# -- membership growth ------------------------------------------------------------


def joiner_core(nodes, index=3, seed="joiner"):
    joiner = node_identity(index)
    core = RaftCore(joiner, list(nodes), make_genesis(ADMIN.pubkey),
                    rng=random.Random(seed), now=0)
    return joiner, core


def test_add_peer_commits_and_activates_everywhere():
    cores, nodes = make_cluster(3)
    pk0 = nodes[0].pubkey
    t = elect(cores, pk0)
    leader = cores[pk0]

    joiner, joiner_rc = joiner_core(nodes)
    cores[joiner.pubkey] = joiner_rc
    assert not joiner_rc.active
    assert joiner_rc.next_deadline() is None  # passive nodes never campaign

    out = leader.request_add_peer(joiner.render(), t)
    commits = pump(cores, {pk0: out}, now=t)
    # the joiner is caught up and activated within the same exchange:
    # the append it receives on membership application already carries
    # the commit height of its own add
    assert joiner_rc.active
    assert joiner_rc.commit_height == 1
    assert joiner_rc.next_deadline() is not None
    late = beat(cores, pk0)
    for node in nodes + [joiner]:
        core = cores[node.pubkey]
        assert core.commit_height == 1
        assert set(core.members) == {n.pubkey for n in nodes} | {joiner.pubkey}
        # each node committed the config block exactly once
        config_commits = [c for c in commits[node.pubkey] + late[node.pubkey]
                          if c[0].config is not None]
        assert len(config_commits) == 1
    assert leader._quorum() == 3


def test_add_peer_rejects_duplicates_and_parallel_changes():
    cores, nodes = make_cluster(3)
    pk0 = nodes[0].pubkey
    t = elect(cores, pk0)
    leader = cores[pk0]
    with pytest.raises(DuplicatePeerError):
        leader.request_add_peer(nodes[1].render(), t)
    with pytest.raises(MembershipError):
        leader.request_add_peer("not-a-uri", t)

    joiner, _ = joiner_core(nodes, index=3)
    other, _ = joiner_core(nodes, index=4, seed="other")
    pump(cores, {pk0: leader.request_add_peer(joiner.render(), t)},
         now=t, drop={nodes[1].pubkey, nodes[2].pubkey})
    # same peer again while in flight: absorbed silently
    out = leader.request_add_peer(joiner.render(), t)
    assert not out.messages
    # a different peer while one is in flight: refused
    with pytest.raises(ConfigChangeInFlight):
        leader.request_add_peer(other.render(), t)


def test_on_follower_add_peer_raises_not_leader():
    cores, nodes = make_cluster(3)
    elect(cores, nodes[0].pubkey)
    joiner, _ = joiner_core(nodes)
    with pytest.raises(NotLeaderError):
        cores[nodes[1].pubkey].request_add_peer(joiner.render(), 0)


def test_quorum_grows_with_membership():
    cores, nodes = make_cluster(3)
    pk0 = nodes[0].pubkey
    t = elect(cores, pk0)
    leader = cores[pk0]
    joiner, joiner_rc = joiner_core(nodes)
    cores[joiner.pubkey] = joiner_rc
    pump(cores, {pk0: leader.request_add_peer(joiner.render(), t)}, now=t)
    assert leader._quorum() == 3
    # now two acks are not enough: with two followers dark, no commit
    pump(cores, {pk0: leader.submit([admin_tx(0)], t)}, now=t,
         drop={nodes[2].pubkey, joiner.pubkey})
    assert leader.commit_height == 1
    pump(cores, {pk0: leader.tick(leader.next_deadline())},
         now=t + 50, drop={joiner.pubkey})
    assert leader.commit_height == 2  # third ack arrives, quorum of 3


# -- persistence and restart -------------------------------------------------------


class RecordingStorage(CoreStorage):
    def __init__(self):
        self.meta = (0, None, 0)
        self.entries = []

    def save_meta(self, term, voted_for, commit_height):
        self.meta = (term, voted_for, commit_height)

    def append_entry(self, entry):
        self.entries.append(entry)

    def truncate(self, height):
        del self.entries[height:]


def test_restart_restores_ledger_and_log():
    nodes = [node_identity(0)]
    genesis = make_genesis(ADMIN.pubkey)
    storage = RecordingStorage()
    core = RaftCore(nodes[0], nodes, genesis,
                    rng=random.Random("r1"), now=0, storage=storage)
    core.tick(core.next_deadline())
    core.submit([admin_tx(0)], 0)
    core.submit([admin_tx(1, role=Role.CREATOR)], 1)
    assert core.commit_height == 2
    term, voted_for, commit = storage.meta
    assert commit == 2
    assert len(storage.entries) == 2

    revived = RaftCore(nodes[0], nodes, genesis,
                       rng=random.Random("r2"), now=0,
                       entries=list(storage.entries), current_term=term,
                       voted_for=voted_for, commit_height=commit)
    assert revived.commit_height == 2
    assert revived.tip_height == 2
    assert revived.current_term == term
    assert revived.ledger.state.digest() == core.ledger.state.digest()
    assert not revived.is_leader  # restarts as follower, must re-campaign


def test_restart_with_revalidation_checks_blocks():
    nodes = [node_identity(0)]
    genesis = make_genesis(ADMIN.pubkey)
    storage = RecordingStorage()
    core = RaftCore(nodes[0], nodes, genesis,
                    rng=random.Random("r1"), now=0, storage=storage)
    core.tick(core.next_deadline())
    core.submit([admin_tx(0)], 0)

    revived = RaftCore(nodes[0], nodes, genesis,
                       rng=random.Random("r3"), now=0,
                       entries=list(storage.entries),
                       commit_height=1, revalidate=True)
    assert revived.ledger.state.digest() == core.ledger.state.digest()

    # a corrupted persisted block must refuse to load under revalidation
    tx = storage.entries[0].block.transactions[0]
    bad_block = Block.build(
        height=1, prev_hash=genesis.block_hash, timestamp=0,
        proposer=nodes[0].pubkey,
        transactions=(Transaction(tx_id=tx.tx_id, sender=tx.sender,
                                  nonce=tx.nonce, payload=tx.payload,
                                  signature=b"\x00" * 64),))
    with pytest.raises(Exception):
        RaftCore(nodes[0], nodes, genesis, rng=random.Random("r4"), now=0,
                 entries=[LogEntry(term=1, block=bad_block)],
                 commit_height=1, revalidate=True)


def test_restart_restores_membership_from_config_blocks():
    cores, nodes = make_cluster(3)
    pk0 = nodes[0].pubkey
    storage = RecordingStorage()
    cores[pk0]._storage = storage
    t = elect(cores, pk0)
    leader = cores[pk0]
    joiner, joiner_rc = joiner_core(nodes)
    cores[joiner.pubkey] = joiner_rc
    pump(cores, {pk0: leader.request_add_peer(joiner.render(), t)}, now=t)

    term, voted_for, commit = storage.meta
    revived = RaftCore(nodes[0], list(nodes), make_genesis(ADMIN.pubkey),
                       rng=random.Random("r5"), now=0,
                       entries=list(storage.entries), current_term=term,
                       voted_for=voted_for, commit_height=commit)
    assert joiner.pubkey in revived.members
    assert revived._quorum() == 3


def test_commit_height_beyond_log_refused():
    nodes = [node_identity(0)]
    genesis = make_genesis(ADMIN.pubkey)
    with pytest.raises(ValueError):
        RaftCore(nodes[0], nodes, genesis, rng=random.Random("x"), now=0,
                 entries=[], commit_height=3)
