"""Shared fixtures: deterministic keys and a small committed chain."""

import hashlib

import pytest

from rmsd.keys import Signer
from rmsd.ledger import Block, Ledger, Transaction, make_genesis
from rmsd.payloads import ApproveNeed, CreateNeed, Role, SetUser


def seeded_signer(tag: str) -> Signer:
    return Signer.from_seed(hashlib.sha256(tag.encode()).digest())


@pytest.fixture
def admin():
    return seeded_signer("admin")


@pytest.fixture
def checker():
    return seeded_signer("checker")


@pytest.fixture
def creator():
    return seeded_signer("creator")


@pytest.fixture
def outsider():
    return seeded_signer("outsider")


def extend(ledger: Ledger, signer: Signer, txs, *, timestamp=None) -> Block:
    """Build and append the next block carrying txs, proposed by signer."""
    tip = ledger.blocks[-1]
    block = Block.build(
        height=tip.height + 1,
        prev_hash=tip.block_hash,
        timestamp=tip.timestamp if timestamp is None else timestamp,
        proposer=signer.pubkey,
        transactions=txs,
    )
    ledger.append(block)
    return block


@pytest.fixture
def populated_ledger(admin, checker, creator):
    """Genesis + role grant + need create + approval, one tx per block."""
    ledger = Ledger(make_genesis(admin.pubkey))
    extend(ledger, admin, [
        Transaction.create(admin, 0, SetUser(checker.pubkey, Role.CHECKER)),
    ])
    extend(ledger, admin, [
        Transaction.create(creator, 0, CreateNeed(
            kind="water", amount=100, unit="bottle", personal_ref=b"\xab" * 32)),
    ])
    extend(ledger, admin, [
        Transaction.create(checker, 0, ApproveNeed(need_id=0)),
    ])
    return ledger
