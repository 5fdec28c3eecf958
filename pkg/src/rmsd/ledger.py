"""Tamper-evident log: signed transactions, hash-linked blocks, validation.

Everything here is value-semantic and side-effect free; the consensus
layer replicates blocks, this module decides whether they are valid.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from . import contract
from .codec import CodecError, Reader, enc_fixed, enc_str, enc_u8, enc_u32, enc_u64
from .contract import ContractError, ContractState
from .keys import SIGNATURE_LEN, Signer, verify
from .payloads import Payload, decode_payload, encode_payload

MAX_BLOCK_TXS = 1024
GENESIS_PREV_HASH = bytes(32)
GENESIS_PROPOSER = bytes(32)

CONFIG_NONE = 0x00
CONFIG_GENESIS_ADMIN = 0x01
CONFIG_ADD_PEER = 0x02

BAD_SIGNATURE = "bad_signature"
BAD_NONCE = "bad_nonce"
BAD_HEIGHT = "bad_height"
BAD_PREV_HASH = "bad_prev_hash"
BAD_BLOCK_HASH = "bad_block_hash"
BAD_TIMESTAMP = "bad_timestamp"
BAD_CONFIG = "bad_config"
TOO_MANY_TXS = "too_many_txs"
BAD_TRANSACTION = "bad_transaction"


class TxRejected(Exception):
    """A transaction failed verification; code names the failed check."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


class BlockRejected(Exception):
    """A block failed verification against the current chain."""

    def __init__(self, code: str, message: str, tx_index: Optional[int] = None,
                 tx_reason: Optional[str] = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.tx_index = tx_index
        self.tx_reason = tx_reason


@dataclass(frozen=True)
class GenesisConfig:
    """Binds the first admin account into block 0."""

    admin: bytes


@dataclass(frozen=True)
class AddPeerConfig:
    """Commits a membership addition; uri is the rendered node URI."""

    uri: str


BlockConfig = Union[GenesisConfig, AddPeerConfig, None]


def _encode_config(config: BlockConfig) -> bytes:
    if config is None:
        return enc_u8(CONFIG_NONE)
    if isinstance(config, GenesisConfig):
        return enc_u8(CONFIG_GENESIS_ADMIN) + enc_fixed(config.admin, 32)
    if isinstance(config, AddPeerConfig):
        return enc_u8(CONFIG_ADD_PEER) + enc_str(config.uri)
    raise CodecError(f"unknown config {type(config).__name__}")


def _decode_config(reader: Reader) -> BlockConfig:
    tag = reader.u8()
    if tag == CONFIG_NONE:
        return None
    if tag == CONFIG_GENESIS_ADMIN:
        return GenesisConfig(admin=reader.fixed(32))
    if tag == CONFIG_ADD_PEER:
        return AddPeerConfig(uri=reader.str())
    raise CodecError(f"unknown config tag 0x{tag:02x}")


@dataclass(frozen=True)
class Transaction:
    tx_id: bytes
    sender: bytes
    nonce: int
    payload: Payload
    signature: bytes

    @staticmethod
    def signing_bytes(sender: bytes, nonce: int, payload: Payload) -> bytes:
        return enc_fixed(sender, 32) + enc_u64(nonce) + encode_payload(payload)

    @classmethod
    def create(cls, signer: Signer, nonce: int, payload: Payload) -> "Transaction":
        body = cls.signing_bytes(signer.pubkey, nonce, payload)
        return cls(
            tx_id=hashlib.sha256(body).digest(),
            sender=signer.pubkey,
            nonce=nonce,
            payload=payload,
            signature=signer.sign(body),
        )

    def body_bytes(self) -> bytes:
        return self.signing_bytes(self.sender, self.nonce, self.payload)

    def canonical_bytes(self) -> bytes:
        return (
            enc_fixed(self.tx_id, 32)
            + self.body_bytes()
            + enc_fixed(self.signature, SIGNATURE_LEN)
        )


def decode_transaction(reader: Reader) -> Transaction:
    tx_id = reader.fixed(32)
    sender = reader.fixed(32)
    nonce = reader.u64()
    payload = decode_payload(reader)
    signature = reader.fixed(SIGNATURE_LEN)
    return Transaction(tx_id=tx_id, sender=sender, nonce=nonce,
                       payload=payload, signature=signature)


def transaction_from_bytes(data: bytes) -> Transaction:
    reader = Reader(data)
    tx = decode_transaction(reader)
    reader.expect_end()
    return tx


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    timestamp: int  # proposer-local milliseconds
    proposer: bytes
    transactions: tuple[Transaction, ...]
    config: BlockConfig
    block_hash: bytes

    @staticmethod
    def header_bytes(height: int, prev_hash: bytes, timestamp: int,
                     proposer: bytes, config: BlockConfig,
                     tx_ids: list[bytes]) -> bytes:
        out = bytearray()
        out += enc_u64(height)
        out += enc_fixed(prev_hash, 32)
        out += enc_u64(timestamp)
        out += enc_fixed(proposer, 32)
        out += _encode_config(config)
        out += enc_u32(len(tx_ids))
        for tx_id in tx_ids:
            out += enc_fixed(tx_id, 32)
        return bytes(out)

    @classmethod
    def build(cls, height: int, prev_hash: bytes, timestamp: int,
              proposer: bytes, transactions: Sequence[Transaction],
              config: BlockConfig = None) -> "Block":
        header = cls.header_bytes(
            height, prev_hash, timestamp, proposer, config,
            [tx.tx_id for tx in transactions],
        )
        return cls(
            height=height,
            prev_hash=prev_hash,
            timestamp=timestamp,
            proposer=proposer,
            transactions=tuple(transactions),
            config=config,
            block_hash=hashlib.sha256(header).digest(),
        )

    def computed_hash(self) -> bytes:
        header = self.header_bytes(
            self.height, self.prev_hash, self.timestamp, self.proposer,
            self.config, [tx.tx_id for tx in self.transactions],
        )
        return hashlib.sha256(header).digest()

    def canonical_bytes(self) -> bytes:
        out = bytearray()
        out += enc_u64(self.height)
        out += enc_fixed(self.prev_hash, 32)
        out += enc_u64(self.timestamp)
        out += enc_fixed(self.proposer, 32)
        out += _encode_config(self.config)
        out += enc_u32(len(self.transactions))
        for tx in self.transactions:
            out += tx.canonical_bytes()
        out += enc_fixed(self.block_hash, 32)
        return bytes(out)


def decode_block(reader: Reader) -> Block:
    height = reader.u64()
    prev_hash = reader.fixed(32)
    timestamp = reader.u64()
    proposer = reader.fixed(32)
    config = _decode_config(reader)
    count = reader.u32()
    transactions = tuple(decode_transaction(reader) for _ in range(count))
    block_hash = reader.fixed(32)
    return Block(height=height, prev_hash=prev_hash, timestamp=timestamp,
                 proposer=proposer, transactions=transactions,
                 config=config, block_hash=block_hash)


def block_from_bytes(data: bytes) -> Block:
    reader = Reader(data)
    block = decode_block(reader)
    reader.expect_end()
    return block


def make_genesis(admin: bytes, timestamp: int = 0) -> Block:
    return Block.build(
        height=0,
        prev_hash=GENESIS_PREV_HASH,
        timestamp=timestamp,
        proposer=GENESIS_PROPOSER,
        transactions=[],
        config=GenesisConfig(admin=enc_fixed(admin, 32)),
    )


def verify_transaction(tx: Transaction, state: ContractState,
                       nonces: dict[bytes, int]) -> None:
    """Raise TxRejected unless tx is committable on top of (state, nonces)."""
    body = tx.body_bytes()
    if tx.tx_id != hashlib.sha256(body).digest():
        raise TxRejected(contract.MALFORMED_PAYLOAD, "tx_id does not match body digest")
    if not verify(tx.sender, tx.signature, body):
        raise TxRejected(BAD_SIGNATURE, "signature does not verify against sender")
    expected = nonces.get(tx.sender, -1) + 1
    if tx.nonce != expected:
        raise TxRejected(BAD_NONCE, f"nonce {tx.nonce}, expected {expected}")
    try:
        state.check_payload(tx.sender, tx.payload)
    except ContractError as exc:
        raise TxRejected(exc.code, exc.message) from exc


@dataclass
class ChainCheck:
    ok: bool
    height: Optional[int] = None
    reason: Optional[str] = None


class Ledger:
    """A validated chain with its derived contract state and nonce map.

    append() either extends the chain by one fully verified block or
    raises BlockRejected leaving everything unchanged.
    """

    def __init__(self, genesis: Block):
        _check_genesis(genesis)
        self.blocks: list[Block] = [genesis]
        self.state = ContractState.genesis(genesis.config.admin)
        self.nonces: dict[bytes, int] = {}
        self.tx_index: dict[bytes, int] = {}  # tx_id -> committed height

    @property
    def height(self) -> int:
        return self.blocks[-1].height

    @property
    def tip_hash(self) -> bytes:
        return self.blocks[-1].block_hash

    @property
    def genesis(self) -> Block:
        return self.blocks[0]

    def copy(self) -> "Ledger":
        dup = Ledger.__new__(Ledger)
        dup.blocks = list(self.blocks)
        dup.state = self.state.copy()
        dup.nonces = dict(self.nonces)
        dup.tx_index = dict(self.tx_index)
        return dup

    def next_nonce(self, sender: bytes) -> int:
        return self.nonces.get(sender, -1) + 1

    def append(self, block: Block, *, assume_valid: bool = False) -> None:
        """Verify and apply one block.

        assume_valid skips the structural and signature checks for blocks
        this process already validated against this exact prefix (commit
        replay); payload application still runs so state stays derived.
        """
        if assume_valid:
            for tx in block.transactions:
                self.state.apply_payload(tx.sender, tx.payload, block.height)
                self.nonces[tx.sender] = tx.nonce
                self.tx_index[tx.tx_id] = block.height
            self.state.applied_height = block.height
            self.blocks.append(block)
            return

        tip = self.blocks[-1]
        if block.height != tip.height + 1:
            raise BlockRejected(
                BAD_HEIGHT, f"height {block.height}, expected {tip.height + 1}")
        if block.prev_hash != tip.block_hash:
            raise BlockRejected(BAD_PREV_HASH, "prev_hash does not match tip")
        if block.timestamp < tip.timestamp:
            raise BlockRejected(
                BAD_TIMESTAMP, "timestamp below previous block")
        if len(block.transactions) > MAX_BLOCK_TXS:
            raise BlockRejected(
                TOO_MANY_TXS, f"{len(block.transactions)} txs exceeds {MAX_BLOCK_TXS}")
        if isinstance(block.config, GenesisConfig):
            raise BlockRejected(BAD_CONFIG, "genesis config only valid at height 0")
        if isinstance(block.config, AddPeerConfig) and block.transactions:
            raise BlockRejected(BAD_CONFIG, "config blocks carry no transactions")
        if block.block_hash != block.computed_hash():
            raise BlockRejected(BAD_BLOCK_HASH, "stored hash does not match header")

        scratch_state = self.state.copy()
        scratch_nonces = dict(self.nonces)
        for i, tx in enumerate(block.transactions):
            try:
                verify_transaction(tx, scratch_state, scratch_nonces)
            except TxRejected as exc:
                raise BlockRejected(
                    BAD_TRANSACTION, f"tx {i}: {exc.message}",
                    tx_index=i, tx_reason=exc.code,
                ) from exc
            scratch_state.apply_payload(tx.sender, tx.payload, block.height)
            scratch_nonces[tx.sender] = tx.nonce

        scratch_state.applied_height = block.height
        self.blocks.append(block)
        self.state = scratch_state
        self.nonces = scratch_nonces
        for tx in block.transactions:
            self.tx_index[tx.tx_id] = block.height


def _check_genesis(block: Block) -> None:
    if block.height != 0:
        raise BlockRejected(BAD_HEIGHT, "genesis height must be 0")
    if block.prev_hash != GENESIS_PREV_HASH:
        raise BlockRejected(BAD_PREV_HASH, "genesis prev_hash must be zero")
    if not isinstance(block.config, GenesisConfig):
        raise BlockRejected(BAD_CONFIG, "genesis block must bind the first admin")
    if block.transactions:
        raise BlockRejected(BAD_TRANSACTION, "genesis block carries no transactions")
    if block.block_hash != block.computed_hash():
        raise BlockRejected(BAD_BLOCK_HASH, "stored hash does not match header")


def validate_chain(blocks: list[Block]) -> ChainCheck:
    """Full replay from genesis; reports the lowest violating height."""
    if not blocks:
        return ChainCheck(ok=False, height=0, reason="empty chain")
    try:
        ledger = Ledger(blocks[0])
    except BlockRejected as exc:
        return ChainCheck(ok=False, height=0, reason=exc.code)
    for block in blocks[1:]:
        try:
            ledger.append(block)
        except BlockRejected as exc:
            return ChainCheck(ok=False, height=block.height, reason=exc.code)
    return ChainCheck(ok=True)


def replay_state(blocks: list[Block]) -> ContractState:
    """Rebuild contract state from a chain, refusing invalid input."""
    check = validate_chain(blocks)
    if not check.ok:
        raise BlockRejected(check.reason or "invalid",
                            f"chain invalid at height {check.height}")
    ledger = Ledger(blocks[0])
    for block in blocks[1:]:
        ledger.append(block)
    return ledger.state
