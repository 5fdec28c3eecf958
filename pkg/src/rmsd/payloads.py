"""On-chain operation payloads and the role enumeration they reference.

Wire tags (fixed): 0x01 SetUser, 0x02 CreateNeed, 0x03 CreateSupport,
0x04 ApproveNeed, 0x05 ApproveSupport.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Union

from .codec import CodecError, Reader, enc_fixed, enc_str, enc_u8, enc_u64

TAG_SET_USER = 0x01
TAG_CREATE_NEED = 0x02
TAG_CREATE_SUPPORT = 0x03
TAG_APPROVE_NEED = 0x04
TAG_APPROVE_SUPPORT = 0x05


class Role(enum.IntEnum):
    NONE = 0
    ADMIN = 1
    CHECKER = 2
    CREATOR = 3

    @property
    def label(self) -> str:
        return _ROLE_LABELS[self]


_ROLE_LABELS = {
    Role.NONE: "none",
    Role.ADMIN: "admin",
    Role.CHECKER: "checker",
    Role.CREATOR: "creator",
}


@dataclass(frozen=True)
class SetUser:
    target: bytes  # 32-byte account
    role: Role

    tag = TAG_SET_USER

    def encode_body(self) -> bytes:
        return enc_fixed(self.target, 32) + enc_u8(int(self.role))


@dataclass(frozen=True)
class CreateNeed:
    kind: str
    amount: int
    unit: str
    personal_ref: bytes  # opaque 32-byte off-chain handle

    tag = TAG_CREATE_NEED

    def encode_body(self) -> bytes:
        return (
            enc_str(self.kind)
            + enc_u64(self.amount)
            + enc_str(self.unit)
            + enc_fixed(self.personal_ref, 32)
        )


@dataclass(frozen=True)
class CreateSupport:
    kind: str
    amount: int
    unit: str
    shipping: str
    personal_ref: bytes

    tag = TAG_CREATE_SUPPORT

    def encode_body(self) -> bytes:
        return (
            enc_str(self.kind)
            + enc_u64(self.amount)
            + enc_str(self.unit)
            + enc_str(self.shipping)
            + enc_fixed(self.personal_ref, 32)
        )


@dataclass(frozen=True)
class ApproveNeed:
    need_id: int

    tag = TAG_APPROVE_NEED

    def encode_body(self) -> bytes:
        return enc_u64(self.need_id)


@dataclass(frozen=True)
class ApproveSupport:
    support_id: int

    tag = TAG_APPROVE_SUPPORT

    def encode_body(self) -> bytes:
        return enc_u64(self.support_id)


Payload = Union[SetUser, CreateNeed, CreateSupport, ApproveNeed, ApproveSupport]


def encode_payload(payload: Payload) -> bytes:
    return enc_u8(payload.tag) + payload.encode_body()


def decode_payload(reader: Reader) -> Payload:
    tag = reader.u8()
    if tag == TAG_SET_USER:
        target = reader.fixed(32)
        role_raw = reader.u8()
        try:
            role = Role(role_raw)
        except ValueError as exc:
            raise CodecError(f"unknown role value {role_raw}") from exc
        return SetUser(target=target, role=role)
    if tag == TAG_CREATE_NEED:
        return CreateNeed(
            kind=reader.str(),
            amount=reader.u64(),
            unit=reader.str(),
            personal_ref=reader.fixed(32),
        )
    if tag == TAG_CREATE_SUPPORT:
        return CreateSupport(
            kind=reader.str(),
            amount=reader.u64(),
            unit=reader.str(),
            shipping=reader.str(),
            personal_ref=reader.fixed(32),
        )
    if tag == TAG_APPROVE_NEED:
        return ApproveNeed(need_id=reader.u64())
    if tag == TAG_APPROVE_SUPPORT:
        return ApproveSupport(support_id=reader.u64())
    raise CodecError(f"unknown payload tag 0x{tag:02x}")
