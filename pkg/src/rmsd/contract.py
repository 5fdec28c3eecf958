"""Deterministic application state machine: roles, needs, supports, approvals.

Applied to committed blocks in order on every node; replaying the same
blocks always reproduces the same canonical state bytes.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, replace
from typing import Optional

from .codec import enc_fixed, enc_str, enc_u8, enc_u32, enc_u64
from .payloads import (
    ApproveNeed,
    ApproveSupport,
    CreateNeed,
    CreateSupport,
    Payload,
    Role,
    SetUser,
)

UNAUTHORIZED = "unauthorized"
UNKNOWN_ID = "unknown_id"
ALREADY_APPROVED = "already_approved"
MALFORMED_PAYLOAD = "malformed_payload"
SELF_DEMOTION_FORBIDDEN = "self_demotion_forbidden"

NEED_WAITING_LABEL = "waiting for confirmation"
SUPPORT_WAITING_LABEL = "waiting for approval"
APPROVED_LABEL = "approved"


class ContractError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


class RecordStatus(enum.IntEnum):
    WAITING_APPROVAL = 0
    APPROVED = 1


@dataclass(frozen=True)
class NeedRecord:
    need_id: int
    kind: str
    amount: int
    unit: str
    creator: bytes
    status: RecordStatus
    personal_ref: bytes
    created_at: int
    approved_by: Optional[bytes] = None
    approved_at: Optional[int] = None

    @property
    def status_label(self) -> str:
        if self.status is RecordStatus.APPROVED:
            return APPROVED_LABEL
        return NEED_WAITING_LABEL


@dataclass(frozen=True)
class SupportRecord:
    support_id: int
    kind: str
    amount: int
    unit: str
    shipping: str
    creator: bytes
    status: RecordStatus
    personal_ref: bytes
    created_at: int
    approved_by: Optional[bytes] = None
    approved_at: Optional[int] = None

    @property
    def status_label(self) -> str:
        if self.status is RecordStatus.APPROVED:
            return APPROVED_LABEL
        return SUPPORT_WAITING_LABEL


def role_digest(role: Role) -> bytes:
    """Digest of the canonical role label, as the on-chain modifier compares."""
    return hashlib.sha256(role.label.encode("utf-8")).digest()


class ContractState:
    """Aggregate of role grants and need/support records.

    Mutated only by the commit loop applying blocks in order; readers take
    copies at commit boundaries.
    """

    def __init__(self):
        self.roles: dict[bytes, Role] = {}
        self.needs: dict[int, NeedRecord] = {}
        self.supports: dict[int, SupportRecord] = {}
        self.next_need_id = 0
        self.next_support_id = 0
        self.applied_height = 0

    @classmethod
    def genesis(cls, first_admin: bytes) -> "ContractState":
        """State after genesis: exactly one role binding, the first admin."""
        state = cls()
        state.roles[enc_fixed(first_admin, 32)] = Role.ADMIN
        return state

    def copy(self) -> "ContractState":
        dup = ContractState()
        dup.roles = dict(self.roles)
        dup.needs = dict(self.needs)
        dup.supports = dict(self.supports)
        dup.next_need_id = self.next_need_id
        dup.next_support_id = self.next_support_id
        dup.applied_height = self.applied_height
        return dup

    # -- role management -------------------------------------------------

    def get_user_auth(self, account: bytes) -> Role:
        return self.roles.get(account, Role.NONE)

    def require_role(self, account: bytes, needed: Role) -> None:
        # Compare digests of the canonical role labels; behaviorally equal
        # to comparing the roles directly (exhaustively tested).
        if role_digest(self.get_user_auth(account)) != role_digest(needed):
            raise ContractError(
                UNAUTHORIZED,
                f"account lacks role {needed.label}",
            )

    def _admin_count(self) -> int:
        return sum(1 for r in self.roles.values() if r is Role.ADMIN)

    def set_user(self, caller: bytes, target: bytes, role: Role) -> None:
        self.require_role(caller, Role.ADMIN)
        current = self.get_user_auth(target)
        if current is Role.ADMIN and role is not Role.ADMIN and self._admin_count() == 1:
            raise ContractError(
                SELF_DEMOTION_FORBIDDEN, "cannot remove the last admin"
            )
        if role is Role.NONE:
            self.roles.pop(target, None)
        else:
            self.roles[enc_fixed(target, 32)] = role

    # -- creation (open to everyone) -------------------------------------

    def create_need(
        self, caller: bytes, kind: str, amount: int, unit: str,
        personal_ref: bytes, height: int,
    ) -> int:
        if not kind:
            raise ContractError(MALFORMED_PAYLOAD, "need kind must be non-empty")
        if amount <= 0:
            raise ContractError(MALFORMED_PAYLOAD, "need amount must be positive")
        need_id = self.next_need_id
        self.needs[need_id] = NeedRecord(
            need_id=need_id,
            kind=kind,
            amount=amount,
            unit=unit,
            creator=enc_fixed(caller, 32),
            status=RecordStatus.WAITING_APPROVAL,
            personal_ref=enc_fixed(personal_ref, 32),
            created_at=height,
        )
        self.next_need_id += 1
        return need_id

    def create_support(
        self, caller: bytes, kind: str, amount: int, unit: str,
        shipping: str, personal_ref: bytes, height: int,
    ) -> int:
        if not kind:
            raise ContractError(MALFORMED_PAYLOAD, "support kind must be non-empty")
        if amount <= 0:
            raise ContractError(MALFORMED_PAYLOAD, "support amount must be positive")
        if not shipping:
            raise ContractError(MALFORMED_PAYLOAD, "shipping type must be non-empty")
        support_id = self.next_support_id
        self.supports[support_id] = SupportRecord(
            support_id=support_id,
            kind=kind,
            amount=amount,
            unit=unit,
            shipping=shipping,
            creator=enc_fixed(caller, 32),
            status=RecordStatus.WAITING_APPROVAL,
            personal_ref=enc_fixed(personal_ref, 32),
            created_at=height,
        )
        self.next_support_id += 1
        return support_id

    # -- approval ---------------------------------------------------------

    def approve_need(self, caller: bytes, need_id: int, height: int) -> None:
        self.require_role(caller, Role.CHECKER)
        record = self.needs.get(need_id)
        if record is None:
            raise ContractError(UNKNOWN_ID, f"no need with id {need_id}")
        if record.status is RecordStatus.APPROVED:
            raise ContractError(ALREADY_APPROVED, f"need {need_id} already approved")
        self.needs[need_id] = replace(
            record,
            status=RecordStatus.APPROVED,
            approved_by=enc_fixed(caller, 32),
            approved_at=height,
        )

    def approve_support(self, caller: bytes, support_id: int, height: int) -> None:
        self.require_role(caller, Role.CHECKER)
        record = self.supports.get(support_id)
        if record is None:
            raise ContractError(UNKNOWN_ID, f"no support with id {support_id}")
        if record.status is RecordStatus.APPROVED:
            raise ContractError(
                ALREADY_APPROVED, f"support {support_id} already approved"
            )
        self.supports[support_id] = replace(
            record,
            status=RecordStatus.APPROVED,
            approved_by=enc_fixed(caller, 32),
            approved_at=height,
        )

    # -- queries (pure reads) ----------------------------------------------

    def show_need(self, need_id: int) -> NeedRecord:
        record = self.needs.get(need_id)
        if record is None:
            raise ContractError(UNKNOWN_ID, f"no need with id {need_id}")
        return record

    def show_needs(self) -> list[NeedRecord]:
        return [self.needs[i] for i in sorted(self.needs)]

    def show_support(self, support_id: int) -> SupportRecord:
        record = self.supports.get(support_id)
        if record is None:
            raise ContractError(UNKNOWN_ID, f"no support with id {support_id}")
        return record

    def show_supports(self) -> list[SupportRecord]:
        return [self.supports[i] for i in sorted(self.supports)]

    def show_all_approved_supports(self) -> list[SupportRecord]:
        return [r for r in self.show_supports() if r.status is RecordStatus.APPROVED]

    def show_need_status(self, caller: bytes, need_id: int) -> str:
        self.require_role(caller, Role.CHECKER)
        return self.show_need(need_id).status_label

    def show_support_status(self, caller: bytes, support_id: int) -> str:
        self.require_role(caller, Role.CHECKER)
        return self.show_support(support_id).status_label

    # -- payload dispatch ---------------------------------------------------

    def check_payload(self, sender: bytes, payload: Payload) -> None:
        """Dry-run authorization and applicability without mutating state."""
        self.copy().apply_payload(sender, payload, height=self.applied_height + 1)

    def apply_payload(self, sender: bytes, payload: Payload, height: int) -> Optional[int]:
        """Apply one operation; returns the created record id, if any."""
        if isinstance(payload, SetUser):
            self.set_user(sender, payload.target, payload.role)
            return None
        if isinstance(payload, CreateNeed):
            return self.create_need(
                sender, payload.kind, payload.amount, payload.unit,
                payload.personal_ref, height,
            )
        if isinstance(payload, CreateSupport):
            return self.create_support(
                sender, payload.kind, payload.amount, payload.unit,
                payload.shipping, payload.personal_ref, height,
            )
        if isinstance(payload, ApproveNeed):
            self.approve_need(sender, payload.need_id, height)
            return None
        if isinstance(payload, ApproveSupport):
            self.approve_support(sender, payload.support_id, height)
            return None
        raise ContractError(MALFORMED_PAYLOAD, f"unknown payload {type(payload).__name__}")

    # -- canonical serialization ---------------------------------------------

    def canonical_bytes(self) -> bytes:
        """Deterministic encoding of roles, needs, and supports.

        Used for cross-node state comparison; excludes applied_height so
        digests are comparable at equal heights by construction.
        """
        out = bytearray()
        out += enc_u32(len(self.roles))
        for account in sorted(self.roles):
            out += enc_fixed(account, 32)
            out += enc_u8(int(self.roles[account]))
        out += enc_u32(len(self.needs))
        for need_id in sorted(self.needs):
            r = self.needs[need_id]
            out += enc_u64(r.need_id)
            out += enc_str(r.kind)
            out += enc_u64(r.amount)
            out += enc_str(r.unit)
            out += enc_fixed(r.creator, 32)
            out += enc_u8(int(r.status))
            out += enc_fixed(r.personal_ref, 32)
            out += enc_u64(r.created_at)
            if r.status is RecordStatus.APPROVED:
                out += enc_fixed(r.approved_by, 32)
                out += enc_u64(r.approved_at)
        out += enc_u32(len(self.supports))
        for support_id in sorted(self.supports):
            r = self.supports[support_id]
            out += enc_u64(r.support_id)
            out += enc_str(r.kind)
            out += enc_u64(r.amount)
            out += enc_str(r.unit)
            out += enc_str(r.shipping)
            out += enc_fixed(r.creator, 32)
            out += enc_u8(int(r.status))
            out += enc_fixed(r.personal_ref, 32)
            out += enc_u64(r.created_at)
            if r.status is RecordStatus.APPROVED:
                out += enc_fixed(r.approved_by, 32)
                out += enc_u64(r.approved_at)
        return bytes(out)

    def digest(self) -> bytes:
        return hashlib.sha256(self.canonical_bytes()).digest()
