"""Node-local store for applicant personal data.

Personal details never reach the chain: an application carries only an
opaque 32-byte reference, and the preimage side lives here, in one JSON
lines file per node that NGO staff can purge at any time.  The reference
is the digest of a fresh random secret, never of the data, so it stays
unlinkable even against dictionary guessing.

Deletion rewrites the store file without the record (append for puts,
compact on delete); a tombstone would leave the bytes recoverable.
Reads of personal data and deletions are written to a local audit log.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional

from .payloads import Role

REF_LEN = 32


class Unauthorized(Exception):
    pass


class NotFound(Exception):
    pass


class StorageFailure(Exception):
    pass


class ValidationError(Exception):
    pass


@dataclass(frozen=True)
class PersonalRecord:
    personal_ref: bytes
    name: str
    phone: str
    address: str
    notes: str
    collected_at: int  # wall-clock milliseconds
    collected_by: bytes


def _record_to_json(record: PersonalRecord) -> dict:
    return {
        "ref": record.personal_ref.hex(),
        "name": record.name,
        "phone": record.phone,
        "address": record.address,
        "notes": record.notes,
        "collected_at": record.collected_at,
        "collected_by": record.collected_by.hex(),
    }


def _record_from_json(row: dict) -> PersonalRecord:
    return PersonalRecord(
        personal_ref=bytes.fromhex(row["ref"]),
        name=row["name"],
        phone=row["phone"],
        address=row["address"],
        notes=row["notes"],
        collected_at=int(row["collected_at"]),
        collected_by=bytes.fromhex(row["collected_by"]),
    )


class PersonalStore:
    """Single-writer personal-data store with an access audit log.

    role_lookup maps an account public key to its current Role; the node
    service wires it to the committed contract state.  rand and clock are
    injectable for tests and default to os.urandom and wall time.
    """

    def __init__(
        self,
        path: str,
        audit_path: str,
        role_lookup: Callable[[bytes], Role],
        rand: Callable[[int], bytes] = os.urandom,
        clock: Optional[Callable[[], int]] = None,
    ):
        self.path = os.fspath(path)
        self.audit_path = os.fspath(audit_path)
        self._role_lookup = role_lookup
        self._rand = rand
        self._clock = clock or (lambda: int(time.time() * 1000))
        self._lock = threading.Lock()
        self._records: dict[bytes, PersonalRecord] = {}
        self._load()

    def _load(self) -> None:
        if not os.path.exists(self.path):
            return
        try:
            with open(self.path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        record = _record_from_json(json.loads(line))
                    except (ValueError, KeyError):
                        break  # torn trailing write; keep the valid prefix
                    self._records[record.personal_ref] = record
        except OSError as exc:
            raise StorageFailure(f"cannot read {self.path}: {exc}") from exc

    def _append(self, record: PersonalRecord) -> None:
        try:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(_record_to_json(record),
                                    sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise StorageFailure(f"cannot write {self.path}: {exc}") from exc

    def _compact(self) -> None:
        tmp = self.path + ".tmp"
        try:
            with open(tmp, "w", encoding="utf-8") as fh:
                for ref in sorted(self._records):
                    fh.write(json.dumps(_record_to_json(self._records[ref]),
                                        sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self.path)
        except OSError as exc:
            raise StorageFailure(f"cannot rewrite {self.path}: {exc}") from exc

    def _audit(self, op: str, caller: bytes, ref: bytes) -> None:
        row = {
            "ts": self._clock(),
            "op": op,
            "caller": caller.hex(),
            "ref": ref.hex(),
        }
        try:
            with open(self.audit_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        except OSError as exc:
            raise StorageFailure(
                f"cannot write {self.audit_path}: {exc}") from exc

    # -- operations --

    def put_personal(self, name: str, phone: str, collected_by: bytes,
                     address: str = "", notes: str = "",
                     ref: Optional[bytes] = None) -> bytes:
        """Store one applicant's details; returns the opaque reference
        the on-chain application may carry.

        A caller who signs their own application supplies ref (the
        digest of a secret only they hold) so the stored record matches
        the reference already embedded in their transaction.
        """
        if not name.strip():
            raise ValidationError("name is required")
        if not phone.strip():
            raise ValidationError("phone is required")
        if ref is None:
            secret = self._rand(32)
            ref = hashlib.sha256(secret).digest()
        elif len(ref) != REF_LEN:
            raise ValidationError("personal reference must be 32 bytes")
        elif ref in self._records:
            raise ValidationError("personal reference already in use")
        record = PersonalRecord(
            personal_ref=ref,
            name=name,
            phone=phone,
            address=address,
            notes=notes,
            collected_at=self._clock(),
            collected_by=collected_by,
        )
        with self._lock:
            self._records[ref] = record
            self._append(record)
        return ref

    def get_personal(self, caller: bytes, ref: bytes) -> PersonalRecord:
        role = self._role_lookup(caller)
        if role not in (Role.CHECKER, Role.ADMIN):
            raise Unauthorized("personal data requires checker or admin role")
        record = self._records.get(ref)
        if record is None:
            raise NotFound("no personal record under this reference")
        self._audit("get", caller, ref)
        return record

    def delete_personal(self, caller: bytes, ref: bytes) -> None:
        """Irrecoverably removes the record; the chain stays valid since
        it only ever held the opaque reference."""
        role = self._role_lookup(caller)
        if role is not Role.ADMIN:
            raise Unauthorized("deletion requires admin role")
        with self._lock:
            if ref not in self._records:
                raise NotFound("no personal record under this reference")
            del self._records[ref]
            self._compact()
        self._audit("delete", caller, ref)

    def rollback(self, caller: bytes, ref: bytes) -> bool:
        """Node-internal removal of a record whose application never made
        it into the cluster; no role gate because the caller is the node
        itself, but the audit trail still records it."""
        with self._lock:
            if ref not in self._records:
                return False
            del self._records[ref]
            self._compact()
        self._audit("rollback", caller, ref)
        return True

    def has_ref(self, ref: bytes) -> bool:
        return ref in self._records

    def __len__(self) -> int:
        return len(self._records)
