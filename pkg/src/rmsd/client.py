"""HTTP client for the node API.

Approvals and role grants are signed client-side: the node never sees a
checker or admin private key.  The client fetches the account's next
nonce from the node it talks to, builds the transaction locally, and
posts only the signed bytes.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import time
from typing import Optional

import requests

from .httpapi import sign_request
from .keys import Signer
from .ledger import Transaction
from .payloads import (
    ApproveNeed,
    ApproveSupport,
    CreateNeed,
    CreateSupport,
    Role,
    SetUser,
)

ROLE_BY_NAME = {role.label: role for role in Role}


class ApiFailure(Exception):
    """Non-2xx API answer, carrying the error body."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(f"{status} {code}: {message}")
        self.status = status
        self.code = code
        self.message = message


class NodeUnreachable(Exception):
    pass


def _b64(raw: bytes) -> str:
    return base64.b64encode(raw).decode("ascii")


class NodeClient:
    def __init__(self, base_url: str, signer: Optional[Signer] = None,
                 timeout: float = 15.0):
        self.base_url = base_url.rstrip("/")
        self.signer = signer
        self.timeout = timeout
        self._session = requests.Session()

    # -- plumbing --

    def _request(self, method: str, path: str, payload=None,
                 signed: bool = False) -> dict:
        body = b""
        headers = {}
        if payload is not None:
            body = json.dumps(payload, sort_keys=True).encode("utf-8")
            headers["Content-Type"] = "application/json"
        if signed:
            if self.signer is None:
                raise ApiFailure(401, "auth_required",
                                 "this call needs a signing key")
            headers.update(sign_request(self.signer, method, path, body))
        try:
            resp = self._session.request(
                method, self.base_url + path,
                data=body if payload is not None else None,
                headers=headers, timeout=self.timeout)
        except requests.RequestException as exc:
            raise NodeUnreachable(f"{self.base_url}: {exc}") from exc
        try:
            data = resp.json()
        except ValueError:
            data = {}
        if resp.status_code >= 400:
            raise ApiFailure(resp.status_code,
                             data.get("code", "error"),
                             data.get("message", resp.reason))
        return data

    # -- reads --

    def chain(self) -> dict:
        return self._request("GET", "/v1/chain")

    def genesis(self) -> dict:
        return self._request("GET", "/v1/genesis")

    def needs(self) -> dict:
        return self._request("GET", "/v1/needs")

    def need(self, need_id: int) -> dict:
        return self._request("GET", f"/v1/needs/{need_id}")

    def supports(self) -> dict:
        return self._request("GET", "/v1/supports")

    def approved_supports(self) -> dict:
        return self._request("GET", "/v1/supports/approved")

    def support(self, support_id: int) -> dict:
        return self._request("GET", f"/v1/supports/{support_id}")

    def status(self, kind: str, rec_id: int) -> dict:
        return self._request("GET", f"/v1/status/{kind}/{rec_id}",
                             signed=True)

    def receipt(self, tx_id: str) -> dict:
        return self._request("GET", f"/v1/tx/{tx_id}")

    def next_nonce(self, pubkey: bytes) -> int:
        data = self._request("GET", f"/v1/nonce/{pubkey.hex()}")
        return data["next_nonce"]

    def personal(self, ref_hex: str) -> dict:
        return self._request("GET", f"/v1/personal/{ref_hex}", signed=True)

    def delete_personal(self, ref_hex: str) -> dict:
        return self._request("DELETE", f"/v1/personal/{ref_hex}",
                             signed=True)

    # -- writes --

    def submit_application(self, kind: str, category: str, amount: int,
                           unit: str, shipping: Optional[str] = None,
                           personal: Optional[dict] = None,
                           sign_with: Optional[Signer] = None) -> dict:
        """Anonymous by default; pass sign_with to submit under the
        caller's own account (the personal reference is then derived
        from a locally generated secret)."""
        payload: dict = {"kind": kind, "category": category,
                         "amount": amount, "unit": unit}
        if shipping is not None:
            payload["shipping"] = shipping
        if sign_with is not None:
            secret = os.urandom(32)
            ref = hashlib.sha256(secret).digest()
            tx_payload = (
                CreateNeed(category, amount, unit, ref) if kind == "need"
                else CreateSupport(category, amount, unit,
                                   shipping or "", ref))
            nonce = self.next_nonce(sign_with.pubkey)
            tx = Transaction.create(sign_with, nonce, tx_payload)
            payload["signed_tx"] = _b64(tx.canonical_bytes())
            if personal is not None:
                payload["ref"] = ref.hex()
        if personal is not None:
            payload["personal"] = personal
        return self._request("POST", "/v1/applications", payload,
                             signed=self.signer is not None)

    def submit_approval(self, kind: str, rec_id: int,
                        signer: Optional[Signer] = None,
                        nonce: Optional[int] = None) -> dict:
        signer = signer or self.signer
        if signer is None:
            raise ApiFailure(401, "auth_required",
                             "approvals need a signing key")
        if nonce is None:
            nonce = self.next_nonce(signer.pubkey)
        tx_payload = (ApproveNeed(rec_id) if kind == "need"
                      else ApproveSupport(rec_id))
        tx = Transaction.create(signer, nonce, tx_payload)
        return self._request("POST", "/v1/approvals", {
            "kind": kind, "id": rec_id,
            "signed_tx": _b64(tx.canonical_bytes()),
        })

    def grant_role(self, target: bytes, role: Role,
                   signer: Optional[Signer] = None,
                   nonce: Optional[int] = None) -> dict:
        signer = signer or self.signer
        if signer is None:
            raise ApiFailure(401, "auth_required",
                             "role changes need a signing key")
        if nonce is None:
            nonce = self.next_nonce(signer.pubkey)
        tx = Transaction.create(signer, nonce, SetUser(target, role))
        return self._request("POST", "/v1/admin/roles", {
            "signed_tx": _b64(tx.canonical_bytes()),
        })

    def add_peer(self, uri: str) -> dict:
        return self._request("POST", "/v1/admin/peers", {"uri": uri},
                             signed=True)

    # -- polling --

    def wait_receipt(self, tx_id: str, timeout: float = 15.0,
                     interval: float = 0.1) -> dict:
        """Poll until the receipt settles; returns the final receipt."""
        deadline = time.monotonic() + timeout
        last: dict = {"tx_id": tx_id, "status": "pending"}
        while time.monotonic() < deadline:
            try:
                last = self.receipt(tx_id)
            except (ApiFailure, NodeUnreachable):
                time.sleep(interval)
                continue
            if last.get("status") != "pending":
                return last
            time.sleep(interval)
        return last

    def wait_height(self, height: int, timeout: float = 15.0) -> dict:
        deadline = time.monotonic() + timeout
        info = {}
        while time.monotonic() < deadline:
            try:
                info = self.chain()
            except NodeUnreachable:
                time.sleep(0.1)
                continue
            if info.get("height", -1) >= height:
                return info
            time.sleep(0.1)
        return info
