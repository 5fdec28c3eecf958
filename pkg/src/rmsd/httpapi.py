"""HTTP /v1 API served by every node.

Write endpoints are asynchronous: they hand back a transaction receipt
immediately and clients poll GET /v1/tx/{tx_id} until it settles.
Errors always carry a JSON body {"code", "message"}.

Mutating callers authenticate by signing
    method \\n path \\n sha256(body) hex \\n timestamp-ms
with their Ed25519 key, sent in the X-RMSD-Pubkey / X-RMSD-Timestamp /
X-RMSD-Signature headers.  Timestamps older or newer than 60 s are
refused.  Public application submission needs no headers unless the
node runs with require_auth_applications.
"""

from __future__ import annotations

import base64
import hashlib
import json
import mimetypes
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import requests

from .consensus import (
    ConfigChangeInFlight,
    DuplicatePeerError,
    NotLeaderError,
)
from .contract import ContractError, UNAUTHORIZED
from .keys import PUBKEY_LEN, SIGNATURE_LEN, verify
from .ledger import Transaction, transaction_from_bytes
from .membership import MembershipError, parse_node_uri
from .payloads import (
    ApproveNeed,
    ApproveSupport,
    CreateNeed,
    CreateSupport,
    Role,
    SetUser,
)
from .privacy import NotFound, Unauthorized, ValidationError
from .service import CODE_NO_QUORUM, NodeRuntime, NoQuorumError, now_ms

AUTH_SKEW_MS = 60_000
MAX_BODY_BYTES = 1 << 20
ADD_PEER_COMMIT_WAIT_S = 10.0

H_PUBKEY = "X-RMSD-Pubkey"
H_TIMESTAMP = "X-RMSD-Timestamp"
H_SIGNATURE = "X-RMSD-Signature"
H_FORWARDED = "X-RMSD-Forwarded"

CODE_VALIDATION = "validation"
CODE_AUTH_REQUIRED = "auth_required"
CODE_BAD_SIGNATURE = "bad_signature"
CODE_STALE_TIMESTAMP = "stale_timestamp"
CODE_UNAUTHORIZED = "unauthorized"
CODE_UNKNOWN_ID = "unknown_id"
CODE_DUPLICATE_PEER = "duplicate_peer"
CODE_CHANGE_IN_FLIGHT = "config_change_in_flight"
CODE_NOT_FOUND = "not_found"

_APPROVAL_SCHEMA = {
    "type": "object",
    "required": ["kind", "id", "signed_tx"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["need", "support"]},
        "id": {"type": "integer", "minimum": 0},
        "signed_tx": {"type": "string", "minLength": 1},
    },
}

_ROLE_SCHEMA = {
    "type": "object",
    "required": ["signed_tx"],
    "additionalProperties": False,
    "properties": {"signed_tx": {"type": "string", "minLength": 1}},
}

_PEER_SCHEMA = {
    "type": "object",
    "required": ["uri"],
    "additionalProperties": False,
    "properties": {"uri": {"type": "string", "minLength": 1}},
}


def load_application_schema() -> dict:
    text = resources.files("rmsd").joinpath(
        "data/application.schema.json").read_text("utf-8")
    return json.loads(text)


_APPLICATION_SCHEMA = load_application_schema()


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def auth_signing_string(method: str, path: str, body: bytes,
                        timestamp: int) -> bytes:
    digest = hashlib.sha256(body).hexdigest()
    return f"{method}\n{path}\n{digest}\n{timestamp}".encode("utf-8")


def sign_request(signer, method: str, path: str, body: bytes,
                 timestamp: Optional[int] = None) -> dict[str, str]:
    """Client-side helper producing the three auth headers."""
    ts = now_ms() if timestamp is None else timestamp
    sig = signer.sign(auth_signing_string(method, path, body, ts))
    return {H_PUBKEY: signer.pubkey.hex(), H_TIMESTAMP: str(ts),
            H_SIGNATURE: sig.hex()}


def _validate(instance, schema) -> None:
    try:
        jsonschema.validate(instance, schema,
                            format_checker=jsonschema.FormatChecker())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "body"
        raise ApiError(400, CODE_VALIDATION,
                       f"{where}: {exc.message}") from exc


def _decode_signed_tx(text: str) -> Transaction:
    try:
        raw = base64.b64decode(text, validate=True)
        return transaction_from_bytes(raw)
    except Exception as exc:
        raise ApiError(400, CODE_VALIDATION,
                       f"signed_tx does not decode: {exc}") from exc


def _need_json(rec) -> dict:
    return {
        "need_id": rec.need_id,
        "kind": rec.kind,
        "amount": rec.amount,
        "unit": rec.unit,
        "creator": rec.creator.hex(),
        "personal_ref": rec.personal_ref.hex(),
        "status": rec.status_label,
        "created_at": rec.created_at,
        "approved_by": rec.approved_by.hex() if rec.approved_by else None,
        "approved_at": rec.approved_at,
    }


def _support_json(rec) -> dict:
    row = {
        "support_id": rec.support_id,
        "kind": rec.kind,
        "amount": rec.amount,
        "unit": rec.unit,
        "shipping": rec.shipping,
        "creator": rec.creator.hex(),
        "personal_ref": rec.personal_ref.hex(),
        "status": rec.status_label,
        "created_at": rec.created_at,
        "approved_by": rec.approved_by.hex() if rec.approved_by else None,
        "approved_at": rec.approved_at,
    }
    return row


class ApiHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "rmsd"

    @property
    def runtime(self) -> NodeRuntime:
        return self.server.runtime  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):
        pass

    # -- plumbing --

    def _read_body(self) -> bytes:
        length = self.headers.get("Content-Length")
        if length is None:
            return b""
        try:
            n = int(length)
        except ValueError:
            raise ApiError(400, CODE_VALIDATION, "bad Content-Length")
        if n > MAX_BODY_BYTES:
            raise ApiError(413, CODE_VALIDATION, "body too large")
        return self.rfile.read(n)

    def _send_json(self, status: int, payload) -> None:
        raw = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        # no keep-alive: a stopped server must stop answering, and these
        # exchanges are short polls where reuse buys little
        self.send_header("Connection", "close")
        self.close_connection = True
        self.end_headers()
        self.wfile.write(raw)

    def _send_error_body(self, err: ApiError) -> None:
        self._send_json(err.status,
                        {"code": err.code, "message": err.message})

    def _parse_json(self, body: bytes):
        try:
            return json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ApiError(400, CODE_VALIDATION,
                           f"body is not JSON: {exc}") from exc

    def _authenticate(self, body: bytes) -> Optional[bytes]:
        pub_hex = self.headers.get(H_PUBKEY)
        if pub_hex is None:
            return None
        ts_text = self.headers.get(H_TIMESTAMP, "")
        sig_hex = self.headers.get(H_SIGNATURE, "")
        try:
            pubkey = bytes.fromhex(pub_hex)
            signature = bytes.fromhex(sig_hex)
            timestamp = int(ts_text)
        except ValueError:
            raise ApiError(401, CODE_BAD_SIGNATURE, "malformed auth headers")
        if len(pubkey) != PUBKEY_LEN or len(signature) != SIGNATURE_LEN:
            raise ApiError(401, CODE_BAD_SIGNATURE, "malformed auth headers")
        if abs(now_ms() - timestamp) > AUTH_SKEW_MS:
            raise ApiError(401, CODE_STALE_TIMESTAMP,
                           "timestamp outside the 60 s window")
        message = auth_signing_string(self.command, self._route_path(),
                                      body, timestamp)
        if not verify(pubkey, signature, message):
            raise ApiError(401, CODE_BAD_SIGNATURE,
                           "request signature does not verify")
        return pubkey

    def _require_auth(self, body: bytes) -> bytes:
        caller = self._authenticate(body)
        if caller is None:
            raise ApiError(401, CODE_AUTH_REQUIRED,
                           "this endpoint requires signed requests")
        return caller

    def _route_path(self) -> str:
        return self.path.split("?", 1)[0]

    # -- dispatch --

    def do_GET(self):  # noqa: N802  (stdlib handler naming)
        self._handle("GET")

    def do_POST(self):  # noqa: N802
        self._handle("POST")

    def do_DELETE(self):  # noqa: N802
        self._handle("DELETE")

    def _handle(self, method: str) -> None:
        try:
            body = self._read_body()
            path = self._route_path()
            parts = [p for p in path.split("/") if p]
            self._route(method, path, parts, body)
        except ApiError as err:
            self._send_error_body(err)
        except BrokenPipeError:
            pass
        except Exception as exc:  # surface as a 500, never a stack trace
            try:
                self._send_json(500, {"code": "internal",
                                      "message": str(exc)})
            except Exception:
                pass

    def _route(self, method: str, path: str, parts: list[str],
               body: bytes) -> None:
        if parts and parts[0] == "console":
            if method != "GET":
                raise ApiError(405, CODE_VALIDATION, "method not allowed")
            return self._serve_console(parts[1:])
        if len(parts) < 2 or parts[0] != "v1":
            raise ApiError(404, CODE_NOT_FOUND, f"no route {path}")
        head = parts[1]
        rest = parts[2:]

        if method == "GET":
            if head == "needs" and not rest:
                return self._get_needs()
            if head == "needs" and len(rest) == 1:
                return self._get_need(self._int_part(rest[0]))
            if head == "supports" and not rest:
                return self._get_supports(approved_only=False)
            if head == "supports" and rest == ["approved"]:
                return self._get_supports(approved_only=True)
            if head == "supports" and len(rest) == 1:
                return self._get_support(self._int_part(rest[0]))
            if head == "status" and len(rest) == 2:
                return self._get_status(rest[0], self._int_part(rest[1]),
                                        body)
            if head == "tx" and len(rest) == 1:
                return self._get_tx(rest[0])
            if head == "chain" and not rest:
                return self._send_json(200, self.runtime.chain_info())
            if head == "genesis" and not rest:
                genesis = self.runtime.core.ledger.genesis
                return self._send_json(200, {
                    "block": base64.b64encode(
                        genesis.canonical_bytes()).decode("ascii"),
                    "block_hash": genesis.block_hash.hex(),
                })
            if head == "nonce" and len(rest) == 1:
                return self._get_nonce(rest[0])
            if head == "personal" and len(rest) == 1:
                return self._get_personal(rest[0], body)
            if head == "schema" and rest == ["application"]:
                return self._send_json(200, _APPLICATION_SCHEMA)
        elif method == "POST":
            if head == "applications" and not rest:
                return self._post_application(body)
            if head == "approvals" and not rest:
                return self._post_approval(body)
            if head == "admin" and rest == ["roles"]:
                return self._post_role(body)
            if head == "admin" and rest == ["peers"]:
                return self._post_peer(body)
        elif method == "DELETE":
            if head == "personal" and len(rest) == 1:
                return self._delete_personal(rest[0], body)
        raise ApiError(404, CODE_NOT_FOUND, f"no route {method} {path}")

    @staticmethod
    def _int_part(text: str) -> int:
        try:
            value = int(text)
        except ValueError:
            raise ApiError(400, CODE_VALIDATION, f"{text!r} is not an id")
        if value < 0:
            raise ApiError(400, CODE_VALIDATION, "ids are non-negative")
        return value

    @staticmethod
    def _ref_part(text: str) -> bytes:
        try:
            ref = bytes.fromhex(text)
        except ValueError:
            raise ApiError(400, CODE_VALIDATION, "reference must be hex")
        if len(ref) != 32:
            raise ApiError(400, CODE_VALIDATION,
                           "reference must be 32 bytes of hex")
        return ref

    # -- reads --

    def _get_needs(self) -> None:
        view = self.runtime.view()
        rows = [_need_json(r) for r in view.state.show_needs()]
        self._send_json(200, {"height": view.height, "records": rows})

    def _get_need(self, need_id: int) -> None:
        view = self.runtime.view()
        try:
            rec = view.state.show_need(need_id)
        except ContractError as exc:
            raise ApiError(404, exc.code, exc.message)
        self._send_json(200, {"height": view.height,
                              "record": _need_json(rec)})

    def _get_supports(self, approved_only: bool) -> None:
        view = self.runtime.view()
        records = (view.state.show_all_approved_supports()
                   if approved_only else view.state.show_supports())
        rows = [_support_json(r) for r in records]
        self._send_json(200, {"height": view.height, "records": rows})

    def _get_support(self, support_id: int) -> None:
        view = self.runtime.view()
        try:
            rec = view.state.show_support(support_id)
        except ContractError as exc:
            raise ApiError(404, exc.code, exc.message)
        self._send_json(200, {"height": view.height,
                              "record": _support_json(rec)})

    def _get_status(self, kind: str, rec_id: int, body: bytes) -> None:
        if kind not in ("need", "support"):
            raise ApiError(400, CODE_VALIDATION,
                           "status kind must be need or support")
        caller = self._require_auth(body)
        view = self.runtime.view()
        try:
            if kind == "need":
                label = view.state.show_need_status(caller, rec_id)
            else:
                label = view.state.show_support_status(caller, rec_id)
        except ContractError as exc:
            status = 403 if exc.code == UNAUTHORIZED else 404
            raise ApiError(status, exc.code, exc.message)
        self._send_json(200, {"kind": kind, "id": rec_id, "status": label})

    def _get_tx(self, tx_hex: str) -> None:
        try:
            tx_id = bytes.fromhex(tx_hex)
        except ValueError:
            raise ApiError(400, CODE_VALIDATION, "tx id must be hex")
        receipt = self.runtime.receipt_json(tx_id)
        if receipt is None:
            raise ApiError(404, CODE_UNKNOWN_ID, "no such transaction")
        self._send_json(200, receipt)

    def _get_nonce(self, pub_hex: str) -> None:
        try:
            pubkey = bytes.fromhex(pub_hex)
        except ValueError:
            raise ApiError(400, CODE_VALIDATION, "pubkey must be hex")
        if len(pubkey) != PUBKEY_LEN:
            raise ApiError(400, CODE_VALIDATION, "pubkey must be 32 bytes")
        view = self.runtime.view()
        self._send_json(200, {
            "pubkey": pub_hex,
            "height": view.height,
            "next_nonce": view.nonces.get(pubkey, -1) + 1,
        })

    def _get_personal(self, ref_hex: str, body: bytes) -> None:
        caller = self._require_auth(body)
        ref = self._ref_part(ref_hex)
        try:
            rec = self.runtime.store.get_personal(caller, ref)
        except Unauthorized as exc:
            raise ApiError(403, CODE_UNAUTHORIZED, str(exc))
        except NotFound as exc:
            raise ApiError(404, CODE_NOT_FOUND, str(exc))
        self._send_json(200, {
            "personal_ref": ref_hex,
            "name": rec.name,
            "phone": rec.phone,
            "address": rec.address,
            "notes": rec.notes,
            "collected_at": rec.collected_at,
        })

    def _delete_personal(self, ref_hex: str, body: bytes) -> None:
        caller = self._require_auth(body)
        ref = self._ref_part(ref_hex)
        try:
            self.runtime.store.delete_personal(caller, ref)
        except Unauthorized as exc:
            raise ApiError(403, CODE_UNAUTHORIZED, str(exc))
        except NotFound as exc:
            raise ApiError(404, CODE_NOT_FOUND, str(exc))
        self._send_json(200, {"deleted": True, "personal_ref": ref_hex})

    # -- writes --

    def _post_application(self, body: bytes) -> None:
        data = self._parse_json(body)
        _validate(data, _APPLICATION_SCHEMA)
        caller = self._authenticate(body)
        if self.runtime.config.require_auth_applications and caller is None:
            raise ApiError(401, CODE_AUTH_REQUIRED,
                           "this node only accepts signed applications")
        if "signed_tx" in data:
            return self._application_signed(data)
        return self._application_anonymous(data)

    def _application_anonymous(self, data: dict) -> None:
        personal = data["personal"]
        service_pub = self.runtime.service_signer.pubkey
        try:
            ref = self.runtime.store.put_personal(
                personal["name"], personal["phone"],
                collected_by=service_pub,
                address=personal.get("address", ""),
                notes=personal.get("notes", ""))
        except ValidationError as exc:
            raise ApiError(400, CODE_VALIDATION, str(exc))
        payload = self._application_payload(data, ref)
        try:
            receipt = self.runtime.submit_service_payload(payload)
        except NoQuorumError:
            self.runtime.store.rollback(service_pub, ref)
            raise ApiError(503, CODE_NO_QUORUM,
                           "no leader reachable; application rolled back")
        receipt["personal_ref"] = ref.hex()
        self._send_json(200, receipt)

    def _application_signed(self, data: dict) -> None:
        tx = _decode_signed_tx(data["signed_tx"])
        payload = tx.payload
        expect = CreateNeed if data["kind"] == "need" else CreateSupport
        if not isinstance(payload, expect):
            raise ApiError(400, CODE_VALIDATION,
                           "signed_tx payload does not match kind")
        stored_ref = None
        if "personal" in data:
            ref = bytes.fromhex(data["ref"])
            if payload.personal_ref != ref:
                raise ApiError(400, CODE_VALIDATION,
                               "ref does not match the transaction")
            personal = data["personal"]
            try:
                stored_ref = self.runtime.store.put_personal(
                    personal["name"], personal["phone"],
                    collected_by=tx.sender,
                    address=personal.get("address", ""),
                    notes=personal.get("notes", ""),
                    ref=ref)
            except ValidationError as exc:
                raise ApiError(400, CODE_VALIDATION, str(exc))
        if not self.runtime.wait_for_leader(2000):
            if stored_ref is not None:
                self.runtime.store.rollback(tx.sender, stored_ref)
            raise ApiError(503, CODE_NO_QUORUM, "no leader reachable")
        receipt = self.runtime.submit_transactions([tx])[0]
        if stored_ref is not None:
            receipt["personal_ref"] = stored_ref.hex()
        self._send_json(200, receipt)

    @staticmethod
    def _application_payload(data: dict, ref: bytes):
        if data["kind"] == "need":
            return CreateNeed(kind=data["category"], amount=data["amount"],
                              unit=data["unit"], personal_ref=ref)
        return CreateSupport(kind=data["category"], amount=data["amount"],
                             unit=data["unit"], shipping=data["shipping"],
                             personal_ref=ref)

    def _post_approval(self, body: bytes) -> None:
        data = self._parse_json(body)
        _validate(data, _APPROVAL_SCHEMA)
        tx = _decode_signed_tx(data["signed_tx"])
        payload = tx.payload
        expect = ApproveNeed if data["kind"] == "need" else ApproveSupport
        if not isinstance(payload, expect):
            raise ApiError(400, CODE_VALIDATION,
                           "signed_tx payload does not match kind")
        payload_id = (payload.need_id if data["kind"] == "need"
                      else payload.support_id)
        if payload_id != data["id"]:
            raise ApiError(400, CODE_VALIDATION,
                           "signed_tx approves a different id")
        receipt = self.runtime.submit_transactions([tx])[0]
        self._send_json(200, receipt)

    def _post_role(self, body: bytes) -> None:
        data = self._parse_json(body)
        _validate(data, _ROLE_SCHEMA)
        tx = _decode_signed_tx(data["signed_tx"])
        if not isinstance(tx.payload, SetUser):
            raise ApiError(400, CODE_VALIDATION,
                           "signed_tx must carry a role assignment")
        receipt = self.runtime.submit_transactions([tx])[0]
        self._send_json(200, receipt)

    def _post_peer(self, body: bytes) -> None:
        caller = self._require_auth(body)
        if self.runtime.view().state.get_user_auth(caller) is not Role.ADMIN:
            raise ApiError(403, CODE_UNAUTHORIZED,
                           "peer changes require the admin role")
        data = self._parse_json(body)
        _validate(data, _PEER_SCHEMA)
        try:
            peer = parse_node_uri(data["uri"])
        except MembershipError as exc:
            raise ApiError(400, CODE_VALIDATION, str(exc))
        view = self.runtime.view()
        if not view.is_leader:
            return self._proxy_peer_request(body)
        try:
            self.runtime.request_add_peer(data["uri"])
        except DuplicatePeerError:
            raise ApiError(409, CODE_DUPLICATE_PEER,
                           "this node is already a member")
        except ConfigChangeInFlight:
            raise ApiError(409, CODE_CHANGE_IN_FLIGHT,
                           "another membership change is pending")
        except MembershipError as exc:
            raise ApiError(400, CODE_VALIDATION, str(exc))
        except NotLeaderError:
            return self._proxy_peer_request(body)
        committed = self._wait_member(peer.pubkey)
        info = self.runtime.chain_info()
        self._send_json(200, {
            "committed": committed,
            "members": info["members"],
            "static_nodes": [n.render() for n in
                             self.runtime.view().members.values()],
        })

    def _wait_member(self, pubkey: bytes) -> bool:
        deadline = time.monotonic() + ADD_PEER_COMMIT_WAIT_S
        while time.monotonic() < deadline:
            if pubkey in self.runtime.view().members:
                return True
            time.sleep(0.05)
        return False

    def _proxy_peer_request(self, body: bytes) -> None:
        if self.headers.get(H_FORWARDED):
            raise ApiError(503, CODE_NO_QUORUM,
                           "leadership moved; retry the add-peer call")
        view = self.runtime.view()
        leader = view.leader
        if leader is None or leader not in view.members:
            raise ApiError(503, CODE_NO_QUORUM, "no leader reachable")
        target = view.members[leader]
        headers = {H_FORWARDED: "1", "Content-Type": "application/json"}
        for name in (H_PUBKEY, H_TIMESTAMP, H_SIGNATURE):
            value = self.headers.get(name)
            if value:
                headers[name] = value
        host, port = target.api_address
        url = f"http://{host}:{port}/v1/admin/peers"
        try:
            resp = requests.post(url, data=body, headers=headers, timeout=15)
        except requests.RequestException as exc:
            raise ApiError(503, CODE_NO_QUORUM,
                           f"leader unreachable: {exc}")
        self._send_json(resp.status_code, resp.json())

    # -- console static files --

    def _serve_console(self, parts: list[str]) -> None:
        root = self.runtime.config.console_dir
        if not root:
            raise ApiError(404, CODE_NOT_FOUND,
                           "this node was started without a console build")
        base = Path(root).resolve()
        rel = "/".join(parts) or "index.html"
        target = (base / rel).resolve()
        if base not in target.parents and target != base:
            raise ApiError(404, CODE_NOT_FOUND, "no such asset")
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            raise ApiError(404, CODE_NOT_FOUND, "no such asset")
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        raw = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(raw)))
        self.send_header("Connection", "close")
        self.close_connection = True
        self.end_headers()
        self.wfile.write(raw)


class ApiServer:
    """Threaded HTTP server bound to a runtime; start() returns at once."""

    def __init__(self, runtime: NodeRuntime, listen: tuple[str, int]):
        self.runtime = runtime
        self._server = ThreadingHTTPServer(listen, ApiHandler)
        self._server.daemon_threads = True
        self._server.runtime = runtime  # type: ignore[attr-defined]
        self._thread = threading.Thread(
            target=self._server.serve_forever, name="http-api", daemon=True)

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self) -> None:
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
