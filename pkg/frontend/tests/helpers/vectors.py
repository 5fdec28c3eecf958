"""Regenerates fixtures/vectors.json from the node implementation.

The console re-implements the node's canonical transaction encoding and
signed-request headers in TypeScript; these vectors pin both ends to the
same bytes. Run from the frontend directory:

    python3 tests/helpers/vectors.py > tests/fixtures/vectors.json
"""

import base64
import hashlib
import json
import sys

from rmsd.httpapi import auth_signing_string, load_application_schema
from rmsd.keys import Signer
from rmsd.ledger import Transaction
from rmsd.payloads import (
    ApproveNeed,
    ApproveSupport,
    CreateNeed,
    CreateSupport,
    Role,
    SetUser,
)


def tx_vector(name: str, seed: bytes, nonce: int, payload, fields: dict) -> dict:
    signer = Signer.from_seed(seed)
    tx = Transaction.create(signer, nonce, payload)
    return {
        "name": name,
        "seed": seed.hex(),
        "pubkey": signer.pubkey.hex(),
        "nonce": nonce,
        "payload": fields,
        "tx_id": tx.tx_id.hex(),
        "base64": base64.b64encode(tx.canonical_bytes()).decode("ascii"),
    }


def main() -> None:
    ref = hashlib.sha256(b"vector personal ref").digest()
    target = Signer.from_seed(bytes([9]) * 32).pubkey
    txs = [
        tx_vector(
            "create_need", bytes([1]) * 32, 0,
            CreateNeed(kind="water", amount=120, unit="bottle", personal_ref=ref),
            {"op": "create_need", "kind": "water", "amount": 120,
             "unit": "bottle", "personalRef": ref.hex()},
        ),
        tx_vector(
            "create_support_unicode", bytes([2]) * 32, 7,
            CreateSupport(kind="çadır", amount=3, unit="adet",
                          shipping="kamyon", personal_ref=ref),
            {"op": "create_support", "kind": "çadır", "amount": 3,
             "unit": "adet", "shipping": "kamyon", "personalRef": ref.hex()},
        ),
        tx_vector(
            "approve_need", bytes([3]) * 32, 41,
            ApproveNeed(need_id=5),
            {"op": "approve_need", "needId": 5},
        ),
        tx_vector(
            "approve_support", bytes([4]) * 32, 2,
            ApproveSupport(support_id=0),
            {"op": "approve_support", "supportId": 0},
        ),
        tx_vector(
            "set_user", bytes([5]) * 32, 11,
            SetUser(target=target, role=Role.CHECKER),
            {"op": "set_user", "target": target.hex(), "role": "checker"},
        ),
    ]

    auth_signer = Signer.from_seed(bytes([6]) * 32)
    auth_body = b'{"probe":true}'
    auth_ts = 1755430000000
    auth = {
        "seed": auth_signer.secret_bytes.hex(),
        "pubkey": auth_signer.pubkey.hex(),
        "method": "GET",
        "path": "/v1/personal/" + ref.hex(),
        "body": auth_body.decode("ascii"),
        "timestamp": auth_ts,
        "signature": auth_signer.sign(
            auth_signing_string("GET", "/v1/personal/" + ref.hex(),
                                auth_body, auth_ts)).hex(),
    }

    json.dump(
        {"schema": load_application_schema(), "txs": txs, "auth": auth},
        sys.stdout, indent=2, ensure_ascii=False)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
