"""rmsd command line: key management, network bootstrap, node daemon,
transactions, and queries.

Every mutating subcommand maps to exactly one HTTP call against the
node named by --node (or the RMSD_NODE environment variable); receipt
polling afterwards is read-only.  Exit codes: 0 success, 2 validation
failure, 3 unauthorized, 4 node unavailable.
"""

from __future__ import annotations

import base64
import json
import signal
import sys
import threading
import time
from pathlib import Path
from typing import Optional

import click

from .client import ApiFailure, NodeClient, NodeUnreachable, ROLE_BY_NAME
from .httpapi import ApiServer
from .keys import Signer, save_pubkey
from .ledger import block_from_bytes, make_genesis
from .membership import (
    MembershipError,
    NodeId,
    parse_node_uri,
    save_static_nodes,
)
from .service import NodeConfig, NodePaths, NodeRuntime, save_genesis

EXIT_VALIDATION = 2
EXIT_UNAUTHORIZED = 3
EXIT_UNAVAILABLE = 4

_NODE_OPTION = click.option(
    "--node", "node_url", envvar="RMSD_NODE", required=True,
    help="Base URL of a node API, e.g. http://127.0.0.1:7001 "
         "(env: RMSD_NODE).")
_JSON_OPTION = click.option(
    "--json", "as_json", is_flag=True, help="Machine-readable output.")


def _emit(data: dict, as_json: bool, text: str) -> None:
    if as_json:
        click.echo(json.dumps(data, indent=2, sort_keys=True))
    else:
        click.echo(text)


def _die(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _exit_for_api(exc: ApiFailure) -> int:
    if exc.status in (401, 403):
        return EXIT_UNAUTHORIZED
    if exc.status >= 500:
        return EXIT_UNAVAILABLE
    return EXIT_VALIDATION


def _guard(fn):
    try:
        return fn()
    except ApiFailure as exc:
        _die(f"{exc.code}: {exc.message}", _exit_for_api(exc))
    except NodeUnreachable as exc:
        _die(str(exc), EXIT_UNAVAILABLE)


def _load_signer(path: str) -> Signer:
    try:
        return Signer.load(path)
    except (OSError, ValueError) as exc:
        _die(f"cannot load key {path}: {exc}", EXIT_VALIDATION)


def _settle(client: NodeClient, receipt: dict, wait: bool,
            as_json: bool, timeout: float = 20.0) -> None:
    """Poll a write receipt and exit with a matching status code."""
    if wait and receipt.get("status") == "pending":
        # merge so submit-time fields like personal_ref survive the poll
        final = client.wait_receipt(receipt["tx_id"], timeout=timeout)
        receipt = {**receipt, **final}
    status = receipt.get("status")
    if status == "committed":
        _emit(receipt, as_json,
              f"committed at height {receipt.get('height')} "
              f"(tx {receipt['tx_id']})")
        return
    if status == "pending":
        _emit(receipt, as_json, f"pending (tx {receipt['tx_id']})")
        if wait:
            sys.exit(EXIT_UNAVAILABLE)
        return
    code = receipt.get("code", "rejected")
    message = receipt.get("message", code)
    if as_json:
        click.echo(json.dumps(receipt, indent=2, sort_keys=True))
    click.echo(f"rejected: {code}: {message}", err=True)
    sys.exit(EXIT_UNAUTHORIZED if code == "unauthorized" else EXIT_VALIDATION)


@click.group()
def main() -> None:
    """Replicated disaster-resource ledger."""


# -- keys and bootstrap ------------------------------------------------------------


@main.command()
@click.option("--out", "out_prefix", required=True,
              help="Path prefix; writes <prefix>.key and <prefix>.pub.")
@_JSON_OPTION
def keygen(out_prefix: str, as_json: bool) -> None:
    """Generate an Ed25519 keypair."""
    signer = Signer.generate()
    key_path = Path(f"{out_prefix}.key")
    pub_path = Path(f"{out_prefix}.pub")
    key_path.parent.mkdir(parents=True, exist_ok=True)
    signer.save(key_path)
    save_pubkey(signer.pubkey, pub_path)
    _emit({"pubkey": signer.pubkey.hex(),
           "key_file": str(key_path), "pub_file": str(pub_path)},
          as_json, f"{signer.pubkey.hex()}  ({key_path})")


@main.command("init-network")
@click.option("--out-dir", required=True, help="Directory for node data dirs.")
@click.option("--nodes", "count", default=3, show_default=True,
              help="Number of founding nodes.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port-base", default=7001, show_default=True,
              help="API port of node0; node i gets port-base + i.")
@click.option("--raftport-base", default=8001, show_default=True)
@click.option("--admin-pubkey", default=None,
              help="Genesis admin public key (hex); generated when omitted.")
@_JSON_OPTION
def init_network(out_dir: str, count: int, host: str, port_base: int,
                 raftport_base: int, admin_pubkey: Optional[str],
                 as_json: bool) -> None:
    """Create data directories, keys, and a shared genesis block."""
    if count < 1:
        _die("--nodes must be at least 1", EXIT_VALIDATION)
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)

    if admin_pubkey:
        try:
            admin_pub = bytes.fromhex(admin_pubkey)
        except ValueError:
            _die("--admin-pubkey must be hex", EXIT_VALIDATION)
        if len(admin_pub) != 32:
            _die("--admin-pubkey must be 32 bytes of hex", EXIT_VALIDATION)
        admin_files = {}
    else:
        admin = Signer.generate()
        admin.save(root / "admin.key")
        save_pubkey(admin.pubkey, root / "admin.pub")
        admin_pub = admin.pubkey
        admin_files = {"admin_key": str(root / "admin.key")}

    genesis = make_genesis(admin_pub)
    node_ids: list[NodeId] = []
    dirs: list[Path] = []
    for i in range(count):
        data_dir = root / f"node{i}"
        data_dir.mkdir(exist_ok=True)
        paths = NodePaths(data_dir)
        node_signer = Signer.generate()
        node_signer.save(paths.node_key)
        save_pubkey(node_signer.pubkey, paths.node_pub)
        service_signer = Signer.generate()
        service_signer.save(paths.service_key)
        save_pubkey(service_signer.pubkey, paths.service_pub)
        save_genesis(paths.genesis, genesis)
        node_ids.append(NodeId(pubkey=node_signer.pubkey, host=host,
                               port=port_base + i,
                               raftport=raftport_base + i))
        dirs.append(data_dir)

    for data_dir in dirs:
        paths = NodePaths(data_dir)
        save_static_nodes(node_ids, paths.static_nodes)
        save_static_nodes(node_ids, paths.genesis_nodes)
    save_static_nodes(node_ids, root / "static-nodes.json")

    summary = {
        "out_dir": str(root),
        "genesis_hash": genesis.block_hash.hex(),
        "admin_pubkey": admin_pub.hex(),
        "nodes": [n.render() for n in node_ids],
        **admin_files,
    }
    _emit(summary, as_json,
          "\n".join([f"genesis {genesis.block_hash.hex()}",
                     f"admin   {admin_pub.hex()}"]
                    + [f"node{i}   {n.render()}"
                       for i, n in enumerate(node_ids)]))


@main.command()
@click.option("--data-dir", required=True)
@click.option("--static-nodes", "static_nodes_path", default=None,
              help="Override the static-nodes.json inside the data dir.")
@click.option("--listen", default=None,
              help="API bind address host:port; defaults to this node's "
                   "entry in static-nodes.json.")
@click.option("--raft-listen", default=None,
              help="Consensus bind address host:port.")
@click.option("--genesis-admin", default=None,
              help="Create a genesis block for this admin pubkey (hex) "
                   "when the data dir has none.")
@click.option("--seed", type=int, default=None,
              help="Seed for election timing; random when omitted.")
@click.option("--console", "console_dir", default=None,
              help="Directory with the built web console to serve at "
                   "/console.")
@click.option("--require-auth", is_flag=True,
              help="Reject anonymous application submissions.")
def node(data_dir: str, static_nodes_path: Optional[str],
         listen: Optional[str], raft_listen: Optional[str],
         genesis_admin: Optional[str], seed: Optional[int],
         console_dir: Optional[str], require_auth: bool) -> None:
    """Run one ledger node until interrupted."""
    admin_pub = None
    if genesis_admin:
        try:
            admin_pub = bytes.fromhex(genesis_admin)
        except ValueError:
            _die("--genesis-admin must be hex", EXIT_VALIDATION)
    config = NodeConfig(
        data_dir=data_dir,
        listen=_parse_hostport(listen) if listen else None,
        raft_listen=_parse_hostport(raft_listen) if raft_listen else None,
        static_nodes_path=static_nodes_path,
        genesis_admin=admin_pub,
        seed=seed,
        require_auth_applications=require_auth,
        console_dir=console_dir,
    )
    try:
        runtime = NodeRuntime(config)
    except (OSError, ValueError, MembershipError) as exc:
        _die(str(exc), EXIT_VALIDATION)
    api_bind = config.listen or runtime.node_id.api_address
    runtime.start()
    server = ApiServer(runtime, api_bind)
    server.start()
    click.echo(f"node {runtime.node_id.pubkey.hex()[:16]} "
               f"api {api_bind[0]}:{api_bind[1]} "
               f"raft :{runtime.node_id.raftport}")

    stop = threading.Event()

    def _stop(signum, frame):
        stop.set()

    signal.signal(signal.SIGINT, _stop)
    signal.signal(signal.SIGTERM, _stop)
    while not stop.is_set():
        stop.wait(0.2)
    server.stop()
    runtime.stop()


def _parse_hostport(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        _die(f"{text!r} is not host:port", EXIT_VALIDATION)
    try:
        return host, int(port)
    except ValueError:
        _die(f"{text!r} is not host:port", EXIT_VALIDATION)


@main.command()
@_NODE_OPTION
@click.option("--key", "key_path", required=True,
              help="Admin key that authorizes the membership change.")
@click.option("--uri", default=None,
              help="rnode:// URI of the joining node; derived from "
                   "--joiner-dir/--host/--port/--raftport when omitted.")
@click.option("--joiner-dir", default=None,
              help="Data dir of the joining node; gets genesis and "
                   "static-nodes files written after commitment.")
@click.option("--host", default=None, help="Joiner host for URI derivation.")
@click.option("--port", type=int, default=None)
@click.option("--raftport", type=int, default=None)
@click.option("--write", "write_paths", multiple=True,
              help="Additional static-nodes.json paths to rewrite.")
@_JSON_OPTION
def join(node_url: str, key_path: str, uri: Optional[str],
         joiner_dir: Optional[str], host: Optional[str],
         port: Optional[int], raftport: Optional[int],
         write_paths: tuple[str, ...], as_json: bool) -> None:
    """Admit a new node: submit the membership change, wait for the
    config block to commit, then write updated static-nodes files."""
    signer = _load_signer(key_path)
    if uri is None:
        if not (joiner_dir and host and port and raftport):
            _die("pass --uri, or --joiner-dir with --host/--port/--raftport",
                 EXIT_VALIDATION)
        paths = NodePaths(joiner_dir)
        if not paths.node_pub.exists():
            _die(f"{paths.node_pub} not found; run keygen first",
                 EXIT_VALIDATION)
        pubkey = bytes.fromhex(paths.node_pub.read_text().strip())
        uri = NodeId(pubkey=pubkey, host=host, port=port,
                     raftport=raftport).render()
    try:
        joiner = parse_node_uri(uri)
    except MembershipError as exc:
        _die(str(exc), EXIT_VALIDATION)

    client = NodeClient(node_url, signer=signer)

    def flow() -> dict:
        before = client.chain()
        prior = [parse_node_uri(u) for u in before["members"]]
        result = client.add_peer(uri)
        deadline = time.monotonic() + 30
        info = client.chain()
        while time.monotonic() < deadline:
            info = client.chain()
            if uri in info["members"]:
                break
            time.sleep(0.2)
        else:
            _die("membership change did not commit in time",
                 EXIT_UNAVAILABLE)
        members = [parse_node_uri(u) for u in sorted(info["members"])]
        if joiner_dir:
            jpaths = NodePaths(joiner_dir)
            genesis_b64 = client.genesis()["block"]
            save_genesis(jpaths.genesis,
                         block_from_bytes(base64.b64decode(genesis_b64)))
            bootstrap = [n for n in prior if n.pubkey != joiner.pubkey]
            save_static_nodes(bootstrap, jpaths.genesis_nodes)
            save_static_nodes(members, jpaths.static_nodes)
        for path in write_paths:
            save_static_nodes(members, path)
        return {"uri": uri, "committed": result.get("committed", True),
                "members": sorted(info["members"])}

    result = _guard(flow)
    _emit(result, as_json,
          "joined: " + "\n        ".join(result["members"]))


# -- transactions ------------------------------------------------------------------


@main.group()
def tx() -> None:
    """Submit transactions."""


def _personal_options(fn):
    fn = click.option("--name", required=True,
                      help="Applicant name (stored off-chain).")(fn)
    fn = click.option("--phone", required=True,
                      help="Applicant phone (stored off-chain).")(fn)
    fn = click.option("--address", default="",
                      help="Applicant address (stored off-chain).")(fn)
    fn = click.option("--notes", default="")(fn)
    return fn


@tx.command("create-need")
@_NODE_OPTION
@click.option("--category", required=True, help="What is needed.")
@click.option("--amount", type=int, required=True)
@click.option("--unit", required=True)
@_personal_options
@click.option("--wait/--no-wait", default=True, show_default=True)
@_JSON_OPTION
def tx_create_need(node_url: str, category: str, amount: int, unit: str,
                   name: str, phone: str, address: str, notes: str,
                   wait: bool, as_json: bool) -> None:
    """Apply for a need (water, tents, ...)."""
    client = NodeClient(node_url)
    receipt = _guard(lambda: client.submit_application(
        "need", category, amount, unit,
        personal={"name": name, "phone": phone,
                  "address": address, "notes": notes}))
    _settle(client, receipt, wait, as_json)


@tx.command("create-support")
@_NODE_OPTION
@click.option("--category", required=True, help="What is offered.")
@click.option("--amount", type=int, required=True)
@click.option("--unit", required=True)
@click.option("--shipping", required=True,
              help="How the goods would be delivered.")
@_personal_options
@click.option("--wait/--no-wait", default=True, show_default=True)
@_JSON_OPTION
def tx_create_support(node_url: str, category: str, amount: int, unit: str,
                      shipping: str, name: str, phone: str, address: str,
                      notes: str, wait: bool, as_json: bool) -> None:
    """Offer support (goods plus a shipping method)."""
    client = NodeClient(node_url)
    receipt = _guard(lambda: client.submit_application(
        "support", category, amount, unit, shipping=shipping,
        personal={"name": name, "phone": phone,
                  "address": address, "notes": notes}))
    _settle(client, receipt, wait, as_json)


@tx.command("approve")
@click.argument("kind", type=click.Choice(["need", "support"]))
@click.argument("rec_id", type=int)
@_NODE_OPTION
@click.option("--key", "key_path", required=True,
              help="Checker key that signs the approval.")
@click.option("--wait/--no-wait", default=True, show_default=True)
@_JSON_OPTION
def tx_approve(kind: str, rec_id: int, node_url: str, key_path: str,
               wait: bool, as_json: bool) -> None:
    """Approve a need or support application."""
    signer = _load_signer(key_path)
    client = NodeClient(node_url, signer=signer)
    receipt = _guard(lambda: client.submit_approval(kind, rec_id))
    _settle(client, receipt, wait, as_json)


@tx.command("grant-role")
@_NODE_OPTION
@click.option("--target", required=True, help="Account pubkey (hex).")
@click.option("--role", "role_name", required=True,
              type=click.Choice(sorted(ROLE_BY_NAME)),
              help="Role to assign; 'none' revokes.")
@click.option("--key", "key_path", required=True,
              help="Admin key that signs the assignment.")
@click.option("--wait/--no-wait", default=True, show_default=True)
@_JSON_OPTION
def tx_grant_role(node_url: str, target: str, role_name: str,
                  key_path: str, wait: bool, as_json: bool) -> None:
    """Assign a role to an account."""
    try:
        target_pub = bytes.fromhex(target)
    except ValueError:
        _die("--target must be hex", EXIT_VALIDATION)
    if len(target_pub) != 32:
        _die("--target must be 32 bytes of hex", EXIT_VALIDATION)
    signer = _load_signer(key_path)
    client = NodeClient(node_url, signer=signer)
    receipt = _guard(lambda: client.grant_role(
        target_pub, ROLE_BY_NAME[role_name]))
    _settle(client, receipt, wait, as_json)


# -- queries -----------------------------------------------------------------------


@main.group()
def query() -> None:
    """Read committed state."""


@query.command("list")
@click.argument("kind", type=click.Choice(["need", "support"]))
@_NODE_OPTION
@click.option("--approved", is_flag=True,
              help="Supports only: restrict to approved records.")
@_JSON_OPTION
def query_list(kind: str, node_url: str, approved: bool,
               as_json: bool) -> None:
    """List applications."""
    client = NodeClient(node_url)
    if kind == "need":
        if approved:
            _die("--approved applies to supports", EXIT_VALIDATION)
        data = _guard(client.needs)
    else:
        data = _guard(client.approved_supports if approved
                      else client.supports)
    if as_json:
        click.echo(json.dumps(data, indent=2, sort_keys=True))
        return
    rows = data["records"]
    if not rows:
        click.echo(f"no records at height {data['height']}")
        return
    id_key = "need_id" if kind == "need" else "support_id"
    for row in rows:
        extra = f" via {row['shipping']}" if kind == "support" else ""
        click.echo(f"#{row[id_key]} {row['kind']} x{row['amount']} "
                   f"{row['unit']}{extra}  [{row['status']}]")


@query.command("status")
@click.argument("kind", type=click.Choice(["need", "support"]))
@click.argument("rec_id", type=int)
@_NODE_OPTION
@click.option("--key", "key_path", required=True,
              help="Checker key; status queries are restricted.")
@_JSON_OPTION
def query_status(kind: str, rec_id: int, node_url: str, key_path: str,
                 as_json: bool) -> None:
    """Show one application's status label."""
    signer = _load_signer(key_path)
    client = NodeClient(node_url, signer=signer)
    data = _guard(lambda: client.status(kind, rec_id))
    _emit(data, as_json, data["status"])


@query.command("tx")
@click.argument("tx_id")
@_NODE_OPTION
@_JSON_OPTION
def query_tx(tx_id: str, node_url: str, as_json: bool) -> None:
    """Look up a transaction receipt."""
    client = NodeClient(node_url)
    data = _guard(lambda: client.receipt(tx_id))
    text = data["status"]
    if data["status"] == "committed":
        text += f" at height {data['height']}"
    elif data["status"] == "rejected":
        text += f": {data.get('code')}"
    _emit(data, as_json, text)


@query.command("chain")
@_NODE_OPTION
@_JSON_OPTION
def query_chain(node_url: str, as_json: bool) -> None:
    """Chain head, leader hint, and membership."""
    client = NodeClient(node_url)
    data = _guard(client.chain)
    text = (f"height {data['height']} tip {data['tip_hash'][:16]} "
            f"term {data['term']} peers {data['peers']} "
            f"leader {(data['leader'] or 'none')[:16]}")
    _emit(data, as_json, text)


# -- personal data -----------------------------------------------------------------


@main.group()
def personal() -> None:
    """Authorized access to off-chain personal data."""


@personal.command("get")
@click.argument("ref")
@_NODE_OPTION
@click.option("--key", "key_path", required=True,
              help="Checker or admin key.")
@_JSON_OPTION
def personal_get(ref: str, node_url: str, key_path: str,
                 as_json: bool) -> None:
    """Fetch the personal record behind an application reference."""
    signer = _load_signer(key_path)
    client = NodeClient(node_url, signer=signer)
    data = _guard(lambda: client.personal(ref))
    _emit(data, as_json,
          f"{data['name']}  {data['phone']}  {data['address']}")


@personal.command("delete")
@click.argument("ref")
@_NODE_OPTION
@click.option("--key", "key_path", required=True, help="Admin key.")
@_JSON_OPTION
def personal_delete(ref: str, node_url: str, key_path: str,
                    as_json: bool) -> None:
    """Erase a personal record; the chain stays valid."""
    signer = _load_signer(key_path)
    client = NodeClient(node_url, signer=signer)
    data = _guard(lambda: client.delete_personal(ref))
    _emit(data, as_json, f"deleted {ref}")


if __name__ == "__main__":
    main()
