"""Safety checker for simulator traces.

Evaluates the consensus and privacy properties over one trace:

- election safety: at most one leader per term
- per-height agreement: one block hash and one state digest per height
- commit monotonicity: each node commits heights 1, 2, 3, ... with no
  gap, repeat, or rollback
- log matching: nodes sharing a block hash at a height agree on the
  entire prefix below it, and a (height, term) pair names one block
- leader completeness: every block committed before a term-T election
  with entry term < T appears in that leader's final log
- membership: no public key is added twice by committed config blocks
- privacy: no personal-data sentinel anywhere in the trace or chains
- agreement: a quiescent run ends with all live nodes on one height
  and one digest

check_trace returns the first violation per rule with its event index;
it never mutates the trace, so corrupted traces (negative controls)
are safe to feed in.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

PII_SENTINEL = "PII:"


@dataclass
class CheckReport:
    ok: bool
    violations: list[str] = field(default_factory=list)
    stats: dict = field(default_factory=dict)


def check_trace(trace: list[dict]) -> CheckReport:
    violations: list[str] = []

    leaders_by_term: dict[int, set[int]] = {}
    elections: list[tuple[int, int, int]] = []  # (event index, node, term)
    hash_at_height: dict[int, str] = {}
    digest_at_height: dict[int, str] = {}
    first_commit: dict[int, tuple[str, int, int]] = {}  # h -> (hash, term, idx)
    commits_by_node: dict[int, list[int]] = {}
    config_heights: dict[str, set[int]] = {}
    finals: dict[int, dict] = {}
    result: dict = {}

    for i, ev in enumerate(trace):
        kind = ev.get("ev")
        if kind == "role" and ev["role"] == "leader":
            term = ev["term"]
            nodes = leaders_by_term.setdefault(term, set())
            nodes.add(ev["node"])
            if len(nodes) > 1:
                violations.append(
                    f"election_safety: nodes {sorted(nodes)} both led "
                    f"term {term} (event {i})")
            elections.append((i, ev["node"], term))
        elif kind == "commit":
            h, block_hash, digest = ev["height"], ev["hash"], ev["digest"]
            node = ev["node"]
            seen = hash_at_height.setdefault(h, block_hash)
            if seen != block_hash:
                violations.append(
                    f"state_machine_safety: two blocks at height {h} "
                    f"(event {i})")
            seen_digest = digest_at_height.setdefault(h, digest)
            if seen_digest != digest:
                violations.append(
                    f"state_machine_safety: two state digests at height {h} "
                    f"(event {i})")
            if h not in first_commit:
                first_commit[h] = (block_hash, ev["term"], i)
            heights = commits_by_node.setdefault(node, [])
            expected = heights[-1] + 1 if heights else 1
            if h != expected:
                violations.append(
                    f"commit_monotonicity: node {node} committed height {h} "
                    f"after {expected - 1} (event {i})")
            heights.append(h)
            if ev.get("config"):
                pub = _uri_pubkey(ev["config"])
                config_heights.setdefault(pub, set()).add(h)
        elif kind == "final":
            finals[ev["node"]] = ev
        elif kind == "result":
            result = ev

    for pub, heights in sorted(config_heights.items()):
        if len(heights) > 1:
            violations.append(
                f"membership: {pub} added at heights {sorted(heights)}")

    _check_log_matching(finals, violations)
    _check_leader_completeness(elections, first_commit, finals, violations)

    if result and not result.get("privacy_ok", True):
        violations.append("privacy: sentinel bytes found in a chain")
    blob = json.dumps(trace, sort_keys=True)
    if PII_SENTINEL in blob:
        violations.append("privacy: sentinel text appears in the trace")

    if result.get("quiesced"):
        live = [f for f in finals.values() if f.get("alive")]
        if len({f["commit"] for f in live}) > 1:
            violations.append(
                "agreement: quiescent run ended on differing heights")
        elif len({f["digest"] for f in live}) > 1:
            violations.append(
                "agreement: quiescent run ended on differing digests")

    stats = {
        "max_height": max(hash_at_height, default=0),
        "terms_led": len(leaders_by_term),
        "elections": len(elections),
        "nodes": len(finals),
        "quiesced": bool(result.get("quiesced")),
        "cap_hit": bool(result.get("cap_hit")),
        "ops_total": result.get("ops_total", 0),
        "ops_done": result.get("ops_done", 0),
    }
    return CheckReport(ok=not violations, violations=violations, stats=stats)


def _uri_pubkey(uri: str) -> str:
    rest = uri.split("://", 1)[-1]
    return rest.split("@", 1)[0]


def _check_log_matching(finals: dict[int, dict],
                        violations: list[str]) -> None:
    # One block per (height, term) across all logs.
    by_key: dict[tuple[int, int], str] = {}
    for node, final in sorted(finals.items()):
        for h, term, block_hash in final.get("log", []):
            seen = by_key.setdefault((h, term), block_hash)
            if seen != block_hash:
                violations.append(
                    f"log_matching: node {node} holds a different block at "
                    f"height {h} term {term}")
                return
    # Shared hash at a height implies an identical prefix.
    nodes = sorted(finals)
    for a_i, a in enumerate(nodes):
        log_a = finals[a].get("log", [])
        for b in nodes[a_i + 1:]:
            log_b = finals[b].get("log", [])
            limit = min(len(log_a), len(log_b))
            diverged = None
            for k in range(limit):
                if log_a[k][2] != log_b[k][2]:
                    diverged = k
                    break
            if diverged is None:
                continue
            for k in range(diverged + 1, limit):
                if log_a[k][2] == log_b[k][2]:
                    violations.append(
                        f"log_matching: nodes {a} and {b} share height "
                        f"{log_a[k][0]} but diverge below it")
                    return


def _check_leader_completeness(
        elections: list[tuple[int, int, int]],
        first_commit: dict[int, tuple[str, int, int]],
        finals: dict[int, dict],
        violations: list[str]) -> None:
    for ev_index, node, term in elections:
        final = finals.get(node)
        if final is None:
            continue
        log = {row[0]: row[2] for row in final.get("log", [])}
        for h, (block_hash, entry_term, commit_index) in first_commit.items():
            if commit_index >= ev_index or entry_term >= term:
                continue
            if log.get(h) != block_hash:
                violations.append(
                    f"leader_completeness: leader {node} of term {term} "
                    f"lacks committed block at height {h}")
                return


def check_jsonl(text: str) -> CheckReport:
    trace = [json.loads(line) for line in text.splitlines() if line.strip()]
    return check_trace(trace)
