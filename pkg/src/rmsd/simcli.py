"""rmsd-sim: run one deterministic cluster simulation and check it.

The trace goes to --out as JSON lines; the process exits nonzero when
any safety or liveness property is violated, so seed sweeps can be
driven from a shell loop.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional

import click

from .sim import SimConfig, run_sim, trace_to_jsonl
from .simcheck import check_trace


def _load_events(path: Optional[str], what: str) -> list[dict]:
    if path is None:
        return []
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        click.echo(f"error: cannot read {what} file: {exc}", err=True)
        sys.exit(2)
    if not isinstance(data, list):
        click.echo(f"error: {what} file must hold a JSON list", err=True)
        sys.exit(2)
    return data


@click.command()
@click.option("--nodes", default=3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--faults", "faults_path", default=None,
              help="JSON list of fault events "
                   '(e.g. [{"at":500,"kind":"crash","node":1}, ...]).')
@click.option("--workload", "workload_path", default=None,
              help="JSON list of client operations.")
@click.option("--out", "out_path", default=None,
              help="Write the JSONL trace here.")
@click.option("--limit-ms", default=60_000, show_default=True,
              help="Logical time cap.")
@click.option("--latency-min", default=5, show_default=True)
@click.option("--latency-max", default=25, show_default=True)
@click.option("--members", default=None, type=int,
              help="Initial member count; remaining nodes start passive "
                   "and can be joined by the workload.")
@click.option("--quiet", is_flag=True, help="Only print the verdict.")
def main(nodes: int, seed: int, faults_path: Optional[str],
         workload_path: Optional[str], out_path: Optional[str],
         limit_ms: int, latency_min: int, latency_max: int,
         members: Optional[int], quiet: bool) -> None:
    """Simulate a cluster with seeded faults and check every recorded
    safety property."""
    if nodes < 1:
        click.echo("error: --nodes must be at least 1", err=True)
        sys.exit(2)
    config = SimConfig(
        node_count=nodes,
        seed=seed,
        latency_min=latency_min,
        latency_max=latency_max,
        limit_ms=limit_ms,
        faults=_load_events(faults_path, "faults"),
        workload=_load_events(workload_path, "workload"),
        initial_members=members,
    )
    result = run_sim(config)
    if out_path:
        Path(out_path).write_text(trace_to_jsonl(result.trace))
    report = check_trace(result.trace)

    if not quiet:
        stats = report.stats
        click.echo(f"seed {seed} nodes {nodes} "
                   f"height {stats.get('max_height')} "
                   f"elections {stats.get('elections')} "
                   f"ops {result.ops_done}/{result.ops_total} "
                   f"quiesced {result.quiesced}")
    if report.ok:
        click.echo("ok: all recorded properties hold")
        return
    for violation in report.violations:
        click.echo(f"violation: {violation}", err=True)
    sys.exit(1)


if __name__ == "__main__":
    main()
