"""Command-line interface.

Subcommands: serve (verifier service), simulate (workload study), bench
(hot-path measurements), attack (adversarial regression matrix),
verify-chain (offline chain files), export-evidence / verify-evidence,
keygen, and issue (sign a certificate described by a JSON file).
"""

from __future__ import annotations

import json
import secrets
import sys
import time
from pathlib import Path

import click

from . import attacks as attacks_mod
from . import bench as bench_mod
from . import sim as sim_mod
from .certificate import (
    DelegationCertificate,
    DelegationLevel,
    issue as issue_cert,
    to_text,
    to_wire,
)
from .chain import Chain, ChainSet, Tier
from .crypto import SUITE_SIMULATED_MAC, CryptoProvider, sha256
from .errors import AithError
from .evidence import bundle_from_json, bundle_to_json, extract_evidence, verify_evidence
from .policy import Constraint, ConstraintAction, ConstraintKind, EscalationTrigger, TriggerKind


@click.group()
def main() -> None:
    """Continuous-delegation verifier, simulator, and audit tooling."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="service config JSON")
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
def serve(config_path: str | None, host: str | None, port: int | None) -> None:
    """Run the verifier service (HTTP API + event stream)."""
    from .service import ServiceConfig, VerifierService
    from .webapi import serve as run_server

    config = ServiceConfig.from_file(config_path) if config_path else ServiceConfig()
    service = VerifierService(config)
    click.echo(f"verifier listening on {host or config.host}:{port or config.port} "
               f"(data_dir={config.data_dir or 'memory'})")
    run_server(service, host, port)


@main.command()
@click.option("--ops", default=100_000, show_default=True)
@click.option("--users", default=1000, show_default=True)
@click.option("--seed", default=20_260_101, show_default=True)
@click.option("--days", default=7.0, show_default=True)
@click.option("--approve-rate", default=1.0, show_default=True,
              help="scripted principal approval rate for escalations")
@click.option("--json", "json_out", type=click.Path(), default=None,
              help="write the machine-readable report here")
def simulate(ops: int, users: int, seed: int, days: float, approve_rate: float,
             json_out: str | None) -> None:
    """Run the banded workload study (defaults reproduce the 100k-op setup)."""
    mix = sim_mod.WorkloadMix(
        user_count=users, op_count=ops, seed=seed, duration_days=days,
        approve_rate=approve_rate,
    )
    report = sim_mod.run_simulation(mix)
    click.echo(sim_mod.format_report(report))
    if json_out:
        Path(json_out).write_text(json.dumps(report.to_dict(), indent=2))
        click.echo(f"report written to {json_out}")


@main.command()
@click.option("--quick", is_flag=True, help="smaller sample counts")
@click.option("--json", "json_out", type=click.Path(), default=None)
def bench(quick: bool, json_out: str | None) -> None:
    """Measure hot-path latency and throughput on this machine."""
    report = bench_mod.run_bench(quick=quick)
    click.echo(bench_mod.format_report(report))
    if json_out:
        payload = {k: v for k, v in report.__dict__.items()}
        Path(json_out).write_text(json.dumps(payload, indent=2))


@main.command()
def attack() -> None:
    """Run the adversarial regression scenarios."""
    results = attacks_mod.run_attack_suite()
    click.echo(attacks_mod.format_results(results))
    if not all(r.passed for r in results):
        sys.exit(1)


@main.command("verify-chain")
@click.argument("paths", nargs=-1, type=click.Path(exists=True), required=True)
def verify_chain(paths: tuple[str, ...]) -> None:
    """Verify chain files (tierN.chain) or a data directory."""
    expanded: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            expanded.extend(sorted(p.glob("**/tier*.chain")))
        else:
            expanded.append(p)
    if not expanded:
        raise click.ClickException("no chain files found")
    failed = False
    for path in expanded:
        tier = Tier(int(path.stem.removeprefix("tier")))
        try:
            chain = Chain(tier, path, read_only=True)
        except AithError as exc:
            click.echo(f"{path}: FAILED ({exc})")
            failed = True
            continue
        bad = chain.verify()
        if bad is None:
            click.echo(f"{path}: OK ({len(chain)} entries, head "
                       f"{chain.head_hash.hex()[:16]}...)")
        else:
            click.echo(f"{path}: TAMPERED at seq {bad}")
            failed = True
        chain.close()
    if failed:
        sys.exit(1)


@main.command("export-evidence")
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option("--from-ts", "from_ts", required=True, type=int)
@click.option("--to-ts", "to_ts", required=True, type=int)
@click.option("--cert", "cert_id", default=None)
@click.option("--tiers", default=None, help="comma-separated tier numbers")
@click.option("--out", type=click.Path(), default="-")
def export_evidence_cmd(data_dir: str, from_ts: int, to_ts: int,
                        cert_id: str | None, tiers: str | None, out: str) -> None:
    """Extract a standalone evidence bundle from chain files."""
    chains_dir = Path(data_dir) / "chains"
    chains = ChainSet(chains_dir if chains_dir.exists() else data_dir,
                      read_only=True)
    tier_list = [Tier(int(t)) for t in tiers.split(",")] if tiers else None
    bundle = extract_evidence(chains, from_ts, to_ts, cert_id, tier_list)
    text = bundle_to_json(bundle)
    if out == "-":
        click.echo(text)
    else:
        Path(out).write_text(text)
        click.echo(f"bundle written to {out}", err=True)


@main.command("verify-evidence")
@click.argument("bundle_path", type=click.Path(exists=True))
def verify_evidence_cmd(bundle_path: str) -> None:
    """Verify an evidence bundle standalone (no chain access needed)."""
    bundle = bundle_from_json(Path(bundle_path).read_text())
    ok, reason = verify_evidence(bundle)
    click.echo(f"{'OK' if ok else 'FAILED'}: {reason}")
    if not ok:
        sys.exit(1)


@main.command()
@click.option("--out", type=click.Path(), required=True)
def keygen(out: str) -> None:
    """Generate a principal keypair (shared-MAC suite) into a key file."""
    secret = secrets.token_bytes(32)
    pub = sha256(secret)
    Path(out).write_text(json.dumps({
        "suite": "SIMULATED_MAC",
        "secret_hex": secret.hex(),
        "pubkey_hex": pub.hex(),
        "note": "shared-secret MAC suite: the verifier must hold secret_hex too",
    }, indent=2))
    click.echo(f"keypair written to {out} (pk {pub.hex()[:16]}...)")


_CONSTRAINT_KINDS = {k.name: k for k in ConstraintKind}
_TRIGGER_KINDS = {k.name: k for k in TriggerKind}


def _constraint_from_json(row: dict) -> Constraint:
    return Constraint(
        constraint_id=row["constraint_id"],
        kind=_CONSTRAINT_KINDS[row["kind"]],
        action=ConstraintAction[row.get("action", "BLOCK")],
        max_amount=row.get("max_amount"),
        window_seconds=row.get("window_seconds"),
        op_types=frozenset(row.get("op_types", ())),
        assets=frozenset(row.get("assets", ())),
        destinations=frozenset(row.get("destinations", ())),
        window_start=row.get("window_start"),
        window_end=row.get("window_end"),
    )


def _trigger_from_json(row: dict) -> EscalationTrigger:
    return EscalationTrigger(
        trigger_id=row["trigger_id"],
        kind=_TRIGGER_KINDS[row["kind"]],
        constraint_id=row.get("constraint_id"),
        fraction_ppm=row.get("fraction_ppm"),
        known_op_types=frozenset(row.get("known_op_types", ())),
        window_seconds=row.get("window_seconds"),
        op_types=frozenset(row.get("op_types", ())),
        max_count=row.get("max_count"),
        max_sum=row.get("max_sum"),
        timeout_seconds=row.get("timeout_seconds"),
    )


@main.command("issue")
@click.option("--key", "key_path", required=True, type=click.Path(exists=True))
@click.option("--spec", "cert_json", required=True, type=click.Path(exists=True),
              help="certificate description JSON (see docs/wire.md)")
@click.option("--out", type=click.Path(), required=True)
@click.option("--text", "text_out", type=click.Path(), default=None,
              help="also write the human-readable export")
def issue_cmd(key_path: str, cert_json: str, out: str, text_out: str | None) -> None:
    """Sign a delegation certificate from a JSON description."""
    keyfile = json.loads(Path(key_path).read_text())
    desc = json.loads(Path(cert_json).read_text())
    provider = CryptoProvider()
    key = provider.register_secret(bytes.fromhex(keyfile["secret_hex"]))
    now = int(time.time())
    from .certificate import TargetEndpoint

    cert = DelegationCertificate(
        principal_id=desc["principal_id"],
        principal_pubkey=key.pubkey,
        suite_id=SUITE_SIMULATED_MAC,
        agent_id=desc["agent_id"],
        agent_hash=bytes.fromhex(desc["agent_hash"]),
        level=DelegationLevel[desc.get("level", "GENERAL")],
        constraints=tuple(_constraint_from_json(c) for c in desc.get("constraints", [])),
        triggers=tuple(_trigger_from_json(t) for t in desc.get("triggers", [])),
        targets=tuple(
            TargetEndpoint(t["target_id"], t["address"])
            for t in desc.get("targets", [])
        ),
        t_issue=desc.get("t_issue", now),
        t_expire=desc["t_expire"],
        semantic_auditor_pubkey=(
            bytes.fromhex(desc["semantic_auditor_pubkey"])
            if desc.get("semantic_auditor_pubkey") else None
        ),
    )
    signed = issue_cert(cert, provider, key.secret)
    Path(out).write_bytes(to_wire(signed))
    click.echo(f"certificate {signed.cert_id} written to {out}")
    if text_out:
        Path(text_out).write_text(to_text(signed))


if __name__ == "__main__":
    main()
