"""Command-line entry point: ``changegate <command> ...``."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .audit import AuditLog, EntryKind, export_metrics, iter_entries, verify_log
from .cdm.engine import decide as cdm_decide
from .cdm.engine import initial_references
from .cdm.model import ReferenceState
from .cdm.resampling import decision_confidence
from .config import PROFILES, GovernanceConfig, load_config, load_profile
from .darm import BatchManifest, BatchRegistry
from .drift import DriftReport, drift_report
from .errors import GovernanceError
from .metrics import MetricSnapshot, pick_operating_threshold, snapshot
from .records import feature_matrix, read_batch
from .simulator import load_default_plan, load_plan, load_rows, replay_table, run_lifecycle, table_path
from .simulator.replay import TABLES


def _config(profile: str | None, config: str | None) -> GovernanceConfig:
    if config:
        return load_config(config)
    return load_profile(profile or "sepsis")


def _profile_options(f):
    f = click.option("--config", "config", type=click.Path(exists=True, dir_okay=False), help="Governance config YAML.")(f)
    f = click.option("--profile", type=click.Choice(PROFILES), help="Shipped profile (default: sepsis).")(f)
    return f


def _last_references(log_path: Path, cfg: GovernanceConfig) -> ReferenceState:
    refs = initial_references(cfg)
    if log_path.exists():
        for e in iter_entries(log_path):
            if e.entry_kind is EntryKind.REFERENCE_UPDATE:
                refs = ReferenceState.from_dict(e.payload["references"])
    return refs


def _print_records(records) -> None:
    click.echo(f"{'iter':>4}  {'decision':<28} {'trace':<20} triggers")
    for r in records:
        click.echo(f"{r.iteration:>4}  {r.composite:<28} {r.trace_text:<20} {'; '.join(r.trigger_reasons)}")


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Change-control governance for adaptive ML models."""


@main.command()
@click.argument("batch", type=click.Path(exists=True, dir_okay=False))
@click.option("--log", "log_path", required=True, type=click.Path(dir_okay=False), help="Audit log (JSONL).")
@click.option("--source", required=True, help="Data source identifier.")
@click.option("--window", nargs=2, required=True, metavar="START END", help="Collection window.")
@click.option("--labelling-method", required=True)
@click.option("--reviewer", "reviewers", multiple=True, help="Reviewer id (repeatable).")
@click.option("--quarantine", "quarantined", multiple=True, help="Patient id held out until released (repeatable).")
@click.option("--timestamp", default=None, help="Ingest timestamp (default: now, UTC).")
def ingest(batch, log_path, source, window, labelling_method, reviewers, quarantined, timestamp):
    """Register a batch file with its provenance."""
    from .audit import wall_clock

    records = read_batch(batch)
    registry = BatchRegistry()
    log_path = Path(log_path)
    if log_path.exists():
        for e in iter_entries(log_path):
            if e.entry_kind is EntryKind.BATCH_REGISTERED and "manifest" in e.payload:
                registry.restore(BatchManifest.from_dict(e.payload["manifest"]))
    before = len(registry)
    manifest = registry.register(
        records,
        source=source,
        collection_window=tuple(window),
        labelling_method=labelling_method,
        reviewer_ids=reviewers,
        ingest_timestamp=timestamp or wall_clock(),
        quarantined=quarantined,
    )
    if len(registry) > before:
        AuditLog(log_path).append(EntryKind.BATCH_REGISTERED, {"manifest": manifest.to_dict()})
        click.echo(f"registered {manifest.batch_id} ({manifest.n_records} records)")
    else:
        click.echo(f"already registered {manifest.batch_id}")


@main.command()
@_profile_options
@click.option("--golden", required=True, type=click.Path(exists=True, dir_okay=False), help="Candidate scores on the golden set.")
@click.option("--incoming", type=click.Path(exists=True, dir_okay=False), help="Candidate scores on the incoming batch.")
@click.option("--released", type=click.Path(exists=True, dir_okay=False), help="Released-model scores on the incoming batch.")
@click.option("--reference", type=click.Path(exists=True, dir_okay=False), help="Drift reference window batch.")
@click.option("--threshold", type=float, default=None, help="Operating threshold (default: tuned on --golden).")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write JSON here instead of stdout.")
def evaluate(profile, config, golden, incoming, released, reference, threshold, out):
    """Metric snapshots and drift report for one iteration."""
    cfg = _config(profile, config)
    g = read_batch(golden)
    if threshold is None:
        threshold = pick_operating_threshold(g, cfg.target_sensitivity)
    w = cfg.mlcps_weights
    result = {
        "threshold": threshold,
        "files": {"golden": golden, "incoming": incoming, "released": released},
        "candidate_golden": snapshot(g, threshold, w).to_dict(),
        "candidate_drift": None,
        "released_on_drift": None,
        "drift": None,
    }
    if incoming:
        d = read_batch(incoming)
        result["candidate_drift"] = snapshot(d, threshold, w).to_dict()
        if reference and cfg.drift_enabled:
            ref = feature_matrix(read_batch(reference), cfg.monitored_features)
            inc = feature_matrix(d, cfg.monitored_features)
            result["drift"] = drift_report(ref, inc, cfg.alpha, cfg.drift_bands, cfg.monitored_features).to_dict()
    if released:
        result["released_on_drift"] = snapshot(read_batch(released), threshold, w).to_dict()
    text = json.dumps(result, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        click.echo(text)


def _drift_from_dict(d, cfg: GovernanceConfig) -> DriftReport | None:
    if d is None:
        return None
    return DriftReport.from_score(d["drift_score"], cfg.drift_bands, d.get("k_features", 0), d.get("alpha", cfg.alpha))


@main.command()
@click.argument("evaluation", type=click.Path(exists=True, dir_okay=False))
@_profile_options
@click.option("--log", "log_path", required=True, type=click.Path(dir_okay=False))
@click.option("--iteration", type=int, required=True)
@click.option("--tai-score", type=float, default=None, help="Externally aggregated trustworthy-AI score.")
@click.option("--confidence-replicates", type=int, default=0, help="Bootstrap replicates for decision confidence.")
@click.option("--seed", type=int, default=0, show_default=True)
def decide(evaluation, profile, config, log_path, iteration, tai_score, confidence_replicates, seed):
    """Run the decision engine on the output of ``evaluate``."""
    cfg = _config(profile, config)
    ev = json.loads(Path(evaluation).read_text(encoding="utf-8"))
    log_path = Path(log_path)
    refs = _last_references(log_path, cfg)

    def snap(key):
        return None if ev.get(key) is None else MetricSnapshot.from_dict(ev[key])

    golden, incoming, released = snap("candidate_golden"), snap("candidate_drift"), snap("released_on_drift")
    drift = _drift_from_dict(ev.get("drift"), cfg)
    confidence = None
    if confidence_replicates:
        files = ev["files"]
        g = read_batch(files["golden"])
        d = read_batch(files["incoming"]) if files.get("incoming") else None
        confidence = decision_confidence(
            g, d, ev["threshold"], cfg.mlcps_weights, refs, cfg, confidence_replicates, seed, drift, tai_score
        )
    log = AuditLog(log_path)
    chash = cfg.config_hash()
    record, refs = cdm_decide(
        iteration, cfg, refs, golden, incoming, released, drift, tai_score, confidence, log.decision_sink(chash)
    )
    log.append(EntryKind.REFERENCE_UPDATE, {"iteration": iteration, "references": refs.to_dict()}, chash)
    _print_records([record])
    if confidence is not None:
        click.echo(f"confidence {confidence:.3f}")


@main.command()
@click.argument("plan", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="Override the plan seed.")
@click.option("--log", "log_path", type=click.Path(dir_okay=False), default=None)
@click.option("--export", "export_path", type=click.Path(dir_okay=False), default=None)
def simulate(plan, seed, log_path, export_path):
    """Run a lifecycle plan (default: the shipped sepsis plan)."""
    p = load_plan(plan, seed) if plan else load_default_plan(seed)
    if log_path and Path(log_path).exists():
        raise click.ClickException(f"{log_path} already exists; simulate writes a fresh log")
    records = run_lifecycle(p, log_path)
    _print_records(records)
    if export_path:
        if not log_path:
            raise click.ClickException("--export needs --log")
        export_metrics(log_path, export_path)


@main.command()
@click.argument("table")
@_profile_options
@click.option("--log", "log_path", type=click.Path(dir_okay=False), default=None)
@click.option("--export", "export_path", type=click.Path(dir_okay=False), default=None)
def replay(table, profile, config, log_path, export_path):
    """Replay a tabulated run: ``table6_sepsis``, ``table8_segmentation`` or a CSV path."""
    if table in TABLES:
        path = table_path(table)
        if profile is None and config is None:
            profile = "segmentation" if "segmentation" in table else "sepsis"
    else:
        path = Path(table)
        if not path.exists():
            raise click.ClickException(f"no such table {table!r}")
    cfg = _config(profile, config)
    records = replay_table(load_rows(path), cfg, log_path)
    _print_records(records)
    if export_path:
        if not log_path:
            raise click.ClickException("--export needs --log")
        export_metrics(log_path, export_path)


@main.command("verify-log")
@click.argument("log_path", type=click.Path(exists=True, dir_okay=False))
def verify_log_cmd(log_path):
    """Check the hash chain; exit status 1 on the first bad entry."""
    res = verify_log(log_path)
    if res.ok:
        click.echo(f"OK: {res.n_entries} entries")
        return
    click.echo(f"FAIL at line {res.bad_line}: {res.message}", err=True)
    sys.exit(1)


@main.command()
@click.argument("log_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_path", type=click.Path(dir_okay=False))
def export(log_path, out_path):
    """Write one CSV row per decision in the log."""
    n = export_metrics(log_path, out_path)
    click.echo(f"wrote {n} rows to {out_path}")


def run() -> None:
    try:
        main(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except GovernanceError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
