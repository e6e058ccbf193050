"""
Command line entry point: python -m src.cli <subcommand>

  synthesize        write a synthetic event stream
  build-cohort      events -> balanced benchmark (JSON lines)
  run               run one workflow over a benchmark, write traces and a report
  report / eval     aggregate one or more trace files against a benchmark
  validate-rubric   check a rubric schema document
  author-rubric     draft a rubric through the remote channel (metadata only)

Configuration precedence: CLI flag > --config file > CARE_* environment > default.
Exit codes: 0 success, 1 validation or configuration error, 2 backend failure.
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Sequence, Tuple

from src.base.config import RunConfig, load_config
from src.base.domain import Prediction
from src.base.errors import BackendError, CareError, ConfigError
from src.base.jsonl import digest, write_jsonl
from src.baselines.debate import run_confmad, run_rsmad
from src.baselines.single import run_majority_vote, run_single_pass
from src.cohort.builder import CohortBuilder, balanced_sample, class_counts, read_bench, write_bench
from src.cohort.events import load_events
from src.cohort.synthetic import generate_events, write_events
from src.engine.care import CareEngine
from src.engine.trace import TraceBase
from src.eval.report import aggregate_run, compare_runs, render_json, render_table
from src.gateway.llm_gateway import GatewaySettings, Role, WireLog, create_backend
from src.privacy.audit import AuditWriter
from src.privacy.channel import RemoteChannel
from src.rubric.authoring import author_rubric
from src.rubric.schema import load_schema

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_BACKEND = 2

Runner = Callable[[object], Tuple[Prediction, TraceBase]]


class CliParser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; usage errors here are validation errors (exit 1)."""

    def error(self, message: str):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(prog="care", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="write a synthetic event stream")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--stays", type=int, default=200)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--min-hours", type=int, default=24)
    p.add_argument("--max-hours", type=int, default=72)

    p = sub.add_parser("build-cohort", help="build a balanced benchmark from events")
    p.add_argument("--events", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n-per-class", "--per-class", dest="n_per_class", type=int, default=500)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--overlap-gap-hours", type=int, default=12)

    p = sub.add_parser("run", help="run a workflow over a benchmark")
    p.add_argument("--bench", type=Path, required=True)
    p.add_argument("--config", type=Path, help="JSON or TOML run configuration")
    p.add_argument("--workflow", choices=["single", "vote", "rsmad", "confmad", "care"])
    p.add_argument("--backend", help="local and agent backend: mock:[script.json|seed] or http:<url>#<model>")
    p.add_argument("--local", help="local backend, overrides --backend")
    p.add_argument("--remote", help="remote backend for stage 3 (care only)")
    p.add_argument("--remote-role", choices=[r.value for r in Role])
    p.add_argument("--agent-a")
    p.add_argument("--agent-b")
    p.add_argument("--agent-c")
    p.add_argument("--rubric", type=Path)
    p.add_argument("--no-stage1", action="store_true", default=None)
    p.add_argument("--no-stage3", action="store_true", default=None)
    p.add_argument("--backbone-only", action="store_true", help="same as --no-stage1 --no-stage3")
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--max-facts-per-round", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--traces", type=Path)
    p.add_argument("--report", type=Path)
    p.add_argument("--audit-log", type=Path)
    p.add_argument("--wire-log", type=Path)

    for name in ("report", "eval"):
        p = sub.add_parser(name, help="aggregate trace files into a report")
        p.add_argument("--bench", type=Path, required=True)
        p.add_argument("--traces", type=Path, nargs="+", required=True)
        p.add_argument("--format", choices=["json", "table"], default="table")
        p.add_argument("--out", type=Path)
        p.add_argument("--allow-mixed", action="store_true")

    p = sub.add_parser("validate-rubric", help="validate a rubric schema document")
    p.add_argument("path", type=Path)

    p = sub.add_parser("author-rubric", help="draft a rubric through the remote channel")
    p.add_argument("--remote", required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--audit-log", type=Path)
    p.add_argument("--wire-log", type=Path)
    return parser


def cmd_synthesize(args) -> int:
    events = generate_events(args.stays, args.seed, (args.min_hours, args.max_hours))
    write_events(args.out, events)
    return EXIT_OK


def cmd_build_cohort(args) -> int:
    ingest = load_events(args.events)
    source = digest({
        "events": digest(Path(args.events).read_bytes()),
        "per_class": args.n_per_class,
        "seed": args.seed,
        "overlap_gap_hours": args.overlap_gap_hours,
    })
    builder = CohortBuilder(overlap_gap_hours=args.overlap_gap_hours, source_digest=source)
    builder.stats.rejected_records = ingest.rejected_total
    pool = builder.build_pool(ingest.frame)
    logger.info(f"📊 Pool: {builder.stats.summary()}")

    bench = balanced_sample(pool, args.n_per_class, args.seed)
    positives, negatives = class_counts(bench)
    stays = len({s.stay_id for s in bench})
    logger.info(f"📊 Balanced set: {positives} positive / {negatives} negative from {stays} stays")
    write_bench(args.out, bench)
    return EXIT_OK


def _run_overrides(args) -> dict:
    agents = [args.agent_a, args.agent_b, args.agent_c]
    if not any(agents) and args.backend:
        agents = [args.backend] * 3
    no_stage1 = True if args.backbone_only else args.no_stage1
    no_stage3 = True if args.backbone_only else args.no_stage3
    return {
        "workflow": args.workflow,
        "backends": {
            "local": args.local or args.backend,
            "remote": args.remote,
            "remote_role": args.remote_role,
            "agents": agents if all(agents) else None,
            "temperature": args.temperature,
        },
        "rubric_path": args.rubric,
        "engine": {"max_acquisition_rounds": args.max_rounds, "max_facts_per_round": args.max_facts_per_round},
        "ablation": {"no_stage1": no_stage1, "no_stage3": no_stage3},
        "seed": args.seed,
        "jobs": args.jobs,
        "outputs": {"traces": args.traces, "report": args.report,
                    "audit_log": args.audit_log, "wire_log": args.wire_log},
    }


def build_runner(config: RunConfig, config_digest: str, schema, wire_log: Optional[WireLog],
                 audit: Optional[AuditWriter]) -> Runner:
    settings = GatewaySettings()
    b = config.backends

    def backend(spec: str, role: Role = Role.LOCAL):
        return create_backend(spec, role=role, seed=config.seed, settings=settings,
                              temperature=b.temperature, wire_log=wire_log)

    if config.workflow == "care":
        channel = None
        if config.uses_remote:
            channel = RemoteChannel(backend(b.remote, b.remote_role), audit)
        engine = CareEngine(schema, backend(b.local), channel, config.care_settings(), config_digest)
        return engine.run_care
    if config.workflow == "single":
        local = backend(b.local)
        return lambda sample: run_single_pass(sample, local, config_digest)

    agents = [backend(spec) for spec in b.agents]
    protocol = {"vote": run_majority_vote, "rsmad": run_rsmad, "confmad": run_confmad}[config.workflow]
    return lambda sample: protocol(sample, agents, config_digest)


def _default_output(bench: Path, workflow_id: str, suffix: str) -> Path:
    return bench.with_name(f"{bench.stem}.{workflow_id}.{suffix}")


def _backend_failed(trace: TraceBase) -> bool:
    return any(f == "local_backend_failure" or f.startswith("backend_failure_") for f in trace.flags)


def cmd_run(args) -> int:
    config = load_config(args.config, _run_overrides(args))
    schema = load_schema(config.rubric_path)
    config_digest = config.digest(schema.to_document())
    workflow_id = config.workflow_id
    traces_path = config.outputs.traces or _default_output(args.bench, workflow_id, "traces.jsonl")
    report_path = config.outputs.report or _default_output(args.bench, workflow_id, "report.json")

    bench = read_bench(args.bench)
    if not bench:
        raise ConfigError(f"benchmark {args.bench} is empty")
    wire_log = WireLog(config.outputs.wire_log) if config.outputs.wire_log else None
    audit = AuditWriter(config.outputs.audit_log, config_digest=config_digest)
    runner = build_runner(config, config_digest, schema, wire_log, audit)

    logger.info(f"🧪 Running {workflow_id} on {len(bench)} samples (jobs={config.jobs}, config {config_digest[:12]})")
    with ThreadPoolExecutor(max_workers=config.jobs) as pool:
        results = list(pool.map(runner, bench))
    traces = [trace for _, trace in results]

    write_jsonl(traces_path, (t.to_row() for t in traces))
    report = aggregate_run(traces, bench)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(render_json([report]), encoding="utf-8")
    sys.stdout.write(render_table([report]))
    logger.info(f"✅ Traces: {traces_path}  Report: {report_path}  Remote calls audited: {audit.count}")

    failed = sum(1 for t in traces if _backend_failed(t))
    if failed:
        logger.error(f"{failed} samples hit a backend failure")
        return EXIT_BACKEND
    return EXIT_OK


def cmd_report(args) -> int:
    bench = read_bench(args.bench)
    reports = compare_runs(args.traces, bench, allow_mixed=args.allow_mixed)
    text = render_json(reports) if args.format == "json" else render_table(reports)
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_validate_rubric(args) -> int:
    schema = load_schema(args.path)
    sys.stdout.write(f"OK: {len(schema.categories)} categories ({', '.join(schema.names)})\n")
    return EXIT_OK


def cmd_author_rubric(args) -> int:
    wire_log = WireLog(args.wire_log) if args.wire_log else None
    backend = create_backend(args.remote, role=Role.REMOTE, settings=GatewaySettings(), wire_log=wire_log)
    channel = RemoteChannel(backend, AuditWriter(args.audit_log))
    schema = author_rubric(channel)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(schema.to_document(), indent=2) + "\n", encoding="utf-8")
    logger.info(f"✅ Rubric written to {args.out}")
    return EXIT_OK


COMMANDS = {
    "synthesize": cmd_synthesize,
    "build-cohort": cmd_build_cohort,
    "run": cmd_run,
    "report": cmd_report,
    "eval": cmd_report,
    "validate-rubric": cmd_validate_rubric,
    "author-rubric": cmd_author_rubric,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_INVALID

    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    )
    try:
        return COMMANDS[args.command](args)
    except BackendError as e:
        sys.stderr.write(f"backend failure: {e}\n")
        return EXIT_BACKEND
    except CareError as e:
        sys.stderr.write(f"error: {type(e).__name__}: {e}\n")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
