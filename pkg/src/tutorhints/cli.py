"""Command-line entry point: ``tutorhints {run,record-fixture,evaluate,report}``.

Exit codes: 0 success, 1 user or data error, 2 environment or backend error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any

from .domain import (
    CONFIG_FIELDS,
    ConfigError,
    CorpusError,
    PipelineConfig,
    coerce_field,
    config_from_mapping,
    load_config,
    load_corpus,
)
from .gateway import BackendConfigError, ReplayMiss
from .judge import Judge
from .metrics import AnnotationError, build_report, load_annotations
from .pipeline import REPORT_FILE, Pipeline, load_results, write_run

log = logging.getLogger("tutorhints")

EXIT_OK, EXIT_USER, EXIT_ENV = 0, 1, 2

# flag -> config field; every field is reachable from exactly one flag
FLAG_FIELDS = {
    "--mode": "mode",
    "--trials": "max_trials_k",
    "--samples": "n_samples",
    "--alpha": "alpha",
    "--beta": "beta",
    "--rule": "rule_variant",
    "--payload": "validation_payload",
    "--tutor-backend": "tutor_backend",
    "--student-backend": "student_backend",
    "--seed": "seed",
    "--gen-temperature": "gen_temperature",
    "--sample-temperature": "sample_temperature",
    "--timeout-secs": "limits",
    "--cache-dir": "cache_dir",
}


def _field_table() -> str:
    rows = [f"  {flag:<22} -> {field}" for flag, field in FLAG_FIELDS.items()]
    covered = set(FLAG_FIELDS.values())
    rows += [f"  --set {f}=VALUE" for f in CONFIG_FIELDS if f not in covered]
    return "config overrides (flag -> PipelineConfig field):\n" + "\n".join(rows)


def _add_pipeline_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("corpus", help="corpus directory")
    p.add_argument("--config", help="JSON config file; absent fields take defaults")
    p.add_argument("-o", "--output-dir", required=True, help="where result files are written")
    p.add_argument("--mode", choices=["base", "io", "iofix", "full"])
    p.add_argument("--trials", type=int, metavar="K")
    p.add_argument("--samples", type=int, metavar="N")
    p.add_argument("--alpha", type=str)
    p.add_argument("--beta", type=str)
    p.add_argument("--rule", choices=["full", "absolute_only", "no_beta", "relative_only"])
    p.add_argument("--payload", choices=["explanation", "hint"])
    p.add_argument("--tutor-backend", metavar="KIND:TARGET[@MODEL]")
    p.add_argument("--student-backend", metavar="KIND:TARGET[@MODEL]")
    p.add_argument("--seed", type=int)
    p.add_argument("--gen-temperature", type=float)
    p.add_argument("--sample-temperature", type=float)
    p.add_argument("--timeout-secs", type=float, help="wall time per test case")
    p.add_argument("--cache-dir", help="replay cache directory")
    p.add_argument("--workers", type=int, default=1, help="programs processed concurrently")
    p.add_argument("--set", action="append", default=[], metavar="FIELD=VALUE",
                   help="override any config field; VALUE is parsed as JSON when possible")
    p.add_argument("--force", action="store_true", help="overwrite a completed run")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tutorhints",
        description="Generate and validate programming hints for buggy student programs.",
        epilog=_field_table(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)
    run = sub.add_parser("run", help="run the pipeline over a corpus", epilog=_field_table(),
                         formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_pipeline_args(run)
    rec = sub.add_parser("record-fixture", epilog=_field_table(),
                         formatter_class=argparse.RawDescriptionHelpFormatter,
                         help="run against live or scripted backends, persisting every completion")
    _add_pipeline_args(rec)
    ev = sub.add_parser("evaluate", help="precision/coverage/kappa from results + annotations")
    ev.add_argument("results_dir")
    ev.add_argument("annotations", nargs="+", help="JSONL annotation files")
    ev.add_argument("-o", "--output-dir", help="defaults to RESULTS_DIR")
    rep = sub.add_parser("report", help="render trial logs for audit")
    rep.add_argument("results_dir")
    rep.add_argument("-o", "--output-dir", help="defaults to RESULTS_DIR")
    return parser


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    overrides: dict[str, Any] = {}
    for flag, field in FLAG_FIELDS.items():
        value = getattr(args, flag[2:].replace("-", "_"))
        if value is None:
            continue
        if field == "limits":
            value = replace(cfg.limits, wall_time_per_test=value)
        overrides[field] = value
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects FIELD=VALUE, got {item!r}")
        key = key.strip()
        if "." in key:  # nested: limits.memory_cap=..., tutor_backend.model_name=...
            top, sub = key.split(".", 1)
            current = overrides.get(top, getattr(cfg, top, None))
            if current is None or not hasattr(current, sub):
                raise ConfigError(f"unknown config field {key!r}")
            overrides[top] = replace(coerce_field(top, current), **{sub: _parse_value(raw)})
        else:
            overrides[key] = _parse_value(raw)
    return config_from_mapping(overrides, cfg)


def cmd_run(args: argparse.Namespace) -> int:
    out = Path(args.output_dir)
    if (out / REPORT_FILE).exists() and not args.force:
        print(f"error: {out} holds a completed run; pass --force to overwrite", file=sys.stderr)
        return EXIT_USER
    config = resolve_config(args)
    corpus = load_corpus(args.corpus)
    if args.verb == "record-fixture" and not config.cache_dir:
        raise ConfigError("record-fixture needs --cache-dir")
    pipeline = Pipeline(config, judge=Judge(config.limits), sample_workers=max(1, args.workers))
    results, report = pipeline.run_corpus(corpus, workers=max(1, args.workers))
    if out.exists() and args.force:
        for stale in (out / "results").glob("*.json"):
            stale.unlink()
    write_run(out, results, report)
    cov = "—" if report.coverage is None else f"{report.coverage:.1f}%"
    print(f"{report.n_programs} programs, " + ", ".join(f"{k}={v}" for k, v in report.status_counts.items())
          + f", coverage {cov}; results in {out}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    results = load_results(args.results_dir)
    if not results:
        print(f"error: no results under {args.results_dir}", file=sys.stderr)
        return EXIT_USER
    annotations = [a for path in args.annotations for a in load_annotations(path)]
    report = build_report(results, annotations)
    out = Path(args.output_dir or args.results_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metric_report.json").write_text(json.dumps(report.to_json(), indent=2, ensure_ascii=False) + "\n",
                                            encoding="utf-8")
    (out / "metrics.tsv").write_text(report.table() + "\n", encoding="utf-8")
    from .plots import plot_metrics

    plot_metrics(report.per_evaluator, out / "metrics.png")
    print(report.table())
    return EXIT_OK


def _pair(outcome: dict | None, failure: str | None) -> str:
    if outcome:
        return f"({outcome['n1']},{outcome['n2']})"
    return f"({failure})" if failure else "(released)"


def cmd_report(args: argparse.Namespace) -> int:
    results = load_results(args.results_dir)
    if not results:
        print(f"error: no results under {args.results_dir}", file=sys.stderr)
        return EXIT_USER
    out = Path(args.output_dir or args.results_dir)
    out.mkdir(parents=True, exist_ok=True)
    verdict = {"accepted": "accepted", "rejected_all_trials": "rejected", "not_buggy": "not buggy"}
    lines = []
    with open(out / "trials.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["program_id", "trial", "n1", "n2", "n", "accepted", "failure_reason",
                         "generation_digest", "augmented_digest", "standard_digest"])
        for r in results:
            trials = r["trials"]
            pairs = " ".join(_pair(t.get("outcome"), t.get("failure_reason")) for t in trials)
            lines.append(f"{r['program_id']}: {pairs + ' ' if pairs else ''}→ {verdict[r['status']]}")
            for t in trials:
                o = t.get("outcome") or {}
                d = t.get("prompt_digests", {})
                writer.writerow([r["program_id"], t["trial_index"], o.get("n1", ""), o.get("n2", ""),
                                 o.get("n", ""), o.get("accepted", ""), t.get("failure_reason") or "",
                                 d.get("generation", ""), d.get("augmented", ""), d.get("standard", "")])
                if d:
                    lines.append(f"  trial {t['trial_index']}: "
                                 + " ".join(f"{k}={v}" for k, v in sorted(d.items())))
    (out / "trials.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    from .plots import plot_trials

    plot_trials(results, out / "trials.png")
    print("\n".join(lines))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "record-fixture": cmd_run, "evaluate": cmd_evaluate, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors exit 2; remap to a user error
        return EXIT_OK if exc.code == 0 else EXIT_USER
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except (CorpusError, ConfigError, AnnotationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (BackendConfigError, ReplayMiss) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_ENV


if __name__ == "__main__":
    sys.exit(main())
