"""Command-line interface.

One subcommand per pipeline stage plus ``run`` for the whole chain and
``label`` for the curation store. Stage commands share a run directory
and the standard artifact names, so they compose the same way the
pipeline drives them.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import storage
from .api import CurationService, serve_curation_api
from .curation import CurationError, LabelRecord, LabelStore, default_catalog
from .evaluation import EvaluationError
from .mining import MiningError
from .model import ModelError
from .pipeline import STAGES, Pipeline, PipelineConfig, PipelineError
from .szz import BugLinkage, LinkageError

USAGE_EXIT = 1
DATA_EXIT = 2
INTERNAL_EXIT = 3

DATA_ERRORS = (
    PipelineError,
    storage.DataError,
    CurationError,
    MiningError,
    LinkageError,
    ModelError,
    EvaluationError,
    FileNotFoundError,
)


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(USAGE_EXIT)


def add_config_flags(parser: Parser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--repo", dest="repo_path")
    parser.add_argument("--branch")
    parser.add_argument("--issues", dest="issue_file")
    parser.add_argument("--reviews", dest="review_file")
    parser.add_argument("--labels", dest="labels_file")
    parser.add_argument("--suspicious", dest="suspicious_file")
    parser.add_argument("--pattern", dest="patterns", action="append",
                        help="issue-id regex with one capturing group (repeatable)")
    parser.add_argument("--out-dir", dest="out_dir")
    parser.add_argument("--months", type=int, choices=(3, 6))
    parser.add_argument("--scheme", choices=("short", "long", "both"))
    parser.add_argument("--drop-mislabeled", dest="drop_mislabeled",
                        action="store_const", const=True)
    parser.add_argument("--churn-threshold", dest="churn_threshold", type=int)
    parser.add_argument("--file-threshold", dest="file_threshold", type=int)
    parser.add_argument("--rho-threshold", dest="rho_threshold", type=float)
    parser.add_argument("--r2-threshold", dest="r2_threshold", type=float)
    parser.add_argument("--spline-df", dest="spline_df", type=int)
    parser.add_argument("--no-cosmetic-filter", dest="cosmetic_filter",
                        action="store_const", const=False)
    parser.add_argument("--no-date-filter", dest="date_filter",
                        action="store_const", const=False)
    parser.add_argument("--date-field", dest="date_field",
                        choices=("author_time", "commit_time"))


CONFIG_KEYS = (
    "repo_path", "branch", "issue_file", "review_file", "labels_file",
    "suspicious_file", "patterns", "out_dir", "months", "scheme",
    "drop_mislabeled", "churn_threshold", "file_threshold", "rho_threshold",
    "r2_threshold", "spline_df", "cosmetic_filter", "date_filter", "date_field",
)


def build_config(args) -> PipelineConfig:
    overrides = {
        key: getattr(args, key)
        for key in CONFIG_KEYS
        if getattr(args, key, None) is not None
    }
    if args.config:
        return PipelineConfig.from_file(args.config, overrides)
    for required in ("repo_path", "issue_file", "out_dir"):
        if required not in overrides:
            raise PipelineError(
                f"--{required.replace('_', '-')} required (or provide --config)"
            )
    return PipelineConfig.from_dict(overrides)


def cmd_stage(stage: str):
    def run(args) -> int:
        config = build_config(args)
        pipeline = Pipeline(config)
        upstream = STAGES[: STAGES.index(stage)]
        pipeline.run(stages=tuple(upstream))  # reuse cached artifacts
        pipeline.run(force=True, stages=(stage,))
        print(f"stage {stage} complete in {config.out_dir}")
        return 0

    return run


def cmd_run(args) -> int:
    config = build_config(args)
    manifest = Pipeline(config).run(force=args.force)
    print(f"run {manifest.run_id} complete in {config.out_dir}")
    return 0


def cmd_label_import(args) -> int:
    issues = set(storage.load_issues(args.issues))
    store = (
        LabelStore.load(args.store, issues, default_catalog())
        if _exists(args.store)
        else LabelStore(issues, default_catalog())
    )
    for raw in storage.read_ndjson(args.file):
        store.import_record(LabelRecord.from_dict(raw))
    store.save(args.store)
    print(f"imported {len(store.records)} labels into {args.store}")
    return 0


def cmd_label_export(args) -> int:
    issues = set(storage.load_issues(args.issues))
    store = LabelStore.load(args.store, issues, default_catalog())
    storage.write_ndjson(args.out, [r.to_dict() for r in store.labels()])
    print(f"exported {len(store.records)} labels to {args.out}")
    return 0


def cmd_label_serve(args) -> int:
    issues = storage.load_issues(args.issues)
    store = (
        LabelStore.load(args.store, set(issues), default_catalog(),
                        audit_path=args.store + ".audit.ndjson")
        if _exists(args.store)
        else LabelStore(set(issues), default_catalog(),
                        audit_path=args.store + ".audit.ndjson")
    )
    linkages = None
    if args.linkage:
        linkages = [BugLinkage.from_dict(d) for d in storage.read_ndjson(args.linkage)]
    service = CurationService(
        store, issues, linkages=linkages, repo_path=args.repo, save_path=args.store
    )
    server = serve_curation_api(service, host=args.host, port=args.port, ui_dir=args.ui)
    host, port = server.server_address[0], server.server_address[1]
    print(f"listening on http://{host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return 0


def _exists(path: str) -> bool:
    return os.path.exists(path)


def make_parser() -> Parser:
    parser = Parser(prog="jitlab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for stage in STAGES:
        stage_parser = sub.add_parser(stage, help=f"run the {stage} stage")
        add_config_flags(stage_parser)
        stage_parser.set_defaults(func=cmd_stage(stage))

    run_parser = sub.add_parser("run", help="run the full pipeline")
    add_config_flags(run_parser)
    run_parser.add_argument("--force", action="store_true",
                            help="recompute every stage even when unchanged")
    run_parser.set_defaults(func=cmd_run)

    label = sub.add_parser("label", help="curation label store")
    label_sub = label.add_subparsers(dest="label_command", required=True)

    imp = label_sub.add_parser("import", help="merge newline-JSON labels into a store")
    imp.add_argument("--file", required=True)
    imp.add_argument("--store", required=True)
    imp.add_argument("--issues", required=True)
    imp.set_defaults(func=cmd_label_import)

    exp = label_sub.add_parser("export", help="dump a store as newline-JSON")
    exp.add_argument("--store", required=True)
    exp.add_argument("--issues", required=True)
    exp.add_argument("--out", required=True)
    exp.set_defaults(func=cmd_label_export)

    serve = label_sub.add_parser("serve", help="serve the curation HTTP API")
    serve.add_argument("--store", required=True)
    serve.add_argument("--issues", required=True)
    serve.add_argument("--repo", default=None, help="repository for BFC diff rendering")
    serve.add_argument("--linkage", default=None, help="linkage_szz.ndjson for BFC ids")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=0)
    serve.add_argument("--ui", default=None, help="static front-end directory")
    serve.set_defaults(func=cmd_label_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON input: {exc}", file=sys.stderr)
        return DATA_EXIT
    except Exception as exc:  # pragma: no cover - last resort
        logging.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return INTERNAL_EXIT


if __name__ == "__main__":
    sys.exit(main())
