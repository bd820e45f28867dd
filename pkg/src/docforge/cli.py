"""Headless command line driver.

Every subcommand operates on a project directory (--project, default cwd)
and calls the same stage functions the HTTP service uses. Summaries go to
stdout (JSON with --json), diagnostics to stderr. Exit codes: 0 success,
1 pipeline error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline
from .chunker import ChunkConfig
from .errors import DocforgeError
from .export import ExportConfig, ExportFormat, ExportSchema
from .llm import PLACEHOLDER_PROFILE, HttpLlmClient, MockLlmClient, ModelProfile
from .qagen import AnswerStyle, ReviewStatus
from .store import ProjectStore

DEFAULT_PROFILE_NAME = PLACEHOLDER_PROFILE.name
DEFAULT_ENDPOINT = PLACEHOLDER_PROFILE.endpoint_url
DEFAULT_MODEL = PLACEHOLDER_PROFILE.model_name


def _dir_path(value: str) -> Path:
    path = Path(value)
    if not path.is_dir():
        raise argparse.ArgumentTypeError(f"not a directory: {value}")
    return path


def _enum_flag(enum_cls):
    def parse(value: str):
        for member in enum_cls:
            if member.value.lower() == value.lower():
                return member
        choices = ", ".join(m.value.lower() for m in enum_cls)
        raise argparse.ArgumentTypeError(f"expected one of: {choices}")

    return parse


def _delimiters_flag(value: str) -> tuple[str, ...]:
    """Comma-separated list; \\n and \\t escapes are decoded. Delimiters
    containing a literal comma cannot be expressed here."""
    parts = [p.replace("\\n", "\n").replace("\\t", "\t") for p in value.split(",")]
    return tuple(p for p in parts if p)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--project", default=".", metavar="DIR",
        help="project directory (default: current directory)",
    )
    common.add_argument(
        "--json", action="store_true", help="print a JSON summary to stdout"
    )
    common.add_argument(
        "--mock-llm", type=_dir_path, default=None, metavar="FIXTURE_DIR",
        help="use the deterministic offline provider; response fixture files "
             "in FIXTURE_DIR override synthesized output",
    )

    parser = argparse.ArgumentParser(
        prog="docforge",
        description="Turn documents into supervised fine-tuning datasets.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("init", parents=[common], help="create a project")
    p.add_argument("--name", default=None, help="project name (default: dir name)")
    p.add_argument("--profile-name", default=DEFAULT_PROFILE_NAME)
    p.add_argument("--endpoint", default=DEFAULT_ENDPOINT,
                   help="OpenAI-compatible endpoint URL")
    p.add_argument("--model", default=DEFAULT_MODEL, help="model name")
    p.set_defaults(handler=cmd_init)

    p = sub.add_parser("ingest", parents=[common], help="parse input files")
    p.add_argument("files", nargs="+", metavar="FILE")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("chunk", parents=[common], help="chunk all documents")
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--min-len", type=int, default=None)
    p.add_argument("--delimiters", type=_delimiters_flag, default=None,
                   metavar="LIST", help=r"comma-separated, \n and \t decoded")
    p.set_defaults(handler=cmd_chunk)

    p = sub.add_parser("personas", parents=[common],
                       help="generate genre-audience pairs per document")
    p.add_argument("--n", type=int, default=None, help="pairs per document")
    p.add_argument("--profile", default=None, help="model profile name")
    p.set_defaults(handler=cmd_personas)

    p = sub.add_parser("questions", parents=[common],
                       help="generate questions for uncovered chunks")
    p.add_argument("--mode", choices=("naive", "persona"), default="persona")
    p.add_argument("--per-chunk", type=int, default=None,
                   help="questions per generation pass")
    p.add_argument("--dropout", type=float, default=None,
                   help="question-mark dropout probability")
    p.add_argument("--seed", type=int, default=None, help="generation rng seed")
    p.add_argument("--profile", default=None)
    p.set_defaults(handler=cmd_questions)

    p = sub.add_parser("answers", parents=[common],
                       help="answer every unanswered question")
    p.add_argument("--style", type=_enum_flag(AnswerStyle), default=None,
                   help="concise, detailed, or explanatory")
    p.add_argument("--profile", default=None)
    p.set_defaults(handler=cmd_answers)

    p = sub.add_parser("refine", parents=[common],
                       help="refine pending pairs (or specific --qa-id)")
    p.add_argument("--qa-id", action="append", default=None, metavar="ID")
    p.add_argument("--profile", default=None)
    p.set_defaults(handler=cmd_refine)

    p = sub.add_parser("export", parents=[common], help="write the dataset")
    p.add_argument("--schema", type=_enum_flag(ExportSchema), default=None)
    p.add_argument("--format", type=_enum_flag(ExportFormat), default=None)
    p.add_argument("--include-cot", action="store_true")
    p.add_argument("--out", default=None, metavar="PATH")
    p.add_argument("--statuses", default=None, metavar="LIST",
                   help="comma-separated review statuses to include")
    p.set_defaults(handler=cmd_export)

    p = sub.add_parser("eval", parents=[common],
                       help="score a candidate model against an evalset")
    p.add_argument("--evalset", required=True, metavar="PATH")
    p.add_argument("--candidate", default=None, help="candidate profile name")
    p.add_argument("--judge", default=None, help="judge profile name")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p.add_argument("--bind", default=None, metavar="HOST:PORT")
    p.add_argument("--ui-dir", default=None, metavar="DIR",
                   help="static files to serve at /")
    p.add_argument("--log-level", default="info")
    p.set_defaults(handler=cmd_serve)

    p = sub.add_parser("run-all", parents=[common],
                       help="ingest through export in one go")
    p.add_argument("files", nargs="+", metavar="FILE")
    p.add_argument("--mode", choices=("naive", "persona"), default="persona")
    p.add_argument("--seed", type=int, default=None, help="generation rng seed")
    p.add_argument("--schema", type=_enum_flag(ExportSchema), default=None)
    p.add_argument("--format", type=_enum_flag(ExportFormat), default=None)
    p.add_argument("--include-cot", action="store_true")
    p.add_argument("--out", default=None, metavar="PATH")
    p.add_argument("--profile", default=None)
    p.set_defaults(handler=cmd_run_all)

    return parser


def make_client(args):
    if args.mock_llm is not None:
        seed = getattr(args, "seed", None) or 0
        return MockLlmClient(seed=seed, fixture_dir=args.mock_llm)
    return HttpLlmClient()


def open_store(args) -> ProjectStore:
    return ProjectStore.open(args.project)


def _default_project_kwargs(name, profile_name, endpoint, model):
    profile = ModelProfile(
        name=profile_name, endpoint_url=endpoint, model_name=model
    )
    return {
        "model_profiles": (profile,),
        "default_profile": profile.name,
    }


def cmd_init(args) -> dict:
    root = Path(args.project)
    name = args.name or root.resolve().name
    store = ProjectStore.create(
        root, name,
        **_default_project_kwargs(name, args.profile_name, args.endpoint,
                                  args.model),
    )
    with store:
        return {"project_id": store.project.id, "root": str(root)}


def cmd_ingest(args) -> dict:
    with open_store(args) as store:
        docs = pipeline.ingest_files(store, args.files)
        return {"documents": len(docs), "ids": [d.id for d in docs]}


def cmd_chunk(args) -> dict:
    with open_store(args) as store:
        base = store.project.chunk_config
        cfg = ChunkConfig(
            max_len=args.max_len if args.max_len is not None else base.max_len,
            min_len=args.min_len if args.min_len is not None else base.min_len,
            delimiters=args.delimiters or base.delimiters,
        )
        store.project = replace(store.project, chunk_config=cfg)
        chunks = pipeline.chunk_documents(store, cfg)
        return {"chunks": len(chunks)}


def cmd_personas(args) -> dict:
    with open_store(args) as store:
        pairs = pipeline.generate_personas(
            store, make_client(args), n=args.n, profile_name=args.profile
        )
        return {"personas": len(pairs), "total": len(store.personas)}


def cmd_questions(args) -> dict:
    with open_store(args) as store:
        cfg = store.project.gen_config
        fields = {}
        if args.per_chunk is not None:
            fields["questions_per_chunk"] = args.per_chunk
        if args.dropout is not None:
            fields["dropout_prob"] = args.dropout
        if args.seed is not None:
            fields["rng_seed"] = args.seed
        if fields:
            store.project = replace(store.project, gen_config=replace(cfg, **fields))
        questions = pipeline.generate_questions_stage(
            store, make_client(args), mode=args.mode, profile_name=args.profile
        )
        return {"questions": len(questions), "total": len(store.questions)}


def cmd_answers(args) -> dict:
    with open_store(args) as store:
        pairs = pipeline.generate_answers_stage(
            store, make_client(args), profile_name=args.profile, style=args.style
        )
        return {"qa_pairs": len(pairs), "total": len(store.qa_pairs)}


def cmd_refine(args) -> dict:
    with open_store(args) as store:
        refined = pipeline.refine_stage(
            store, make_client(args), qa_ids=args.qa_id,
            profile_name=args.profile,
        )
        return {"refined": len(refined)}


def _export_config_from_args(args) -> ExportConfig:
    fields = {}
    if args.schema is not None:
        fields["schema"] = args.schema
    if args.format is not None:
        fields["format"] = args.format
    if args.include_cot:
        fields["include_cot"] = True
    if getattr(args, "statuses", None):
        fields["statuses_included"] = frozenset(
            ReviewStatus(s.strip().capitalize()) for s in args.statuses.split(",")
        )
    return ExportConfig(**fields)


def cmd_export(args) -> dict:
    with open_store(args) as store:
        report = pipeline.export_stage(
            store, _export_config_from_args(args), out_path=args.out
        )
        return {"files": list(report.files), "record_count": report.record_count}


def cmd_eval(args) -> dict:
    with open_store(args) as store:
        def progress(done, total):
            print(f"eval: {done}/{total}", file=sys.stderr)

        report, files = pipeline.eval_stage(
            store, make_client(args), args.evalset,
            candidate_profile=args.candidate, judge_profile=args.judge,
            progress=progress,
        )
        return {
            "items": len(report.items),
            "failures": report.failures,
            "mean_score": report.mean_score,
            "normalized": report.normalized,
            "files": [str(f) for f in files],
        }


def cmd_serve(args) -> dict:
    from .service import DEFAULT_BIND_HOST, DEFAULT_BIND_PORT, serve

    host, port = DEFAULT_BIND_HOST, DEFAULT_BIND_PORT
    if args.bind:
        host, sep, port_s = args.bind.rpartition(":")
        if not sep or not port_s.isdigit():
            raise DocforgeError(f"--bind expects HOST:PORT, got {args.bind!r}")
        port = int(port_s)
    serve(
        args.project, host=host, port=port, llm_client=make_client(args),
        static_dir=args.ui_dir, log_level=args.log_level,
    )
    return {"served": f"{host}:{port}"}


def cmd_run_all(args) -> dict:
    root = Path(args.project)
    if not (root / "project.json").exists():
        name = root.resolve().name
        store = ProjectStore.create(
            root, name,
            **_default_project_kwargs(name, DEFAULT_PROFILE_NAME,
                                      DEFAULT_ENDPOINT, DEFAULT_MODEL),
        )
    else:
        store = ProjectStore.open(root)
    with store:
        if args.seed is not None:
            store.project = replace(
                store.project,
                gen_config=replace(store.project.gen_config, rng_seed=args.seed),
            )
        export_cfg = None
        if args.schema or args.format or args.include_cot:
            fields = {"statuses_included": pipeline.RUN_ALL_STATUSES}
            if args.schema:
                fields["schema"] = args.schema
            if args.format:
                fields["format"] = args.format
            if args.include_cot:
                fields["include_cot"] = True
            export_cfg = ExportConfig(**fields)

        def stage(name):
            print(f"stage: {name}", file=sys.stderr)

        return pipeline.run_all(
            store, make_client(args), args.files, mode=args.mode,
            export_cfg=export_cfg, out_path=args.out,
            profile_name=args.profile, stage_callback=stage,
        )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        summary = args.handler(args)
    except (DocforgeError, ValueError, FileExistsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 1

    if args.json:
        print(json.dumps(summary))
    else:
        for key, value in summary.items():
            print(f"{key}: {value}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
