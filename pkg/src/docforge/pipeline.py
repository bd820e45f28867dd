"""Stage functions walking a project through the full flow: ingest, chunk,
personas, questions, answers, refinement, export, evaluation.

Both the CLI and the HTTP service call these; neither has pipeline logic of
its own. Stages iterate entities in id order and allocate ids through the
store's counters, so a rerun over the same inputs produces the same ids and
therefore byte-identical exports.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

from . import persona as persona_mod
from . import qagen
from .chunker import Chunk, ChunkConfig, chunk_text
from .export import (
    ExportConfig,
    ExportFormat,
    ExportReport,
    emit_trainer_config,
    export_dataset,
)
from .ingest import ParsedDocument, parse_document
from .judge import EvalReport, load_evalset, run_eval, write_report
from .persona import GAPair
from .qagen import QAPair, Question, ReviewStatus
from .store import ProjectStore

RUN_ALL_STATUSES = frozenset(
    {ReviewStatus.PENDING, ReviewStatus.APPROVED, ReviewStatus.EDITED}
)

_FORMAT_EXT = {
    ExportFormat.JSON: ".json",
    ExportFormat.JSONL: ".jsonl",
    ExportFormat.CSV: ".csv",
}


def ingest_files(store: ProjectStore, paths: list[str], progress=None) -> list[ParsedDocument]:
    """Parse each file into a document and persist."""
    docs = []
    for i, path in enumerate(paths):
        doc = parse_document(
            path,
            adapters=store.project.adapters,
            make_id=lambda: store.next_id("doc"),
        )
        store.documents.append(doc)
        docs.append(doc)
        if progress:
            progress(i + 1, len(paths))
    store.save()
    return docs


def chunk_documents(
    store: ProjectStore,
    cfg: ChunkConfig | None = None,
    doc_ids: list[str] | None = None,
    progress=None,
) -> list[Chunk]:
    """Chunk each document, replacing any previous chunks (and their
    dependent questions and QA pairs)."""
    cfg = cfg or store.project.chunk_config
    docs = (
        [store.get_document(d) for d in doc_ids]
        if doc_ids is not None
        else list(store.documents)
    )
    produced = []
    for i, doc in enumerate(docs):
        chunks = chunk_text(
            doc.text, cfg, doc.id, make_id=lambda: store.next_id("ch")
        )
        store.replace_chunks(doc.id, chunks)
        produced.extend(chunks)
        if progress:
            progress(i + 1, len(docs))
    store.save()
    return produced


def generate_personas(
    store: ProjectStore,
    client,
    n: int | None = None,
    profile_name: str | None = None,
    doc_ids: list[str] | None = None,
    progress=None,
) -> list[GAPair]:
    """Generate pairs per document; pairs duplicating an existing
    (genre, audience) key for the document are skipped."""
    n = n or persona_mod.DEFAULT_PERSONA_COUNT
    profile = store.project.profile(profile_name)
    docs = (
        [store.get_document(d) for d in doc_ids]
        if doc_ids is not None
        else list(store.documents)
    )
    added = []
    for i, doc in enumerate(docs):
        pairs = persona_mod.generate_ga_pairs(
            doc, n, profile, client, make_id=store.next_id
        )
        existing = {
            (p.doc_id, p.key) for p in store.personas
        }
        for pair in pairs:
            if (pair.doc_id, pair.key) in existing:
                continue
            existing.add((pair.doc_id, pair.key))
            store.personas.append(pair)
            added.append(pair)
        if progress:
            progress(i + 1, len(docs))
    store.save()
    return added


def _covered_combos(store: ProjectStore) -> set[tuple[str, str | None]]:
    return {(q.chunk_id, q.persona_id) for q in store.questions}


def generate_questions_stage(
    store: ProjectStore,
    client,
    mode: str = "persona",
    profile_name: str | None = None,
    progress=None,
) -> list[Question]:
    """Generate questions for every (chunk, persona) combination not yet
    covered; naive mode uses one unconditioned pass per chunk."""
    if mode not in ("persona", "naive"):
        raise ValueError(f"mode must be 'persona' or 'naive', got {mode!r}")
    profile = store.project.profile(profile_name)
    cfg = store.project.gen_config
    covered = _covered_combos(store)

    tasks: list[tuple[Chunk, GAPair | None]] = []
    chunks = sorted(store.chunks, key=lambda c: c.id)
    for chunk in chunks:
        if mode == "naive":
            personas: list[GAPair | None] = [None]
        else:
            personas = sorted(
                (p for p in store.personas
                 if p.doc_id == chunk.doc_id and p.enabled),
                key=lambda p: p.id,
            )
        for persona in personas:
            key = (chunk.id, persona.id if persona else None)
            if key not in covered:
                tasks.append((chunk, persona))

    added = []
    for i, (chunk, persona) in enumerate(tasks):
        questions = qagen.generate_questions(
            chunk, persona, cfg, profile, client,
            make_id=store.next_id,
        )
        store.questions.extend(questions)
        added.extend(questions)
        if progress:
            progress(i + 1, len(tasks))
    store.save()
    return added


def generate_answers_stage(
    store: ProjectStore,
    client,
    profile_name: str | None = None,
    style: qagen.AnswerStyle | None = None,
    progress=None,
) -> list[QAPair]:
    """Answer every question that has no QA pair yet, in question-id order."""
    profile = store.project.profile(profile_name)
    cfg = store.project.gen_config
    if style is not None:
        cfg = replace(cfg, answer_style=style)
    answered = {p.question.id for p in store.qa_pairs}
    todo = sorted(
        (q for q in store.questions if q.id not in answered), key=lambda q: q.id
    )
    persona_by_id = {p.id: p for p in store.personas}
    added = []
    for i, question in enumerate(todo):
        chunk = store.get_chunk(question.chunk_id)
        persona = persona_by_id.get(question.persona_id) if question.persona_id else None
        pair = qagen.generate_answer(
            question, chunk, persona, cfg, profile, client,
            make_id=store.next_id,
        )
        store.qa_pairs.append(pair)
        added.append(pair)
        if progress:
            progress(i + 1, len(todo))
    store.save()
    return added


def refine_stage(
    store: ProjectStore,
    client,
    qa_ids: list[str] | None = None,
    profile_name: str | None = None,
    progress=None,
) -> list[QAPair]:
    """Refine the selected pairs (default: every Pending pair)."""
    profile = store.project.profile(profile_name)
    cfg = store.project.gen_config
    if qa_ids is None:
        targets = [p for p in store.qa_pairs
                   if p.review_status is ReviewStatus.PENDING]
    else:
        targets = [store.get_qa(qa_id) for qa_id in qa_ids]
    refined = []
    for i, pair in enumerate(targets):
        updated = qagen.refine_answer(pair, cfg, profile, client)
        store.qa_pairs = [updated if p.id == pair.id else p for p in store.qa_pairs]
        refined.append(updated)
        if progress:
            progress(i + 1, len(targets))
    store.save()
    return refined


def export_stage(
    store: ProjectStore,
    cfg: ExportConfig,
    out_path: str | Path | None = None,
) -> ExportReport:
    """Write the dataset file plus its trainer registry config."""
    if out_path is None:
        out_dir = store.root_dir / "export"
        out_path = out_dir / ("dataset" + _FORMAT_EXT[cfg.format])
    out_path = Path(out_path)
    report = export_dataset(store.qa_pairs, cfg, out_path, personas=store.personas)
    config_path = emit_trainer_config(
        list(report.files), cfg.schema, out_path.parent / "dataset_info.json"
    )
    return ExportReport(
        files=report.files + (str(config_path),),
        record_count=report.record_count,
    )


def eval_stage(
    store: ProjectStore,
    client,
    evalset_path: str | Path,
    candidate_profile: str | None = None,
    judge_profile: str | None = None,
    out_dir: str | Path | None = None,
    progress=None,
) -> tuple[EvalReport, list[Path]]:
    """Run the correctness harness over an evalset and persist the report."""
    items = load_evalset(evalset_path)
    candidate = store.project.profile(candidate_profile)
    judge = store.project.profile(judge_profile)
    report = run_eval(items, candidate, judge, client, progress=progress)
    out_dir = Path(out_dir) if out_dir is not None else store.root_dir / "eval"
    files = write_report(report, out_dir / "report.json", out_dir / "report.txt")
    return report, files


def run_all(
    store: ProjectStore,
    client,
    paths: list[str],
    mode: str = "persona",
    export_cfg: ExportConfig | None = None,
    out_path: str | Path | None = None,
    profile_name: str | None = None,
    stage_callback=None,
) -> dict:
    """Full headless flow over a set of input files.

    Nothing has been reviewed when this runs, so the export includes Pending
    pairs; re-chunking or reviewing later and re-exporting narrows back to
    the default selection.
    """
    if export_cfg is None:
        export_cfg = ExportConfig(statuses_included=RUN_ALL_STATUSES)

    def stage(name):
        if stage_callback:
            stage_callback(name)

    stage("ingest")
    docs = ingest_files(store, paths)
    stage("chunk")
    chunks = chunk_documents(store)
    if mode == "persona":
        stage("personas")
        generate_personas(store, client, profile_name=profile_name)
    stage("questions")
    questions = generate_questions_stage(
        store, client, mode=mode, profile_name=profile_name
    )
    stage("answers")
    pairs = generate_answers_stage(store, client, profile_name=profile_name)
    stage("export")
    report = export_stage(store, export_cfg, out_path)
    return {
        "documents": len(docs),
        "chunks": len(chunks),
        "personas": len(store.personas),
        "questions": len(questions),
        "qa_pairs": len(pairs),
        "export_files": list(report.files),
        "record_count": report.record_count,
    }
