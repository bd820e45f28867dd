"""Project persistence: JSON-lines files per entity class, an advisory
single-writer lock, deterministic id allocation, and the review state
machine with its append-only event log.

Every file write goes through an atomic temp-file + rename, so a crash can
leave stale files but never half-written ones. Entities are saved parents
first (documents, chunks, personas, questions, qa, events) so that on an
append-only save a partial generation still resolves its references.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from pathlib import Path

from .chunker import Chunk, ChunkConfig, ChunkOrigin
from .errors import (
    CorruptError,
    InvalidTransitionError,
    NotFoundError,
    ProjectLockedError,
)
from .ingest import ConverterAdapter, DocumentFormat, ParsedDocument
from .llm import ModelProfile
from .persona import GAPair, PairSource
from .qagen import (
    AnswerStyle,
    AnswerVersion,
    GenConfig,
    QAPair,
    Question,
    ReviewStatus,
)
from .util import atomic_write_text, now_utc, slugify

LOCK_FILE = "project.lock"

EDITABLE_FIELDS = ("question_text", "answer_text", "reasoning")


class ReviewAction(str, Enum):
    APPROVE = "Approve"
    REJECT = "Reject"
    EDIT = "Edit"


@dataclass(frozen=True)
class ReviewEvent:
    entity_id: str
    actor: str
    action: ReviewAction
    before: dict
    after: dict
    at: datetime

    def __post_init__(self):
        if self.action is ReviewAction.EDIT and not (self.before and self.after):
            raise ValueError("Edit events must carry before and after snapshots")


@dataclass(frozen=True)
class Project:
    id: str
    name: str
    created_at: datetime
    chunk_config: ChunkConfig = field(default_factory=ChunkConfig)
    gen_config: GenConfig = field(default_factory=GenConfig)
    model_profiles: tuple[ModelProfile, ...] = ()
    default_profile: str | None = None
    adapters: tuple[ConverterAdapter, ...] = ()
    persist_api_keys: bool = False

    def __post_init__(self):
        object.__setattr__(self, "model_profiles", tuple(self.model_profiles))
        object.__setattr__(self, "adapters", tuple(self.adapters))
        if not self.name.strip():
            raise ValueError("project name must be non-empty")
        names = [p.name for p in self.model_profiles]
        if len(names) != len(set(names)):
            raise ValueError("model profile names must be unique")
        if self.model_profiles:
            if self.default_profile not in names:
                raise ValueError("exactly one default profile required")
        elif self.default_profile is not None:
            raise ValueError("default profile set but no profiles exist")

    def profile(self, name: str | None = None) -> ModelProfile:
        wanted = name or self.default_profile
        for p in self.model_profiles:
            if p.name == wanted:
                return p
        raise NotFoundError(f"model profile {wanted!r} not found")


# --- row codecs --------------------------------------------------------------
# Each entity class maps to/from a plain JSON dict. Datetimes are ISO-8601
# with offset; enums are stored by value.


def _dt(value: str) -> datetime:
    return datetime.fromisoformat(value)


def _document_row(doc: ParsedDocument) -> dict:
    return {
        "id": doc.id,
        "source_path": doc.source_path,
        "format": doc.format.value,
        "parser_name": doc.parser_name,
        "parsed_at": doc.parsed_at.isoformat(),
    }


def _document_from(row: dict, text: str) -> ParsedDocument:
    return ParsedDocument(
        id=row["id"],
        source_path=row["source_path"],
        format=DocumentFormat(row["format"]),
        text=text,
        parser_name=row["parser_name"],
        parsed_at=_dt(row["parsed_at"]),
    )


def _chunk_row(chunk: Chunk) -> dict:
    return {
        "id": chunk.id,
        "doc_id": chunk.doc_id,
        "start": chunk.start,
        "end": chunk.end,
        "text": chunk.text,
        "origin": chunk.origin.value,
    }


def _chunk_from(row: dict) -> Chunk:
    return Chunk(
        id=row["id"],
        doc_id=row["doc_id"],
        start=row["start"],
        end=row["end"],
        text=row["text"],
        origin=ChunkOrigin(row["origin"]),
    )


def _persona_row(pair: GAPair) -> dict:
    return {
        "id": pair.id,
        "doc_id": pair.doc_id,
        "genre_name": pair.genre_name,
        "genre_description": pair.genre_description,
        "audience_name": pair.audience_name,
        "audience_description": pair.audience_description,
        "enabled": pair.enabled,
        "source": pair.source.value,
    }


def _persona_from(row: dict) -> GAPair:
    return GAPair(
        id=row["id"],
        doc_id=row["doc_id"],
        genre_name=row["genre_name"],
        genre_description=row["genre_description"],
        audience_name=row["audience_name"],
        audience_description=row["audience_description"],
        enabled=row["enabled"],
        source=PairSource(row["source"]),
    )


def _question_row(q: Question) -> dict:
    return {
        "id": q.id,
        "chunk_id": q.chunk_id,
        "text": q.text,
        "persona_id": q.persona_id,
        "dropout_applied": q.dropout_applied,
    }


def _question_from(row: dict) -> Question:
    return Question(
        id=row["id"],
        chunk_id=row["chunk_id"],
        text=row["text"],
        persona_id=row["persona_id"],
        dropout_applied=row["dropout_applied"],
    )


def _qa_row(pair: QAPair) -> dict:
    return {
        "id": pair.id,
        "question": _question_row(pair.question),
        "answer_text": pair.answer_text,
        "reasoning": pair.reasoning,
        "review_status": pair.review_status.value,
        "created_at": pair.created_at.isoformat(),
        "model_name": pair.model_name,
        "history": [
            {
                "answer_text": v.answer_text,
                "reasoning": v.reasoning,
                "model_name": v.model_name,
                "created_at": v.created_at.isoformat(),
            }
            for v in pair.history
        ],
    }


def _qa_from(row: dict) -> QAPair:
    return QAPair(
        id=row["id"],
        question=_question_from(row["question"]),
        answer_text=row["answer_text"],
        reasoning=row["reasoning"],
        review_status=ReviewStatus(row["review_status"]),
        created_at=_dt(row["created_at"]),
        model_name=row["model_name"],
        history=tuple(
            AnswerVersion(
                answer_text=v["answer_text"],
                reasoning=v["reasoning"],
                model_name=v["model_name"],
                created_at=_dt(v["created_at"]),
            )
            for v in row["history"]
        ),
    )


def _event_row(event: ReviewEvent) -> dict:
    return {
        "entity_id": event.entity_id,
        "actor": event.actor,
        "action": event.action.value,
        "before": event.before,
        "after": event.after,
        "at": event.at.isoformat(),
    }


def _event_from(row: dict) -> ReviewEvent:
    return ReviewEvent(
        entity_id=row["entity_id"],
        actor=row["actor"],
        action=ReviewAction(row["action"]),
        before=row["before"],
        after=row["after"],
        at=_dt(row["at"]),
    )


def _profile_row(profile: ModelProfile, persist_key: bool) -> dict:
    api_key = profile.api_key
    if api_key and not persist_key and not api_key.startswith("${"):
        env_name = "DOCFORGE_API_KEY_" + "".join(
            c if c.isalnum() else "_" for c in profile.name.upper()
        )
        api_key = "${" + env_name + "}"
    return {
        "name": profile.name,
        "endpoint_url": profile.endpoint_url,
        "model_name": profile.model_name,
        "provider_name": profile.provider_name,
        "api_key": api_key,
        "temperature": profile.temperature,
        "top_p": profile.top_p,
        "max_tokens": profile.max_tokens,
        "max_concurrency": profile.max_concurrency,
        "max_retries": profile.max_retries,
    }


def _profile_from(row: dict) -> ModelProfile:
    return ModelProfile(**row)


def _adapter_row(adapter: ConverterAdapter) -> dict:
    return {
        "name": adapter.name,
        "formats": sorted(f.value for f in adapter.formats),
        "command_template": adapter.command_template,
        "timeout": adapter.timeout,
    }


def _adapter_from(row: dict) -> ConverterAdapter:
    return ConverterAdapter(
        name=row["name"],
        formats=frozenset(DocumentFormat(f) for f in row["formats"]),
        command_template=row["command_template"],
        timeout=row["timeout"],
    )


_JSONL_FILES = ("documents.jsonl", "chunks.jsonl", "personas.jsonl",
                "questions.jsonl", "qa.jsonl", "events.jsonl")


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


class ProjectStore:
    """One project directory: in-memory state plus load/save.

    Create with `ProjectStore.create` or `ProjectStore.open`; both acquire
    the advisory write lock unless readonly. Use as a context manager or
    call close() to release the lock.
    """

    def __init__(self, root_dir: Path, project: Project, readonly: bool = False):
        self.root_dir = Path(root_dir)
        self.project = project
        self.documents: list[ParsedDocument] = []
        self.chunks: list[Chunk] = []
        self.personas: list[GAPair] = []
        self.questions: list[Question] = []
        self.qa_pairs: list[QAPair] = []
        self.events: list[ReviewEvent] = []
        self.counters: dict[str, int] = {}
        self.warnings: list[str] = []
        self._readonly = readonly
        self._locked = False
        if not readonly:
            self._acquire_lock()

    # -- lifecycle ------------------------------------------------------

    @classmethod
    def create(cls, root_dir: str | Path, name: str, **project_kwargs) -> "ProjectStore":
        root = Path(root_dir)
        if (root / "project.json").exists():
            raise FileExistsError(f"project already exists at {root}")
        root.mkdir(parents=True, exist_ok=True)
        project = Project(
            id=slugify(name), name=name, created_at=now_utc(), **project_kwargs
        )
        store = cls(root, project)
        store.save()
        return store

    @classmethod
    def open(cls, root_dir: str | Path, recover: bool = False,
             readonly: bool = False) -> "ProjectStore":
        root = Path(root_dir)
        path = root / "project.json"
        if not path.exists():
            raise NotFoundError(f"no project at {root}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            project = Project(
                id=data["id"],
                name=data["name"],
                created_at=_dt(data["created_at"]),
                chunk_config=ChunkConfig(**data["chunk_config"]),
                gen_config=GenConfig(
                    questions_per_chunk=data["gen_config"]["questions_per_chunk"],
                    dropout_prob=data["gen_config"]["dropout_prob"],
                    rng_seed=data["gen_config"]["rng_seed"],
                    answer_style=AnswerStyle(data["gen_config"]["answer_style"]),
                    question_prompt=data["gen_config"]["question_prompt"],
                    answer_prompt=data["gen_config"]["answer_prompt"],
                    refine_prompt=data["gen_config"]["refine_prompt"],
                ),
                model_profiles=tuple(_profile_from(r) for r in data["model_profiles"]),
                default_profile=data["default_profile"],
                adapters=tuple(_adapter_from(r) for r in data.get("adapters", [])),
                persist_api_keys=data.get("persist_api_keys", False),
            )
            counters = dict(data.get("counters", {}))
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptError(f"project.json unreadable: {exc}", path=str(path)) from exc

        store = cls(root, project, readonly=readonly)
        try:
            store.counters = counters
            store._load_entities(recover)
        except BaseException:
            store.close()
            raise
        return store

    def close(self):
        if self._locked:
            try:
                (self.root_dir / LOCK_FILE).unlink()
            except FileNotFoundError:
                pass
            self._locked = False

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _acquire_lock(self):
        lock_path = self.root_dir / LOCK_FILE
        self.root_dir.mkdir(parents=True, exist_ok=True)
        payload = json.dumps({"pid": os.getpid(), "at": now_utc().isoformat()})
        for _ in range(2):
            try:
                fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                with os.fdopen(fd, "w") as fh:
                    fh.write(payload)
                self._locked = True
                return
            except FileExistsError:
                try:
                    holder = json.loads(lock_path.read_text(encoding="utf-8"))
                    pid = int(holder["pid"])
                except (ValueError, KeyError, OSError):
                    pid = None  # unreadable lock counts as stale
                if pid is not None and _pid_alive(pid):
                    raise ProjectLockedError(
                        f"project at {self.root_dir} is locked by pid {pid}"
                    )
                try:
                    lock_path.unlink()
                except FileNotFoundError:
                    pass
        raise ProjectLockedError(f"could not acquire lock at {lock_path}")

    # -- ids --------------------------------------------------------------

    def next_id(self, prefix: str) -> str:
        self.counters[prefix] = self.counters.get(prefix, 0) + 1
        return f"{self.project.id}:{prefix}-{self.counters[prefix]:05d}"

    def _bump_counter(self, entity_id: str):
        # keep counters ahead of every id seen, so recovery never reuses one
        head, _, tail = entity_id.rpartition("-")
        prefix = head.rpartition(":")[2]
        try:
            value = int(tail)
        except ValueError:
            return
        if prefix:
            self.counters[prefix] = max(self.counters.get(prefix, 0), value)

    # -- persistence ------------------------------------------------------

    @staticmethod
    def _doc_filename(doc_id: str) -> str:
        return doc_id.replace(":", "_") + ".txt"

    def save(self):
        if self._readonly:
            raise PermissionError("store opened readonly")
        root = self.root_dir
        docs_dir = root / "documents"
        docs_dir.mkdir(parents=True, exist_ok=True)
        for doc in self.documents:
            atomic_write_text(docs_dir / self._doc_filename(doc.id), doc.text)

        def dump(name: str, rows: list[dict]):
            content = "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows)
            atomic_write_text(root / name, content)

        dump("documents.jsonl", [_document_row(d) for d in self.documents])
        dump("chunks.jsonl", [_chunk_row(c) for c in self.chunks])
        dump("personas.jsonl", [_persona_row(p) for p in self.personas])
        dump("questions.jsonl", [_question_row(q) for q in self.questions])
        dump("qa.jsonl", [_qa_row(p) for p in self.qa_pairs])
        dump("events.jsonl", [_event_row(e) for e in self.events])

        project_data = {
            "id": self.project.id,
            "name": self.project.name,
            "created_at": self.project.created_at.isoformat(),
            "chunk_config": {
                "max_len": self.project.chunk_config.max_len,
                "min_len": self.project.chunk_config.min_len,
                "delimiters": list(self.project.chunk_config.delimiters),
            },
            "gen_config": {
                "questions_per_chunk": self.project.gen_config.questions_per_chunk,
                "dropout_prob": self.project.gen_config.dropout_prob,
                "rng_seed": self.project.gen_config.rng_seed,
                "answer_style": self.project.gen_config.answer_style.value,
                "question_prompt": self.project.gen_config.question_prompt,
                "answer_prompt": self.project.gen_config.answer_prompt,
                "refine_prompt": self.project.gen_config.refine_prompt,
            },
            "model_profiles": [
                _profile_row(p, self.project.persist_api_keys)
                for p in self.project.model_profiles
            ],
            "default_profile": self.project.default_profile,
            "adapters": [_adapter_row(a) for a in self.project.adapters],
            "persist_api_keys": self.project.persist_api_keys,
            "counters": dict(sorted(self.counters.items())),
        }
        atomic_write_text(
            root / "project.json",
            json.dumps(project_data, ensure_ascii=False, indent=2) + "\n",
        )

    def _read_jsonl(self, name: str, parse, recover: bool) -> list:
        path = self.root_dir / name
        out = []
        if not path.exists():
            return out
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    out.append(parse(json.loads(line)))
                except (ValueError, KeyError, TypeError) as exc:
                    if recover:
                        self.warnings.append(f"{name}:{lineno}: skipped ({exc})")
                        continue
                    raise CorruptError(
                        f"{name} line {lineno}: {exc}", path=str(path), line=lineno
                    ) from exc
        return out

    def _load_entities(self, recover: bool):
        docs_dir = self.root_dir / "documents"

        def parse_doc(row):
            text_path = docs_dir / self._doc_filename(row["id"])
            if not text_path.exists():
                raise KeyError(f"missing text file for document {row['id']}")
            return _document_from(row, text_path.read_text(encoding="utf-8"))

        self.documents = self._read_jsonl("documents.jsonl", parse_doc, recover)
        self.chunks = self._read_jsonl("chunks.jsonl", _chunk_from, recover)
        self.personas = self._read_jsonl("personas.jsonl", _persona_from, recover)
        self.questions = self._read_jsonl("questions.jsonl", _question_from, recover)
        self.qa_pairs = self._read_jsonl("qa.jsonl", _qa_from, recover)
        self.events = self._read_jsonl("events.jsonl", _event_from, recover)
        self._check_integrity(recover)
        for entity_list in (self.documents, self.chunks, self.personas,
                            self.questions, self.qa_pairs):
            for entity in entity_list:
                self._bump_counter(entity.id)

    def _check_integrity(self, recover: bool):
        doc_ids = {d.id for d in self.documents}

        def cull(entities, describe, ok):
            kept = []
            for entity in entities:
                problem = ok(entity)
                if problem is None:
                    kept.append(entity)
                elif recover:
                    self.warnings.append(f"{describe}:{entity.id}: dropped ({problem})")
                else:
                    raise CorruptError(f"{describe} {entity.id}: {problem}")
            return kept

        self.chunks = cull(
            self.chunks, "chunk",
            lambda c: None if c.doc_id in doc_ids else f"unknown document {c.doc_id}",
        )
        chunk_ids = {c.id for c in self.chunks}
        self.personas = cull(
            self.personas, "persona",
            lambda p: None if p.doc_id in doc_ids else f"unknown document {p.doc_id}",
        )
        persona_ids = {p.id for p in self.personas}

        def question_ok(q):
            if q.chunk_id not in chunk_ids:
                return f"unknown chunk {q.chunk_id}"
            if q.persona_id is not None and q.persona_id not in persona_ids:
                return f"unknown persona {q.persona_id}"
            return None

        self.questions = cull(self.questions, "question", question_ok)
        question_ids = {q.id for q in self.questions}
        self.qa_pairs = cull(
            self.qa_pairs, "qa",
            lambda p: None
            if p.question.id in question_ids
            else f"unknown question {p.question.id}",
        )

    # -- accessors ---------------------------------------------------------

    def get_document(self, doc_id: str) -> ParsedDocument:
        for doc in self.documents:
            if doc.id == doc_id:
                return doc
        raise NotFoundError(f"document {doc_id} not found")

    def get_chunk(self, chunk_id: str) -> Chunk:
        for chunk in self.chunks:
            if chunk.id == chunk_id:
                return chunk
        raise NotFoundError(f"chunk {chunk_id} not found")

    def get_persona(self, persona_id: str) -> GAPair:
        for pair in self.personas:
            if pair.id == persona_id:
                return pair
        raise NotFoundError(f"persona {persona_id} not found")

    def get_qa(self, qa_id: str) -> QAPair:
        for pair in self.qa_pairs:
            if pair.id == qa_id:
                return pair
        raise NotFoundError(f"qa pair {qa_id} not found")

    def chunks_for(self, doc_id: str) -> list[Chunk]:
        return [c for c in self.chunks if c.doc_id == doc_id]

    # -- mutations ----------------------------------------------------------

    def replace_chunks(self, doc_id: str, new_chunks: list[Chunk]):
        """Swap a document's chunks, cascading away questions and QA pairs
        of chunks that no longer exist.

        Chunks carried over unchanged (a manual split touches only one chunk)
        keep their questions; a full re-chunk produces all-new ids and so
        cascades everything for the document.
        """
        self.get_document(doc_id)
        old_ids = {c.id for c in self.chunks if c.doc_id == doc_id}
        others = [c for c in self.chunks if c.doc_id != doc_id]
        self.chunks = others + list(new_chunks)
        dead_ids = old_ids - {c.id for c in new_chunks}
        dead_questions = {q.id for q in self.questions if q.chunk_id in dead_ids}
        self.questions = [q for q in self.questions if q.chunk_id not in dead_ids]
        self.qa_pairs = [p for p in self.qa_pairs if p.question.id not in dead_questions]

    def delete_persona(self, persona_id: str):
        """Remove a persona and cascade away its questions and QA pairs, so
        no dangling persona_id survives into the next load."""
        self.get_persona(persona_id)
        self.personas = [p for p in self.personas if p.id != persona_id]
        dead_questions = {q.id for q in self.questions if q.persona_id == persona_id}
        self.questions = [q for q in self.questions if q.id not in dead_questions]
        self.qa_pairs = [p for p in self.qa_pairs if p.question.id not in dead_questions]

    def update_review(
        self,
        qa_id: str,
        action: ReviewAction,
        edited_fields: dict | None = None,
        actor: str = "user",
    ) -> QAPair:
        """Apply one review action, enforcing the status transitions.

        Rejected is terminal for review actions; only refinement reopens a
        rejected pair. Edit requires the changed fields and records exactly
        those in the event snapshots.
        """
        pair = self.get_qa(qa_id)
        if pair.review_status is ReviewStatus.REJECTED:
            raise InvalidTransitionError(
                f"{action.value} not allowed on a Rejected pair; refine to reopen"
            )

        before_status = pair.review_status
        if action is ReviewAction.APPROVE:
            updated = replace(pair, review_status=ReviewStatus.APPROVED)
            before = {"review_status": before_status.value}
            after = {"review_status": ReviewStatus.APPROVED.value}
        elif action is ReviewAction.REJECT:
            updated = replace(pair, review_status=ReviewStatus.REJECTED)
            before = {"review_status": before_status.value}
            after = {"review_status": ReviewStatus.REJECTED.value}
        elif action is ReviewAction.EDIT:
            if not edited_fields:
                raise ValueError("Edit requires edited_fields")
            unknown = set(edited_fields) - set(EDITABLE_FIELDS)
            if unknown:
                raise ValueError(f"uneditable fields: {sorted(unknown)}")
            before, after = {}, {}
            updated = pair
            if "question_text" in edited_fields:
                before["question_text"] = pair.question.text
                after["question_text"] = edited_fields["question_text"]
                new_question = replace(pair.question, text=edited_fields["question_text"])
                updated = replace(updated, question=new_question)
                self.questions = [
                    new_question if q.id == new_question.id else q
                    for q in self.questions
                ]
            if "answer_text" in edited_fields:
                before["answer_text"] = pair.answer_text
                after["answer_text"] = edited_fields["answer_text"]
                updated = replace(updated, answer_text=edited_fields["answer_text"])
            if "reasoning" in edited_fields:
                before["reasoning"] = pair.reasoning
                after["reasoning"] = edited_fields["reasoning"]
                updated = replace(updated, reasoning=edited_fields["reasoning"])
            updated = replace(updated, review_status=ReviewStatus.EDITED)
        else:
            raise ValueError(f"unknown action {action!r}")

        self.qa_pairs = [updated if p.id == qa_id else p for p in self.qa_pairs]
        self.events.append(
            ReviewEvent(
                entity_id=qa_id,
                actor=actor,
                action=action,
                before=before,
                after=after,
                at=now_utc(),
            )
        )
        return updated
