"""HTTP service: REST routes over the pipeline stages with async job
tracking, so the web UI and external automation share one contract.

Jobs run off the request path on a worker pool, serialized per project.
Every store mutation (whether from a request handler or a job body) runs
under that project's mutex; reads work on plain list snapshots. Job rows
survive restarts in jobs.json, and anything still marked Queued or Running
at startup is flipped to Failed since its thread did not survive.
"""

from __future__ import annotations

import json
import threading
from collections import defaultdict, deque
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from fastapi import Body, FastAPI, File, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from . import persona as persona_mod
from . import pipeline
from .chunker import ChunkConfig, merge_chunks, split_chunk
from .errors import (
    BadParamsError,
    ChunkConfigError,
    CorruptError,
    DocforgeError,
    DuplicatePairError,
    IndexOutOfRangeError,
    InvalidTransitionError,
    NotAdjacentError,
    NotFoundError,
    OffsetOutOfRangeError,
    ProjectLockedError,
)
from .export import ExportConfig, ExportFormat, ExportSchema
from .llm import (
    DEFAULT_MAX_CONCURRENCY,
    PLACEHOLDER_PROFILE,
    HttpLlmClient,
    ModelProfile,
)
from .qagen import AnswerStyle, ReviewStatus
from .store import (
    ProjectStore,
    ReviewAction,
    _chunk_row,
    _document_row,
    _event_row,
    _persona_row,
    _qa_row,
)
from .util import atomic_write_json, now_utc, random_id, slugify

DEFAULT_BIND_HOST = "127.0.0.1"
DEFAULT_BIND_PORT = 7030

JOBS_FILE = "jobs.json"


class JobKind(str, Enum):
    PARSE = "Parse"
    CHUNK = "Chunk"
    PERSONAS = "Personas"
    QUESTIONS = "Questions"
    ANSWERS = "Answers"
    REFINE = "Refine"
    EXPORT = "Export"
    EVAL = "Eval"


class JobStatus(str, Enum):
    QUEUED = "Queued"
    RUNNING = "Running"
    DONE = "Done"
    FAILED = "Failed"


_STATUS_RANK = {
    JobStatus.QUEUED: 0,
    JobStatus.RUNNING: 1,
    JobStatus.DONE: 2,
    JobStatus.FAILED: 2,
}


@dataclass
class Job:
    id: str
    kind: JobKind
    project_id: str
    status: JobStatus = JobStatus.QUEUED
    progress: dict = field(default_factory=lambda: {"done": 0, "total": 0})
    error: str | None = None
    result_ref: list[str] = field(default_factory=list)
    created_at: str = ""
    updated_at: str = ""


def job_row(job: Job) -> dict:
    return {
        "id": job.id,
        "kind": job.kind.value,
        "project_id": job.project_id,
        "status": job.status.value,
        "progress": dict(job.progress),
        "error": job.error,
        "result_ref": list(job.result_ref),
        "created_at": job.created_at,
        "updated_at": job.updated_at,
    }


def _job_from(row: dict) -> Job:
    return Job(
        id=row["id"],
        kind=JobKind(row["kind"]),
        project_id=row["project_id"],
        status=JobStatus(row["status"]),
        progress=dict(row["progress"]),
        error=row.get("error"),
        result_ref=list(row.get("result_ref", [])),
        created_at=row.get("created_at", ""),
        updated_at=row.get("updated_at", ""),
    )


class JobRegistry:
    """Job table persisted to jobs.json under the service root.

    Status moves only forward (Queued -> Running -> Done/Failed); every
    transition is recorded in an in-memory history so tests can assert
    monotonicity. Progress updates stay in memory between status writes.
    """

    def __init__(self, path: Path):
        self.path = Path(path)
        self.jobs: dict[str, Job] = {}
        self.history: dict[str, list[JobStatus]] = defaultdict(list)
        self._lock = threading.Lock()
        self._load()

    def _load(self):
        if not self.path.exists():
            return
        rows = json.loads(self.path.read_text(encoding="utf-8"))
        interrupted = False
        for row in rows:
            job = _job_from(row)
            if job.status in (JobStatus.QUEUED, JobStatus.RUNNING):
                job.status = JobStatus.FAILED
                job.error = "interrupted by service restart"
                job.updated_at = now_utc().isoformat()
                interrupted = True
            self.jobs[job.id] = job
        if interrupted:
            self._persist()

    def _persist(self):
        atomic_write_json(self.path, [job_row(j) for j in self.jobs.values()])

    def add(self, job: Job) -> Job:
        with self._lock:
            job.created_at = job.updated_at = now_utc().isoformat()
            self.jobs[job.id] = job
            self.history[job.id].append(job.status)
            self._persist()
        return job

    def get(self, job_id: str) -> Job:
        job = self.jobs.get(job_id)
        if job is None:
            raise NotFoundError(f"job {job_id} not found")
        return job

    def for_project(self, project_id: str) -> list[Job]:
        return [j for j in self.jobs.values() if j.project_id == project_id]

    def set_status(self, job: Job, status: JobStatus, error: str | None = None,
                   result_ref: list[str] | None = None):
        with self._lock:
            if _STATUS_RANK[status] < _STATUS_RANK[job.status]:
                raise RuntimeError(
                    f"job {job.id}: {job.status.value} -> {status.value} regresses"
                )
            job.status = status
            job.updated_at = now_utc().isoformat()
            if error is not None:
                job.error = error
            if result_ref is not None:
                job.result_ref = list(result_ref)
            if status is JobStatus.DONE:
                # Done implies a complete progress bar even for instant jobs
                total = job.progress.get("total") or 1
                job.progress = {"done": total, "total": total}
            self.history[job.id].append(status)
            self._persist()

    def set_progress(self, job: Job, done: int, total: int):
        job.progress = {"done": done, "total": total}
        job.updated_at = now_utc().isoformat()


class ServiceState:
    """Everything one service process owns: open stores, per-project
    mutexes, the LLM client, the job registry, and the worker pool."""

    def __init__(self, root_dir: str | Path, llm_client=None, workers: int | None = None):
        self.root_dir = Path(root_dir)
        self.root_dir.mkdir(parents=True, exist_ok=True)
        self.llm = llm_client if llm_client is not None else HttpLlmClient()
        self.registry = JobRegistry(self.root_dir / JOBS_FILE)
        self._stores: dict[str, ProjectStore] = {}
        self._mutexes: dict[str, threading.RLock] = defaultdict(threading.RLock)
        self._state_lock = threading.Lock()
        self._queues: dict[str, deque] = defaultdict(deque)
        self._draining: set[str] = set()
        self._pool = ThreadPoolExecutor(
            max_workers=workers or DEFAULT_MAX_CONCURRENCY,
            thread_name_prefix="docforge-job",
        )
        self._closed = False

    # -- projects ---------------------------------------------------------

    def project_dir(self, project_id: str) -> Path:
        return self.root_dir / project_id

    def get_store(self, project_id: str) -> ProjectStore:
        with self._state_lock:
            store = self._stores.get(project_id)
            if store is None:
                store = ProjectStore.open(self.project_dir(project_id))
                self._stores[project_id] = store
            return store

    def create_project(self, name: str, **kwargs) -> ProjectStore:
        project_id = slugify(name)
        with self._state_lock:
            if project_id in self._stores:
                raise FileExistsError(f"project {project_id} already exists")
            store = ProjectStore.create(self.project_dir(project_id), name, **kwargs)
            self._stores[project_id] = store
            return store

    def list_project_dirs(self) -> list[Path]:
        if not self.root_dir.exists():
            return []
        return sorted(
            p for p in self.root_dir.iterdir() if (p / "project.json").exists()
        )

    def mutex(self, project_id: str) -> threading.RLock:
        return self._mutexes[project_id]

    # -- jobs ---------------------------------------------------------------

    def submit(self, project_id: str, kind: JobKind, fn) -> Job:
        """Queue fn(store, job) for execution; jobs of one project run
        strictly one at a time, in submission order."""
        if self._closed:
            raise RuntimeError("service is shutting down")
        job = Job(id=random_id("job"), kind=kind, project_id=project_id)
        self.registry.add(job)
        with self._state_lock:
            self._queues[project_id].append((job, fn))
            if project_id in self._draining:
                return job
            self._draining.add(project_id)
        self._pool.submit(self._drain, project_id)
        return job

    def _drain(self, project_id: str):
        while True:
            with self._state_lock:
                queue = self._queues[project_id]
                if not queue:
                    self._draining.discard(project_id)
                    return
                job, fn = queue.popleft()
            self._run(job, fn)

    def _run(self, job: Job, fn):
        self.registry.set_status(job, JobStatus.RUNNING)
        try:
            with self.mutex(job.project_id):
                store = self.get_store(job.project_id)
                result_ref = fn(store, job)
        except Exception as exc:
            self.registry.set_status(
                job, JobStatus.FAILED, error=f"{type(exc).__name__}: {exc}"
            )
        else:
            self.registry.set_status(job, JobStatus.DONE, result_ref=result_ref or [])

    def progress_cb(self, job: Job):
        return lambda done, total: self.registry.set_progress(job, done, total)

    def wait_idle(self, timeout: float = 30.0):
        """Block until no job is queued or running. Test hook."""
        import time

        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            with self._state_lock:
                busy = bool(self._draining) or any(self._queues.values())
            if not busy:
                return
            time.sleep(0.01)
        raise TimeoutError("jobs did not settle in time")

    def close(self):
        self._closed = True
        self._pool.shutdown(wait=True)
        with self._state_lock:
            for store in self._stores.values():
                store.close()
            self._stores.clear()


# -- request parsing ---------------------------------------------------------
# Bodies arrive as plain dicts and are validated by hand so every rejection
# flows through the one error envelope.


def _require(body: dict, key: str, kind: type, label: str):
    if key not in body:
        raise BadParamsError(f"{label}: missing required field {key!r}")
    value = body[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise BadParamsError(f"{label}: field {key!r} must be {kind.__name__}")
    return value


def _optional(body: dict, key: str, kind: type, label: str, default=None):
    if key not in body or body[key] is None:
        return default
    return _require(body, key, kind, label)


def _status_param(value: str) -> ReviewStatus:
    for status in ReviewStatus:
        if status.value.lower() == value.lower():
            return status
    raise BadParamsError(
        f"unknown status {value!r}; expected one of "
        f"{[s.value for s in ReviewStatus]}"
    )


def _enum_param(enum_cls, value: str, label: str):
    for member in enum_cls:
        if member.value.lower() == str(value).lower():
            return member
    raise BadParamsError(
        f"unknown {label} {value!r}; expected one of "
        f"{[m.value for m in enum_cls]}"
    )


_REVIEW_ACTIONS = {
    "approve": ReviewAction.APPROVE,
    "reject": ReviewAction.REJECT,
    "edit": ReviewAction.EDIT,
}

_GEN_CFG_KEYS = ("questions_per_chunk", "dropout_prob", "rng_seed", "answer_style")


def _gen_config_update(cfg, body: dict):
    unknown = set(body) - set(_GEN_CFG_KEYS)
    if unknown:
        raise BadParamsError(f"cfg: unknown fields {sorted(unknown)}")
    fields = {}
    if "questions_per_chunk" in body:
        fields["questions_per_chunk"] = _require(body, "questions_per_chunk", int, "cfg")
    if "dropout_prob" in body:
        fields["dropout_prob"] = _require(body, "dropout_prob", float, "cfg")
    if "rng_seed" in body:
        fields["rng_seed"] = _require(body, "rng_seed", int, "cfg")
    if "answer_style" in body:
        fields["answer_style"] = _enum_param(
            AnswerStyle, _require(body, "answer_style", str, "cfg"), "answer_style"
        )
    try:
        return replace(cfg, **fields)
    except ValueError as exc:
        raise BadParamsError(f"cfg: {exc}") from exc


def _export_config(body: dict) -> ExportConfig:
    fields = {}
    if "format" in body:
        fields["format"] = _enum_param(ExportFormat, body["format"], "format")
    if "schema" in body:
        fields["schema"] = _enum_param(ExportSchema, body["schema"], "schema")
    if "include_cot" in body:
        fields["include_cot"] = _require(body, "include_cot", bool, "export")
    if "system_prompt" in body:
        fields["system_prompt"] = _optional(body, "system_prompt", str, "export")
    if "custom_template" in body:
        fields["custom_template"] = _require(body, "custom_template", dict, "export")
    if "statuses" in body:
        raw = _require(body, "statuses", list, "export")
        fields["statuses_included"] = frozenset(_status_param(s) for s in raw)
    try:
        return ExportConfig(**fields)
    except ValueError as exc:
        raise BadParamsError(f"export config: {exc}") from exc


def _project_from_id(entity_id: str) -> str:
    project_id, sep, _ = entity_id.partition(":")
    if not sep:
        raise BadParamsError(f"malformed entity id {entity_id!r}")
    return project_id


# -- serialization -------------------------------------------------------------


def project_row(store: ProjectStore) -> dict:
    p = store.project
    return {
        "id": p.id,
        "name": p.name,
        "created_at": p.created_at.isoformat(),
        "chunk_config": {
            "max_len": p.chunk_config.max_len,
            "min_len": p.chunk_config.min_len,
            "delimiters": list(p.chunk_config.delimiters),
        },
        "gen_config": {
            "questions_per_chunk": p.gen_config.questions_per_chunk,
            "dropout_prob": p.gen_config.dropout_prob,
            "rng_seed": p.gen_config.rng_seed,
            "answer_style": p.gen_config.answer_style.value,
        },
        "model_profiles": [pr.name for pr in p.model_profiles],
        "default_profile": p.default_profile,
        "counts": {
            "documents": len(store.documents),
            "chunks": len(store.chunks),
            "personas": len(store.personas),
            "questions": len(store.questions),
            "qa_pairs": len(store.qa_pairs),
        },
    }


def _doc_summary(doc) -> dict:
    row = _document_row(doc)
    row["length"] = len(doc.text)
    return row


# -- error envelope ------------------------------------------------------------

_ERROR_MAP: list[tuple[type, int, str]] = [
    (NotFoundError, 404, "not_found"),
    (ProjectLockedError, 423, "project_locked"),
    (InvalidTransitionError, 409, "invalid_transition"),
    (DuplicatePairError, 409, "duplicate_pair"),
    (CorruptError, 500, "corrupt_store"),
    (BadParamsError, 400, "bad_params"),
    (ChunkConfigError, 400, "bad_params"),
    (OffsetOutOfRangeError, 400, "bad_params"),
    (IndexOutOfRangeError, 400, "bad_params"),
    (NotAdjacentError, 400, "bad_params"),
]


def _envelope(status: int, code: str, message: str, detail=None) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"code": code, "message": message, "detail": detail},
    )


def create_app(root_dir: str | Path, llm_client=None, workers: int | None = None,
               static_dir: str | Path | None = None) -> FastAPI:
    """Build the application over a directory of projects.

    llm_client defaults to the real HTTP client; tests and `--mock-llm`
    inject the deterministic mock instead.
    """
    svc = ServiceState(root_dir, llm_client=llm_client, workers=workers)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        svc.close()

    app = FastAPI(title="docforge", docs_url=None, redoc_url=None, lifespan=lifespan)
    app.state.svc = svc

    @app.exception_handler(DocforgeError)
    async def _domain_error(request: Request, exc: DocforgeError):
        for cls, status, code in _ERROR_MAP:
            if isinstance(exc, cls):
                return _envelope(status, code, str(exc), type(exc).__name__)
        return _envelope(400, "bad_request", str(exc), type(exc).__name__)

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return _envelope(400, "bad_params", str(exc), type(exc).__name__)

    @app.exception_handler(FileExistsError)
    async def _exists_error(request: Request, exc: FileExistsError):
        return _envelope(409, "already_exists", str(exc), type(exc).__name__)

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return _envelope(400, "bad_params", "request validation failed",
                         str(exc.errors()))

    @app.exception_handler(Exception)
    async def _unexpected_error(request: Request, exc: Exception):
        return _envelope(500, "internal", str(exc), type(exc).__name__)

    # -- projects --------------------------------------------------------

    @app.post("/api/v1/projects", status_code=201)
    def create_project(body: dict = Body(...)):
        name = _require(body, "name", str, "project")
        kwargs = {}
        if "chunk_config" in body:
            raw = _require(body, "chunk_config", dict, "project")
            try:
                kwargs["chunk_config"] = ChunkConfig(**raw)
            except TypeError as exc:
                raise BadParamsError(f"chunk_config: {exc}") from exc
        profiles = []
        for raw in _optional(body, "model_profiles", list, "project", default=[]):
            if not isinstance(raw, dict):
                raise BadParamsError("model_profiles entries must be objects")
            try:
                profiles.append(ModelProfile(**raw))
            except (TypeError, ValueError) as exc:
                raise BadParamsError(f"model profile: {exc}") from exc
        if not profiles:
            # Name-only creation must still yield a runnable project, same
            # as `docforge init` without flags.
            profiles = [PLACEHOLDER_PROFILE]
        kwargs["model_profiles"] = tuple(profiles)
        kwargs["default_profile"] = _optional(
            body, "default_profile", str, "project", default=profiles[0].name
        )
        if "persist_api_keys" in body:
            kwargs["persist_api_keys"] = _require(
                body, "persist_api_keys", bool, "project"
            )
        store = svc.create_project(name, **kwargs)
        return project_row(store)

    @app.get("/api/v1/projects")
    def list_projects():
        rows = []
        for path in svc.list_project_dirs():
            data = json.loads((path / "project.json").read_text(encoding="utf-8"))
            rows.append({
                "id": data["id"],
                "name": data["name"],
                "created_at": data["created_at"],
            })
        return rows

    @app.get("/api/v1/projects/{project_id}")
    def get_project(project_id: str):
        return project_row(svc.get_store(project_id))

    # -- documents --------------------------------------------------------

    @app.post("/api/v1/projects/{project_id}/documents", status_code=202)
    def upload_documents(project_id: str, files: list[UploadFile] = File(...)):
        store = svc.get_store(project_id)
        uploads = store.root_dir / "uploads"
        uploads.mkdir(parents=True, exist_ok=True)
        paths = []
        for upload in files:
            name = Path(upload.filename or "upload.txt").name
            target = uploads / name
            target.write_bytes(upload.file.read())
            paths.append(str(target))

        def run(store, job):
            docs = pipeline.ingest_files(store, paths, progress=svc.progress_cb(job))
            return [d.id for d in docs]

        return job_row(svc.submit(project_id, JobKind.PARSE, run))

    @app.get("/api/v1/projects/{project_id}/documents")
    def list_documents(project_id: str):
        store = svc.get_store(project_id)
        return [_doc_summary(d) for d in list(store.documents)]

    # -- chunks ------------------------------------------------------------

    @app.post("/api/v1/projects/{project_id}/chunk", status_code=202)
    def chunk_project(project_id: str, body: dict | None = Body(None)):
        store = svc.get_store(project_id)
        body = body or {}
        base = store.project.chunk_config
        delimiters = _optional(body, "delimiters", list, "chunk",
                               list(base.delimiters))
        if not all(isinstance(d, str) for d in delimiters):
            raise BadParamsError("chunk: delimiters must be strings")
        cfg = ChunkConfig(
            max_len=_optional(body, "max_len", int, "chunk", base.max_len),
            min_len=_optional(body, "min_len", int, "chunk", base.min_len),
            delimiters=tuple(delimiters),
        )

        def run(store, job):
            with svc.mutex(project_id):
                store.project = replace(store.project, chunk_config=cfg)
            chunks = pipeline.chunk_documents(store, cfg, progress=svc.progress_cb(job))
            return [c.id for c in chunks]

        return job_row(svc.submit(project_id, JobKind.CHUNK, run))

    @app.get("/api/v1/projects/{project_id}/chunks")
    def list_chunks(project_id: str):
        store = svc.get_store(project_id)
        ordered = sorted(list(store.chunks), key=lambda c: (c.doc_id, c.start))
        return [_chunk_row(c) for c in ordered]

    @app.post("/api/v1/chunks/{chunk_id}/split")
    def split_chunk_route(chunk_id: str, body: dict = Body(...)):
        offset = _require(body, "offset", int, "split")
        project_id = _project_from_id(chunk_id)
        store = svc.get_store(project_id)
        with svc.mutex(project_id):
            target = store.get_chunk(chunk_id)
            siblings = sorted(store.chunks_for(target.doc_id), key=lambda c: c.start)
            index = siblings.index(target)
            updated = split_chunk(
                siblings, index, offset, make_id=lambda: store.next_id("ch")
            )
            store.replace_chunks(target.doc_id, updated)
            store.save()
            return [_chunk_row(updated[index]), _chunk_row(updated[index + 1])]

    @app.post("/api/v1/chunks/merge")
    def merge_chunks_route(body: dict = Body(...)):
        left_id = _require(body, "left_id", str, "merge")
        project_id = _project_from_id(left_id)
        store = svc.get_store(project_id)
        with svc.mutex(project_id):
            left = store.get_chunk(left_id)
            siblings = sorted(store.chunks_for(left.doc_id), key=lambda c: c.start)
            index = siblings.index(left)
            if index + 1 >= len(siblings):
                raise NotAdjacentError(f"chunk {left_id} has no right neighbour")
            updated = merge_chunks(
                siblings, index, index + 1, make_id=lambda: store.next_id("ch")
            )
            store.replace_chunks(left.doc_id, updated)
            store.save()
            return _chunk_row(updated[index])

    # -- personas ------------------------------------------------------------

    @app.post("/api/v1/projects/{project_id}/personas/generate", status_code=202)
    def generate_personas_route(project_id: str, body: dict | None = Body(None)):
        store = svc.get_store(project_id)
        body = body or {}
        n = _optional(body, "n", int, "personas")
        profile = _optional(body, "profile", str, "personas")
        if profile is not None:
            store.project.profile(profile)  # fail fast on unknown name

        def run(store, job):
            pairs = pipeline.generate_personas(
                store, svc.llm, n=n, profile_name=profile,
                progress=svc.progress_cb(job),
            )
            return [p.id for p in pairs]

        return job_row(svc.submit(project_id, JobKind.PERSONAS, run))

    @app.get("/api/v1/projects/{project_id}/personas")
    def list_personas(project_id: str):
        store = svc.get_store(project_id)
        return [_persona_row(p) for p in list(store.personas)]

    @app.get("/api/v1/personas/{persona_id}")
    def get_persona(persona_id: str):
        store = svc.get_store(_project_from_id(persona_id))
        return _persona_row(store.get_persona(persona_id))

    @app.put("/api/v1/personas/{persona_id}")
    def update_persona(persona_id: str, body: dict = Body(...)):
        project_id = _project_from_id(persona_id)
        store = svc.get_store(project_id)
        editable = ("genre_name", "genre_description", "audience_name",
                    "audience_description", "enabled")
        unknown = set(body) - set(editable)
        if unknown:
            raise BadParamsError(f"persona: unknown fields {sorted(unknown)}")
        with svc.mutex(project_id):
            current = store.get_persona(persona_id)
            fields = {}
            for key in editable[:-1]:
                if key in body:
                    fields[key] = _require(body, key, str, "persona")
            if "enabled" in body:
                fields["enabled"] = _require(body, "enabled", bool, "persona")
            updated = replace(current, **fields)
            store.personas = persona_mod.upsert_ga_pair(store.personas, updated)
            store.save()
            return _persona_row(store.get_persona(persona_id))

    @app.delete("/api/v1/personas/{persona_id}", status_code=204)
    def delete_persona(persona_id: str):
        project_id = _project_from_id(persona_id)
        store = svc.get_store(project_id)
        with svc.mutex(project_id):
            store.delete_persona(persona_id)
            store.save()

    # -- generation ------------------------------------------------------------

    @app.post("/api/v1/projects/{project_id}/questions", status_code=202)
    def questions_route(project_id: str, body: dict | None = Body(None)):
        store = svc.get_store(project_id)
        body = body or {}
        mode = _optional(body, "mode", str, "questions", default="persona")
        if mode not in ("persona", "naive"):
            raise BadParamsError(f"mode must be 'persona' or 'naive', got {mode!r}")
        profile = _optional(body, "profile", str, "questions")
        if profile is not None:
            store.project.profile(profile)
        cfg_body = _optional(body, "cfg", dict, "questions")
        new_cfg = (
            _gen_config_update(store.project.gen_config, cfg_body)
            if cfg_body else None
        )

        def run(store, job):
            if new_cfg is not None:
                # cfg overrides become the project's generation settings
                store.project = replace(store.project, gen_config=new_cfg)
            questions = pipeline.generate_questions_stage(
                store, svc.llm, mode=mode, profile_name=profile,
                progress=svc.progress_cb(job),
            )
            return [q.id for q in questions]

        return job_row(svc.submit(project_id, JobKind.QUESTIONS, run))

    @app.post("/api/v1/projects/{project_id}/answers", status_code=202)
    def answers_route(project_id: str, body: dict | None = Body(None)):
        store = svc.get_store(project_id)
        body = body or {}
        style_raw = _optional(body, "style", str, "answers")
        style = _enum_param(AnswerStyle, style_raw, "style") if style_raw else None
        profile = _optional(body, "profile", str, "answers")
        if profile is not None:
            store.project.profile(profile)

        def run(store, job):
            pairs = pipeline.generate_answers_stage(
                store, svc.llm, profile_name=profile, style=style,
                progress=svc.progress_cb(job),
            )
            return [p.id for p in pairs]

        return job_row(svc.submit(project_id, JobKind.ANSWERS, run))

    @app.post("/api/v1/qa/{qa_id}/refine", status_code=202)
    def refine_route(qa_id: str):
        project_id = _project_from_id(qa_id)
        store = svc.get_store(project_id)
        store.get_qa(qa_id)  # 404 now rather than a failed job later

        def run(store, job):
            refined = pipeline.refine_stage(
                store, svc.llm, qa_ids=[qa_id], progress=svc.progress_cb(job)
            )
            return [p.id for p in refined]

        return job_row(svc.submit(project_id, JobKind.REFINE, run))

    # -- review ------------------------------------------------------------

    @app.get("/api/v1/projects/{project_id}/qa")
    def list_qa(project_id: str, status: str | None = None):
        store = svc.get_store(project_id)
        pairs = list(store.qa_pairs)
        if status is not None:
            wanted = _status_param(status)
            pairs = [p for p in pairs if p.review_status is wanted]
        return [_qa_row(p) for p in pairs]

    @app.get("/api/v1/qa/{qa_id}")
    def get_qa(qa_id: str):
        store = svc.get_store(_project_from_id(qa_id))
        return _qa_row(store.get_qa(qa_id))

    @app.patch("/api/v1/qa/{qa_id}")
    def review_qa(qa_id: str, body: dict = Body(...)):
        action_raw = _require(body, "action", str, "review")
        action = _REVIEW_ACTIONS.get(action_raw.lower())
        if action is None:
            raise BadParamsError(
                f"unknown action {action_raw!r}; expected approve, reject, or edit"
            )
        fields = _optional(body, "fields", dict, "review")
        project_id = _project_from_id(qa_id)
        store = svc.get_store(project_id)
        with svc.mutex(project_id):
            updated = store.update_review(qa_id, action, edited_fields=fields)
            store.save()
            return _qa_row(updated)

    @app.get("/api/v1/projects/{project_id}/events")
    def list_events(project_id: str):
        store = svc.get_store(project_id)
        return [_event_row(e) for e in list(store.events)]

    # -- export / eval ------------------------------------------------------

    @app.post("/api/v1/projects/{project_id}/export", status_code=202)
    def export_route(project_id: str, body: dict | None = Body(None)):
        svc.get_store(project_id)
        cfg = _export_config(body or {})

        def run(store, job):
            report = pipeline.export_stage(store, cfg)
            svc.registry.set_progress(job, report.record_count, report.record_count)
            return list(report.files)

        return job_row(svc.submit(project_id, JobKind.EXPORT, run))

    @app.post("/api/v1/projects/{project_id}/eval", status_code=202)
    def eval_route(project_id: str, body: dict = Body(...)):
        store = svc.get_store(project_id)
        evalset = _require(body, "evalset", str, "eval")
        path = Path(evalset)
        if not path.is_absolute():
            path = store.root_dir / path
        if not path.exists():
            raise BadParamsError(f"evalset not found: {path}")
        candidate = _optional(body, "candidate", str, "eval")
        judge = _optional(body, "judge", str, "eval")
        for name in (candidate, judge):
            if name is not None:
                store.project.profile(name)

        def run(store, job):
            _, files = pipeline.eval_stage(
                store, svc.llm, path,
                candidate_profile=candidate, judge_profile=judge,
                progress=svc.progress_cb(job),
            )
            return [str(f) for f in files]

        return job_row(svc.submit(project_id, JobKind.EVAL, run))

    @app.get("/api/v1/projects/{project_id}/eval")
    def eval_report(project_id: str):
        store = svc.get_store(project_id)
        path = store.root_dir / "eval" / "report.json"
        if not path.exists():
            raise NotFoundError(f"no evaluation report for project {project_id}")
        return json.loads(path.read_text(encoding="utf-8"))

    # -- jobs ---------------------------------------------------------------

    @app.get("/api/v1/jobs/{job_id}")
    def get_job(job_id: str):
        return job_row(svc.registry.get(job_id))

    @app.get("/api/v1/projects/{project_id}/jobs")
    def list_jobs(project_id: str):
        jobs = sorted(svc.registry.for_project(project_id),
                      key=lambda j: j.created_at)
        return [job_row(j) for j in jobs]

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def serve(root_dir: str | Path, host: str = DEFAULT_BIND_HOST,
          port: int = DEFAULT_BIND_PORT, llm_client=None,
          static_dir: str | Path | None = None, log_level: str = "info"):
    """Run the service until interrupted."""
    import uvicorn

    app = create_app(root_dir, llm_client=llm_client, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level=log_level)
