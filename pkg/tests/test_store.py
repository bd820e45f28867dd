import json
import subprocess
import sys

import pytest

from docforge.chunker import Chunk, ChunkConfig, ChunkOrigin, chunk_text
from docforge.errors import (
    CorruptError,
    InvalidTransitionError,
    NotFoundError,
    ProjectLockedError,
)
from docforge.ingest import DocumentFormat, ParsedDocument
from docforge.llm import ModelProfile
from docforge.persona import GAPair, PairSource
from docforge.qagen import AnswerVersion, GenConfig, QAPair, Question, ReviewStatus
from docforge.store import Project, ProjectStore, ReviewAction, ReviewEvent
from docforge.util import now_utc


def add_document(store, text, source="doc.txt"):
    doc = ParsedDocument(
        id=store.next_id("doc"),
        source_path=source,
        format=DocumentFormat.PLAIN_TEXT,
        text=text,
        parser_name="passthrough",
    )
    store.documents.append(doc)
    return doc


def add_chunks(store, doc, cfg=None):
    chunks = chunk_text(
        doc.text, cfg or ChunkConfig(), doc.id, make_id=lambda: store.next_id("ch")
    )
    store.chunks.extend(chunks)
    return chunks


def add_persona(store, doc, genre="G", audience="A"):
    pair = GAPair(
        id=store.next_id("ga"),
        doc_id=doc.id,
        genre_name=genre,
        genre_description="gd",
        audience_name=audience,
        audience_description="ad",
    )
    store.personas.append(pair)
    return pair


def add_question(store, chunk, persona=None, text="What happened?"):
    q = Question(
        id=store.next_id("q"),
        chunk_id=chunk.id,
        text=text,
        persona_id=persona.id if persona else None,
    )
    store.questions.append(q)
    return q


def add_qa(store, question, answer="Something happened.", reasoning=None):
    created = now_utc()
    pair = QAPair(
        id=store.next_id("qa"),
        question=question,
        answer_text=answer,
        reasoning=reasoning,
        review_status=ReviewStatus.PENDING,
        created_at=created,
        model_name="m1",
        history=(
            AnswerVersion(
                answer_text=answer,
                reasoning=reasoning,
                model_name="m1",
                created_at=created,
            ),
        ),
    )
    store.qa_pairs.append(pair)
    return pair


def populated_store(tmp_path):
    store = ProjectStore.create(
        tmp_path / "proj",
        "Demo Project",
        model_profiles=(
            ModelProfile(
                name="local",
                endpoint_url="http://127.0.0.1:8000/v1",
                model_name="m1",
            ),
        ),
        default_profile="local",
    )
    doc1 = add_document(store, "Alpha paragraph.\n\nBeta paragraph.\n")
    doc2 = add_document(store, "Gamma text body.\n")
    chunks = add_chunks(store, doc1) + add_chunks(store, doc2)
    personas = [
        add_persona(store, doc1, genre=f"G{i}", audience=f"A{i}") for i in range(3)
    ]
    questions = [
        add_question(store, chunks[0], personas[0], text=f"Question {i}?")
        for i in range(4)
    ]
    for q in questions:
        add_qa(store, q, answer=f"Answer to {q.text}", reasoning="because")
    store.save()
    return store


class TestProjectType:
    def test_empty_name_rejected(self):
        with pytest.raises(ValueError):
            Project(id="p", name="  ", created_at=now_utc())

    def test_duplicate_profile_names_rejected(self):
        profile = ModelProfile(
            name="x", endpoint_url="http://h:1/v1", model_name="m"
        )
        with pytest.raises(ValueError):
            Project(
                id="p", name="p", created_at=now_utc(),
                model_profiles=(profile, profile), default_profile="x",
            )

    def test_default_must_match_a_profile(self):
        profile = ModelProfile(
            name="x", endpoint_url="http://h:1/v1", model_name="m"
        )
        with pytest.raises(ValueError):
            Project(
                id="p", name="p", created_at=now_utc(),
                model_profiles=(profile,), default_profile="y",
            )

    def test_default_without_profiles_rejected(self):
        with pytest.raises(ValueError):
            Project(id="p", name="p", created_at=now_utc(), default_profile="x")

    def test_profile_lookup(self):
        profile = ModelProfile(
            name="x", endpoint_url="http://h:1/v1", model_name="m"
        )
        project = Project(
            id="p", name="p", created_at=now_utc(),
            model_profiles=(profile,), default_profile="x",
        )
        assert project.profile() is profile
        assert project.profile("x") is profile
        with pytest.raises(NotFoundError):
            project.profile("missing")


class TestRoundTrip:
    def test_full_state_survives_save_load(self, tmp_path):
        store = populated_store(tmp_path)
        assert len(store.documents) == 2
        assert len(store.chunks) >= 2
        assert len(store.personas) == 3
        assert len(store.qa_pairs) == 4
        store.close()

        loaded = ProjectStore.open(tmp_path / "proj")
        try:
            assert loaded.project == store.project
            assert loaded.documents == store.documents
            assert loaded.chunks == store.chunks
            assert loaded.personas == store.personas
            assert loaded.questions == store.questions
            assert loaded.qa_pairs == store.qa_pairs
            assert loaded.events == store.events
            assert loaded.counters == store.counters
            assert loaded.warnings == []
        finally:
            loaded.close()

    def test_empty_project_round_trips(self, tmp_path):
        store = ProjectStore.create(tmp_path / "p", "Empty")
        store.close()
        for name in ("documents.jsonl", "chunks.jsonl", "personas.jsonl",
                     "questions.jsonl", "qa.jsonl", "events.jsonl", "project.json"):
            assert (tmp_path / "p" / name).exists()
        loaded = ProjectStore.open(tmp_path / "p")
        try:
            assert loaded.documents == []
            assert loaded.qa_pairs == []
        finally:
            loaded.close()

    def test_project_id_is_slug(self, tmp_path):
        store = ProjectStore.create(tmp_path / "p", "My Demo Project!")
        try:
            assert store.project.id == "my-demo-project"
        finally:
            store.close()

    def test_create_over_existing_rejected(self, tmp_path):
        ProjectStore.create(tmp_path / "p", "One").close()
        with pytest.raises(FileExistsError):
            ProjectStore.create(tmp_path / "p", "Two")

    def test_open_missing_raises_not_found(self, tmp_path):
        with pytest.raises(NotFoundError):
            ProjectStore.open(tmp_path / "nothing")

    def test_events_survive_round_trip(self, tmp_path):
        store = populated_store(tmp_path)
        store.update_review(store.qa_pairs[0].id, ReviewAction.APPROVE)
        store.update_review(
            store.qa_pairs[1].id, ReviewAction.EDIT,
            edited_fields={"answer_text": "Edited answer."},
        )
        store.save()
        store.close()
        loaded = ProjectStore.open(tmp_path / "proj")
        try:
            assert loaded.events == store.events
            assert [e.action for e in loaded.events] == [
                ReviewAction.APPROVE, ReviewAction.EDIT,
            ]
        finally:
            loaded.close()


class TestCorruption:
    def test_truncated_last_line_reports_line_number(self, tmp_path):
        store = populated_store(tmp_path)
        store.close()
        qa_path = tmp_path / "proj" / "qa.jsonl"
        lines = qa_path.read_text(encoding="utf-8").splitlines(keepends=True)
        qa_path.write_text("".join(lines[:-1]) + lines[-1][: len(lines[-1]) // 2],
                           encoding="utf-8")

        with pytest.raises(CorruptError) as exc_info:
            ProjectStore.open(tmp_path / "proj")
        assert exc_info.value.line == len(lines)
        assert "qa.jsonl" in str(exc_info.value)

    def test_recovery_keeps_earlier_lines(self, tmp_path):
        store = populated_store(tmp_path)
        total = len(store.qa_pairs)
        store.close()
        qa_path = tmp_path / "proj" / "qa.jsonl"
        lines = qa_path.read_text(encoding="utf-8").splitlines(keepends=True)
        qa_path.write_text("".join(lines[:-1]) + lines[-1][: len(lines[-1]) // 2],
                           encoding="utf-8")

        loaded = ProjectStore.open(tmp_path / "proj", recover=True)
        try:
            assert len(loaded.qa_pairs) == total - 1
            assert any(
                f"qa.jsonl:{len(lines)}" in w for w in loaded.warnings
            )
        finally:
            loaded.close()

    def test_garbage_middle_line_strict_vs_recover(self, tmp_path):
        store = populated_store(tmp_path)
        store.close()
        path = tmp_path / "proj" / "personas.jsonl"
        lines = path.read_text(encoding="utf-8").splitlines(keepends=True)
        lines.insert(1, "{not json at all\n")
        path.write_text("".join(lines), encoding="utf-8")

        with pytest.raises(CorruptError) as exc_info:
            ProjectStore.open(tmp_path / "proj")
        assert exc_info.value.line == 2

        loaded = ProjectStore.open(tmp_path / "proj", recover=True)
        try:
            assert len(loaded.personas) == 3
        finally:
            loaded.close()

    def test_dangling_chunk_reference_strict(self, tmp_path):
        store = populated_store(tmp_path)
        store.close()
        path = tmp_path / "proj" / "chunks.jsonl"
        row = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
        row["id"] = "proj:ch-99999"
        row["doc_id"] = "proj:doc-99999"
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(row) + "\n")

        with pytest.raises(CorruptError):
            ProjectStore.open(tmp_path / "proj")

        loaded = ProjectStore.open(tmp_path / "proj", recover=True)
        try:
            assert all(c.id != "proj:ch-99999" for c in loaded.chunks)
            assert any("unknown document" in w for w in loaded.warnings)
        finally:
            loaded.close()

    def test_recovery_cascades_dependents(self, tmp_path):
        # dropping a corrupt chunk line must also drop its questions and QA
        store = populated_store(tmp_path)
        target_chunk = store.questions[0].chunk_id
        dependents = [q.id for q in store.questions if q.chunk_id == target_chunk]
        store.close()
        path = tmp_path / "proj" / "chunks.jsonl"
        lines = path.read_text(encoding="utf-8").splitlines(keepends=True)
        kept = [
            l for l in lines if json.loads(l)["id"] != target_chunk
        ]
        corrupt = [l[:10] + "\n" for l in lines if json.loads(l)["id"] == target_chunk]
        path.write_text("".join(kept + corrupt), encoding="utf-8")

        loaded = ProjectStore.open(tmp_path / "proj", recover=True)
        try:
            assert all(q.chunk_id != target_chunk for q in loaded.questions)
            assert all(p.question.id not in dependents for p in loaded.qa_pairs)
        finally:
            loaded.close()


class TestLock:
    def test_second_writer_blocked(self, tmp_path):
        store = ProjectStore.create(tmp_path / "p", "One")
        try:
            with pytest.raises(ProjectLockedError):
                ProjectStore.open(tmp_path / "p")
        finally:
            store.close()

    def test_lock_released_on_close(self, tmp_path):
        ProjectStore.create(tmp_path / "p", "One").close()
        second = ProjectStore.open(tmp_path / "p")
        second.close()

    def test_stale_lock_stolen(self, tmp_path):
        ProjectStore.create(tmp_path / "p", "One").close()
        # a freshly exited child pid is guaranteed dead
        child = subprocess.Popen([sys.executable, "-c", "pass"])
        child.wait()
        (tmp_path / "p" / "project.lock").write_text(
            json.dumps({"pid": child.pid, "at": now_utc().isoformat()}),
            encoding="utf-8",
        )
        store = ProjectStore.open(tmp_path / "p")
        store.close()

    def test_unreadable_lock_treated_stale(self, tmp_path):
        ProjectStore.create(tmp_path / "p", "One").close()
        (tmp_path / "p" / "project.lock").write_text("###", encoding="utf-8")
        store = ProjectStore.open(tmp_path / "p")
        store.close()

    def test_readonly_open_skips_lock(self, tmp_path):
        writer = ProjectStore.create(tmp_path / "p", "One")
        try:
            reader = ProjectStore.open(tmp_path / "p", readonly=True)
            assert reader.project.name == "One"
            with pytest.raises(PermissionError):
                reader.save()
            reader.close()
        finally:
            writer.close()

    def test_context_manager_releases(self, tmp_path):
        with ProjectStore.create(tmp_path / "p", "One"):
            assert (tmp_path / "p" / "project.lock").exists()
        assert not (tmp_path / "p" / "project.lock").exists()


class TestIds:
    def test_sequential_and_project_prefixed(self, tmp_path):
        with ProjectStore.create(tmp_path / "p", "Acme Reports") as store:
            assert store.next_id("doc") == "acme-reports:doc-00001"
            assert store.next_id("doc") == "acme-reports:doc-00002"
            assert store.next_id("qa") == "acme-reports:qa-00001"

    def test_counters_continue_after_reload(self, tmp_path):
        with ProjectStore.create(tmp_path / "p", "P") as store:
            first = store.next_id("ch")
            store.save()
        with ProjectStore.open(tmp_path / "p") as loaded:
            assert loaded.next_id("ch") != first
            assert loaded.next_id("ch").endswith("-00003")

    def test_counters_bumped_past_seen_ids(self, tmp_path):
        # counters lost (reset) in project.json must not cause id reuse
        store = populated_store(tmp_path)
        max_qa = max(int(p.id.rsplit("-", 1)[1]) for p in store.qa_pairs)
        store.close()
        path = tmp_path / "proj" / "project.json"
        data = json.loads(path.read_text(encoding="utf-8"))
        data["counters"] = {}
        path.write_text(json.dumps(data), encoding="utf-8")

        with ProjectStore.open(tmp_path / "proj") as loaded:
            fresh = loaded.next_id("qa")
            assert int(fresh.rsplit("-", 1)[1]) == max_qa + 1


class TestApiKeys:
    def make_store(self, tmp_path, **project_kwargs):
        return ProjectStore.create(
            tmp_path / "p",
            "Keyed",
            model_profiles=(
                ModelProfile(
                    name="remote",
                    endpoint_url="https://api.example.com/v1",
                    model_name="m",
                    api_key="sk-very-secret",
                ),
            ),
            default_profile="remote",
            **project_kwargs,
        )

    def test_literal_key_replaced_with_env_reference(self, tmp_path):
        self.make_store(tmp_path).close()
        raw = (tmp_path / "p" / "project.json").read_text(encoding="utf-8")
        assert "sk-very-secret" not in raw
        assert "${DOCFORGE_API_KEY_REMOTE}" in raw

    def test_opt_in_persists_literal(self, tmp_path):
        self.make_store(tmp_path, persist_api_keys=True).close()
        raw = (tmp_path / "p" / "project.json").read_text(encoding="utf-8")
        assert "sk-very-secret" in raw

    def test_loaded_profile_resolves_from_env(self, tmp_path, monkeypatch):
        self.make_store(tmp_path).close()
        monkeypatch.setenv("DOCFORGE_API_KEY_REMOTE", "sk-live")
        with ProjectStore.open(tmp_path / "p") as loaded:
            assert loaded.project.profile().resolve_api_key() == "sk-live"


class TestReview:
    def test_approve_pending(self, tmp_path):
        store = populated_store(tmp_path)
        try:
            qa = store.qa_pairs[0]
            updated = store.update_review(qa.id, ReviewAction.APPROVE)
            assert updated.review_status is ReviewStatus.APPROVED
            assert len(store.events) == 1
            event = store.events[0]
            assert event.entity_id == qa.id
            assert event.before == {"review_status": "Pending"}
            assert event.after == {"review_status": "Approved"}
        finally:
            store.close()

    def test_edit_snapshots_only_changed_field(self, tmp_path):
        store = populated_store(tmp_path)
        try:
            qa = store.qa_pairs[0]
            old = qa.answer_text
            updated = store.update_review(
                qa.id, ReviewAction.EDIT, edited_fields={"answer_text": "New text."}
            )
            assert updated.review_status is ReviewStatus.EDITED
            assert updated.answer_text == "New text."
            event = store.events[-1]
            assert set(event.before) == {"answer_text"}
            assert event.before["answer_text"] == old
            assert event.after["answer_text"] == "New text."
        finally:
            store.close()

    def test_edit_question_text_updates_pool(self, tmp_path):
        store = populated_store(tmp_path)
        try:
            qa = store.qa_pairs[0]
            store.update_review(
                qa.id, ReviewAction.EDIT, edited_fields={"question_text": "Better?"}
            )
            assert store.get_qa(qa.id).question.text == "Better?"
            pool = [q for q in store.questions if q.id == qa.question.id]
            assert pool[0].text == "Better?"
        finally:
            store.close()

    def test_edit_requires_fields(self, tmp_path):
        store = populated_store(tmp_path)
        try:
            with pytest.raises(ValueError):
                store.update_review(store.qa_pairs[0].id, ReviewAction.EDIT)
        finally:
            store.close()

    def test_edit_unknown_field_rejected(self, tmp_path):
        store = populated_store(tmp_path)
        try:
            with pytest.raises(ValueError):
                store.update_review(
                    store.qa_pairs[0].id, ReviewAction.EDIT,
                    edited_fields={"model_name": "x"},
                )
        finally:
            store.close()

    def test_edit_to_empty_answer_rejected(self, tmp_path):
        store = populated_store(tmp_path)
        try:
            with pytest.raises(ValueError):
                store.update_review(
                    store.qa_pairs[0].id, ReviewAction.EDIT,
                    edited_fields={"answer_text": ""},
                )
        finally:
            store.close()

    def test_approve_missing_raises_not_found(self, tmp_path):
        store = populated_store(tmp_path)
        try:
            with pytest.raises(NotFoundError):
                store.update_review("demo-project:qa-99999", ReviewAction.APPROVE)
        finally:
            store.close()

    def test_edited_pair_can_be_approved(self, tmp_path):
        store = populated_store(tmp_path)
        try:
            qa_id = store.qa_pairs[0].id
            store.update_review(
                qa_id, ReviewAction.EDIT, edited_fields={"answer_text": "Fixed."}
            )
            updated = store.update_review(qa_id, ReviewAction.APPROVE)
            assert updated.review_status is ReviewStatus.APPROVED
        finally:
            store.close()

    @pytest.mark.parametrize(
        "action,fields",
        [
            (ReviewAction.APPROVE, None),
            (ReviewAction.REJECT, None),
            (ReviewAction.EDIT, {"answer_text": "x"}),
        ],
    )
    def test_rejected_is_terminal(self, tmp_path, action, fields):
        store = populated_store(tmp_path)
        try:
            qa_id = store.qa_pairs[0].id
            store.update_review(qa_id, ReviewAction.REJECT)
            with pytest.raises(InvalidTransitionError):
                store.update_review(qa_id, action, edited_fields=fields)
        finally:
            store.close()

    def test_event_log_is_append_only(self, tmp_path):
        store = populated_store(tmp_path)
        try:
            ids = [p.id for p in store.qa_pairs]
            store.update_review(ids[0], ReviewAction.APPROVE)
            snapshot = list(store.events)
            store.update_review(ids[1], ReviewAction.REJECT)
            assert store.events[: len(snapshot)] == snapshot
        finally:
            store.close()


class TestCascade:
    def test_replace_chunks_cascades(self, tmp_path):
        store = populated_store(tmp_path)
        try:
            doc = store.documents[0]
            other_doc_chunks = [c for c in store.chunks if c.doc_id != doc.id]
            assert store.questions and store.qa_pairs

            new_chunks = chunk_text(
                doc.text, ChunkConfig(max_len=10, min_len=2), doc.id,
                make_id=lambda: store.next_id("ch"),
            )
            store.replace_chunks(doc.id, new_chunks)

            assert [c for c in store.chunks if c.doc_id != doc.id] == other_doc_chunks
            assert [c for c in store.chunks if c.doc_id == doc.id] == new_chunks
            assert store.questions == []
            assert store.qa_pairs == []
        finally:
            store.close()

    def test_replace_chunks_unknown_doc(self, tmp_path):
        store = populated_store(tmp_path)
        try:
            with pytest.raises(NotFoundError):
                store.replace_chunks("demo-project:doc-99999", [])
        finally:
            store.close()

    def test_surviving_chunks_keep_their_questions(self, tmp_path):
        from docforge.chunker import split_chunk

        with ProjectStore.create(tmp_path / "p", "Split Keep") as store:
            doc = add_document(store, "Alpha paragraph.\n\nBeta paragraph.\n")
            chunks = add_chunks(store, doc, ChunkConfig(max_len=20, min_len=2))
            assert len(chunks) >= 2
            questioned, victim = chunks[0], chunks[1]
            q = add_question(store, questioned)
            add_qa(store, q)

            new_list = split_chunk(
                chunks, 1, 1, make_id=lambda: store.next_id("ch")
            )
            store.replace_chunks(doc.id, new_list)

            assert store.get_chunk(questioned.id) == questioned
            assert all(c.id != victim.id for c in store.chunks)
            assert len(store.questions) == 1
            assert len(store.qa_pairs) == 1

    def test_delete_persona_cascades(self, tmp_path):
        store = populated_store(tmp_path)
        try:
            used = store.questions[0].persona_id
            unused = next(p.id for p in store.personas if p.id != used)

            store.delete_persona(unused)
            assert len(store.questions) == 4

            store.delete_persona(used)
            assert store.questions == []
            assert store.qa_pairs == []
            with pytest.raises(NotFoundError):
                store.delete_persona(used)
        finally:
            store.close()


class TestEventValidation:
    def test_edit_event_requires_snapshots(self):
        with pytest.raises(ValueError):
            ReviewEvent(
                entity_id="qa-1", actor="user", action=ReviewAction.EDIT,
                before={}, after={}, at=now_utc(),
            )
