import json

import pytest

from docforge.chunker import ChunkConfig
from docforge.errors import EmptySelectionError
from docforge.export import ExportConfig, ExportFormat, ExportSchema
from docforge.llm import MockLlmClient, ModelProfile
from docforge.pipeline import (
    chunk_documents,
    eval_stage,
    export_stage,
    generate_answers_stage,
    generate_personas,
    generate_questions_stage,
    ingest_files,
    refine_stage,
    run_all,
)
from docforge.qagen import ReviewStatus
from docforge.store import ProjectStore, ReviewAction

CORPUS = {
    "alpha.txt": (
        "The quarterly report shows revenue grew by 12 percent.\n\n"
        "Operating costs fell after the logistics overhaul.\n\n"
        "The board approved a new buyback program for 2026.\n"
    ),
    "beta.md": (
        "# Policy update\n\n"
        "The new filing requires disaggregated tax disclosures.\n\n"
        "Adoption begins in the fourth quarter of 2026.\n"
    ),
    "gamma.txt": (
        "Customer churn declined for the third consecutive quarter.\n\n"
        "The retention program will expand to two more regions.\n"
    ),
}


def write_corpus(tmp_path):
    src = tmp_path / "src"
    src.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in CORPUS.items():
        p = src / name
        p.write_text(text, encoding="utf-8")
        paths.append(str(p))
    return paths


def make_store(tmp_path, name="Pipe Test", **kwargs):
    kwargs.setdefault(
        "model_profiles",
        (ModelProfile(name="mock", endpoint_url="http://127.0.0.1:1/v1",
                      model_name="mock-model"),),
    )
    kwargs.setdefault("default_profile", "mock")
    return ProjectStore.create(tmp_path / "proj", name, **kwargs)


class TestIngestStage:
    def test_documents_added_and_saved(self, tmp_path):
        paths = write_corpus(tmp_path)
        with make_store(tmp_path) as store:
            docs = ingest_files(store, paths)
            assert len(docs) == 3
            assert docs[0].id.endswith("doc-00001")
        with ProjectStore.open(tmp_path / "proj") as loaded:
            assert len(loaded.documents) == 3

    def test_progress_callback(self, tmp_path):
        paths = write_corpus(tmp_path)
        calls = []
        with make_store(tmp_path) as store:
            ingest_files(store, paths, progress=lambda d, t: calls.append((d, t)))
        assert calls == [(1, 3), (2, 3), (3, 3)]


class TestChunkStage:
    def test_chunks_cover_all_documents(self, tmp_path):
        paths = write_corpus(tmp_path)
        with make_store(tmp_path) as store:
            ingest_files(store, paths)
            chunks = chunk_documents(store)
            assert {c.doc_id for c in chunks} == {d.id for d in store.documents}
            for doc in store.documents:
                text = "".join(c.text for c in store.chunks_for(doc.id))
                assert text == doc.text

    def test_rechunk_replaces_and_cascades(self, tmp_path):
        paths = write_corpus(tmp_path)
        with make_store(tmp_path) as store:
            ingest_files(store, paths)
            chunk_documents(store)
            generate_personas(store, MockLlmClient(seed=1), n=2)
            generate_questions_stage(store, MockLlmClient(seed=1))
            assert store.questions
            first_ids = {c.id for c in store.chunks}

            chunk_documents(store, cfg=ChunkConfig(max_len=80, min_len=10))
            assert {c.id for c in store.chunks}.isdisjoint(first_ids)
            assert store.questions == []
            assert store.qa_pairs == []


class TestPersonaStage:
    def test_personas_per_document(self, tmp_path):
        paths = write_corpus(tmp_path)
        with make_store(tmp_path) as store:
            ingest_files(store, paths)
            added = generate_personas(store, MockLlmClient(seed=2), n=3)
            assert len(added) == 9
            per_doc = {d.id: 0 for d in store.documents}
            for p in store.personas:
                per_doc[p.doc_id] += 1
            assert set(per_doc.values()) == {3}

    def test_second_run_skips_duplicates(self, tmp_path):
        paths = write_corpus(tmp_path)
        with make_store(tmp_path) as store:
            ingest_files(store, paths)
            generate_personas(store, MockLlmClient(seed=2), n=3)
            before = len(store.personas)
            added = generate_personas(store, MockLlmClient(seed=2), n=3)
            assert added == []
            assert len(store.personas) == before


class TestQuestionStage:
    def setup_project(self, tmp_path, personas_n=None):
        paths = write_corpus(tmp_path)
        store = make_store(tmp_path)
        ingest_files(store, paths)
        chunk_documents(store)
        if personas_n:
            generate_personas(store, MockLlmClient(seed=3), n=personas_n)
        return store

    def test_persona_mode_covers_chunks_times_personas(self, tmp_path):
        store = self.setup_project(tmp_path, personas_n=3)
        try:
            questions = generate_questions_stage(store, MockLlmClient(seed=3))
            expected = len(store.chunks) * 3 * 3  # personas x per-chunk
            assert len(questions) == expected
        finally:
            store.close()

    def test_naive_mode_one_pass_per_chunk(self, tmp_path):
        store = self.setup_project(tmp_path)
        try:
            questions = generate_questions_stage(
                store, MockLlmClient(seed=3), mode="naive"
            )
            assert len(questions) == len(store.chunks) * 3
            assert all(q.persona_id is None for q in questions)
        finally:
            store.close()

    def test_persona_mode_triples_naive_output(self, tmp_path):
        naive_store = self.setup_project(tmp_path / "naive")
        persona_store = self.setup_project(tmp_path / "persona", personas_n=3)
        try:
            naive = generate_questions_stage(
                naive_store, MockLlmClient(seed=3), mode="naive"
            )
            conditioned = generate_questions_stage(
                persona_store, MockLlmClient(seed=3), mode="persona"
            )
            assert len(conditioned) >= 3 * len(naive)
        finally:
            naive_store.close()
            persona_store.close()

    def test_second_run_adds_nothing(self, tmp_path):
        store = self.setup_project(tmp_path, personas_n=2)
        try:
            generate_questions_stage(store, MockLlmClient(seed=3))
            again = generate_questions_stage(store, MockLlmClient(seed=3))
            assert again == []
        finally:
            store.close()

    def test_disabled_persona_skipped(self, tmp_path):
        from dataclasses import replace

        store = self.setup_project(tmp_path, personas_n=2)
        try:
            victim = store.personas[0]
            store.personas = [
                replace(p, enabled=False) if p.id == victim.id else p
                for p in store.personas
            ]
            questions = generate_questions_stage(store, MockLlmClient(seed=3))
            assert all(q.persona_id != victim.id for q in questions)
        finally:
            store.close()

    def test_bad_mode_rejected(self, tmp_path):
        store = self.setup_project(tmp_path)
        try:
            with pytest.raises(ValueError):
                generate_questions_stage(store, MockLlmClient(), mode="hybrid")
        finally:
            store.close()


class TestAnswerStage:
    def test_every_question_answered_once(self, tmp_path):
        paths = write_corpus(tmp_path)
        with make_store(tmp_path) as store:
            ingest_files(store, paths)
            chunk_documents(store)
            generate_personas(store, MockLlmClient(seed=4), n=2)
            generate_questions_stage(store, MockLlmClient(seed=4))
            pairs = generate_answers_stage(store, MockLlmClient(seed=4))
            assert len(pairs) == len(store.questions)
            assert all(p.review_status is ReviewStatus.PENDING for p in pairs)
            assert all(p.reasoning for p in pairs)  # mock emits think blocks

            again = generate_answers_stage(store, MockLlmClient(seed=4))
            assert again == []

    def test_persona_conditioning_reaches_prompt(self, tmp_path):
        paths = write_corpus(tmp_path)
        with make_store(tmp_path) as store:
            ingest_files(store, paths)
            chunk_documents(store)
            generate_personas(store, MockLlmClient(seed=4), n=1)
            generate_questions_stage(store, MockLlmClient(seed=4))
            client = MockLlmClient(seed=4)
            generate_answers_stage(store, client)
            persona = store.personas[0]
            prompts = [req.user for _, req in client.requests]
            assert any(persona.audience_description in p for p in prompts)


class TestRefineStage:
    def prepared(self, tmp_path):
        paths = write_corpus(tmp_path)
        store = make_store(tmp_path)
        ingest_files(store, paths)
        chunk_documents(store)
        generate_questions_stage(store, MockLlmClient(seed=5), mode="naive")
        generate_answers_stage(store, MockLlmClient(seed=5))
        return store

    def test_default_refines_pending_only(self, tmp_path):
        store = self.prepared(tmp_path)
        try:
            approved = store.qa_pairs[0].id
            store.update_review(approved, ReviewAction.APPROVE)
            refined = refine_stage(store, MockLlmClient(seed=5))
            assert all(p.id != approved for p in refined)
            assert len(refined) == len(store.qa_pairs) - 1
            assert all(len(p.history) == 2 for p in refined)
        finally:
            store.close()

    def test_explicit_ids(self, tmp_path):
        store = self.prepared(tmp_path)
        try:
            target = store.qa_pairs[1].id
            refined = refine_stage(store, MockLlmClient(seed=5), qa_ids=[target])
            assert [p.id for p in refined] == [target]
            assert len(store.get_qa(target).history) == 2
        finally:
            store.close()


class TestExportEvalStages:
    def full_project(self, tmp_path):
        paths = write_corpus(tmp_path)
        store = make_store(tmp_path)
        ingest_files(store, paths)
        chunk_documents(store)
        generate_questions_stage(store, MockLlmClient(seed=6), mode="naive")
        generate_answers_stage(store, MockLlmClient(seed=6))
        return store

    def test_export_stage_writes_data_and_registry(self, tmp_path):
        store = self.full_project(tmp_path)
        try:
            for qa in store.qa_pairs:
                store.update_review(qa.id, ReviewAction.APPROVE)
            report = export_stage(store, ExportConfig())
            data_file, registry_file = report.files
            assert data_file.endswith("dataset.jsonl")
            assert registry_file.endswith("dataset_info.json")
            registry = json.loads(
                (store.root_dir / "export" / "dataset_info.json").read_text()
            )
            assert list(registry.values())[0]["file_name"] == "dataset.jsonl"
            assert report.record_count == len(store.qa_pairs)
        finally:
            store.close()

    def test_export_stage_default_selection_excludes_pending(self, tmp_path):
        store = self.full_project(tmp_path)
        try:
            with pytest.raises(EmptySelectionError):
                export_stage(store, ExportConfig())
        finally:
            store.close()

    def test_eval_stage_writes_report(self, tmp_path):
        store = self.full_project(tmp_path)
        try:
            evalset = tmp_path / "evalset.jsonl"
            rows = [
                {"question": "What grew by 12 percent?", "ground_truth": "Revenue."},
                {"question": "When does adoption begin?",
                 "ground_truth": "Fourth quarter of 2026."},
            ]
            evalset.write_text(
                "".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8"
            )
            report, files = eval_stage(store, MockLlmClient(seed=6), evalset)
            assert len(report.items) == 2
            assert (store.root_dir / "eval" / "report.json").exists()
            assert (store.root_dir / "eval" / "report.txt").exists()
        finally:
            store.close()


class TestRunAll:
    def test_summary_counts(self, tmp_path):
        paths = write_corpus(tmp_path)
        stages = []
        with make_store(tmp_path) as store:
            summary = run_all(
                store, MockLlmClient(seed=42), paths,
                stage_callback=stages.append,
            )
        assert summary["documents"] == 3
        assert summary["chunks"] >= 3
        assert summary["personas"] == 15  # 5 per document
        assert summary["qa_pairs"] == summary["questions"]
        assert summary["record_count"] == summary["qa_pairs"]
        assert stages == ["ingest", "chunk", "personas", "questions",
                          "answers", "export"]

    def test_pending_included_in_headless_export(self, tmp_path):
        paths = write_corpus(tmp_path)
        with make_store(tmp_path) as store:
            summary = run_all(store, MockLlmClient(seed=42), paths)
            data = (store.root_dir / "export" / "dataset.jsonl").read_text("utf-8")
            assert len(data.splitlines()) == summary["record_count"] > 0

    def test_byte_identical_across_fresh_runs(self, tmp_path):
        paths = write_corpus(tmp_path)
        outputs = []
        for run in ("one", "two"):
            with make_store(tmp_path / run, name="Same Name") as store:
                run_all(store, MockLlmClient(seed=42), paths)
                outputs.append(
                    (store.root_dir / "export" / "dataset.jsonl").read_bytes()
                )
        assert outputs[0] == outputs[1]

    def test_naive_mode_skips_personas(self, tmp_path):
        paths = write_corpus(tmp_path)
        stages = []
        with make_store(tmp_path) as store:
            summary = run_all(
                store, MockLlmClient(seed=42), paths, mode="naive",
                stage_callback=stages.append,
            )
        assert summary["personas"] == 0
        assert "personas" not in stages
