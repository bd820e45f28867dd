import json

import pytest

from docforge.errors import (
    DuplicatePairError,
    InsufficientPersonasError,
    NotFoundError,
    ParseError,
)
from docforge.ingest import DocumentFormat, ParsedDocument
from docforge.llm import MockLlmClient, ModelProfile
from docforge.persona import (
    DEFAULT_PERSONA_COUNT,
    GAPair,
    PairSource,
    delete_ga_pair,
    generate_ga_pairs,
    get_ga_pair,
    persona_fixture_json,
    upsert_ga_pair,
)

PROFILE = ModelProfile(
    name="mock", endpoint_url="http://127.0.0.1:1/v1", model_name="mock"
)

# The worked example pairing used throughout the docs: a financial summary
# genre aimed at time-pressed business readers.
TABLE_PAIR = {
    "genre": {
        "name": "Financial News Summary",
        "description": (
            "This genre condenses complex financial information into concise, "
            "accessible updates. It highlights key points like liquidity "
            "status, capital returns, and regulatory changes, making it "
            "suitable for readers who need quick, high-level insights without "
            "deep technical details."
        ),
    },
    "audience": {
        "name": "Busy Executives and General Business Readers",
        "description": (
            "Professionals who need to stay informed about financial "
            "developments but lack the time for in-depth analysis. They "
            "prefer succinct summaries that provide the essential takeaways "
            "without overwhelming detail."
        ),
    },
}


def make_doc(text="The quick brown fox. " * 50, doc_id="doc-1"):
    return ParsedDocument(
        id=doc_id,
        source_path="a.txt",
        format=DocumentFormat.PLAIN_TEXT,
        text=text,
        parser_name="passthrough",
    )


def make_pair(pair_id="ga-1", doc_id="doc-1", genre="G", audience="A", **kw):
    return GAPair(
        id=pair_id,
        doc_id=doc_id,
        genre_name=genre,
        genre_description="gd",
        audience_name=audience,
        audience_description="ad",
        **kw,
    )


def fixture_client(tmp_path, payload, seed=0):
    text = payload if isinstance(payload, str) else json.dumps(payload)
    tmp_path.mkdir(parents=True, exist_ok=True)
    (tmp_path / "personas.json").write_text(text, encoding="utf-8")
    return MockLlmClient(seed=seed, fixture_dir=tmp_path)


class TestGAPair:
    def test_empty_genre_name_rejected(self):
        with pytest.raises(ValueError):
            make_pair(genre="  ")

    def test_empty_audience_name_rejected(self):
        with pytest.raises(ValueError):
            make_pair(audience="")


class TestGenerate:
    def test_default_count_is_five(self):
        assert DEFAULT_PERSONA_COUNT == 5

    def test_synthesized_pairs_have_expected_shape(self):
        pairs = generate_ga_pairs(make_doc(), 5, PROFILE, MockLlmClient(seed=7))
        assert len(pairs) == 5
        keys = {p.key for p in pairs}
        assert len(keys) == 5
        for p in pairs:
            assert p.source is PairSource.GENERATED
            assert p.enabled is True
            assert p.doc_id == "doc-1"

    def test_financial_summary_fixture(self, tmp_path):
        client = fixture_client(tmp_path, [TABLE_PAIR])
        pairs = generate_ga_pairs(make_doc(), 1, PROFILE, client)
        assert len(pairs) == 1
        assert pairs[0].genre_name == "Financial News Summary"
        assert (
            pairs[0].audience_name == "Busy Executives and General Business Readers"
        )
        assert "condenses complex financial information" in pairs[0].genre_description
        assert "succinct summaries" in pairs[0].audience_description

    def test_duplicates_in_response_collapse(self, tmp_path):
        client = fixture_client(tmp_path, [TABLE_PAIR, TABLE_PAIR])
        pairs = generate_ga_pairs(make_doc(), 2, PROFILE, client)
        assert len(pairs) == 1

    def test_fenced_and_bare_arrays_parse_identically(self, tmp_path):
        bare = json.dumps([TABLE_PAIR])
        fenced = f"Here you go:\n```json\n{bare}\n```\n"
        a = generate_ga_pairs(
            make_doc(), 1, PROFILE, fixture_client(tmp_path / "a", bare)
        )
        b = generate_ga_pairs(
            make_doc(), 1, PROFILE, fixture_client(tmp_path / "b", fenced)
        )
        assert [(p.key, p.genre_description, p.audience_description) for p in a] == [
            (p.key, p.genre_description, p.audience_description) for p in b
        ]

    def test_no_json_array_raises_parse_error(self, tmp_path):
        client = fixture_client(tmp_path, "Sorry, I cannot help with that.")
        with pytest.raises(ParseError):
            generate_ga_pairs(make_doc(), 3, PROFILE, client)

    def test_no_valid_elements_raises_insufficient(self, tmp_path):
        client = fixture_client(
            tmp_path, [{"genre": {"name": ""}}, "just a string", 42]
        )
        with pytest.raises(InsufficientPersonasError):
            generate_ga_pairs(make_doc(), 3, PROFILE, client)

    def test_invalid_elements_skipped_valid_kept(self, tmp_path):
        client = fixture_client(tmp_path, ["noise", TABLE_PAIR, {"genre": {}}])
        pairs = generate_ga_pairs(make_doc(), 5, PROFILE, client)
        assert len(pairs) == 1

    def test_output_capped_at_n(self, tmp_path):
        many = [
            {
                "genre": {"name": f"G{i}", "description": "d"},
                "audience": {"name": f"A{i}", "description": "d"},
            }
            for i in range(7)
        ]
        client = fixture_client(tmp_path, many)
        pairs = generate_ga_pairs(make_doc(), 3, PROFILE, client)
        assert [p.genre_name for p in pairs] == ["G0", "G1", "G2"]

    def test_prompt_truncated_to_digest(self):
        text = "x" * 4000 + "TAIL-MARKER" + "y" * 100
        client = MockLlmClient(seed=0)
        generate_ga_pairs(make_doc(text=text), 2, PROFILE, client)
        prompt = client.requests[0][1].user
        assert "x" * 4000 in prompt
        assert "TAIL-MARKER" not in prompt

    def test_prompt_carries_n(self):
        client = MockLlmClient(seed=0)
        generate_ga_pairs(make_doc(), 4, PROFILE, client)
        assert "exactly 4" in client.requests[0][1].user

    def test_empty_document_rejected(self):
        doc = make_doc(text="x")
        object.__setattr__(doc, "text", "")
        with pytest.raises(ValueError):
            generate_ga_pairs(doc, 3, PROFILE, MockLlmClient())

    def test_zero_n_rejected(self):
        with pytest.raises(ValueError):
            generate_ga_pairs(make_doc(), 0, PROFILE, MockLlmClient())

    def test_fixture_json_round_trips(self, tmp_path):
        pairs = generate_ga_pairs(make_doc(), 3, PROFILE, MockLlmClient(seed=5))
        client = fixture_client(tmp_path, persona_fixture_json(pairs))
        again = generate_ga_pairs(make_doc(), 3, PROFILE, client)
        assert [p.key for p in again] == [p.key for p in pairs]


class TestCrud:
    def test_insert_marks_manual(self):
        pairs = upsert_ga_pair([], make_pair())
        assert pairs[0].source is PairSource.MANUAL

    def test_insert_duplicate_key_rejected(self):
        pairs = upsert_ga_pair([], make_pair("ga-1"))
        with pytest.raises(DuplicatePairError):
            upsert_ga_pair(pairs, make_pair("ga-2"))

    def test_same_key_other_document_allowed(self):
        pairs = upsert_ga_pair([], make_pair("ga-1", doc_id="doc-1"))
        pairs = upsert_ga_pair(pairs, make_pair("ga-2", doc_id="doc-2"))
        assert len(pairs) == 2

    def test_update_preserves_generated_source(self):
        existing = make_pair("ga-1", source=PairSource.GENERATED)
        updated = upsert_ga_pair([existing], make_pair("ga-1", enabled=False))
        assert updated[0].source is PairSource.GENERATED
        assert updated[0].enabled is False

    def test_update_to_colliding_key_rejected(self):
        pairs = [make_pair("ga-1", genre="G1"), make_pair("ga-2", genre="G2")]
        with pytest.raises(DuplicatePairError):
            upsert_ga_pair(pairs, make_pair("ga-2", genre="G1"))

    def test_update_keeping_own_key_allowed(self):
        pairs = [make_pair("ga-1", genre="G1")]
        updated = upsert_ga_pair(pairs, make_pair("ga-1", genre="G1", enabled=False))
        assert len(updated) == 1

    def test_delete_then_get_not_found(self):
        pairs = upsert_ga_pair([], make_pair("ga-1"))
        pairs = delete_ga_pair(pairs, "ga-1")
        with pytest.raises(NotFoundError):
            get_ga_pair(pairs, "ga-1")

    def test_delete_missing_not_found(self):
        with pytest.raises(NotFoundError):
            delete_ga_pair([], "ga-x")

    def test_uniqueness_holds_under_operation_sequences(self):
        pairs: list[GAPair] = []
        ops = [
            ("up", make_pair("ga-1", genre="G1")),
            ("up", make_pair("ga-2", genre="G2")),
            ("up", make_pair("ga-1", genre="G1", enabled=False)),
            ("del", "ga-2"),
            ("up", make_pair("ga-3", genre="G2")),
            ("up", make_pair("ga-4", genre="G3", doc_id="doc-2")),
        ]
        for kind, arg in ops:
            pairs = upsert_ga_pair(pairs, arg) if kind == "up" else delete_ga_pair(pairs, arg)
            seen = [(p.doc_id, p.key) for p in pairs]
            assert len(seen) == len(set(seen))
