"""Genre/audience persona synthesis and manual curation.

Each document gets a set of (genre, audience) pairings that condition the
style of later question and answer generation. Pairs come from the model or
from the user; both live in the same collection under one uniqueness rule.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum

from .errors import (
    DuplicatePairError,
    InsufficientPersonasError,
    NotFoundError,
    ParseError,
)
from .ingest import ParsedDocument
from .llm import ChatRequest, ModelProfile
from .util import extract_json_array, load_prompt, random_id, render_template

DEFAULT_PERSONA_COUNT = 5
PERSONA_DIGEST_CHARS = 4000


class PairSource(str, Enum):
    GENERATED = "Generated"
    MANUAL = "Manual"


@dataclass(frozen=True)
class GAPair:
    id: str
    doc_id: str
    genre_name: str
    genre_description: str
    audience_name: str
    audience_description: str
    enabled: bool = True
    source: PairSource = PairSource.GENERATED

    def __post_init__(self):
        if not self.genre_name.strip():
            raise ValueError("genre_name must be non-empty")
        if not self.audience_name.strip():
            raise ValueError("audience_name must be non-empty")

    @property
    def key(self) -> tuple[str, str]:
        return (self.genre_name, self.audience_name)


def _parse_pair_element(element) -> tuple[str, str, str, str] | None:
    """Pull (genre name, genre desc, audience name, audience desc) out of one
    response element, or None when the element does not carry both names."""
    if not isinstance(element, dict):
        return None
    genre = element.get("genre")
    audience = element.get("audience")
    if not isinstance(genre, dict) or not isinstance(audience, dict):
        return None
    g_name = str(genre.get("name") or "").strip()
    a_name = str(audience.get("name") or "").strip()
    if not g_name or not a_name:
        return None
    g_desc = str(genre.get("description") or "").strip()
    a_desc = str(audience.get("description") or "").strip()
    return g_name, g_desc, a_name, a_desc


def generate_ga_pairs(
    doc: ParsedDocument,
    n: int,
    profile: ModelProfile,
    client,
    template: str | None = None,
    digest_chars: int = PERSONA_DIGEST_CHARS,
    make_id=None,
) -> list[GAPair]:
    """Ask the model for n distinct pairings derived from a document digest.

    Invalid elements and duplicate (genre, audience) keys in the response are
    dropped; the result is capped at n. Raises InsufficientPersonasError when
    nothing usable remains.
    """
    if not doc.text:
        raise ValueError("document text must be non-empty")
    if n < 1:
        raise ValueError("n must be >= 1")
    if template is None:
        template = load_prompt("persona")
    make_id = make_id or random_id

    prompt = render_template(
        template, {"document": doc.text[:digest_chars], "n": str(n)}
    )
    response = client.complete(profile, ChatRequest(user=prompt))
    try:
        elements = extract_json_array(response.content)
    except ValueError as exc:
        raise ParseError(f"persona response held no JSON array: {exc}") from exc

    pairs: list[GAPair] = []
    seen: set[tuple[str, str]] = set()
    for element in elements:
        parsed = _parse_pair_element(element)
        if parsed is None:
            continue
        g_name, g_desc, a_name, a_desc = parsed
        if (g_name, a_name) in seen:
            continue
        seen.add((g_name, a_name))
        pairs.append(
            GAPair(
                id=make_id("ga"),
                doc_id=doc.id,
                genre_name=g_name,
                genre_description=g_desc,
                audience_name=a_name,
                audience_description=a_desc,
            )
        )
        if len(pairs) == n:
            break
    if not pairs:
        raise InsufficientPersonasError(
            "no valid genre/audience pairs in model response"
        )
    return pairs


def upsert_ga_pair(pairs: list[GAPair], pair: GAPair) -> list[GAPair]:
    """Insert or update within one document's collection.

    New ids are stored as Manual; updates keep the stored source so toggling
    `enabled` on a generated pair does not relabel it.
    """
    for other in pairs:
        if other.doc_id == pair.doc_id and other.id != pair.id and other.key == pair.key:
            raise DuplicatePairError(
                f"({pair.genre_name!r}, {pair.audience_name!r}) already exists "
                f"for document {pair.doc_id}"
            )
    out = []
    updated = False
    for other in pairs:
        if other.id == pair.id:
            out.append(replace(pair, source=other.source))
            updated = True
        else:
            out.append(other)
    if not updated:
        out.append(replace(pair, source=PairSource.MANUAL))
    return out


def delete_ga_pair(pairs: list[GAPair], pair_id: str) -> list[GAPair]:
    out = [p for p in pairs if p.id != pair_id]
    if len(out) == len(pairs):
        raise NotFoundError(f"persona {pair_id} not found")
    return out


def get_ga_pair(pairs: list[GAPair], pair_id: str) -> GAPair:
    for pair in pairs:
        if pair.id == pair_id:
            return pair
    raise NotFoundError(f"persona {pair_id} not found")


def persona_fixture_json(pairs: list[GAPair]) -> str:
    """Serialize pairs in the response shape the generator parses. Used to
    build mock fixture files from known-good personas."""
    elements = [
        {
            "genre": {"name": p.genre_name, "description": p.genre_description},
            "audience": {"name": p.audience_name, "description": p.audience_description},
        }
        for p in pairs
    ]
    return json.dumps(elements, ensure_ascii=False, indent=2)
