"""Question and answer generation over chunks, with optional persona
conditioning, punctuation dropout, and model-driven answer refinement.

Questions come back as JSON arrays and are trimmed; answers keep their
reasoning trace separate from the displayed text. Each QA pair carries its
full version history so refinement never destroys an earlier answer.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum

from .chunker import Chunk
from .errors import EmptyAnswerError, EmptyGenerationError, ParseError
from .llm import ChatRequest, ModelProfile
from .persona import GAPair
from .util import (
    derive_seed,
    extract_json_array,
    load_prompt,
    now_utc,
    random_id,
    render_template,
)

DEFAULT_QUESTIONS_PER_CHUNK = 3
DEFAULT_DROPOUT_PROB = 0.2


class AnswerStyle(str, Enum):
    CONCISE = "Concise"
    DETAILED = "Detailed"
    EXPLANATORY = "Explanatory"


class ReviewStatus(str, Enum):
    PENDING = "Pending"
    APPROVED = "Approved"
    EDITED = "Edited"
    REJECTED = "Rejected"


@dataclass(frozen=True)
class Question:
    id: str
    chunk_id: str
    text: str
    persona_id: str | None = None
    dropout_applied: bool = False

    def __post_init__(self):
        if not self.text:
            raise ValueError("question text must be non-empty")


@dataclass(frozen=True)
class AnswerVersion:
    answer_text: str
    reasoning: str | None
    model_name: str
    created_at: datetime


@dataclass(frozen=True)
class QAPair:
    id: str
    question: Question
    answer_text: str
    reasoning: str | None
    review_status: ReviewStatus
    created_at: datetime
    model_name: str
    history: tuple[AnswerVersion, ...] = ()

    def __post_init__(self):
        if self.review_status is not ReviewStatus.REJECTED and not self.answer_text:
            raise ValueError("answer_text must be non-empty unless Rejected")


_TEMPLATE_REQUIREMENTS = {
    "question_prompt": ("{chunk}", "{n}"),
    "answer_prompt": ("{question}", "{chunk}"),
    "refine_prompt": ("{question}", "{answer}"),
}


@dataclass(frozen=True)
class GenConfig:
    questions_per_chunk: int = DEFAULT_QUESTIONS_PER_CHUNK
    dropout_prob: float = DEFAULT_DROPOUT_PROB
    rng_seed: int = 0
    answer_style: AnswerStyle = AnswerStyle.CONCISE
    question_prompt: str = field(default_factory=lambda: load_prompt("question"))
    answer_prompt: str = field(default_factory=lambda: load_prompt("answer"))
    refine_prompt: str = field(default_factory=lambda: load_prompt("refine"))

    def __post_init__(self):
        if self.questions_per_chunk < 1:
            raise ValueError("questions_per_chunk must be positive")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must be in [0, 1]")
        for attr, needed in _TEMPLATE_REQUIREMENTS.items():
            template = getattr(self, attr)
            missing = [ph for ph in needed if ph not in template]
            if missing:
                raise ValueError(f"{attr} missing placeholders: {missing}")


def persona_block(persona: GAPair | None) -> str:
    """Render the conditioning block substituted for {persona}.

    Naive mode gets the empty string so the surrounding prompt reads
    naturally without a persona.
    """
    if persona is None:
        return ""
    return (
        f"Write for this genre and audience.\n"
        f"Genre: {persona.genre_name}. {persona.genre_description}\n"
        f"Audience: {persona.audience_name}. {persona.audience_description}\n\n"
    )


def apply_punctuation_dropout(text: str, p: float, rng: random.Random) -> str:
    """With probability p, strip trailing question marks and whitespace.

    Exactly one rng draw is consumed per call even when p is 0 or the text
    has no trailing mark, so question sequences stay aligned with the seed.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    draw = rng.random()
    if draw >= p:
        return text
    stripped = text.rstrip()
    while stripped.endswith(("?", "？")):
        stripped = stripped[:-1].rstrip()
    return stripped


def _dropout_rng(cfg: GenConfig, chunk: Chunk, persona: GAPair | None) -> random.Random:
    persona_part = persona.id if persona else "naive"
    return random.Random(derive_seed(cfg.rng_seed, chunk.id, persona_part))


def generate_questions(
    chunk: Chunk,
    persona: GAPair | None,
    cfg: GenConfig,
    profile: ModelProfile,
    client,
    make_id=None,
) -> list[Question]:
    """Ask for questions_per_chunk questions grounded in one chunk."""
    if not chunk.text:
        raise ValueError("chunk text must be non-empty")
    if persona is not None and not persona.enabled:
        raise ValueError(f"persona {persona.id} is disabled")
    make_id = make_id or random_id

    prompt = render_template(
        cfg.question_prompt,
        {
            "chunk": chunk.text,
            "n": str(cfg.questions_per_chunk),
            "persona": persona_block(persona),
        },
    )
    response = client.complete(profile, ChatRequest(user=prompt))
    try:
        items = extract_json_array(response.content)
    except ValueError as exc:
        raise ParseError(f"question response held no JSON array: {exc}") from exc

    texts = [item.strip() for item in items if isinstance(item, str) and item.strip()]
    if not texts:
        raise EmptyGenerationError("model returned zero usable questions")

    rng = _dropout_rng(cfg, chunk, persona)
    questions = []
    for text in texts:
        dropped = apply_punctuation_dropout(text, cfg.dropout_prob, rng)
        questions.append(
            Question(
                id=make_id("q"),
                chunk_id=chunk.id,
                text=dropped,
                persona_id=persona.id if persona else None,
                dropout_applied=dropped != text,
            )
        )
    return questions


def generate_answer(
    question: Question,
    chunk: Chunk,
    persona: GAPair | None,
    cfg: GenConfig,
    profile: ModelProfile,
    client,
    make_id=None,
) -> QAPair:
    """Answer one question against its source chunk."""
    if question.chunk_id != chunk.id:
        raise ValueError(
            f"question {question.id} belongs to chunk {question.chunk_id}, "
            f"not {chunk.id}"
        )
    make_id = make_id or random_id

    prompt = render_template(
        cfg.answer_prompt,
        {
            "question": question.text,
            "chunk": chunk.text,
            "persona": persona_block(persona),
            "style": cfg.answer_style.value.lower(),
        },
    )
    response = client.complete(profile, ChatRequest(user=prompt))
    answer_text = response.content.strip()
    if not answer_text:
        raise EmptyAnswerError(f"empty answer for question {question.id}")
    created = now_utc()
    version = AnswerVersion(
        answer_text=answer_text,
        reasoning=response.reasoning,
        model_name=profile.model_name,
        created_at=created,
    )
    return QAPair(
        id=make_id("qa"),
        question=question,
        answer_text=answer_text,
        reasoning=response.reasoning,
        review_status=ReviewStatus.PENDING,
        created_at=created,
        model_name=profile.model_name,
        history=(version,),
    )


def refine_answer(pair: QAPair, cfg: GenConfig, profile: ModelProfile, client) -> QAPair:
    """Produce the next answer version and reopen the pair for review."""
    if not pair.answer_text:
        raise ValueError("cannot refine a pair with no answer")

    prompt = render_template(
        cfg.refine_prompt,
        {"question": pair.question.text, "answer": pair.answer_text},
    )
    response = client.complete(profile, ChatRequest(user=prompt))
    answer_text = response.content.strip()
    if not answer_text:
        raise EmptyAnswerError(f"refinement emptied answer for pair {pair.id}")
    reasoning = response.reasoning if response.reasoning is not None else pair.reasoning
    version = AnswerVersion(
        answer_text=answer_text,
        reasoning=reasoning,
        model_name=profile.model_name,
        created_at=now_utc(),
    )
    return replace(
        pair,
        answer_text=answer_text,
        reasoning=reasoning,
        review_status=ReviewStatus.PENDING,
        model_name=profile.model_name,
        history=pair.history + (version,),
    )
