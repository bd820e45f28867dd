"""Dataset serialization: Alpaca, ShareGPT, or custom-mapped records written
as JSON, JSONL, or CSV, plus a trainer dataset-registry config.

Output is byte-deterministic for a given project state: records are ordered
by pair id and every serialized key has a fixed position. Reasoning traces
are folded into the output text between configurable think tags when CoT
export is enabled.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import EmptySelectionError, ExcludedError
from .persona import GAPair
from .qagen import QAPair, ReviewStatus
from .util import atomic_write_text

CSV_HEADER = ("question", "answer", "reasoning", "chunk_id", "genre", "audience",
              "status")

# fields a custom template may reference
RECORD_FIELDS = ("question", "answer", "output", "reasoning", "chunk_id",
                 "genre", "audience", "status", "model")


class ExportFormat(str, Enum):
    JSON = "Json"
    JSONL = "Jsonl"
    CSV = "Csv"


class ExportSchema(str, Enum):
    ALPACA = "Alpaca"
    SHAREGPT = "ShareGpt"
    CUSTOM = "Custom"


DEFAULT_STATUSES = frozenset({ReviewStatus.APPROVED, ReviewStatus.EDITED})


@dataclass(frozen=True)
class ExportConfig:
    format: ExportFormat = ExportFormat.JSONL
    schema: ExportSchema = ExportSchema.ALPACA
    include_cot: bool = False
    cot_open_tag: str = "<think>"
    cot_close_tag: str = "</think>"
    system_prompt: str | None = None
    custom_template: dict | None = None
    statuses_included: frozenset = DEFAULT_STATUSES

    def __post_init__(self):
        object.__setattr__(
            self,
            "statuses_included",
            frozenset(ReviewStatus(s) for s in self.statuses_included),
        )
        if not self.statuses_included:
            raise ValueError("statuses_included must be non-empty")
        if self.schema is ExportSchema.CUSTOM:
            if not self.custom_template:
                raise ValueError("Custom schema requires custom_template")
            bad = [v for v in self.custom_template.values() if v not in RECORD_FIELDS]
            if bad:
                raise ValueError(
                    f"custom_template references unknown fields {bad}; "
                    f"known: {list(RECORD_FIELDS)}"
                )


@dataclass(frozen=True)
class AlpacaRecord:
    instruction: str
    input: str
    output: str
    system: str | None = None

    def __post_init__(self):
        if not self.instruction:
            raise ValueError("instruction must be non-empty")
        if not self.output:
            raise ValueError("output must be non-empty")

    def to_dict(self) -> dict:
        record = {"instruction": self.instruction, "input": self.input,
                  "output": self.output}
        if self.system is not None:
            record["system"] = self.system
        return record


@dataclass(frozen=True)
class ShareGptRecord:
    conversations: tuple = ()

    def __post_init__(self):
        object.__setattr__(
            self, "conversations", tuple(dict(t) for t in self.conversations)
        )
        turns = self.conversations
        if turns and turns[0]["from"] == "system":
            turns = turns[1:]
        roles = [t["from"] for t in turns]
        if roles != ["human", "gpt"]:
            raise ValueError(
                "conversations must be an optional system turn, then exactly "
                f"one human and one gpt turn; got {[t['from'] for t in self.conversations]}"
            )

    def to_dict(self) -> dict:
        return {"conversations": [dict(t) for t in self.conversations]}


@dataclass(frozen=True)
class ExportReport:
    files: tuple[str, ...]
    record_count: int


def compose_output(pair: QAPair, cfg: ExportConfig) -> str:
    if cfg.include_cot and pair.reasoning:
        return (
            f"{cfg.cot_open_tag}{pair.reasoning}{cfg.cot_close_tag}\n"
            f"{pair.answer_text}"
        )
    return pair.answer_text


def _check_included(pair: QAPair, cfg: ExportConfig):
    if pair.review_status not in cfg.statuses_included:
        raise ExcludedError(
            f"pair {pair.id} has status {pair.review_status.value}, "
            f"not in export selection"
        )


def to_alpaca(pair: QAPair, cfg: ExportConfig) -> AlpacaRecord:
    _check_included(pair, cfg)
    return AlpacaRecord(
        instruction=pair.question.text,
        input="",
        output=compose_output(pair, cfg),
        system=cfg.system_prompt,
    )


def to_sharegpt(pair: QAPair, cfg: ExportConfig) -> ShareGptRecord:
    _check_included(pair, cfg)
    turns = []
    if cfg.system_prompt is not None:
        turns.append({"from": "system", "value": cfg.system_prompt})
    turns.append({"from": "human", "value": pair.question.text})
    turns.append({"from": "gpt", "value": compose_output(pair, cfg)})
    return ShareGptRecord(conversations=tuple(turns))


def flat_record(pair: QAPair, persona: GAPair | None, cfg: ExportConfig) -> dict:
    """Every field a CSV row or custom template can draw from."""
    return {
        "question": pair.question.text,
        "answer": pair.answer_text,
        "output": compose_output(pair, cfg),
        "reasoning": pair.reasoning,
        "chunk_id": pair.question.chunk_id,
        "genre": persona.genre_name if persona else "",
        "audience": persona.audience_name if persona else "",
        "status": pair.review_status.value,
        "model": pair.model_name,
    }


def to_custom(pair: QAPair, persona: GAPair | None, cfg: ExportConfig) -> dict:
    _check_included(pair, cfg)
    flat = flat_record(pair, persona, cfg)
    return {key: flat[src] for key, src in cfg.custom_template.items()}


def export_dataset(
    pairs: list[QAPair],
    cfg: ExportConfig,
    out_path: str | Path,
    personas: list[GAPair] = (),
) -> ExportReport:
    """Write one dataset file; records ordered by pair id."""
    out_path = Path(out_path)
    included = sorted(
        (p for p in pairs if p.review_status in cfg.statuses_included),
        key=lambda p: p.id,
    )
    if not included:
        raise EmptySelectionError("no QA pairs match the export selection")
    persona_by_id = {p.id: p for p in personas}

    def persona_of(pair: QAPair) -> GAPair | None:
        if pair.question.persona_id is None:
            return None
        return persona_by_id.get(pair.question.persona_id)

    if cfg.format is ExportFormat.CSV:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for pair in included:
            flat = flat_record(pair, persona_of(pair), cfg)
            writer.writerow(
                [
                    flat["question"],
                    flat["answer"],
                    flat["reasoning"] or "",
                    flat["chunk_id"],
                    flat["genre"],
                    flat["audience"],
                    flat["status"],
                ]
            )
        atomic_write_text(out_path, buffer.getvalue())
        return ExportReport(files=(str(out_path),), record_count=len(included))

    if cfg.schema is ExportSchema.ALPACA:
        records = [to_alpaca(p, cfg).to_dict() for p in included]
    elif cfg.schema is ExportSchema.SHAREGPT:
        records = [to_sharegpt(p, cfg).to_dict() for p in included]
    else:
        records = [to_custom(p, persona_of(p), cfg) for p in included]

    if cfg.format is ExportFormat.JSON:
        content = json.dumps(records, ensure_ascii=False, indent=2) + "\n"
    else:
        content = "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)
    atomic_write_text(out_path, content)
    return ExportReport(files=(str(out_path),), record_count=len(included))


_ALPACA_COLUMNS = {"prompt": "instruction", "query": "input", "response": "output",
                   "system": "system"}
_SHAREGPT_COLUMNS = {"messages": "conversations"}
_SHAREGPT_TAGS = {"role_tag": "from", "content_tag": "value", "user_tag": "human",
                  "assistant_tag": "gpt", "system_tag": "system"}


def emit_trainer_config(
    export_files: list[str | Path],
    schema: ExportSchema,
    out_path: str | Path,
) -> Path:
    """Write a dataset registry mapping each exported file to a named entry
    with its formatting and column layout."""
    if not export_files:
        raise ValueError("at least one exported file required")
    out_path = Path(out_path)
    registry = {}
    for file_path in export_files:
        file_path = Path(file_path)
        name = file_path.stem
        if name in registry:
            name = f"{name}_{len(registry)}"
        if schema is ExportSchema.ALPACA:
            entry = {
                "file_name": file_path.name,
                "formatting": "alpaca",
                "columns": dict(_ALPACA_COLUMNS),
            }
        elif schema is ExportSchema.SHAREGPT:
            entry = {
                "file_name": file_path.name,
                "formatting": "sharegpt",
                "columns": dict(_SHAREGPT_COLUMNS),
                "tags": dict(_SHAREGPT_TAGS),
            }
        else:
            entry = {"file_name": file_path.name, "formatting": "alpaca"}
        registry[name] = entry
    atomic_write_text(
        out_path, json.dumps(registry, ensure_ascii=False, indent=2) + "\n"
    )
    return out_path
