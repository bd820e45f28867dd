"""Hybrid chunking: coarse line-break segmentation, recursive delimiter
splitting of oversize segments, and merging of undersize neighbours.

All lengths count Unicode code points, never bytes. Delimiters stay attached
to the piece on their left, which makes concatenation of the chunk texts
reproduce the input exactly without any reconstruction rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

from .errors import (
    ChunkConfigError,
    IndexOutOfRangeError,
    NotAdjacentError,
    OffsetOutOfRangeError,
)
from .util import random_id

DEFAULT_MAX_LEN = 1500
DEFAULT_MIN_LEN = 300
DEFAULT_DELIMITERS = ("\n\n", "\n", ". ", "。", " ")


class ChunkOrigin(str, Enum):
    AUTO = "auto"
    MANUAL_SPLIT = "manual_split"
    MANUAL_MERGE = "manual_merge"


@dataclass(frozen=True)
class ChunkConfig:
    max_len: int = DEFAULT_MAX_LEN
    min_len: int = DEFAULT_MIN_LEN
    delimiters: tuple[str, ...] = DEFAULT_DELIMITERS

    def __post_init__(self):
        object.__setattr__(self, "delimiters", tuple(self.delimiters))
        if self.max_len <= 0:
            raise ChunkConfigError("max_len must be positive")
        if self.min_len < 0:
            raise ChunkConfigError("min_len must be non-negative")
        if self.min_len > self.max_len:
            raise ChunkConfigError("min_len must not exceed max_len")
        if not self.delimiters:
            raise ChunkConfigError("delimiters must not be empty")
        if any(not d for d in self.delimiters):
            raise ChunkConfigError("delimiters must be non-empty strings")
        if len(set(self.delimiters)) != len(self.delimiters):
            raise ChunkConfigError("delimiters must not contain duplicates")


@dataclass(frozen=True)
class Chunk:
    id: str
    doc_id: str
    start: int
    end: int
    text: str
    origin: ChunkOrigin = ChunkOrigin.AUTO

    def __post_init__(self):
        if self.start >= self.end:
            raise ValueError("chunk must span a non-empty range")
        if len(self.text) != self.end - self.start:
            raise ValueError("chunk text length must match its offsets")


def _coarse_segments(text: str) -> list[str]:
    """Split after every newline; each segment keeps its trailing newline."""
    parts = text.split("\n")
    segments = [part + "\n" for part in parts[:-1]]
    if parts[-1]:
        segments.append(parts[-1])
    return segments


def _split_oversize(segment: str, cfg: ChunkConfig) -> list[str]:
    """Cut a segment into pieces of at most max_len characters.

    Each cut uses the highest-priority delimiter that fits entirely inside
    the first max_len characters, at its latest such occurrence, so the left
    piece is as long as possible while staying within the limit. When no
    delimiter fits, the cut falls back to exactly max_len characters.
    """
    pieces: list[str] = []
    rest = segment
    while len(rest) > cfg.max_len:
        cut = -1
        for delim in cfg.delimiters:
            found = rest.rfind(delim, 0, cfg.max_len)
            if found != -1:
                cut = found + len(delim)
                break
        if cut == -1:
            cut = cfg.max_len
        pieces.append(rest[:cut])
        rest = rest[cut:]
    if rest:
        pieces.append(rest)
    return pieces


def _merge_segments(segments: Sequence[str], cfg: ChunkConfig) -> list[str]:
    """Accumulate neighbours left to right.

    The accumulator is emitted when appending the next segment would push it
    past max_len, or when both the accumulator and the next segment already
    reach min_len on their own. The final accumulator is emitted as-is.
    """
    merged: list[str] = []
    acc = ""
    for seg in segments:
        if not acc:
            acc = seg
        elif len(acc) + len(seg) > cfg.max_len:
            merged.append(acc)
            acc = seg
        elif len(acc) >= cfg.min_len and len(seg) >= cfg.min_len:
            merged.append(acc)
            acc = seg
        else:
            acc += seg
    if acc:
        merged.append(acc)
    return merged


def chunk_text(
    text: str,
    cfg: ChunkConfig | None = None,
    doc_id: str = "",
    make_id: Callable[[], str] | None = None,
) -> list[Chunk]:
    """Run the three chunking passes over *text* and return ordered chunks.

    The result is deterministic, concatenates back to the input exactly, and
    every chunk is at most cfg.max_len characters long.
    """
    cfg = cfg or ChunkConfig()
    make_id = make_id or (lambda: random_id("ch"))
    if not text:
        return []

    segments: list[str] = []
    for coarse in _coarse_segments(text):
        if len(coarse) > cfg.max_len:
            segments.extend(_split_oversize(coarse, cfg))
        else:
            segments.append(coarse)

    chunks: list[Chunk] = []
    offset = 0
    for piece in _merge_segments(segments, cfg):
        chunks.append(
            Chunk(
                id=make_id(),
                doc_id=doc_id,
                start=offset,
                end=offset + len(piece),
                text=piece,
                origin=ChunkOrigin.AUTO,
            )
        )
        offset += len(piece)
    return chunks


def split_chunk(
    chunks: Sequence[Chunk],
    index: int,
    offset: int,
    make_id: Callable[[], str] | None = None,
) -> list[Chunk]:
    """Split chunks[index] at a character offset within its text.

    Both halves get origin=manual_split; all other chunks keep their ids.
    """
    make_id = make_id or (lambda: random_id("ch"))
    if index < 0 or index >= len(chunks):
        raise IndexOutOfRangeError(f"chunk index {index} out of range")
    target = chunks[index]
    if offset <= 0 or offset >= len(target.text):
        raise OffsetOutOfRangeError(
            f"split offset {offset} must be inside (0, {len(target.text)})"
        )
    left = Chunk(
        id=make_id(),
        doc_id=target.doc_id,
        start=target.start,
        end=target.start + offset,
        text=target.text[:offset],
        origin=ChunkOrigin.MANUAL_SPLIT,
    )
    right = Chunk(
        id=make_id(),
        doc_id=target.doc_id,
        start=target.start + offset,
        end=target.end,
        text=target.text[offset:],
        origin=ChunkOrigin.MANUAL_SPLIT,
    )
    return list(chunks[:index]) + [left, right] + list(chunks[index + 1 :])


def merge_chunks(
    chunks: Sequence[Chunk],
    i: int,
    j: int,
    make_id: Callable[[], str] | None = None,
) -> list[Chunk]:
    """Merge two adjacent chunks into one spanning both.

    Manual merges may exceed max_len; that is the user's call to make.
    """
    make_id = make_id or (lambda: random_id("ch"))
    if i < 0 or j < 0 or i >= len(chunks) or j >= len(chunks):
        raise IndexOutOfRangeError(f"chunk indices ({i}, {j}) out of range")
    if j != i + 1:
        raise NotAdjacentError("only adjacent chunks can be merged")
    left, right = chunks[i], chunks[j]
    if left.end != right.start or left.doc_id != right.doc_id:
        raise NotAdjacentError("chunks are not contiguous")
    merged = Chunk(
        id=make_id(),
        doc_id=left.doc_id,
        start=left.start,
        end=right.end,
        text=left.text + right.text,
        origin=ChunkOrigin.MANUAL_MERGE,
    )
    return list(chunks[:i]) + [merged] + list(chunks[j + 1 :])


def validate_chunk_list(chunks: Sequence[Chunk], text: str) -> None:
    """Raise ValueError unless chunks tile the document text exactly."""
    if not chunks:
        if text:
            raise ValueError("non-empty text has no chunks")
        return
    if chunks[0].start != 0:
        raise ValueError("first chunk must start at offset 0")
    if chunks[-1].end != len(text):
        raise ValueError("last chunk must end at the text length")
    pos = 0
    for chunk in chunks:
        if chunk.start != pos:
            raise ValueError(f"gap or overlap at offset {pos}")
        if text[chunk.start : chunk.end] != chunk.text:
            raise ValueError(f"chunk {chunk.id} text does not match document slice")
        pos = chunk.end
