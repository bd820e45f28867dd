"""Document ingestion: format detection and conversion to normalized text.

Plain text and Markdown pass through untouched apart from CRLF -> LF
normalization (the only mutation, so chunk offsets stay stable across
platforms). Binary formats are delegated to external converter commands
that read an input file and write Markdown to an output file.
"""

from __future__ import annotations

import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable

from .errors import (
    AdapterFailedError,
    EmptyDocumentError,
    InvalidUtf8Error,
    NoAdapterError,
    UnsupportedFormatError,
)
from .util import now_utc, random_id

DEFAULT_ADAPTER_TIMEOUT = 120.0
SNIFF_BYTES = 4096


class DocumentFormat(str, Enum):
    PLAIN_TEXT = "plain_text"
    MARKDOWN = "markdown"
    DOCX = "docx"
    PDF = "pdf"


_EXTENSION_MAP = {
    ".txt": DocumentFormat.PLAIN_TEXT,
    ".md": DocumentFormat.MARKDOWN,
    ".markdown": DocumentFormat.MARKDOWN,
    ".docx": DocumentFormat.DOCX,
    ".pdf": DocumentFormat.PDF,
}


@dataclass(frozen=True)
class ConverterAdapter:
    """External converter: reads {input}, writes Markdown to {output}."""

    name: str
    formats: frozenset[DocumentFormat]
    command_template: str
    timeout: float = DEFAULT_ADAPTER_TIMEOUT

    def __post_init__(self):
        object.__setattr__(self, "formats", frozenset(self.formats))
        tokens = self.command_template.split()
        for placeholder in ("{input}", "{output}"):
            if tokens.count(placeholder) != 1:
                raise ValueError(
                    f"command_template must contain {placeholder} exactly once"
                )


@dataclass
class ParsedDocument:
    id: str
    source_path: str
    format: DocumentFormat
    text: str
    parser_name: str
    parsed_at: datetime = field(default_factory=now_utc)


def _sniff_is_utf8(sniff: bytes) -> bool:
    try:
        sniff.decode("utf-8")
        return True
    except UnicodeDecodeError as exc:
        # A multibyte sequence cut off at the sniff boundary is not evidence
        # of a binary file.
        return exc.start >= len(sniff) - 3


def detect_format(path: str, content_sniff: bytes | None = None) -> DocumentFormat:
    """Map a path to its document format; extension wins, UTF-8 content
    under an unknown extension falls back to plain text."""
    if not path:
        raise ValueError("path must be non-empty")
    ext = Path(path).suffix.lower()
    if ext in _EXTENSION_MAP:
        return _EXTENSION_MAP[ext]
    if content_sniff is None:
        try:
            with open(path, "rb") as fh:
                content_sniff = fh.read(SNIFF_BYTES)
        except OSError:
            content_sniff = b""
    if _sniff_is_utf8(content_sniff):
        return DocumentFormat.PLAIN_TEXT
    raise UnsupportedFormatError(f"unknown extension {ext!r} and non-UTF-8 content")


def _decode_utf8(data: bytes, source: str) -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InvalidUtf8Error(f"{source}: {exc}") from exc


def _run_adapter(adapter: ConverterAdapter, source: Path) -> str:
    with tempfile.TemporaryDirectory(prefix="docforge-adapter-") as tmp:
        tmp_dir = Path(tmp)
        input_path = tmp_dir / f"input{source.suffix}"
        output_path = tmp_dir / "output.md"
        shutil.copyfile(source, input_path)
        argv = [
            str(input_path) if tok == "{input}" else
            str(output_path) if tok == "{output}" else tok
            for tok in adapter.command_template.split()
        ]
        try:
            proc = subprocess.run(
                argv, capture_output=True, timeout=adapter.timeout
            )
        except subprocess.TimeoutExpired as exc:
            stderr = (exc.stderr or b"").decode("utf-8", "replace")
            raise AdapterFailedError(
                f"adapter {adapter.name!r} timed out after {adapter.timeout}s",
                stderr=stderr,
            ) from exc
        except OSError as exc:
            raise AdapterFailedError(
                f"adapter {adapter.name!r} could not be executed: {exc}"
            ) from exc
        if proc.returncode != 0:
            stderr = proc.stderr.decode("utf-8", "replace")
            raise AdapterFailedError(
                f"adapter {adapter.name!r} exited with code {proc.returncode}",
                stderr=stderr,
            )
        if not output_path.exists():
            raise AdapterFailedError(
                f"adapter {adapter.name!r} produced no output file"
            )
        return _decode_utf8(output_path.read_bytes(), str(output_path))


def parse_document(
    path: str,
    adapters: Iterable[ConverterAdapter] = (),
    make_id: Callable[[], str] | None = None,
) -> ParsedDocument:
    """Parse one file into a ParsedDocument, all-or-nothing.

    Text formats are read directly; docx/pdf go through the first adapter
    that claims the format.
    """
    make_id = make_id or (lambda: random_id("doc"))
    source = Path(path)
    data = source.read_bytes()
    fmt = detect_format(path, data[:SNIFF_BYTES])

    if fmt in (DocumentFormat.PLAIN_TEXT, DocumentFormat.MARKDOWN):
        text = _decode_utf8(data, path)
        parser_name = "passthrough"
    else:
        adapter = next((a for a in adapters if fmt in a.formats), None)
        if adapter is None:
            raise NoAdapterError(f"no converter registered for {fmt.value}")
        text = _run_adapter(adapter, source)
        parser_name = adapter.name

    text = text.replace("\r\n", "\n")
    if not text:
        raise EmptyDocumentError(f"{path}: parse produced empty text")
    return ParsedDocument(
        id=make_id(),
        source_path=str(path),
        format=fmt,
        text=text,
        parser_name=parser_name,
    )
