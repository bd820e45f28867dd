"""Small shared helpers: JSON extraction, atomic file writes, ids, templates."""

from __future__ import annotations

import json
import os
import re
import tempfile
import uuid
from datetime import datetime, timezone
from pathlib import Path


def now_utc() -> datetime:
    return datetime.now(timezone.utc)


def random_id(prefix: str = "") -> str:
    token = uuid.uuid4().hex[:12]
    return f"{prefix}-{token}" if prefix else token


def slugify(name: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")
    return slug or "project"


def extract_json_array(text: str) -> list:
    """Return the first parseable JSON array found anywhere in *text*.

    Tolerates markdown fences and surrounding prose: every '[' is tried as a
    potential array start and the first successful parse wins.
    """
    decoder = json.JSONDecoder()
    for pos, ch in enumerate(text):
        if ch != "[":
            continue
        try:
            value, _ = decoder.raw_decode(text, pos)
        except ValueError:
            continue
        if isinstance(value, list):
            return value
    raise ValueError("no JSON array found in text")


def render_template(template: str, values: dict[str, str]) -> str:
    """Substitute ``{key}`` placeholders in a single pass.

    A single regex pass means substituted payloads are never re-scanned, so
    placeholder-looking text inside a payload stays untouched.
    """
    keys = sorted(values, key=len, reverse=True)
    pattern = re.compile(r"\{(" + "|".join(re.escape(k) for k in keys) + r")\}")
    return pattern.sub(lambda m: values[m.group(1)], template)


def load_prompt(name: str) -> str:
    """Read a packaged prompt template by stem name."""
    from importlib import resources

    root = resources.files("docforge")
    return root.joinpath("prompts").joinpath(f"{name}.txt").read_text(encoding="utf-8")


def atomic_write_text(path: Path, content: str) -> None:
    """Write a file so a crash mid-write never leaves a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(content)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def atomic_write_json(path: Path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, ensure_ascii=False, indent=2) + "\n")


def derive_seed(*parts) -> int:
    """Stable 64-bit seed derived from arbitrary string/int parts."""
    import hashlib

    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")
