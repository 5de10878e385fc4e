"""Digests, deterministic seed derivation, and stable JSON helpers."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def short_digest(*parts: str, length: int = 12) -> str:
    """Stable short hex digest over the given string parts."""
    h = hashlib.blake2b(digest_size=16)
    for part in parts:
        h.update(part.encode("utf-8"))
        h.update(b"\x1f")
    return h.hexdigest()[:length]


def derive_seed(seed: int, *parts: str) -> int:
    """Derive a child seed from a root seed and a label path.

    Pure function of its arguments; used so that every sampled decision in a
    run is reproducible from the single configured seed.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(seed).encode("ascii"))
    for part in parts:
        h.update(b"\x1f")
        h.update(part.encode("utf-8"))
    return int.from_bytes(h.digest(), "big")


def unit_interval_hash(*parts: str) -> float:
    """Map string parts to a deterministic float in [0, 1)."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(part.encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big") / 2.0**64


def stable_json(obj) -> str:
    """Canonical JSON used for digests and on-disk .json artifacts."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(
        json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )


def read_json(path: str | Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_jsonl(path: str | Path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
