"""Corpus ingestion and sentence-aware chunking.

Documents are split into chunks under a token budget. Splits land on sentence
boundaries unless a single sentence exceeds the budget, in which case that
sentence is hard-split at token boundaries into budget-sized standalone
chunks. Chunks never overlap and never drop tokens: the concatenated token
streams of a document's chunks equal the token stream of its body.

Tokenization is deliberately rule-based and deterministic (no model
dependency): maximal runs of word characters are one token each, and every
maximal run of non-word non-space characters (a punctuation run) is one
token. "Water boils." counts 3 tokens. Token counts are additive over
whitespace-separated concatenation, which the chunker relies on.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import ValidationError
from .util import short_digest

TokenCounter = Callable[[str], int]
SentenceSplitter = Callable[[str], list[str]]

MIN_TOKEN_BUDGET = 16
DEFAULT_TOKEN_BUDGET = 512

_TOKEN_RE = re.compile(r"\w+|[^\w\s]+", re.UNICODE)

# Sentence boundary: terminal punctuation run (optionally closed by quotes or
# brackets), whitespace, then a capitalized or numeric continuation.
_BOUNDARY_RE = re.compile(r"[.!?]+[\"')\]]*\s+(?=[\"'(\[]?[A-Z0-9])")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def count_tokens(text: str) -> int:
    """Deterministic token count under the rule-based tokenizer."""
    return len(_TOKEN_RE.findall(text))


def normalize_whitespace(text: str) -> str:
    return " ".join(text.split())


def truncate_tokens(text: str, budget: int) -> str:
    """Longest prefix of text holding at most `budget` tokens."""
    if budget < 1:
        return ""
    spans = [m.span() for m in _TOKEN_RE.finditer(text)]
    if len(spans) <= budget:
        return text
    return text[: spans[budget - 1][1]]


def split_sentences(text: str) -> list[str]:
    """Rule-based sentence split of whitespace-normalized text.

    Joining the result with single spaces reproduces the input (after
    whitespace normalization), so the chunker can re-assemble sentences
    without losing characters.
    """
    text = normalize_whitespace(text)
    if not text:
        return []
    sentences = []
    start = 0
    for match in _BOUNDARY_RE.finditer(text):
        sentences.append(text[start : match.end()].rstrip())
        start = match.end()
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


@dataclass(frozen=True)
class Document:
    doc_id: str
    domain_tag: str
    source_name: str
    body: str


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    ordinal: int
    text: str
    token_count: int

    def to_record(self, domain_tag: str | None = None) -> dict:
        record = {
            "chunk_id": self.chunk_id,
            "doc_id": self.doc_id,
            "ordinal": self.ordinal,
            "text": self.text,
            "token_count": self.token_count,
        }
        if domain_tag is not None:
            record["domain_tag"] = domain_tag
        return record


@dataclass(frozen=True)
class IngestError:
    path: str
    reason: str


def _doc_id_for(rel_path: str, body: str) -> str:
    stem = Path(rel_path).stem or "doc"
    stem = re.sub(r"[^A-Za-z0-9_.-]+", "_", stem)
    return f"{stem}-{short_digest(rel_path, body)}"


def ingest(
    source: str | Path | Sequence[str | Path],
    domain_tag: str,
) -> tuple[list[Document], list[IngestError]]:
    """Read plain-text files into Documents with stable ids.

    `source` is a directory (all regular files under it, recursively, in
    sorted relative-path order) or an explicit list of file paths. Unreadable
    or whitespace-only files produce per-file error records and are skipped;
    an ingest that yields no documents at all is fatal.

    doc_id is derived from the relative path plus a content digest, so the
    same bytes in the same layout always produce the same ids.
    """
    if isinstance(source, (str, Path)):
        root = Path(source)
        if not root.exists():
            raise ValidationError(f"corpus source does not exist: {root}")
        if root.is_dir():
            paths = sorted(p for p in root.rglob("*") if p.is_file())
            rel_names = [p.relative_to(root).as_posix() for p in paths]
        else:
            paths = [root]
            rel_names = [root.name]
    else:
        paths = [Path(p) for p in source]
        rel_names = [p.name for p in paths]

    documents: list[Document] = []
    errors: list[IngestError] = []
    for path, rel in zip(paths, rel_names):
        try:
            body = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            errors.append(IngestError(path=str(path), reason=str(exc)))
            continue
        if not normalize_whitespace(body):
            errors.append(IngestError(path=str(path), reason="empty body"))
            continue
        documents.append(
            Document(
                doc_id=_doc_id_for(rel, body),
                domain_tag=domain_tag,
                source_name=rel,
                body=body,
            )
        )
    if not documents:
        raise ValidationError("ingest produced an empty corpus")
    return documents, errors


def _hard_split(sentence: str, budget: int) -> list[str]:
    """Split one oversized sentence at token boundaries into budget-sized pieces.

    Every piece except the last carries exactly `budget` tokens. Characters
    between tokens are whitespace by construction of the tokenizer, so
    dropping them at a cut loses no tokens.
    """
    spans = [m.span() for m in _TOKEN_RE.finditer(sentence)]
    pieces = []
    for start in range(0, len(spans), budget):
        window = spans[start : start + budget]
        pieces.append(sentence[window[0][0] : window[-1][1]])
    return pieces


def chunk_document(
    doc: Document,
    budget: int = DEFAULT_TOKEN_BUDGET,
    token_counter: TokenCounter = count_tokens,
    sentence_splitter: SentenceSplitter = split_sentences,
) -> list[Chunk]:
    """Greedy sentence packing under a token budget with zero overlap.

    Each chunk takes as many whole sentences as fit; a sentence that alone
    exceeds the budget becomes standalone hard-split chunks. Chunk text is
    whitespace-normalized; ordinals are contiguous from 0.
    """
    if budget < MIN_TOKEN_BUDGET:
        raise ValidationError(
            f"token budget {budget} below minimum {MIN_TOKEN_BUDGET}"
        )
    sentences = sentence_splitter(doc.body)
    texts: list[str] = []
    current: list[str] = []
    current_tokens = 0
    for sentence in sentences:
        n_tokens = token_counter(sentence)
        if n_tokens > budget:
            if current:
                texts.append(" ".join(current))
                current, current_tokens = [], 0
            texts.extend(_hard_split(sentence, budget))
            continue
        if current and current_tokens + n_tokens > budget:
            texts.append(" ".join(current))
            current, current_tokens = [], 0
        current.append(sentence)
        current_tokens += n_tokens
    if current:
        texts.append(" ".join(current))

    chunks = []
    for ordinal, text in enumerate(texts):
        chunks.append(
            Chunk(
                chunk_id=f"{doc.doc_id}:{ordinal:04d}",
                doc_id=doc.doc_id,
                ordinal=ordinal,
                text=text,
                token_count=token_counter(text),
            )
        )
    return chunks


def chunk_corpus(
    documents: Iterable[Document],
    budget: int = DEFAULT_TOKEN_BUDGET,
    token_counter: TokenCounter = count_tokens,
    sentence_splitter: SentenceSplitter = split_sentences,
) -> list[Chunk]:
    chunks: list[Chunk] = []
    for doc in documents:
        chunks.extend(chunk_document(doc, budget, token_counter, sentence_splitter))
    return chunks
