"""Prompt template registry.

Templates live as versioned text files next to this module. Each file has a
small header (id, version, stage, slots) separated from the body by a line
containing only `---`. Bodies use str.format-style `{slot}` placeholders;
rendering validates that the payload supplies exactly the declared slots.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..errors import ValidationError

_HEADER_KEYS = {"id", "version", "stage", "slots"}


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    version: int
    stage: str
    slots: tuple[str, ...]
    body: str

    def render(self, payload: dict) -> str:
        missing = [s for s in self.slots if s not in payload]
        extra = [k for k in payload if k not in self.slots]
        if missing or extra:
            raise ValidationError(
                f"template {self.template_id!r} payload mismatch: "
                f"missing={missing} unexpected={extra}"
            )
        return self.body.format(**{k: str(v) for k, v in payload.items()})


def _parse_template(text: str, source: str) -> PromptTemplate:
    if "\n---\n" not in text:
        raise ValidationError(f"template file {source} lacks a header separator")
    header_text, body = text.split("\n---\n", 1)
    header: dict[str, str] = {}
    for line in header_text.splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, value = line.partition(":")
        header[key.strip()] = value.strip()
    missing = _HEADER_KEYS - header.keys()
    if missing:
        raise ValidationError(f"template file {source} missing header keys {sorted(missing)}")
    slots = tuple(s.strip() for s in header["slots"].split(",") if s.strip())
    body = body.strip() + "\n"
    declared = set(slots)
    used = {
        field
        for _, field, _, _ in string.Formatter().parse(body)
        if field
    }
    if used - declared:
        raise ValidationError(
            f"template {header['id']} uses undeclared slots {sorted(used - declared)}"
        )
    return PromptTemplate(
        template_id=header["id"],
        version=int(header["version"]),
        stage=header["stage"],
        slots=slots,
        body=body,
    )


class TemplateRegistry:
    """Loads and indexes all shipped templates; extra dirs may override."""

    def __init__(self, extra_dir: str | Path | None = None):
        self._templates: dict[str, PromptTemplate] = {}
        pkg_files = resources.files(__package__).joinpath("templates")
        for entry in sorted(pkg_files.iterdir(), key=lambda e: e.name):
            if entry.name.endswith(".txt"):
                self._register(_parse_template(entry.read_text(encoding="utf-8"), entry.name))
        if extra_dir is not None:
            for path in sorted(Path(extra_dir).glob("*.txt")):
                self._register(
                    _parse_template(path.read_text(encoding="utf-8"), str(path)),
                    allow_override=True,
                )

    def _register(self, template: PromptTemplate, allow_override: bool = False) -> None:
        if template.template_id in self._templates and not allow_override:
            raise ValidationError(f"duplicate template id {template.template_id!r}")
        self._templates[template.template_id] = template

    def get(self, template_id: str) -> PromptTemplate:
        try:
            return self._templates[template_id]
        except KeyError:
            raise ValidationError(f"unknown template id {template_id!r}") from None

    def ids(self) -> list[str]:
        return sorted(self._templates)
