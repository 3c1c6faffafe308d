"""Regex-based ADME annotation of pharmacokinetics paragraphs."""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ValidationError
from .spl_corpus import RawSegment, normalize_whitespace


class Topic(enum.IntEnum):
    """The five paragraph classes, in reporting order."""

    ABSORPTION = 0
    DISTRIBUTION = 1
    METABOLISM = 2
    EXCRETION = 3
    OTHER = 4

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, name: str) -> "Topic":
        """Parse a canonical topic name (case-insensitive); aliases are rejected."""
        try:
            return cls[str(name).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown topic {name!r}; expected one of {[t.label for t in cls]}") from None


TOPICS: tuple[Topic, ...] = tuple(Topic)
ADME: tuple[Topic, ...] = TOPICS[:4]
SOURCES = ("regex_outside", "regex_inline", "manual")

DEFAULT_TITLES: dict[str, Topic] = {
    "absorption": Topic.ABSORPTION,
    "distribution": Topic.DISTRIBUTION,
    "metabolism": Topic.METABOLISM,
    "excretion": Topic.EXCRETION,
    "elimination": Topic.EXCRETION,
    "food effect": Topic.ABSORPTION,
    "bioavailability": Topic.ABSORPTION,
}


@dataclass(frozen=True)
class LabeledParagraph:
    text: str
    topic: Topic
    source: str
    set_id: str | None = None
    application_number: str | None = None
    raw_title: str | None = None
    id: str | None = None

    def __post_init__(self):
        if not self.text:
            raise ValueError("paragraph text must be non-empty")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if self.source == "manual" and self.raw_title is not None:
            raise ValueError("manual paragraphs carry no raw_title")
        object.__setattr__(self, "topic", Topic(self.topic))

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "set_id": self.set_id,
            "application_number": self.application_number,
            "text": self.text,
            "topic": self.topic.label,
            "source": self.source,
            "raw_title": self.raw_title,
        }


@dataclass
class TitleScheme:
    """Title alternatives and their canonical topics.

    Alternatives are matched case-insensitively against whitespace-normalized
    text; multi-word alternatives match any run of whitespace.
    """

    titles: Mapping[str, Topic] = field(default_factory=lambda: dict(DEFAULT_TITLES))
    strip_inline_title: bool = True

    def __post_init__(self):
        self.titles = {normalize_whitespace(k).lower(): Topic(v) for k, v in self.titles.items()}
        alts = sorted(self.titles, key=lambda s: (-len(s), s))
        body = "|".join(r"\s+".join(map(re.escape, a.split(" "))) for a in alts)
        self._outside = re.compile(rf"^({body})$", re.IGNORECASE)
        self._inline = re.compile(rf"^({body})\s*(:|-)", re.IGNORECASE)


DEFAULT_SCHEME = TitleScheme()
_LEADING_JUNK = re.compile(r"^[\s:\-]+")


def detect_outside_title(segment: RawSegment | str, scheme: TitleScheme = DEFAULT_SCHEME) -> str | None:
    text = segment.text if isinstance(segment, RawSegment) else segment
    m = scheme._outside.match(normalize_whitespace(text))
    return normalize_whitespace(m.group(1)).lower() if m else None


def detect_inline_title(paragraph_text: str, scheme: TitleScheme = DEFAULT_SCHEME) -> tuple[str, str] | None:
    text = normalize_whitespace(paragraph_text)
    m = scheme._inline.match(text)
    if not m:
        return None
    remainder = _LEADING_JUNK.sub("", text[m.end():])
    return normalize_whitespace(m.group(1)).lower(), remainder


def canonicalize_topic(raw_title: str, scheme: TitleScheme = DEFAULT_SCHEME) -> Topic:
    return scheme.titles.get(normalize_whitespace(raw_title).lower(), Topic.OTHER)


def promote_titles(segments: Iterable[RawSegment], scheme: TitleScheme = DEFAULT_SCHEME) -> list[RawSegment]:
    """Re-tag paragraph or item segments that consist solely of a known title.

    Labels often set subsection headings as a bold paragraph rather than a
    title element. Promoting them before paragraph segmentation keeps such a
    heading from being merged into the text that follows it.
    """
    return [RawSegment("title", s.text) if not s.is_title and detect_outside_title(s, scheme) else s
            for s in segments]


def annotate_document(
    segments: Sequence[RawSegment],
    scheme: TitleScheme = DEFAULT_SCHEME,
    *,
    set_id: str | None = None,
    application_number: str | None = None,
) -> list[LabeledParagraph]:
    """Label paragraphs by the titles they follow or start with.

    Outside titles set the running topic (initially Other); any other title
    resets it to Other. A paragraph opening with an inline title is labeled by
    that title alone. An inline title with nothing after the delimiter is
    treated as an outside title.
    """
    state = Topic.OTHER
    state_title: str | None = None
    out: list[LabeledParagraph] = []

    def emit(text, topic, source, raw):
        pid = f"{set_id}-{len(out):04d}" if set_id else f"p{len(out):04d}"
        out.append(LabeledParagraph(text, topic, source, set_id, application_number, raw, pid))

    for seg in segments:
        raw = detect_outside_title(seg, scheme)
        if raw is not None:
            state, state_title = canonicalize_topic(raw, scheme), raw
            continue
        if seg.is_title:
            state, state_title = Topic.OTHER, None
            continue
        inline = detect_inline_title(seg.text, scheme)
        if inline is not None:
            raw, remainder = inline
            if not remainder:
                state, state_title = canonicalize_topic(raw, scheme), raw
                continue
            text = remainder if scheme.strip_inline_title else seg.text
            emit(text, canonicalize_topic(raw, scheme), "regex_inline", raw)
        else:
            emit(seg.text, state, "regex_outside", state_title)
    return out


def has_adme_title(segments: Iterable[RawSegment], scheme: TitleScheme = DEFAULT_SCHEME) -> bool:
    """True when any segment carries an ADME title, outside or inline."""
    for seg in segments:
        raw = detect_outside_title(seg, scheme)
        if raw is None and not seg.is_title:
            hit = detect_inline_title(seg.text, scheme)
            raw = hit[0] if hit else None
        if raw is not None and canonicalize_topic(raw, scheme) is not Topic.OTHER:
            return True
    return False


# ---------------------------------------------------------------------------
# Corpus files (one JSON record per line)
# ---------------------------------------------------------------------------


def _parse_line(line: str, lineno: int, path) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{lineno}: invalid JSON ({exc.msg})", line=lineno) from None
    if not isinstance(rec, dict):
        raise ValidationError(f"{path}:{lineno}: record is not an object", line=lineno)
    return rec


def _topic_field(rec: dict, lineno: int, path) -> Topic:
    try:
        return Topic.parse(rec.get("topic", ""))
    except ValueError as exc:
        raise ValidationError(f"{path}:{lineno}: {exc}", line=lineno) from None


def _text_field(rec: dict, lineno: int, path) -> str:
    text = rec.get("text")
    if not isinstance(text, str) or not text.strip():
        raise ValidationError(f"{path}:{lineno}: empty text", line=lineno)
    return text


def import_manual(path: str | Path) -> list[LabeledParagraph]:
    """Load hand-labeled paragraphs; topics must use canonical names."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = _parse_line(line, lineno, path)
            if rec.get("raw_title") is not None:
                raise ValidationError(f"{path}:{lineno}: manual records must not carry raw_title", line=lineno)
            out.append(LabeledParagraph(
                text=_text_field(rec, lineno, path),
                topic=_topic_field(rec, lineno, path),
                source="manual",
                set_id=rec.get("set_id"),
                application_number=rec.get("application_number"),
                id=rec.get("id") or f"manual-{lineno:05d}",
            ))
    return out


def read_corpus(path: str | Path) -> list[LabeledParagraph]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = _parse_line(line, lineno, path)
            source = rec.get("source", "manual")
            if source not in SOURCES:
                raise ValidationError(f"{path}:{lineno}: unknown source {source!r}", line=lineno)
            try:
                out.append(LabeledParagraph(
                    text=_text_field(rec, lineno, path),
                    topic=_topic_field(rec, lineno, path),
                    source=source,
                    set_id=rec.get("set_id"),
                    application_number=rec.get("application_number"),
                    raw_title=rec.get("raw_title"),
                    id=rec.get("id"),
                ))
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}", line=lineno) from None
    return out


def write_corpus(paragraphs: Iterable[LabeledParagraph], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in paragraphs:
            fh.write(json.dumps(p.to_record(), ensure_ascii=False, sort_keys=True) + "\n")
