"""Structured Product Labeling ingestion.

Reads DailyMed-style label indexes (paged JSON, over HTTP or from a local
file), parses SPL XML documents, selects one label per NDA application and
cuts the pharmacokinetics section (LOINC 43682-4) into paragraphs.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import re
import time
import urllib.error
import urllib.parse
import urllib.request
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .errors import IngestionError, SplParseError

logger = logging.getLogger(__name__)

PK_LOINC = "43682-4"
SEGMENT_TAGS = ("title", "paragraph", "item")
# Subtrees whose text never becomes a segment.
_SKIP_TAGS = frozenset({"table", "code", "id", "effectiveTime", "renderMultiMedia", "observationMedia"})
_APPLICATION_RE = re.compile(r"^[A-Za-z]+\d+$")
_WS_RE = re.compile(r"\s+")


def normalize_whitespace(text: str) -> str:
    return _WS_RE.sub(" ", text).strip()


@dataclass(frozen=True)
class RawSegment:
    tag_kind: str
    text: str

    def __post_init__(self):
        if self.tag_kind not in SEGMENT_TAGS:
            raise ValueError(f"unknown segment kind {self.tag_kind!r}")
        if not self.text:
            raise ValueError("segment text must be non-empty")

    @property
    def is_title(self) -> bool:
        return self.tag_kind == "title"

    def to_dict(self) -> dict:
        return {"tag_kind": self.tag_kind, "text": self.text}

    @classmethod
    def from_dict(cls, record: Mapping) -> "RawSegment":
        return cls(record["tag_kind"], record["text"])


@dataclass
class SplDocument:
    set_id: str
    application_number: str | None
    version: int
    sections: dict[str, list[RawSegment]] = field(default_factory=dict)
    title: str = ""

    @property
    def is_nda(self) -> bool:
        return bool(self.application_number) and self.application_number.upper().startswith("NDA")


@dataclass(frozen=True)
class LabelIndexEntry:
    set_id: str
    version: int
    published: dt.date | None = None
    application_number: str | None = None

    def __post_init__(self):
        if self.version < 1:
            raise ValueError(f"version must be >= 1, got {self.version}")


# ---------------------------------------------------------------------------
# Index fetching
# ---------------------------------------------------------------------------

_DATE_FORMATS = ("%b %d, %Y", "%Y-%m-%d", "%Y%m%d", "%B %d, %Y")


def _parse_date(value) -> dt.date | None:
    if not value:
        return None
    for fmt in _DATE_FORMATS:
        try:
            return dt.datetime.strptime(str(value), fmt).date()
        except ValueError:
            continue
    logger.warning("unrecognised publish date %r", value)
    return None


def _entries_from_page(page: Mapping) -> list[LabelIndexEntry]:
    entries = []
    for row in page.get("data", []):
        entries.append(
            LabelIndexEntry(
                set_id=str(row["setid"]),
                version=int(row.get("spl_version", 1)),
                published=_parse_date(row.get("published_date")),
                application_number=row.get("application_number") or None,
            )
        )
    return entries


def _total_pages(page: Mapping) -> int | None:
    meta = page.get("metadata") or {}
    total = meta.get("total_pages")
    return int(total) if total is not None else None


def _decode_json(raw: bytes, source: str):
    text = raw.decode("utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise SplParseError(f"malformed index payload in {source} at byte {offset}: {exc.msg}",
                            position=offset, source=source) from exc


def _dedupe(entries: Iterable[LabelIndexEntry]) -> list[LabelIndexEntry]:
    seen = set()
    out = []
    for e in entries:
        key = (e.set_id, e.version)
        if key not in seen:
            seen.add(key)
            out.append(e)
    return out


def _http_get(url: str, timeout: float) -> bytes:
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        return resp.read()


def _get_with_retries(url: str, retries: int, backoff: float, timeout: float, cursor) -> bytes:
    last = None
    for attempt in range(retries + 1):
        try:
            return _http_get(url, timeout)
        except (urllib.error.URLError, OSError) as exc:
            last = exc
            logger.warning("GET %s failed (attempt %d/%d): %s", url, attempt + 1, retries + 1, exc)
            if attempt < retries and backoff > 0:
                time.sleep(backoff * (attempt + 1))
    raise IngestionError(f"could not fetch {url} after {retries + 1} attempts: {last}", cursor=cursor)


def fetch_label_index(
    endpoint: str | Path,
    page_limit: int | None = None,
    *,
    page_size: int = 100,
    retries: int = 3,
    backoff: float = 0.5,
    timeout: float = 30.0,
) -> list[LabelIndexEntry]:
    """Read a paged label index.

    ``endpoint`` is either an HTTP URL answering ``?page=N&pagesize=M`` with a
    DailyMed ``spls.json`` payload, or a local JSON file holding one page
    object or a list of page objects. Entries are deduplicated on
    ``(set_id, version)``; distinct versions of one set id are all kept.
    """
    path = Path(str(endpoint).removeprefix("file://"))
    if not str(endpoint).startswith(("http://", "https://")):
        if not path.exists():
            raise IngestionError(f"index file {path} does not exist", cursor=None)
        payload = _decode_json(path.read_bytes(), str(path))
        pages = payload if isinstance(payload, list) else [payload]
        if page_limit is not None:
            pages = pages[:page_limit]
        entries = []
        for page in pages:
            entries.extend(_entries_from_page(page))
        return _dedupe(entries)

    entries = []
    page_no = 1
    while page_limit is None or page_no <= page_limit:
        sep = "&" if "?" in str(endpoint) else "?"
        url = f"{endpoint}{sep}{urllib.parse.urlencode({'page': page_no, 'pagesize': page_size})}"
        raw = _get_with_retries(url, retries, backoff, timeout, cursor=page_no)
        page = _decode_json(raw, url)
        rows = _entries_from_page(page)
        entries.extend(rows)
        total = _total_pages(page)
        if not rows or (total is not None and page_no >= total):
            break
        page_no += 1
    return _dedupe(entries)


def fetch_spl_documents(
    set_ids: Iterable[str],
    url_template: str,
    *,
    max_workers: int = 4,
    retries: int = 3,
    backoff: float = 0.5,
    timeout: float = 30.0,
) -> dict[str, bytes]:
    """Download SPL XML for each set id; ``url_template`` has a ``{set_id}`` field."""
    ids = list(dict.fromkeys(set_ids))

    def one(set_id: str) -> bytes:
        return _get_with_retries(url_template.format(set_id=set_id), retries, backoff, timeout, cursor=set_id)

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        blobs = list(pool.map(one, ids))
    return dict(zip(ids, blobs))


# ---------------------------------------------------------------------------
# XML parsing
# ---------------------------------------------------------------------------


def _local(tag) -> str:
    if not isinstance(tag, str):
        return ""
    return tag.rsplit("}", 1)[-1]


def _own_text(elem: ET.Element) -> str:
    """Text of ``elem`` excluding nested segment elements and tables."""
    parts = [elem.text or ""]
    for child in elem:
        name = _local(child.tag)
        if name not in SEGMENT_TAGS and name not in _SKIP_TAGS:
            parts.append(_own_text(child))
        parts.append(child.tail or "")
    return "".join(parts)


def _walk_segments(elem: ET.Element, out: list[RawSegment]) -> None:
    for child in elem:
        name = _local(child.tag)
        if name in _SKIP_TAGS:
            continue
        if name in SEGMENT_TAGS:
            text = normalize_whitespace(_own_text(child))
            if text:
                out.append(RawSegment(name, text))
        _walk_segments(child, out)


def _section_code(section: ET.Element) -> str | None:
    for child in section:
        if _local(child.tag) == "code":
            return child.get("code")
    return None


def _find(root: ET.Element, name: str) -> ET.Element | None:
    for elem in root.iter():
        if _local(elem.tag) == name:
            return elem
    return None


def _application_number(root: ET.Element) -> str | None:
    for elem in root.iter():
        if _local(elem.tag) != "approval":
            continue
        for child in elem:
            if _local(child.tag) == "id":
                ext = (child.get("extension") or "").strip().replace(" ", "")
                if _APPLICATION_RE.match(ext):
                    return ext.upper()
    return None


def _collect_sections(elem: ET.Element, open_codes: tuple, sections: dict) -> None:
    for child in elem:
        if _local(child.tag) == "section":
            code = _section_code(child)
            if code and code not in open_codes:
                segs: list[RawSegment] = []
                _walk_segments(child, segs)
                sections.setdefault(code, []).extend(segs)
                _collect_sections(child, open_codes + (code,), sections)
                continue
        _collect_sections(child, open_codes, sections)


def parse_spl(document_bytes: bytes, source: str | None = None) -> SplDocument:
    """Parse one SPL XML document.

    Every ``title``/``paragraph``/``item`` under a coded section becomes a
    segment of that section, nested subsections included, so a segment can
    appear under both a parent code and its own subsection code. Table
    content is skipped.
    """
    try:
        root = ET.fromstring(document_bytes)
    except ET.ParseError as exc:
        where = f" in {source}" if source else ""
        raise SplParseError(f"malformed XML{where} at line {exc.position[0]}, column {exc.position[1]}",
                            position=exc.position, source=source) from exc

    set_elem = _find(root, "setId")
    set_id = set_elem.get("root") if set_elem is not None else None
    if not set_id:
        raise SplParseError(f"document has no setId{' (' + source + ')' if source else ''}", source=source)

    version_elem = _find(root, "versionNumber")
    try:
        version = int(version_elem.get("value")) if version_elem is not None else 1
    except (TypeError, ValueError):
        raise SplParseError(f"bad versionNumber in {source or set_id}", source=source) from None

    title_elem = next((c for c in root if _local(c.tag) == "title"), None)
    sections: dict[str, list[RawSegment]] = {}
    _collect_sections(root, (), sections)
    return SplDocument(
        set_id=set_id,
        application_number=_application_number(root),
        version=max(version, 1),
        sections=sections,
        title=normalize_whitespace(_own_text(title_elem)) if title_elem is not None else "",
    )


def extract_pk_section(doc: SplDocument) -> list[RawSegment]:
    return list(doc.sections.get(PK_LOINC, []))


def segment_paragraphs(segments: Iterable[RawSegment]) -> list[RawSegment]:
    """Turn raw segments into paragraphs.

    A paragraph is a non-title segment whose text ends with ``.``. Fragments
    without the terminal period are merged into the next non-title segment.
    A fragment followed by a title, or by nothing, is kept unmerged so text
    never crosses a heading.
    """
    out: list[RawSegment] = []
    pending: RawSegment | None = None
    for seg in segments:
        if seg.is_title:
            if pending is not None:
                out.append(pending)
                pending = None
            out.append(seg)
            continue
        text = f"{pending.text} {seg.text}" if pending is not None else seg.text
        merged = RawSegment(seg.tag_kind, text)
        if text.endswith("."):
            out.append(merged)
            pending = None
        else:
            pending = merged
    if pending is not None:
        out.append(pending)
    return out


def select_labels(entries: Iterable[LabelIndexEntry], docs: Mapping[str, SplDocument]) -> list[SplDocument]:
    """Keep the latest NDA label per application number that has PK content."""
    best: dict[str, SplDocument] = {}
    order: list[str] = []
    seen_sets = set()
    for entry in entries:
        doc = docs.get(entry.set_id)
        if doc is None or entry.set_id in seen_sets:
            continue
        seen_sets.add(entry.set_id)
        app = doc.application_number or entry.application_number
        if not app or not app.upper().startswith("NDA"):
            continue
        if not extract_pk_section(doc):
            continue
        if doc.application_number is None:
            doc = SplDocument(doc.set_id, app.upper(), doc.version, doc.sections, doc.title)
        key = doc.application_number
        current = best.get(key)
        if current is None:
            order.append(key)
            best[key] = doc
        elif (doc.version, current.set_id) > (current.version, doc.set_id):
            best[key] = doc
    return [best[k] for k in order]


def entries_from_documents(docs: Iterable[SplDocument]) -> list[LabelIndexEntry]:
    return [LabelIndexEntry(d.set_id, d.version, None, d.application_number) for d in docs]


def load_directory(directory: str | Path, on_error: Callable[[Path, Exception], None] | None = None) -> dict[str, SplDocument]:
    """Parse every ``*.xml`` file in ``directory`` (sorted by name)."""
    docs: dict[str, SplDocument] = {}
    for path in sorted(Path(directory).glob("*.xml")):
        try:
            doc = parse_spl(path.read_bytes(), source=str(path))
        except SplParseError as exc:
            if on_error is None:
                raise
            on_error(path, exc)
            continue
        prior = docs.get(doc.set_id)
        if prior is None or doc.version > prior.version:
            docs[doc.set_id] = doc
    return docs


def manifest_record(doc: SplDocument) -> dict:
    paragraphs = [s for s in segment_paragraphs(extract_pk_section(doc)) if not s.is_title]
    return {
        "set_id": doc.set_id,
        "application_number": doc.application_number,
        "version": doc.version,
        "pk_paragraph_count": len(paragraphs),
    }


def segment_store_path(manifest_path: str | Path) -> Path:
    p = Path(manifest_path)
    return p.with_name(p.name + ".segments.jsonl")


def write_manifest(docs: Iterable[SplDocument], manifest_path: str | Path) -> Path:
    """Write the manifest and the companion segment store; returns the store path.

    The store keeps the raw pharmacokinetics segments (one JSON line per
    document) so that annotation can apply its own title handling before
    paragraph segmentation.
    """
    manifest_path = Path(manifest_path)
    store = segment_store_path(manifest_path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    with open(manifest_path, "w", encoding="utf-8") as mf, open(store, "w", encoding="utf-8") as sf:
        for doc in docs:
            mf.write(json.dumps(manifest_record(doc), sort_keys=True) + "\n")
            segs = extract_pk_section(doc)
            sf.write(json.dumps({
                "set_id": doc.set_id,
                "application_number": doc.application_number,
                "version": doc.version,
                "segments": [s.to_dict() for s in segs],
            }, sort_keys=True) + "\n")
    return store
