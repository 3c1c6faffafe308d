"""Parse SPL labels, pick the pharmacokinetics section and label its paragraphs.

Runs on the fixture labels in tests/fixtures/spl:

    python demos/label_parsing.py
"""

from __future__ import annotations

from pathlib import Path

from admelabel.annotator import annotate_document, has_adme_title, promote_titles
from admelabel.spl_corpus import entries_from_documents, extract_pk_section, load_directory, select_labels, segment_paragraphs

SPL_DIR = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "spl"

docs = load_directory(SPL_DIR, on_error=lambda path, exc: print(f"skipped {path.name}: {exc}"))
selected = select_labels(entries_from_documents(docs.values()), docs)
print(f"{len(docs)} documents parsed, {len(selected)} kept (latest NDA version with PK content)\n")

for doc in selected:
    segments = promote_titles(extract_pk_section(doc))
    paragraphs = segment_paragraphs(segments)
    labeled = annotate_document(paragraphs)
    print(f"{doc.set_id} NDA {doc.application_number} v{doc.version}: "
          f"{len(labeled)} paragraphs, ADME titles present: {has_adme_title(segments)}")
    for p in labeled:
        preview = p.text[:70] + ("..." if len(p.text) > 70 else "")
        print(f"  {p.topic.name:12s} {p.source:14s} {preview}")
    print()
