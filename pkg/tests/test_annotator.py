from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from admelabel.annotator import (
    ADME,
    TOPICS,
    LabeledParagraph,
    TitleScheme,
    Topic,
    annotate_document,
    canonicalize_topic,
    detect_inline_title,
    detect_outside_title,
    has_adme_title,
    import_manual,
    promote_titles,
    read_corpus,
    write_corpus,
)
from admelabel.errors import ValidationError
from admelabel.spl_corpus import RawSegment, extract_pk_section, parse_spl, segment_paragraphs

from .conftest import FIXTURES, spl_bytes


def _paragraphs(name):
    return segment_paragraphs(promote_titles(extract_pk_section(parse_spl(spl_bytes(name)))))


def test_topic_order_is_fixed():
    assert [t.label for t in TOPICS] == ["Absorption", "Distribution", "Metabolism", "Excretion", "Other"]


# --- title detection ---------------------------------------------------------

def test_outside_title_matches_whole_segment():
    assert detect_outside_title(RawSegment("title", "Absorption")) == "absorption"
    assert detect_outside_title("Specific Populations") is None
    assert detect_outside_title("absorption of methotrexate appears dose dependent.") is None


def test_outside_title_is_case_insensitive_and_whitespace_tolerant():
    assert detect_outside_title("FOOD   EFFECT") == "food effect"


def test_numbered_and_compound_titles_do_not_match():
    assert detect_outside_title("A. Absorption") is None
    assert detect_outside_title("Absorption and Distribution") is None


def test_inline_title():
    text = "Distribution: Paroxetine distributes throughout the body, including the CNS."
    assert detect_inline_title(text) == ("distribution", "Paroxetine distributes throughout the body, including the CNS.")
    raw, rest = detect_inline_title("Elimination: Elimination of Lopressor is mainly by biotransformation in the liver.")
    assert raw == "elimination" and rest.startswith("Elimination of Lopressor")
    assert detect_inline_title("In pediatric patients with ALL, oral absorption appears dose dependent.") is None


def test_inline_title_with_dash_delimiter():
    assert detect_inline_title("Metabolism - Extensive first-pass.") == ("metabolism", "Extensive first-pass.")


@given(st.sampled_from(["Absorption", "distribution", "Food Effect", "ELIMINATION"]),
       st.sampled_from([":", "-", " :", " - ", ":-:"]), st.text())
def test_inline_remainder_never_starts_with_delimiters(title, delim, rest):
    hit = detect_inline_title(title + delim + rest)
    assert hit is not None
    assert not hit[1][:1] in (" ", ":", "-") and not hit[1][:1].isspace()


def test_canonicalization():
    assert canonicalize_topic("elimination") is Topic.EXCRETION
    assert canonicalize_topic("food effect") is Topic.ABSORPTION
    assert canonicalize_topic("bioavailability") is Topic.ABSORPTION
    assert canonicalize_topic("absorption and bioavailability") is Topic.OTHER
    for t in ADME:
        assert canonicalize_topic(t.label.lower()) is t


def test_title_list_is_configurable():
    scheme = TitleScheme({**{t.label.lower(): t for t in ADME}, "protein binding": Topic.DISTRIBUTION})
    assert detect_outside_title("Protein Binding", scheme) == "protein binding"
    assert canonicalize_topic("protein binding", scheme) is Topic.DISTRIBUTION
    assert detect_outside_title("Elimination", scheme) is None


# --- annotate_document -------------------------------------------------------

def test_outside_title_fixture():
    out = annotate_document(_paragraphs("methotrexate_nda208400.xml"))
    assert [p.topic for p in out] == list(ADME)
    assert {p.source for p in out} == {"regex_outside"}
    assert out[3].raw_title == "excretion"


def test_inline_title_fixture():
    out = annotate_document(_paragraphs("metoprolol_nda017963.xml"))
    assert [p.topic for p in out] == list(ADME)
    assert {p.source for p in out} == {"regex_inline"}
    assert out[3].raw_title == "elimination"
    assert out[3].text.startswith("Elimination of Lopressor")


def test_inline_title_kept_when_stripping_disabled():
    out = annotate_document(_paragraphs("metoprolol_nda017963.xml"), TitleScheme(strip_inline_title=False))
    assert out[0].text.startswith("Absorption:")


def test_untitled_paragraphs_are_other():
    segs = [RawSegment("paragraph", "First sentence."), RawSegment("paragraph", "Second sentence.")]
    out = annotate_document(segs)
    assert [p.topic for p in out] == [Topic.OTHER, Topic.OTHER]
    assert {p.source for p in out} == {"regex_outside"}


def test_non_adme_title_resets_state():
    segs = [RawSegment("title", "Absorption"), RawSegment("paragraph", "A."),
            RawSegment("title", "Specific Populations"), RawSegment("paragraph", "B.")]
    assert [p.topic for p in annotate_document(segs)] == [Topic.ABSORPTION, Topic.OTHER]


def test_paragraph_heading_is_promoted_to_title():
    out = annotate_document(_paragraphs("nested_nda033333.xml"))
    assert [p.topic for p in out] == [Topic.ABSORPTION] * 4
    assert out[0].text == "The pharmacokinetic parameters after a single dose were dose proportional over the range studied."


def test_concatenation_after_non_adme_title_matches_per_document():
    first = _paragraphs("duppk_nda044444.xml")  # ends in a non-ADME title section
    second = _paragraphs("methotrexate_nda208400.xml")
    joint = annotate_document(first + second)
    separate = annotate_document(first) + annotate_document(second)
    assert [(p.text, p.topic) for p in joint] == [(p.text, p.topic) for p in separate]


_seg = st.builds(RawSegment, st.sampled_from(["title", "paragraph"]),
                 st.sampled_from(["Absorption", "Elimination", "Dosage", "Food effect: x.", "Text.", "Metabolism - y."]))


@given(st.lists(_seg, max_size=15))
def test_annotation_is_deterministic_and_closed(segs):
    a, b = annotate_document(segs), annotate_document(list(segs))
    assert a == b
    assert all(p.topic in TOPICS for p in a)


def test_has_adme_title():
    assert has_adme_title(_paragraphs("metoprolol_nda017963.xml"))
    assert not has_adme_title(_paragraphs("untitled_nda021000.xml"))


# --- corpus files ------------------------------------------------------------

def test_import_manual_fixture():
    recs = import_manual(FIXTURES / "manual_paroxetine.jsonl")
    assert len(recs) == 5
    assert all(p.source == "manual" and p.raw_title is None for p in recs)
    assert recs[4].topic is Topic.DISTRIBUTION


def test_import_manual_rejects_aliases_with_line_number(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text(json.dumps({"text": "x", "topic": "Distribution"}) + "\n"
                    + json.dumps({"text": "y", "topic": "Elimination"}) + "\n")
    with pytest.raises(ValidationError) as info:
        import_manual(path)
    assert info.value.line == 2 and ":2:" in str(info.value)


def test_import_manual_rejects_empty_text(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text(json.dumps({"text": "  ", "topic": "Other"}) + "\n")
    with pytest.raises(ValidationError):
        import_manual(path)


def test_manual_paragraph_cannot_carry_raw_title():
    with pytest.raises(ValueError):
        LabeledParagraph("x", Topic.OTHER, "manual", raw_title="absorption")
    with pytest.raises(ValueError):
        LabeledParagraph("", Topic.OTHER, "regex_outside")


def test_corpus_round_trip(tmp_path):
    paras = annotate_document(_paragraphs("methotrexate_nda208400.xml"), set_id="s", application_number="NDA1")
    write_corpus(paras, tmp_path / "c.jsonl")
    assert read_corpus(tmp_path / "c.jsonl") == paras


def test_corrupt_corpus_line_is_named(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps({"text": "a", "topic": "Other", "source": "manual"}) + "\n{not json\n")
    with pytest.raises(ValidationError) as info:
        read_corpus(path)
    assert info.value.line == 2
