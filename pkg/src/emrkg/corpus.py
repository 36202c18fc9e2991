"""Standoff-annotated clinical text: parsing, segmentation and BIO conversion.

Input documents are pairs of `<name>.txt` (UTF-8 text) and `<name>.ann`
(tab-separated standoff records, one entity per line):

    T1<TAB>Disease 280 291<TAB>右侧肩背部隐痛不适两周

Offsets are Unicode character offsets (not bytes); the end offset is
exclusive. Documents are segmented at sentence-final punctuation and
hard-wrapped to ``max_len`` characters, then converted to per-character
BIO tag sequences.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from emrkg.errors import DataError
from emrkg.schema import EntitySchema

log = logging.getLogger(__name__)

SENTENCE_DELIMITERS = "。！？；"

# Delimiters that terminate a sentence but are dropped from the output
# segment (a raw newline inside a segment would corrupt the one-token-per-line
# BIO file format).
DROPPED_DELIMITERS = "\n"


class MalformedLine(DataError):
    """An .ann line does not match `<id>\\t<label> <start> <end>\\t<surface>`."""


class OffsetOutOfBounds(DataError):
    """Span offsets fall outside the document text."""


class SurfaceMismatch(DataError):
    """Stored surface differs from the text slice at the stated offsets."""


class UnknownLabel(DataError):
    """Span label is not part of the entity schema."""


class UnsplittableEntity(DataError):
    """A single entity is longer than the segmentation limit."""


class OverlapAfterValidation(DataError):
    """Overlapping spans survived validation (defensive; should be unreachable)."""


class MalformedBio(DataError):
    """An I- tag appears without a compatible B-/I- predecessor."""


class TooFewSentences(DataError):
    """Dataset splitting needs at least 10 sentences."""


@dataclass(frozen=True)
class EntitySpan:
    """One standoff annotation anchored to the document text."""

    id: str
    label: str
    start: int
    end: int
    surface: str

    def __len__(self) -> int:
        return self.end - self.start


@dataclass
class AnnotatedDocument:
    doc_id: str
    text: str
    spans: list[EntitySpan]


@dataclass
class ValidationReport:
    """Spans rejected during parsing, with the reason."""

    dropped: list[tuple[str, EntitySpan, str]] = field(default_factory=list)

    def record(self, doc_id: str, span: EntitySpan, reason: str) -> None:
        self.dropped.append((doc_id, span, reason))
        log.warning("%s: dropped span %s [%d,%d): %s", doc_id, span.id, span.start, span.end, reason)


@dataclass(frozen=True)
class BioSentence:
    """Parallel character / BIO tag sequences.

    Tags are drawn from {O} ∪ {B-t, I-t}. Construction validates length
    parity and BIO well-formedness (an I-t may only follow B-t or I-t of the
    same type). The segmentation length limit is a postcondition of
    :func:`segment`, not of this container: augmentation may legitimately
    lengthen a sentence past it.
    """

    chars: str
    tags: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.chars) != len(self.tags):
            raise MalformedBio(
                f"{len(self.chars)} chars vs {len(self.tags)} tags"
            )
        prev = "O"
        for i, tag in enumerate(self.tags):
            if tag.startswith("I-"):
                if prev != "B-" + tag[2:] and prev != tag:
                    raise MalformedBio(f"tag {tag!r} at position {i} follows {prev!r}")
            elif tag != "O" and not tag.startswith("B-"):
                raise MalformedBio(f"unrecognized tag {tag!r} at position {i}")
            prev = tag

    def __len__(self) -> int:
        return len(self.chars)


@dataclass(frozen=True)
class DatasetSplit:
    """Train/validation/test partition of a sentence list.

    :func:`split_dataset` produces 8:1:1 proportions; instances built
    directly (e.g. from pre-split corpora on disk) only guarantee the parts
    are disjoint lists of sentences.
    """

    train: tuple[BioSentence, ...]
    validation: tuple[BioSentence, ...]
    test: tuple[BioSentence, ...]
    seed: int | None = None


def parse_ann(
    ann_content: str,
    txt_content: str,
    schema: EntitySchema,
    doc_id: str = "",
    report: ValidationReport | None = None,
) -> AnnotatedDocument:
    """Parse standoff annotation lines against their source text.

    Every span is validated: offsets in bounds, surface equal to the text
    slice, label resolvable in the schema (case-insensitive). Overlapping
    spans keep the earlier-listed one; the later one is dropped with a
    warning and recorded in ``report`` if given.
    """
    spans: list[EntitySpan] = []
    for lineno, raw in enumerate(ann_content.splitlines(), start=1):
        if not raw.strip():
            continue
        parts = raw.split("\t", 2)
        if len(parts) != 3:
            raise MalformedLine(f"{doc_id} line {lineno}: expected 3 tab-separated fields")
        span_id, mid, surface = parts
        mid_parts = mid.split()
        if len(mid_parts) != 3:
            raise MalformedLine(
                f"{doc_id} line {lineno}: expected `<label> <start> <end>`, got {mid!r}"
            )
        label_raw, start_s, end_s = mid_parts
        try:
            start, end = int(start_s), int(end_s)
        except ValueError:
            raise MalformedLine(f"{doc_id} line {lineno}: non-integer offsets {mid!r}") from None
        label = schema.canonical(label_raw)
        if label is None:
            raise UnknownLabel(f"{doc_id} line {lineno}: label {label_raw!r} not in schema")
        if not (0 <= start < end <= len(txt_content)):
            raise OffsetOutOfBounds(
                f"{doc_id} line {lineno}: span [{start},{end}) outside text of length {len(txt_content)}"
            )
        if txt_content[start:end] != surface:
            raise SurfaceMismatch(
                f"{doc_id} line {lineno}: text slice {txt_content[start:end]!r} != surface {surface!r}"
            )
        spans.append(EntitySpan(span_id, label, start, end, surface))

    accepted: list[EntitySpan] = []
    for span in spans:
        clash = next((a for a in accepted if span.start < a.end and a.start < span.end), None)
        if clash is None:
            accepted.append(span)
        elif report is not None:
            report.record(doc_id, span, f"overlaps accepted span {clash.id}")
        else:
            log.warning("%s: dropped span %s, overlaps %s", doc_id, span.id, clash.id)
    return AnnotatedDocument(doc_id=doc_id, text=txt_content, spans=accepted)


@dataclass(frozen=True)
class Segment:
    """A contiguous slice of a document with spans in local coordinates."""

    text: str
    spans: tuple[EntitySpan, ...]


def _remap(spans: list[EntitySpan], seg_start: int, seg_end: int) -> tuple[EntitySpan, ...]:
    local = []
    for s in spans:
        if s.start >= seg_start and s.end <= seg_end:
            local.append(
                EntitySpan(s.id, s.label, s.start - seg_start, s.end - seg_start, s.surface)
            )
    return tuple(local)


def segment(doc: AnnotatedDocument, max_len: int = 50) -> list[Segment]:
    """Split a document into sentence segments of at most ``max_len`` chars.

    Split points fall after sentence-final punctuation (。！？；, kept with
    the preceding segment) and at newlines (dropped). A delimiter strictly
    inside an entity span never splits. Segments still longer than
    ``max_len`` are hard-wrapped; a wrap point landing inside a span moves
    back to the span start so entities are never cut.
    """
    if max_len < 2:
        raise ValueError(f"max_len must be >= 2, got {max_len}")
    text, spans = doc.text, doc.spans

    def inside_span(pos: int) -> EntitySpan | None:
        for s in spans:
            if s.start < pos < s.end:
                return s
        return None

    # Sentence pass: [start, end) slices between delimiter-induced cuts.
    sentences: list[tuple[int, int]] = []
    start = 0
    i = 0
    while i < len(text):
        ch = text[i]
        if ch in DROPPED_DELIMITERS and inside_span(i) is None and inside_span(i + 1) is None:
            sentences.append((start, i))
            start = i + 1
        elif ch in SENTENCE_DELIMITERS and inside_span(i + 1) is None:
            sentences.append((start, i + 1))
            start = i + 1
        i += 1
    sentences.append((start, len(text)))

    segments: list[Segment] = []
    for sent_start, sent_end in sentences:
        pos = sent_start
        while pos < sent_end:
            cut = min(pos + max_len, sent_end)
            blocker = inside_span(cut)
            if blocker is not None:
                if blocker.start <= pos:
                    raise UnsplittableEntity(
                        f"{doc.doc_id}: entity {blocker.id} ({blocker.end - blocker.start} chars) "
                        f"exceeds max_len {max_len}"
                    )
                cut = blocker.start
            seg_text = text[pos:cut]
            if seg_text:
                segments.append(Segment(seg_text, _remap(spans, pos, cut)))
            pos = cut

    mapped = sum(len(s.spans) for s in segments)
    if mapped != len(spans):
        raise DataError(
            f"{doc.doc_id}: {len(spans) - mapped} span(s) lost during segmentation"
        )
    return segments


def to_bio(segments: list[Segment]) -> list[BioSentence]:
    """Tag each segment character: B-t at span starts, I-t inside, O elsewhere."""
    sentences = []
    for seg in segments:
        tags = ["O"] * len(seg.text)
        for span in seg.spans:
            for pos in range(span.start, span.end):
                if tags[pos] != "O":
                    raise OverlapAfterValidation(
                        f"span {span.id} overlaps an already-tagged position {pos}"
                    )
            tags[span.start] = "B-" + span.label
            for pos in range(span.start + 1, span.end):
                tags[pos] = "I-" + span.label
        sentences.append(BioSentence(seg.text, tuple(tags)))
    return sentences


def from_bio(sentence: BioSentence) -> list[tuple[str, int, int]]:
    """Recover (type, start, end) spans from a well-formed BIO sentence."""
    spans: list[tuple[str, int, int]] = []
    open_type: str | None = None
    open_start = 0
    for i, tag in enumerate(sentence.tags):
        if tag.startswith("B-"):
            if open_type is not None:
                spans.append((open_type, open_start, i))
            open_type, open_start = tag[2:], i
        elif tag.startswith("I-"):
            if open_type != tag[2:]:
                raise MalformedBio(f"I-{tag[2:]} at position {i} without matching B-")
        else:
            if open_type is not None:
                spans.append((open_type, open_start, i))
                open_type = None
    if open_type is not None:
        spans.append((open_type, open_start, len(sentence.tags)))
    return spans


def tags_for_spans(length: int, spans: list[tuple[str, int, int]]) -> tuple[str, ...]:
    """Inverse helper of :func:`from_bio` for span lists without surfaces."""
    tags = ["O"] * length
    for label, start, end in spans:
        tags[start] = "B-" + label
        for pos in range(start + 1, end):
            tags[pos] = "I-" + label
    return tuple(tags)


def split_dataset(sentences: list[BioSentence], seed: int) -> DatasetSplit:
    """Deterministic shuffled 8:1:1 split (half-up rounding, remainder to train)."""
    n = len(sentences)
    if n < 10:
        raise TooFewSentences(f"need at least 10 sentences, got {n}")
    n_val = int(n * 0.1 + 0.5)
    n_test = n_val
    n_train = n - n_val - n_test
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [sentences[i] for i in order]
    return DatasetSplit(
        train=tuple(shuffled[:n_train]),
        validation=tuple(shuffled[n_train : n_train + n_val]),
        test=tuple(shuffled[n_train + n_val :]),
        seed=seed,
    )


def write_bio_file(sentences: list[BioSentence], path: str | Path) -> None:
    """One `<char>\\t<tag>` line per character, blank line between sentences."""
    lines = []
    for sent in sentences:
        for ch, tag in zip(sent.chars, sent.tags):
            lines.append(f"{ch}\t{tag}")
        lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")


def read_bio_file(path: str | Path) -> list[BioSentence]:
    sentences: list[BioSentence] = []
    chars: list[str] = []
    tags: list[str] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), start=1):
        if line == "":
            if chars:
                sentences.append(BioSentence("".join(chars), tuple(tags)))
                chars, tags = [], []
            continue
        parts = line.split("\t")
        if len(parts) != 2 or len(parts[0]) != 1:
            raise MalformedBio(f"{path} line {lineno}: expected `<char>\\t<tag>`")
        chars.append(parts[0])
        tags.append(parts[1])
    if chars:
        sentences.append(BioSentence("".join(chars), tuple(tags)))
    return sentences


def load_document_pair(
    txt_path: str | Path,
    schema: EntitySchema,
    report: ValidationReport | None = None,
) -> AnnotatedDocument:
    """Load a `<name>.txt` / `<name>.ann` pair; doc_id is the stem."""
    txt_path = Path(txt_path)
    ann_path = txt_path.with_suffix(".ann")
    text = txt_path.read_text(encoding="utf-8")
    ann = ann_path.read_text(encoding="utf-8") if ann_path.exists() else ""
    return parse_ann(ann, text, schema, doc_id=txt_path.stem, report=report)


def load_corpus_dir(
    corpus_dir: str | Path,
    schema: EntitySchema,
    report: ValidationReport | None = None,
) -> list[AnnotatedDocument]:
    """Load every .txt/.ann pair in a directory, sorted by name."""
    paths = sorted(Path(corpus_dir).glob("*.txt"))
    if not paths:
        raise DataError(f"no .txt files under {corpus_dir}")
    return [load_document_pair(p, schema, report) for p in paths]
