"""Dynamic entity replacement and masking for BIO training sentences.

Each application touches at most one entity per sentence. The action is
sampled as replace / mask / no-op with probabilities 0.30 / 0.30 / 0.40:

- replace: swap one entity's surface for a same-type dictionary surface,
  realigning tags to the new length (the sentence may grow or shrink);
- mask: overwrite a few characters inside one entity with the mask symbol,
  leaving all tags untouched (one character for entities up to 5 chars,
  20% of the length above that);
- no-op: return the sentence unchanged.

Augmentation is re-sampled every epoch from the pristine corpus, never
compounded. When a sentence has no entities, or no alternative surface
exists for the drawn entity's type, the action degrades to a no-op.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from emrkg.corpus import AnnotatedDocument, BioSentence, from_bio, tags_for_spans
from emrkg.errors import ConfigError, DataError
from emrkg.schema import EntitySchema

log = logging.getLogger(__name__)

MASK_SYMBOL = "□"

REPLACE = "Replace"
MASK = "Mask"
NOOP = "Noop"


@dataclass(frozen=True)
class EntityDictionary:
    """Type-keyed surface forms, each stored sorted for deterministic sampling."""

    by_type: dict[str, tuple[str, ...]]

    def __post_init__(self) -> None:
        clean = {}
        for etype, surfaces in self.by_type.items():
            if any(not s for s in surfaces):
                raise DataError(f"empty surface form under type {etype!r}")
            clean[etype] = tuple(sorted(set(surfaces)))
        object.__setattr__(self, "by_type", clean)

    def surfaces(self, etype: str) -> tuple[str, ...]:
        return self.by_type.get(etype, ())

    def all_surfaces(self) -> list[str]:
        return [s for surfaces in self.by_type.values() for s in surfaces]


@dataclass(frozen=True)
class DermConfig:
    p_replace: float = 0.30
    p_mask: float = 0.30
    p_noop: float = 0.40
    short_threshold: int = 5
    mask_fraction: float = 0.20
    mask_symbol: str = MASK_SYMBOL

    def __post_init__(self) -> None:
        probs = (self.p_replace, self.p_mask, self.p_noop)
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ConfigError(f"action probabilities must lie in [0,1]: {probs}")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ConfigError(f"action probabilities must sum to 1: {probs}")
        if self.short_threshold < 1:
            raise ConfigError("short_threshold must be >= 1")
        if not 0.0 < self.mask_fraction <= 1.0:
            raise ConfigError("mask_fraction must lie in (0,1]")
        if len(self.mask_symbol) != 1:
            raise ConfigError("mask_symbol must be a single character")


@dataclass(frozen=True)
class DermOutcome:
    sentence: BioSentence
    action: str
    affected_span: tuple[str, int, int] | None = None


def build_dictionary(
    docs: list[AnnotatedDocument],
    kb_names: dict[str, list[str]] | None = None,
    schema: EntitySchema | None = None,
) -> EntityDictionary:
    """Collect per-type surface sets from annotated documents, merging in
    optional knowledge-base name lists."""
    by_type: dict[str, set[str]] = {}
    for doc in docs:
        for span in doc.spans:
            by_type.setdefault(span.label, set()).add(span.surface)
    for etype, names in (kb_names or {}).items():
        if schema is not None:
            canonical = schema.canonical(etype)
            if canonical is None:
                raise DataError(f"KB name list type {etype!r} not in schema")
            etype = canonical
        by_type.setdefault(etype, set()).update(n for n in names if n)
    if not by_type:
        log.warning("entity dictionary is empty")
    return EntityDictionary({t: tuple(s) for t, s in by_type.items()})


def mask_count(entity_length: int, config: DermConfig) -> int:
    """Positions to mask: 1 for short entities, otherwise a rounded fraction.

    Rounding is half-up, floored at 1 so masking always does something.
    """
    if entity_length < 1:
        raise ValueError(f"entity_length must be >= 1, got {entity_length}")
    if entity_length <= config.short_threshold:
        return 1
    return max(1, int(config.mask_fraction * entity_length + 0.5))


def derm_transform(
    sentence: BioSentence,
    dictionary: EntityDictionary,
    config: DermConfig,
    rng: np.random.Generator,
) -> DermOutcome:
    """Apply one sampled replace/mask/no-op action to a sentence.

    The affected span is reported in the output sentence's coordinates.
    """
    roll = rng.random()
    if roll < config.p_replace:
        action = REPLACE
    elif roll < config.p_replace + config.p_mask:
        action = MASK
    else:
        action = NOOP

    entities = from_bio(sentence)
    if action == NOOP or not entities:
        return DermOutcome(sentence, NOOP)

    etype, start, end = entities[int(rng.integers(len(entities)))]

    if action == REPLACE:
        alternatives = [s for s in dictionary.surfaces(etype) if s != sentence.chars[start:end]]
        if not alternatives:
            return DermOutcome(sentence, NOOP)
        replacement = alternatives[int(rng.integers(len(alternatives)))]
        delta = len(replacement) - (end - start)
        chars = sentence.chars[:start] + replacement + sentence.chars[end:]
        spans = [
            (t, s + delta, e + delta) if s >= end else (t, s, e)
            for t, s, e in entities
            if (s, e) != (start, end)
        ]
        new_span = (etype, start, start + len(replacement))
        spans.append(new_span)
        tags = tags_for_spans(len(chars), spans)
        return DermOutcome(BioSentence(chars, tags), REPLACE, new_span)

    count = min(mask_count(end - start, config), end - start)
    positions = rng.choice(end - start, size=count, replace=False)
    chars = list(sentence.chars)
    for offset in positions:
        chars[start + int(offset)] = config.mask_symbol
    return DermOutcome(BioSentence("".join(chars), sentence.tags), MASK, (etype, start, end))


def augment_epoch(
    sentences: list[BioSentence],
    dictionary: EntityDictionary,
    config: DermConfig,
    rng: np.random.Generator,
) -> list[DermOutcome]:
    """Apply :func:`derm_transform` independently to every sentence."""
    return [derm_transform(s, dictionary, config, rng) for s in sentences]


def write_dictionary_file(dictionary: EntityDictionary, path: str | Path) -> None:
    """One `type\\tsurface` pair per line, sorted, UTF-8."""
    lines = [
        f"{etype}\t{surface}"
        for etype in sorted(dictionary.by_type)
        for surface in dictionary.by_type[etype]
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_dictionary_file(path: str | Path) -> EntityDictionary:
    by_type: dict[str, list[str]] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[1]:
            raise DataError(f"{path} line {lineno}: expected `type\\tsurface`")
        by_type.setdefault(parts[0], []).append(parts[1])
    return EntityDictionary({t: tuple(s) for t, s in by_type.items()})
