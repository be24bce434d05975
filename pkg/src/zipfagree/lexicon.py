"""Vocabulary for the synthetic grammar.

The lexicon is a checked-in table of 40 noun/verb stem pairs.  Stem k's noun
("singer") is morphologically related to its verb ("sings"); that relation is
cosmetic only, since downstream models treat words as atomic tokens, but it
keeps generated sentences readable.  Each stem contributes four surface
forms (noun sg/pl, verb sg/pl), all distinct across the lexicon, plus the
fixed function words "the", "by", and "near".
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path

N_STEMS = 40
DETERMINER = "the"
PREPOSITIONS = ("by", "near")

SINGULAR = "sg"
PLURAL = "pl"
NUMBERS = (SINGULAR, PLURAL)


class LexiconError(ValueError):
    """Malformed or inconsistent lexicon file."""


@dataclass(frozen=True)
class Lexicon:
    """Index-aligned noun and verb surface forms.

    ``noun_forms[k]`` and ``verb_forms[k]`` are ``(singular, plural)`` pairs
    for stem ``k``; noun stem k and verb stem k are morphological relatives.
    """

    noun_forms: tuple[tuple[str, str], ...]
    verb_forms: tuple[tuple[str, str], ...]
    determiner: str = DETERMINER
    prepositions: tuple[str, ...] = PREPOSITIONS
    source: str = ""
    _word_index: dict[str, tuple[str, int, int]] = field(
        init=False, repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        if len(self.noun_forms) != N_STEMS or len(self.verb_forms) != N_STEMS:
            raise LexiconError(
                f"expected {N_STEMS} stems, got {len(self.noun_forms)} nouns "
                f"and {len(self.verb_forms)} verbs")
        words = [self.determiner, *self.prepositions]
        for pair in (*self.noun_forms, *self.verb_forms):
            words.extend(pair)
        if len(set(words)) != len(words):
            dupes = sorted({w for w in words if words.count(w) > 1})
            raise LexiconError(f"duplicate surface forms: {dupes}")
        index = {}
        for k in range(N_STEMS):
            for n, num in enumerate(NUMBERS):
                index[self.noun_forms[k][n]] = ("noun", k, n)
                index[self.verb_forms[k][n]] = ("verb", k, n)
        object.__setattr__(self, "_word_index", index)

    def noun(self, stem: int, number: str) -> str:
        return self.noun_forms[stem][NUMBERS.index(number)]

    def verb(self, stem: int, number: str) -> str:
        return self.verb_forms[stem][NUMBERS.index(number)]

    def lookup(self, word: str) -> tuple[str, int, int]:
        """Return ``(category, stem, number_index)`` for a content word."""
        return self._word_index[word]

    def is_noun(self, word: str) -> bool:
        entry = self._word_index.get(word)
        return entry is not None and entry[0] == "noun"

    def is_verb(self, word: str) -> bool:
        entry = self._word_index.get(word)
        return entry is not None and entry[0] == "verb"

    @property
    def all_words(self) -> list[str]:
        """Every surface form, in stable order: function words then stems."""
        words = [self.determiner, *self.prepositions]
        for k in range(N_STEMS):
            words.extend(self.noun_forms[k])
            words.extend(self.verb_forms[k])
        return words


def parse_lexicon(text: str, source: str = "") -> Lexicon:
    nouns, verbs = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 4:
            raise LexiconError(
                f"{source or 'lexicon'}:{lineno}: expected 4 tab-separated "
                f"fields, got {len(parts)}")
        noun_sg, noun_pl, verb_sg, verb_pl = (p.strip() for p in parts)
        if not all((noun_sg, noun_pl, verb_sg, verb_pl)):
            raise LexiconError(f"{source or 'lexicon'}:{lineno}: empty field")
        nouns.append((noun_sg, noun_pl))
        verbs.append((verb_sg, verb_pl))
    return Lexicon(tuple(nouns), tuple(verbs), source=source)


def load_lexicon(path: str | Path | None = None) -> Lexicon:
    """Load a lexicon file; with no path, the packaged default."""
    if path is None:
        ref = importlib.resources.files("zipfagree.data") / "lexicon.txt"
        return parse_lexicon(ref.read_text(encoding="utf-8"),
                             source="builtin:lexicon.txt")
    path = Path(path)
    return parse_lexicon(path.read_text(encoding="utf-8"), source=str(path))
