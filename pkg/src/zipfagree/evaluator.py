"""Minimal-pair suites and grammaticality scoring.

Every evaluation sentence uses the PP-N-PP-V template, so the verb sees
three candidate agreement targets: the subject plus one noun on each side.
The two members of a pair differ only in the verb's number inflection; a
model is correct on a pair when it assigns the grammatical member a strictly
higher total log-probability (ties count as wrong).

Conditions cross two axes.  Lexical: SEEN draws the subject and PP objects
from the stems that actually co-occurred with the verb in the training
split (in the same slot), UNSEEN draws them from the verb's withheld stems,
which never co-occur with it anywhere.  Attractor: MATCH gives both PP
objects the subject's number, MISMATCH gives both the opposite number, so
agree-with-recent and agree-with-first strategies both pick the
ungrammatical member.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import model
from .lexicon import Lexicon, N_STEMS, NUMBERS, load_lexicon
from .tokenizer import TokenVocab

SEEN, UNSEEN = "seen", "unseen"
MATCH, MISMATCH = "match", "mismatch"


class InsufficientCombinations(RuntimeError):
    pass


class EmptySuite(ValueError):
    pass


@dataclass(frozen=True)
class EvalCondition:
    lexical: str   # seen | unseen
    attractor: str  # match | mismatch

    def __post_init__(self):
        if self.lexical not in (SEEN, UNSEEN):
            raise ValueError(f"bad lexical axis {self.lexical!r}")
        if self.attractor not in (MATCH, MISMATCH):
            raise ValueError(f"bad attractor axis {self.attractor!r}")

    @property
    def label(self) -> str:
        return f"{self.lexical}-{self.attractor}"

    @classmethod
    def from_label(cls, label: str) -> "EvalCondition":
        lexical, attractor = label.strip().lower().split("-")
        return cls(lexical, attractor)


CONDITIONS = (
    EvalCondition(SEEN, MATCH),
    EvalCondition(UNSEEN, MATCH),
    EvalCondition(SEEN, MISMATCH),
    EvalCondition(UNSEEN, MISMATCH),
)


@dataclass(frozen=True)
class EvalSentence:
    """A PP-N-PP-V sentence whose attractor and verb numbers are set
    independently of the subject's (training sentences never mix numbers,
    evaluation ones must)."""

    subject_number: str
    pp_number: str
    verb_number: str
    subject_stem: int
    verb_stem: int
    pp_object_stems: tuple[int, int]
    pp_prepositions: tuple[int, int]

    template_id = "PP-N-PP-V"

    def tokens(self, lexicon: Lexicon) -> tuple[str, ...]:
        prep1, prep2 = self.pp_prepositions
        pp1, pp2 = self.pp_object_stems
        return (
            lexicon.prepositions[prep1], lexicon.determiner,
            lexicon.noun(pp1, self.pp_number),
            lexicon.determiner,
            lexicon.noun(self.subject_stem, self.subject_number),
            lexicon.prepositions[prep2], lexicon.determiner,
            lexicon.noun(pp2, self.pp_number),
            lexicon.verb(self.verb_stem, self.verb_number),
        )

    def text(self, lexicon: Lexicon) -> str:
        return " ".join(self.tokens(lexicon))


@dataclass(frozen=True)
class MinimalPair:
    grammatical: EvalSentence
    ungrammatical: EvalSentence
    condition: EvalCondition


def _flip(number: str) -> str:
    return NUMBERS[1 - NUMBERS.index(number)]


def generate_pairs(condition: EvalCondition, manifest: dict, n: int = 1000,
                   seed: int = 0, lexicon: Lexicon | None = None,
                   attempt_factor: int = 10_000) -> list[MinimalPair]:
    """Draw ``n`` distinct PP-N-PP-V minimal pairs for one condition.

    The verb (stem and number) is uniform over the 80 inflected forms whose
    eligible stem sets are non-empty; subject and PP stems are uniform over
    the condition's eligible sets, the two PP stems distinct when possible.
    Deterministic given the seed.
    """
    lexicon = lexicon or load_lexicon()
    rng = np.random.default_rng(seed)

    if condition.lexical == SEEN:
        subj_sets = {i: sorted(manifest["seen_subjects"][str(i)])
                     for i in range(N_STEMS)}
        pp_sets = {i: sorted(manifest["seen_pp_objects"][str(i)])
                   for i in range(N_STEMS)}
    else:
        withheld = {i: sorted(manifest["withheld"][str(i)])
                    for i in range(N_STEMS)}
        subj_sets = withheld
        pp_sets = withheld

    usable_verbs = [i for i in range(N_STEMS)
                    if subj_sets[i] and len(pp_sets[i]) >= 1]
    if not usable_verbs:
        raise InsufficientCombinations("no verb has eligible stems")

    pairs: list[MinimalPair] = []
    seen_keys: set[tuple] = set()
    budget = attempt_factor * n
    attempts = 0
    n_preps = len(lexicon.prepositions)
    while len(pairs) < n:
        if attempts >= budget:
            raise InsufficientCombinations(
                f"{len(pairs)}/{n} distinct pairs after {attempts} attempts "
                f"({condition.label})")
        attempts += 1
        verb_stem = usable_verbs[int(rng.integers(len(usable_verbs)))]
        number = NUMBERS[int(rng.integers(2))]
        subj_pool = subj_sets[verb_stem]
        pp_pool = pp_sets[verb_stem]
        subject = subj_pool[int(rng.integers(len(subj_pool)))]
        pp1 = pp_pool[int(rng.integers(len(pp_pool)))]
        if len(pp_pool) > 1:
            rest = [s for s in pp_pool if s != pp1]
            pp2 = rest[int(rng.integers(len(rest)))]
        else:
            pp2 = pp1
        preps = (int(rng.integers(n_preps)), int(rng.integers(n_preps)))
        key = (verb_stem, number, subject, pp1, pp2, preps)
        if key in seen_keys:
            continue
        seen_keys.add(key)
        pairs.append(_build_pair(condition, verb_stem, number, subject,
                                 (pp1, pp2), preps))
    return pairs


def _build_pair(condition: EvalCondition, verb_stem: int, number: str,
                subject: int, pp_stems: tuple[int, int],
                preps: tuple[int, int]) -> MinimalPair:
    pp_number = number if condition.attractor == MATCH else _flip(number)
    gram = EvalSentence(number, pp_number, number, subject, verb_stem,
                        pp_stems, preps)
    ungram = EvalSentence(number, pp_number, _flip(number), subject,
                          verb_stem, pp_stems, preps)
    return MinimalPair(gram, ungram, condition)


def score_pair(params, config: model.ModelConfig, vocab: TokenVocab,
               pair: MinimalPair, lexicon: Lexicon | None = None) -> bool:
    """True iff the grammatical member scores strictly higher."""
    lexicon = lexicon or load_lexicon()
    lp_g = model.sentence_logprob(params, config, vocab,
                                  pair.grammatical.tokens(lexicon))
    lp_u = model.sentence_logprob(params, config, vocab,
                                  pair.ungrammatical.tokens(lexicon))
    return lp_g > lp_u


def accuracy(params, config: model.ModelConfig, vocab: TokenVocab,
             pairs: list[MinimalPair], lexicon: Lexicon | None = None,
             batch_size: int = 256) -> float:
    """Fraction of pairs scored correctly, batched for speed."""
    if not pairs:
        raise EmptySuite("no pairs to score")
    lexicon = lexicon or load_lexicon()
    gram = [p.grammatical.tokens(lexicon) for p in pairs]
    ungram = [p.ungrammatical.tokens(lexicon) for p in pairs]
    lp_g = _batched_logprobs(params, config, vocab, gram, batch_size)
    lp_u = _batched_logprobs(params, config, vocab, ungram, batch_size)
    return float(np.mean(lp_g > lp_u))


def _batched_logprobs(params, config, vocab, token_seqs,
                      batch_size: int) -> np.ndarray:
    out = np.empty(len(token_seqs))
    for i in range(0, len(token_seqs), batch_size):
        ids = vocab.encode_batch(token_seqs[i:i + batch_size])
        out[i:i + len(ids)] = model.sequence_logprobs(params, config, ids)
    return out


def write_suite(path: str | Path, pairs: list[MinimalPair],
                lexicon: Lexicon | None = None) -> Path:
    """Tab-separated rows: condition, grammatical, ungrammatical."""
    lexicon = lexicon or load_lexicon()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        for p in pairs:
            w.writerow([p.condition.label, p.grammatical.text(lexicon),
                        p.ungrammatical.text(lexicon)])
    return path


def load_suite(path: str | Path,
               lexicon: Lexicon | None = None) -> list[MinimalPair]:
    lexicon = lexicon or load_lexicon()
    pairs = []
    with open(path, encoding="utf-8") as f:
        for row in csv.reader(f, delimiter="\t"):
            if not row:
                continue
            condition = EvalCondition.from_label(row[0])
            gram = _parse_pair_sentence(row[1].split(), lexicon)
            ungram = _parse_pair_sentence(row[2].split(), lexicon)
            pairs.append(MinimalPair(gram, ungram, condition))
    return pairs


def _parse_pair_sentence(tokens: list[str], lexicon: Lexicon) -> EvalSentence:
    # PP Det N PP V with PP/verb numbers possibly differing from the subject
    prep_index = {p: i for i, p in enumerate(lexicon.prepositions)}
    if len(tokens) != 9:
        raise ValueError(f"expected 9 tokens, got {tokens}")
    _, pp1_stem, pp1_num = lexicon.lookup(tokens[2])
    _, subj_stem, subj_num = lexicon.lookup(tokens[4])
    _, pp2_stem, pp2_num = lexicon.lookup(tokens[7])
    _, verb_stem, verb_num = lexicon.lookup(tokens[8])
    if pp1_num != pp2_num:
        raise ValueError(f"inconsistent attractor numbers in {tokens}")
    return EvalSentence(
        NUMBERS[subj_num], NUMBERS[pp1_num], NUMBERS[verb_num], subj_stem,
        verb_stem, (pp1_stem, pp2_stem),
        (prep_index[tokens[0]], prep_index[tokens[5]]))


def score_suite(params, config, vocab, pairs,
                lexicon: Lexicon | None = None) -> dict[str, dict]:
    """Per-condition counts and accuracy for a mixed suite."""
    if not pairs:
        raise EmptySuite("no pairs to score")
    lexicon = lexicon or load_lexicon()
    by_condition: dict[str, list[MinimalPair]] = {}
    for p in pairs:
        by_condition.setdefault(p.condition.label, []).append(p)
    results = {}
    for label in sorted(by_condition):
        subset = by_condition[label]
        acc = accuracy(params, config, vocab, subset, lexicon)
        results[label] = {
            "n": len(subset),
            "n_correct": round(acc * len(subset)),
            "accuracy": acc,
        }
    return results
