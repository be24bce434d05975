"""Synthetic sentence generation with Zipfian-skewed subject choice.

Every sentence pairs one intransitive verb with a subject noun and up to two
prepositional phrases.  The verb (stem and number) is drawn uniformly; the
subject stem is drawn from a truncated power-law over stem offsets so that
``alpha`` controls how predictable the subject is given the verb.  Offsets
30..39 are withheld outright: those noun stems never co-occur with the verb,
in any slot, which is what later makes UNSEEN evaluation possible.

All nouns in a sentence share one grammatical number and the verb is
inflected to match, so the generated data never disambiguates which noun the
verb agrees with.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lexicon import Lexicon, N_STEMS, NUMBERS, load_lexicon

INFINITY = math.inf

TEMPLATES = ("N-V", "N-PP-V", "PP-N-V", "PP-N-PP-V")
# which PP slots each template fills: (pre-subject, post-subject)
_TEMPLATE_SLOTS = {
    "N-V": (False, False),
    "N-PP-V": (False, True),
    "PP-N-V": (True, False),
    "PP-N-PP-V": (True, True),
}

DEFAULT_N_SENTENCES = 12_000
SPLIT_FRACTIONS = {"train": 0.8, "valid": 0.1, "test": 0.1}
DEFAULT_ATTEMPT_FACTOR = 10_000


class GenerationExhausted(RuntimeError):
    """Could not produce enough unique sentences within the attempt budget."""


class SentenceParseError(ValueError):
    """Token sequence does not match any template expansion."""


@dataclass(frozen=True)
class ZipfParams:
    """Skew parameter plus the truncation that creates withheld pairings."""

    alpha: float
    cutoff: int = 30
    support: int = N_STEMS

    def __post_init__(self):
        if not (self.alpha >= 0):  # also rejects NaN
            raise ValueError(f"alpha must be >= 0 or inf, got {self.alpha}")
        if not 0 < self.cutoff <= self.support:
            raise ValueError(f"invalid cutoff {self.cutoff}")


def format_alpha(alpha: float) -> str:
    """Stable textual form used in file names, manifests and CSV cells."""
    if math.isinf(alpha):
        return "inf"
    s = f"{alpha:.4f}".rstrip("0")
    return s + "0" if s.endswith(".") else s


def parse_alpha(text: str) -> float:
    text = text.strip().lower()
    if text in ("inf", "infinity"):
        return INFINITY
    return float(text)


def offset_distribution(params: ZipfParams) -> np.ndarray:
    """Probability of each subject offset 0..cutoff-1 from the verb stem."""
    ranks = np.arange(1, params.cutoff + 1, dtype=np.float64)
    if math.isinf(params.alpha):
        weights = np.zeros(params.cutoff)
        weights[0] = 1.0
    else:
        weights = ranks ** -params.alpha
    return weights / weights.sum()


def subject_distribution(verb_stem: int, params: ZipfParams) -> np.ndarray:
    """Probability over all noun stems of being the subject of ``verb_stem``.

    Stem j gets mass proportional to 1/((j - i mod 40) + 1)**alpha when the
    offset (j - i mod 40) is below the cutoff, and exactly 0 otherwise.
    """
    if not 0 <= verb_stem < params.support:
        raise ValueError(f"verb_stem out of range: {verb_stem}")
    dist = np.zeros(params.support)
    offsets = (verb_stem + np.arange(params.cutoff)) % params.support
    dist[offsets] = offset_distribution(params)
    return dist


def withheld_stems(verb_stem: int, params: ZipfParams | None = None) -> set[int]:
    """Noun stems that never co-occur with ``verb_stem`` in generated data."""
    params = params or ZipfParams(0.0)
    if not 0 <= verb_stem < params.support:
        raise ValueError(f"verb_stem out of range: {verb_stem}")
    return {(verb_stem + off) % params.support
            for off in range(params.cutoff, params.support)}


def allowed_stems(verb_stem: int, params: ZipfParams | None = None) -> list[int]:
    """Noun stems permitted to co-occur with ``verb_stem``, by offset order."""
    params = params or ZipfParams(0.0)
    return [(verb_stem + off) % params.support for off in range(params.cutoff)]


@dataclass(frozen=True)
class Sentence:
    """One template instantiation.

    ``pp_object_stems`` / ``pp_prepositions`` are ordered by surface position
    (the pre-subject PP first when the template has both).
    """

    template_id: str
    number: str
    subject_stem: int
    verb_stem: int
    pp_object_stems: tuple[int, ...] = ()
    pp_prepositions: tuple[int, ...] = ()

    def tokens(self, lexicon: Lexicon) -> tuple[str, ...]:
        pre, post = _TEMPLATE_SLOTS[self.template_id]
        pps = list(zip(self.pp_prepositions, self.pp_object_stems))
        out: list[str] = []
        if pre:
            prep, stem = pps.pop(0)
            out += [lexicon.prepositions[prep], lexicon.determiner,
                    lexicon.noun(stem, self.number)]
        out += [lexicon.determiner, lexicon.noun(self.subject_stem, self.number)]
        if post:
            prep, stem = pps.pop(0)
            out += [lexicon.prepositions[prep], lexicon.determiner,
                    lexicon.noun(stem, self.number)]
        out.append(lexicon.verb(self.verb_stem, self.number))
        return tuple(out)

    def text(self, lexicon: Lexicon) -> str:
        return " ".join(self.tokens(lexicon))


def parse_sentence(tokens: list[str] | tuple[str, ...],
                   lexicon: Lexicon) -> Sentence:
    """Invert ``Sentence.tokens``; raises SentenceParseError on mismatch."""
    tokens = tuple(tokens)
    prep_index = {p: i for i, p in enumerate(lexicon.prepositions)}

    def read_pp(pos):
        if (len(tokens) >= pos + 3 and tokens[pos] in prep_index
                and tokens[pos + 1] == lexicon.determiner
                and lexicon.is_noun(tokens[pos + 2])):
            return prep_index[tokens[pos]], tokens[pos + 2]
        return None

    def read_np(pos):
        if (len(tokens) >= pos + 2 and tokens[pos] == lexicon.determiner
                and lexicon.is_noun(tokens[pos + 1])):
            return tokens[pos + 1]
        return None

    pre = read_pp(0)
    pos = 3 if pre else 0
    subject = read_np(pos)
    if subject is None:
        raise SentenceParseError(f"no subject NP in {tokens}")
    pos += 2
    post = read_pp(pos)
    if post:
        pos += 3
    if pos != len(tokens) - 1 or not lexicon.is_verb(tokens[pos]):
        raise SentenceParseError(f"no final verb in {tokens}")

    _, verb_stem, verb_num = lexicon.lookup(tokens[pos])
    _, subj_stem, subj_num = lexicon.lookup(subject)
    numbers = {verb_num, subj_num}
    pp_stems, pp_preps = [], []
    for pp in (pre, post):
        if pp:
            prep, noun = pp
            _, stem, num = lexicon.lookup(noun)
            pp_stems.append(stem)
            pp_preps.append(prep)
            numbers.add(num)
    if len(numbers) != 1:
        raise SentenceParseError(f"mixed numbers in {tokens}")
    template = TEMPLATES[(2 if pre else 0) + (1 if post else 0)]
    return Sentence(template, NUMBERS[verb_num], subj_stem, verb_stem,
                    tuple(pp_stems), tuple(pp_preps))


class _SubjectSampler:
    """Cached inverse-CDF sampling of subject offsets."""

    def __init__(self, params: ZipfParams):
        self.params = params
        self._cdf = np.cumsum(offset_distribution(params))
        self._cdf[-1] = 1.0

    def offset(self, rng: np.random.Generator) -> int:
        return int(np.searchsorted(self._cdf, rng.random(), side="right"))


def sample_sentence(rng: np.random.Generator, params: ZipfParams,
                    lexicon: Lexicon,
                    template_weights: tuple[float, ...] = (0.25,) * 4,
                    _sampler: _SubjectSampler | None = None) -> Sentence:
    """Draw one sentence: verb uniform over the 80 inflected forms, subject
    from the truncated Zipfian, PP objects uniform over the allowed stems."""
    sampler = _sampler or _SubjectSampler(params)
    verb_idx = int(rng.integers(2 * N_STEMS))
    verb_stem, number = verb_idx // 2, NUMBERS[verb_idx % 2]
    template = TEMPLATES[int(rng.choice(len(TEMPLATES), p=template_weights))]
    subject = (verb_stem + sampler.offset(rng)) % params.support
    n_pps = sum(_TEMPLATE_SLOTS[template])
    pp_stems = tuple((verb_stem + int(off)) % params.support
                     for off in rng.integers(params.cutoff, size=n_pps))
    pp_preps = tuple(int(p) for p in
                     rng.integers(len(lexicon.prepositions), size=n_pps))
    return Sentence(template, number, subject, verb_stem, pp_stems, pp_preps)


@dataclass
class Dataset:
    """12,000 unique sentences with an 80/10/10 split and a manifest.

    The manifest records everything needed to audit or rebuild the dataset,
    including the withheld stems per verb and the subject / PP-object stems
    actually observed with each verb in the training split.
    """

    params: ZipfParams
    seed: int
    splits: dict[str, list[Sentence]]
    manifest: dict = field(default_factory=dict)

    @property
    def sentences(self) -> list[Sentence]:
        return [s for name in ("train", "valid", "test")
                for s in self.splits[name]]


def _observed_pairings(train: list[Sentence]) -> tuple[dict, dict]:
    """Stem-level subject/PP-object co-occurrence sets per verb stem."""
    subj = {i: set() for i in range(N_STEMS)}
    ppobj = {i: set() for i in range(N_STEMS)}
    for s in train:
        subj[s.verb_stem].add(s.subject_stem)
        ppobj[s.verb_stem].update(s.pp_object_stems)
    return subj, ppobj


def generate_dataset(alpha: float, seed: int,
                     lexicon: Lexicon | None = None,
                     n_sentences: int = DEFAULT_N_SENTENCES,
                     template_weights: tuple[float, ...] = (0.25,) * 4,
                     attempt_factor: int = DEFAULT_ATTEMPT_FACTOR) -> Dataset:
    """Generate ``n_sentences`` unique sentences and split them 80/10/10.

    Uniqueness is enforced by rejection; raises GenerationExhausted after
    ``attempt_factor * n_sentences`` draws.
    """
    lexicon = lexicon or load_lexicon()
    params = ZipfParams(alpha)
    rng = np.random.default_rng(seed)
    sampler = _SubjectSampler(params)

    sentences: list[Sentence] = []
    seen_tokens: set[tuple[str, ...]] = set()
    budget = attempt_factor * n_sentences
    attempts = 0
    while len(sentences) < n_sentences:
        if attempts >= budget:
            raise GenerationExhausted(
                f"{len(sentences)}/{n_sentences} unique sentences after "
                f"{attempts} attempts (alpha={format_alpha(alpha)})")
        attempts += 1
        s = sample_sentence(rng, params, lexicon, template_weights, sampler)
        toks = s.tokens(lexicon)
        if toks not in seen_tokens:
            seen_tokens.add(toks)
            sentences.append(s)

    order = rng.permutation(n_sentences)
    n_train = round(SPLIT_FRACTIONS["train"] * n_sentences)
    n_valid = round(SPLIT_FRACTIONS["valid"] * n_sentences)
    splits = {
        "train": [sentences[i] for i in order[:n_train]],
        "valid": [sentences[i] for i in order[n_train:n_train + n_valid]],
        "test": [sentences[i] for i in order[n_train + n_valid:]],
    }
    seen_subj, seen_pp = _observed_pairings(splits["train"])
    manifest = {
        "format_version": 1,
        "alpha": format_alpha(alpha),
        "seed": seed,
        "n_sentences": n_sentences,
        "split_sizes": {k: len(v) for k, v in splits.items()},
        "template_weights": list(template_weights),
        "cutoff": params.cutoff,
        "support": params.support,
        "attempt_factor": attempt_factor,
        "attempts_used": attempts,
        "pp_object_may_repeat_subject": True,
        "withheld": {str(i): sorted(withheld_stems(i, params))
                     for i in range(N_STEMS)},
        "seen_subjects": {str(i): sorted(seen_subj[i]) for i in range(N_STEMS)},
        "seen_pp_objects": {str(i): sorted(seen_pp[i]) for i in range(N_STEMS)},
        "lexicon_source": lexicon.source,
    }
    return Dataset(params, seed, splits, manifest)


def write_dataset(dataset: Dataset, out_dir: str | Path,
                  lexicon: Lexicon | None = None) -> Path:
    """Write train/valid/test.txt (one sentence per line) plus manifest.json."""
    lexicon = lexicon or load_lexicon()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, sents in dataset.splits.items():
        with open(out_dir / f"{name}.txt", "w", encoding="utf-8") as f:
            for s in sents:
                f.write(s.text(lexicon) + "\n")
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(dataset.manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return out_dir


def load_dataset(data_dir: str | Path,
                 lexicon: Lexicon | None = None) -> Dataset:
    lexicon = lexicon or load_lexicon()
    data_dir = Path(data_dir)
    with open(data_dir / "manifest.json", encoding="utf-8") as f:
        manifest = json.load(f)
    splits = {}
    for name in ("train", "valid", "test"):
        with open(data_dir / f"{name}.txt", encoding="utf-8") as f:
            splits[name] = [parse_sentence(line.split(), lexicon)
                            for line in f if line.strip()]
    params = ZipfParams(parse_alpha(manifest["alpha"]),
                        cutoff=manifest.get("cutoff", 30),
                        support=manifest.get("support", N_STEMS))
    return Dataset(params, manifest["seed"], splits, manifest)
