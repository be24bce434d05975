"""Rank-frequency profiles of subject-verb pairings and power-law fitting.

Input is a TSV of pre-extracted (subject_lemma, verb_lemma[, age_months])
records.  For a chosen verb set, each verb's subjects are ranked by pairing
count and converted to proportions of that verb's total; the profile value
at rank r is the mean proportion across verbs, counting 0 for verbs with
fewer than r distinct subjects.  A power law K / r**alpha, normalized over
the profile's rank range, is fitted by exhaustive MSE grid search.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

DEFAULT_TOP_VERBS = 100
DEFAULT_GRID = (0.0, 3.0, 0.01)
MAX_AGE_MONTHS = 96
AGE_BIN_WIDTH = 12


class MalformedRow(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class EmptyCorpus(ValueError):
    pass


class TooFewVerbs(ValueError):
    pass


class SubjectVerbRecord(NamedTuple):
    subject: str
    verb: str
    age_months: int | None = None


@dataclass
class PairCorpus:
    records: list[SubjectVerbRecord]
    rejects: dict[str, int] = field(default_factory=dict)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


def load_pairs(path: str | Path, max_age: int = MAX_AGE_MONTHS) -> PairCorpus:
    """Read and validate a pairs TSV (header required, UTF-8).

    Lemmas are lowercased.  Rows with over-age children or non-ASCII verb
    lemmas are dropped and tallied; structural problems raise MalformedRow.
    """
    path = Path(path)
    records: list[SubjectVerbRecord] = []
    rejects = {"age": 0, "non_ascii_verb": 0}
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f, delimiter="\t")
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyCorpus(f"{path} is empty") from None
        cols = {name.strip().lower(): i for i, name in enumerate(header)}
        for required in ("subject_lemma", "verb_lemma"):
            if required not in cols:
                raise MalformedRow(1, f"missing column {required!r}")
        age_col = cols.get("age_months")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) <= max(cols.values()):
                raise MalformedRow(lineno, f"expected {len(cols)} fields")
            subject = row[cols["subject_lemma"]].strip().lower()
            verb = row[cols["verb_lemma"]].strip().lower()
            if not subject or not verb:
                raise MalformedRow(lineno, "empty lemma")
            age = None
            if age_col is not None and row[age_col].strip():
                try:
                    age = int(row[age_col])
                except ValueError:
                    raise MalformedRow(
                        lineno, f"bad age {row[age_col]!r}") from None
                if age < 0:
                    raise MalformedRow(lineno, f"negative age {age}")
                if age > max_age:
                    rejects["age"] += 1
                    continue
            if not verb.isascii():
                rejects["non_ascii_verb"] += 1
                continue
            records.append(SubjectVerbRecord(subject, verb, age))
    if not records:
        raise EmptyCorpus(f"{path} contains no usable records")
    return PairCorpus(records, rejects)


def pair_counts(records: Iterable[SubjectVerbRecord]) -> dict[str, Counter]:
    """Per-verb Counter of subject pairing counts."""
    counts: dict[str, Counter] = {}
    for rec in records:
        counts.setdefault(rec.verb, Counter())[rec.subject] += 1
    return counts


def top_verbs(records: Iterable[SubjectVerbRecord],
              k: int = DEFAULT_TOP_VERBS) -> list[str]:
    """The k verbs with the most pairings; count ties break lexicographically."""
    totals = Counter(rec.verb for rec in records)
    if len(totals) < k:
        raise TooFewVerbs(f"need {k} distinct verbs, corpus has {len(totals)}")
    return [v for v, _ in sorted(totals.items(),
                                 key=lambda item: (-item[1], item[0]))[:k]]


@dataclass
class RankProfile:
    f_empirical: np.ndarray       # mean proportion at each rank, 1-based
    verbs: list[str]
    per_verb_counts: dict[str, list[tuple[str, int]]]

    @property
    def n_ranks(self) -> int:
        return len(self.f_empirical)


def profile_from_counts(counts: dict[str, Counter] | dict[str, dict],
                        verbs: list[str]) -> RankProfile:
    """Average ranked subject proportions across ``verbs``.

    Subjects are ranked by descending count with lexicographic tie-breaks;
    ranks past a verb's inventory contribute proportion 0.
    """
    if not verbs:
        raise TooFewVerbs("no verbs selected")
    ranked: dict[str, list[tuple[str, int]]] = {}
    for v in verbs:
        subject_counts = counts.get(v) or {}
        if not subject_counts:
            raise TooFewVerbs(f"verb {v!r} has no pairings")
        ranked[v] = sorted(subject_counts.items(),
                           key=lambda item: (-item[1], item[0]))
    n_ranks = max(len(r) for r in ranked.values())
    f = np.zeros(n_ranks)
    for v in verbs:
        total = sum(c for _, c in ranked[v])
        props = np.array([c for _, c in ranked[v]], dtype=float) / total
        f[:len(props)] += props
    f /= len(verbs)
    return RankProfile(f, list(verbs), ranked)


def empirical_rank_frequencies(records: Iterable[SubjectVerbRecord],
                               verbs: list[str]) -> RankProfile:
    return profile_from_counts(pair_counts(records), verbs)


def theoretical_profile(alpha: float, n_ranks: int) -> np.ndarray:
    """K / r**alpha over ranks 1..n_ranks, normalized to sum to 1."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if n_ranks < 1:
        raise ValueError("need at least one rank")
    ranks = np.arange(1, n_ranks + 1, dtype=float)
    weights = ranks ** -alpha
    return weights / weights.sum()


def alpha_grid(spec: tuple[float, float, float] = DEFAULT_GRID) -> np.ndarray:
    lo, hi, step = spec
    n = int(round((hi - lo) / step))
    grid = lo + step * np.arange(n + 1)
    return np.round(grid, 10)


@dataclass
class FitResult:
    alpha_hat: float
    mse: float
    grid: tuple[float, float, float]
    n_ranks: int
    k_normalizer: float

    def mse_at(self, alpha: float, profile: np.ndarray) -> float:
        theo = theoretical_profile(alpha, len(profile))
        return float(np.mean((profile - theo) ** 2))


def fit_alpha(profile: RankProfile | np.ndarray,
              grid: tuple[float, float, float] = DEFAULT_GRID,
              max_rank: int | None = None) -> FitResult:
    """Exhaustive grid argmin of mean squared profile error; ties take the
    smaller alpha.  ``max_rank`` truncates the profile before fitting."""
    f = profile.f_empirical if isinstance(profile, RankProfile) else profile
    f = np.asarray(f, dtype=float)
    if max_rank is not None:
        f = f[:max_rank]
    n_ranks = len(f)
    alphas = alpha_grid(grid)
    ranks = np.arange(1, n_ranks + 1, dtype=float)
    weights = ranks[None, :] ** -alphas[:, None]
    theo = weights / weights.sum(axis=1, keepdims=True)
    mses = np.mean((f[None, :] - theo) ** 2, axis=1)
    best = int(np.argmin(mses))  # argmin returns the first (smallest) alpha
    alpha_hat = float(alphas[best])
    k = 1.0 / float((ranks ** -alpha_hat).sum())
    return FitResult(alpha_hat, float(mses[best]), grid, n_ranks, k)


@dataclass
class AgeBinFit:
    lo: int                      # inclusive, months
    hi: int                      # exclusive except the final bin
    n_pairs: int
    n_unique_verbs: int
    n_unique_subjects: int
    fit: FitResult | None        # None when the bin is unfit
    status: str                  # "ok" | "too_few_verbs" | "empty"

    @property
    def label(self) -> str:
        return f"{self.lo}-{self.hi}mo"


def fit_by_age(records: Iterable[SubjectVerbRecord],
               bin_width: int = AGE_BIN_WIDTH,
               max_age: int = MAX_AGE_MONTHS,
               top_k: int = DEFAULT_TOP_VERBS,
               grid: tuple[float, float, float] = DEFAULT_GRID,
               max_rank: int | None = None) -> list[AgeBinFit]:
    """Fit alpha separately per age bin ([0,12), ..., [84,96]).

    Top verbs are re-selected within each bin.  Bins with too few distinct
    verbs are reported as unfit instead of aborting the analysis.
    """
    n_bins = math.ceil(max_age / bin_width)
    binned: list[list[SubjectVerbRecord]] = [[] for _ in range(n_bins)]
    for rec in records:
        if rec.age_months is None:
            raise ValueError("age-stratified fit requires age_months")
        if rec.age_months > max_age:
            continue
        binned[min(rec.age_months // bin_width, n_bins - 1)].append(rec)

    results = []
    for b, recs in enumerate(binned):
        lo, hi = b * bin_width, min((b + 1) * bin_width, max_age)
        n_pairs = len(recs)
        verbs_in_bin = {r.verb for r in recs}
        subjects_in_bin = {r.subject for r in recs}
        if not recs:
            results.append(AgeBinFit(lo, hi, 0, 0, 0, None, "empty"))
            continue
        try:
            verbs = top_verbs(recs, top_k)
        except TooFewVerbs:
            results.append(AgeBinFit(lo, hi, n_pairs, len(verbs_in_bin),
                                     len(subjects_in_bin), None,
                                     "too_few_verbs"))
            continue
        profile = empirical_rank_frequencies(recs, verbs)
        fit = fit_alpha(profile, grid, max_rank)
        results.append(AgeBinFit(lo, hi, n_pairs, len(verbs_in_bin),
                                 len(subjects_in_bin), fit, "ok"))
    return results


def write_fit_csv(path: str | Path, rows: list[AgeBinFit]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["bin", "n_pairs", "n_unique_verbs", "n_unique_subjects",
                    "alpha_hat", "mse", "status"])
        for r in rows:
            w.writerow([
                r.label, r.n_pairs, r.n_unique_verbs, r.n_unique_subjects,
                f"{r.fit.alpha_hat:.2f}" if r.fit else "",
                f"{r.fit.mse:.6e}" if r.fit else "",
                r.status,
            ])
    return path


def write_profile_csv(path: str | Path, profile: RankProfile,
                      fit: FitResult | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    theo = (theoretical_profile(fit.alpha_hat, profile.n_ranks)
            if fit else None)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        header = ["rank", "f_empirical"]
        if theo is not None:
            header.append("f_theoretical")
        w.writerow(header)
        for i, value in enumerate(profile.f_empirical, start=1):
            row = [i, f"{value:.10g}"]
            if theo is not None:
                row.append(f"{theo[i - 1]:.10g}")
            w.writerow(row)
    return path
