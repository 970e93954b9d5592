"""Ingestion and indexing of non-target trial scores grouped by speaker pair.

A corpus nests target speakers over impostor speakers over detection
scores.  The loader accepts two row-oriented wire formats:

  CSV    header ``target_id,impostor_id,score``
  JSONL  one object ``{"target": ..., "impostor": ..., "score": ...}`` per line

Scores are kept at full double precision; no calibration or normalisation
is applied.  Loading is deterministic: targets and impostors are sorted by
identifier, scores keep input order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ParseError


def _frozen_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    arr = np.atleast_1d(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ImpostorGroup:
    """All scores between one target and one impostor speaker."""

    impostor_id: str
    scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scores", _frozen_array(self.scores))

    def __eq__(self, other):
        return (
            isinstance(other, ImpostorGroup)
            and self.impostor_id == other.impostor_id
            and np.array_equal(self.scores, other.scores)
        )


@dataclass(frozen=True, eq=False)
class TargetGroup:
    target_id: str
    impostors: tuple[ImpostorGroup, ...]

    def __post_init__(self):
        object.__setattr__(self, "impostors", tuple(self.impostors))

    def __eq__(self, other):
        return (
            isinstance(other, TargetGroup)
            and self.target_id == other.target_id
            and self.impostors == other.impostors
        )


@dataclass(frozen=True, eq=False)
class TrialCorpus:
    """Immutable nested view of all non-target trials."""

    targets: tuple[TargetGroup, ...]
    gender_labels: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))

    def __eq__(self, other):
        return (
            isinstance(other, TrialCorpus)
            and self.targets == other.targets
            and self.gender_labels == other.gender_labels
        )

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    @property
    def n_scores(self) -> int:
        return sum(len(g.scores) for t in self.targets for g in t.impostors)


@dataclass(frozen=True, eq=False)
class LabeledScoreSet:
    """Target and non-target trial scores for threshold calibration."""

    target_scores: np.ndarray
    nontarget_scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "target_scores", _frozen_array(self.target_scores))
        object.__setattr__(self, "nontarget_scores", _frozen_array(self.nontarget_scores))

    def __eq__(self, other):
        return (
            isinstance(other, LabeledScoreSet)
            and np.array_equal(self.target_scores, other.target_scores)
            and np.array_equal(self.nontarget_scores, other.nontarget_scores)
        )


def _parse_score(text_or_value, line: int) -> float:
    try:
        value = float(text_or_value)
    except (TypeError, ValueError):
        raise ParseError(f"score {text_or_value!r} is not a number", line) from None
    if not math.isfinite(value):
        raise ParseError(f"score {text_or_value!r} is not finite", line)
    return value


def _iter_csv_rows(path: Path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        header = [h.strip() for h in header]
        required = ("target_id", "impostor_id", "score")
        try:
            cols = [header.index(name) for name in required]
        except ValueError as exc:
            missing = [name for name in required if name not in header]
            raise ParseError(f"missing column(s) {missing} in header {header}", 1) from exc
        for line, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if max(cols) >= len(row):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
            yield line, row[cols[0]].strip(), row[cols[1]].strip(), row[cols[2]]


def _iter_jsonl_rows(path: Path):
    with open(path) as fh:
        any_row = False
        for line, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            any_row = True
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line) from exc
            if not isinstance(obj, dict):
                raise ParseError("row is not an object", line)
            missing = [k for k in ("target", "impostor", "score") if k not in obj]
            if missing:
                raise ParseError(f"missing key(s) {missing}", line)
            score = obj["score"]
            if isinstance(score, bool) or not isinstance(score, (int, float)):
                raise ParseError(f"score {score!r} is not a number", line)
            yield line, str(obj["target"]), str(obj["impostor"]), score
        if not any_row:
            raise ParseError("empty file", 1)


def load_corpus(path, format: str | None = None) -> TrialCorpus:
    """Load and validate a non-target trial corpus from `path`.

    `format` is "csv" or "jsonl"; when omitted it is inferred from the file
    suffix.  Any malformed row raises ParseError naming the line number.
    """
    path = Path(path)
    if format is None:
        format = {".csv": "csv", ".jsonl": "jsonl"}.get(path.suffix.lower())
        if format is None:
            raise ParseError(f"cannot infer format from suffix {path.suffix!r}; pass format=")
    if format not in ("csv", "jsonl"):
        raise ValueError(f"unknown format {format!r}, expected 'csv' or 'jsonl'")
    rows = _iter_csv_rows(path) if format == "csv" else _iter_jsonl_rows(path)

    grouped: dict[str, dict[str, list[float]]] = {}
    n_rows = 0
    for line, target_id, impostor_id, raw_score in rows:
        if not target_id or not impostor_id:
            raise ParseError("empty speaker identifier", line)
        if target_id == impostor_id:
            raise ParseError(f"target and impostor are the same speaker {target_id!r}", line)
        score = _parse_score(raw_score, line)
        grouped.setdefault(target_id, {}).setdefault(impostor_id, []).append(score)
        n_rows += 1
    if n_rows == 0:
        raise ParseError("file contains no data rows", 1)

    targets = tuple(
        TargetGroup(
            target_id=tid,
            impostors=tuple(
                ImpostorGroup(impostor_id=iid, scores=scores)
                for iid, scores in sorted(grouped[tid].items())
            ),
        )
        for tid in sorted(grouped)
    )
    return TrialCorpus(targets=targets)


def load_labeled_scores(path) -> LabeledScoreSet:
    """Load a ``label,score`` CSV with label in {target, nontarget}."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", 1) from None
        try:
            label_col, score_col = header.index("label"), header.index("score")
        except ValueError:
            raise ParseError(f"expected header with 'label' and 'score', got {header}", 1) from None
        buckets: dict[str, list[float]] = {"target": [], "nontarget": []}
        for line, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            label = row[label_col].strip()
            if label not in buckets:
                raise ParseError(f"label {label!r} is not 'target' or 'nontarget'", line)
            buckets[label].append(_parse_score(row[score_col], line))
    if not buckets["target"] or not buckets["nontarget"]:
        raise ParseError("file must contain at least one target and one nontarget score")
    return LabeledScoreSet(
        target_scores=buckets["target"], nontarget_scores=buckets["nontarget"]
    )


@dataclass(frozen=True, eq=False)
class PackedCorpus:
    """Flat array view of a corpus for vectorised estimation and inference.

    Pairs are enumerated target-major, so each target owns the contiguous
    pair range ``target_offsets[i]:target_offsets[i+1]``; pair ``p`` owns the
    contiguous score range ``pair_offsets[p]:pair_offsets[p+1]``.
    """

    n_targets: int
    target_ids: tuple[str, ...]
    impostor_ids: tuple[str, ...]
    target_offsets: np.ndarray  # (T+1,) pair ranges
    pair_target: np.ndarray  # (P,) owning target of each pair
    pair_offsets: np.ndarray  # (P+1,) score ranges
    scores: np.ndarray  # flat score values

    @property
    def n_pairs(self) -> int:
        return len(self.pair_target)

    @cached_property
    def pair_count(self) -> np.ndarray:
        return np.diff(self.pair_offsets)

    @cached_property
    def pairs_per_target(self) -> np.ndarray:
        return np.diff(self.target_offsets)

    @cached_property
    def _sums(self) -> tuple[np.ndarray, np.ndarray]:
        first = np.add.reduceat(self.scores, self.pair_offsets[:-1])
        second = np.add.reduceat(self.scores**2, self.pair_offsets[:-1])
        return first, second

    def pair_sums(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-pair (sum of scores, sum of squared scores)."""
        return self._sums

    @cached_property
    def pair_centered_ss(self) -> np.ndarray:
        """Per-pair sum of squared deviations from the pair mean.

        Two-pass computation: exact for constant pairs and free of the
        cancellation that the raw-moment expansion suffers.
        """
        if self.n_pairs == 0:
            return np.empty(0)
        centered = self.scores - np.repeat(self.pair_means(), self.pair_count)
        return np.add.reduceat(centered**2, self.pair_offsets[:-1])

    def pair_means(self) -> np.ndarray:
        return self.pair_sums()[0] / self.pair_count

    def pair_variances(self) -> np.ndarray:
        """Unbiased per-pair sample variance; NaN where fewer than 2 scores."""
        n = self.pair_count.astype(float)
        with np.errstate(invalid="ignore", divide="ignore"):
            v = self.pair_centered_ss / (n - 1.0)
        return np.where(n >= 2, v, np.nan)

    def pair_exceed_fraction(self, tau: float) -> np.ndarray:
        """Per-pair fraction of scores strictly above `tau`."""
        hits = np.add.reduceat((self.scores > tau).astype(float), self.pair_offsets[:-1])
        return hits / self.pair_count


def pack_corpus(corpus: TrialCorpus) -> PackedCorpus:
    target_ids = []
    impostor_ids = []
    target_offsets = [0]
    pair_target = []
    pair_offsets = [0]
    chunks = []
    for i, tgt in enumerate(corpus.targets):
        target_ids.append(tgt.target_id)
        for grp in tgt.impostors:
            impostor_ids.append(grp.impostor_id)
            pair_target.append(i)
            pair_offsets.append(pair_offsets[-1] + len(grp.scores))
            chunks.append(grp.scores)
        target_offsets.append(len(pair_target))
    scores = np.concatenate(chunks) if chunks else np.empty(0)
    return PackedCorpus(
        n_targets=corpus.n_targets,
        target_ids=tuple(target_ids),
        impostor_ids=tuple(impostor_ids),
        target_offsets=np.asarray(target_offsets, dtype=np.int64),
        pair_target=np.asarray(pair_target, dtype=np.int64),
        pair_offsets=np.asarray(pair_offsets, dtype=np.int64),
        scores=scores,
    )


def sample_skewness(values) -> float | None:
    """Bias-corrected (adjusted Fisher-Pearson) sample skewness.

    Returns None when fewer than 3 values or when the variance vanishes.
    """
    x = np.asarray(values, dtype=float)
    n = len(x)
    if n < 3:
        return None
    centered = x - x.mean()
    m2 = np.mean(centered**2)
    if m2 <= 0:
        return None
    g1 = np.mean(centered**3) / m2**1.5
    return float(g1 * math.sqrt(n * (n - 1.0)) / (n - 2.0))


@dataclass(frozen=True)
class PairMoments:
    target_id: str
    impostor_id: str
    count: int
    mean: float
    variance: float | None
    skewness: float | None


@dataclass(frozen=True)
class CorpusSummary:
    n_targets: int
    n_scores: int
    impostors_per_target: tuple[int, int, float]  # min, max, mean
    scores_per_pair: tuple[int, int, float]
    avg_pair_skewness: float | None
    pair_mean_skewness: float | None
    skewness_excluded_pairs: int
    pairs: tuple[PairMoments, ...]

    def to_json(self) -> dict:
        return {
            "n_targets": self.n_targets,
            "n_scores": self.n_scores,
            "impostors_per_target": {
                "min": self.impostors_per_target[0],
                "max": self.impostors_per_target[1],
                "mean": self.impostors_per_target[2],
            },
            "scores_per_pair": {
                "min": self.scores_per_pair[0],
                "max": self.scores_per_pair[1],
                "mean": self.scores_per_pair[2],
            },
            "avg_pair_skewness": self.avg_pair_skewness,
            "pair_mean_skewness": self.pair_mean_skewness,
            "skewness_excluded_pairs": self.skewness_excluded_pairs,
            "pairs": [
                {
                    "target_id": p.target_id,
                    "impostor_id": p.impostor_id,
                    "count": p.count,
                    "mean": p.mean,
                    "variance": p.variance,
                    "skewness": p.skewness,
                }
                for p in self.pairs
            ],
        }


def corpus_stats(corpus: TrialCorpus) -> CorpusSummary:
    """Per-pair moments plus corpus-level shape summaries.

    Pairs with fewer than 3 scores (or zero spread) are excluded from the
    skewness averages and counted in `skewness_excluded_pairs`.
    """
    if corpus.n_targets == 0:
        raise ValueError("corpus has no targets")
    pairs = []
    pair_means = []
    skews = []
    excluded = 0
    for tgt in corpus.targets:
        for grp in tgt.impostors:
            x = grp.scores
            mean = float(x.mean())
            variance = float(x.var(ddof=1)) if len(x) >= 2 else None
            skew = sample_skewness(x)
            if skew is None:
                excluded += 1
            else:
                skews.append(skew)
            pair_means.append(mean)
            pairs.append(
                PairMoments(
                    target_id=tgt.target_id,
                    impostor_id=grp.impostor_id,
                    count=len(x),
                    mean=mean,
                    variance=variance,
                    skewness=skew,
                )
            )
    n_imp = [len(t.impostors) for t in corpus.targets]
    n_scores = [p.count for p in pairs]
    return CorpusSummary(
        n_targets=corpus.n_targets,
        n_scores=int(sum(n_scores)),
        impostors_per_target=(min(n_imp), max(n_imp), float(np.mean(n_imp))),
        scores_per_pair=(min(n_scores), max(n_scores), float(np.mean(n_scores))),
        avg_pair_skewness=float(np.mean(skews)) if skews else None,
        pair_mean_skewness=sample_skewness(pair_means),
        skewness_excluded_pairs=excluded,
        pairs=tuple(pairs),
    )
