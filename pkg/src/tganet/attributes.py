"""Mask-derived text attributes, their embeddings, and probability fusion.

Every training sample is described by five attribute words: how many polyps
its mask contains (``one``/``many``) and how large their combined area is
(``small``/``medium``/``large``). Each word has a fixed embedding vector;
at runtime the classifier's softmax probabilities reweight those vectors
row by row, producing the fused matrix that drives the label attention.
"""

from __future__ import annotations

import dataclasses
from enum import IntEnum
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import (
    DimensionMismatch,
    EmptyDataset,
    EmptyMask,
    InvalidConfig,
    InvalidProbabilities,
    MissingWord,
    ShapeMismatch,
)

ATTRIBUTE_WORDS = ("one", "many", "small", "medium", "large")

PROB_SUM_TOLERANCE = 1e-5
THRESHOLD_TIE_EPS = 1e-9

# 8-connectivity: diagonal neighbours belong to the same component.
_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


class CountClass(IntEnum):
    ONE = 0
    MANY = 1


class SizeClass(IntEnum):
    SMALL = 0
    MEDIUM = 1
    LARGE = 2


@dataclasses.dataclass(frozen=True)
class AttributeLabel:
    """Count and size class of one sample."""

    count_class: CountClass
    size_class: SizeClass

    def words(self) -> tuple[str, str]:
        return (
            ATTRIBUTE_WORDS[self.count_class],
            ATTRIBUTE_WORDS[2 + self.size_class],
        )


@dataclasses.dataclass(frozen=True)
class SizeThresholds:
    """Area-fraction cut points separating small/medium/large masks."""

    t_small_max: float
    t_medium_max: float

    def __post_init__(self):
        if not (0.0 < self.t_small_max < self.t_medium_max < 1.0):
            raise InvalidConfig(
                f"thresholds must satisfy 0 < t_small_max < t_medium_max < 1, "
                f"got ({self.t_small_max}, {self.t_medium_max})"
            )


def _foreground(mask) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ShapeMismatch(f"mask must be 2-D, got shape {mask.shape}")
    return mask != 0


def foreground_fraction(mask) -> float:
    """Foreground pixels over total pixels; raises EmptyMask on all-zero masks."""
    fg = _foreground(mask)
    count = int(fg.sum())
    if count == 0:
        raise EmptyMask("mask has no foreground pixel")
    return count / fg.size


def derive_count_attribute(mask) -> CountClass:
    """ONE if the mask has a single 8-connected component, MANY otherwise."""
    fg = _foreground(mask)
    if not fg.any():
        raise EmptyMask("mask has no foreground pixel")
    _, num = ndimage.label(fg, structure=_EIGHT_CONNECTED)
    return CountClass.ONE if num == 1 else CountClass.MANY


def fit_size_thresholds(train_masks) -> SizeThresholds:
    """Terciles of the foreground-area-fraction distribution over training masks.

    Uses linear-interpolation quantiles at 1/3 and 2/3 so the training set
    splits into three near-equal buckets. Quantile ties are forced apart by
    a tiny epsilon so the threshold ordering invariant always holds.
    """
    masks = list(train_masks)
    if not masks:
        raise EmptyDataset("cannot fit size thresholds on an empty mask list")
    fractions = np.array([foreground_fraction(m) for m in masks])
    lo, hi = np.quantile(fractions, [1.0 / 3.0, 2.0 / 3.0])
    lo = float(lo)
    hi = float(hi)
    if hi <= lo:
        hi = lo + THRESHOLD_TIE_EPS
    # Keep both cut points strictly inside (0, 1).
    lo = min(max(lo, THRESHOLD_TIE_EPS), 1.0 - 2 * THRESHOLD_TIE_EPS)
    hi = min(max(hi, lo + THRESHOLD_TIE_EPS), 1.0 - THRESHOLD_TIE_EPS)
    return SizeThresholds(lo, hi)


def derive_size_attribute(mask, thresholds: SizeThresholds) -> SizeClass:
    """Bucket the mask's total foreground area fraction (boundaries inclusive)."""
    fraction = foreground_fraction(mask)
    if fraction <= thresholds.t_small_max:
        return SizeClass.SMALL
    if fraction <= thresholds.t_medium_max:
        return SizeClass.MEDIUM
    return SizeClass.LARGE


def derive_attribute_label(mask, thresholds: SizeThresholds) -> AttributeLabel:
    return AttributeLabel(
        count_class=derive_count_attribute(mask),
        size_class=derive_size_attribute(mask, thresholds),
    )


@dataclasses.dataclass(frozen=True)
class AttributeEmbeddings:
    """Fixed-length embedding vector for each of the five attribute words."""

    table: dict
    k: int

    def __post_init__(self):
        missing = [w for w in ATTRIBUTE_WORDS if w not in self.table]
        if missing or len(self.table) != len(ATTRIBUTE_WORDS):
            raise MissingWord(f"embedding table must cover exactly {ATTRIBUTE_WORDS}")
        for word, vec in self.table.items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (self.k,):
                raise DimensionMismatch(
                    f"embedding for {word!r} has shape {vec.shape}, expected ({self.k},)"
                )
            if not np.all(np.isfinite(vec)):
                raise InvalidConfig(f"embedding for {word!r} contains non-finite values")

    def matrix(self) -> np.ndarray:
        """Rows in canonical word order: one, many, small, medium, large."""
        return np.stack([np.asarray(self.table[w], dtype=np.float64) for w in ATTRIBUTE_WORDS])


def _read_vector_file(path: Path) -> dict:
    """Parse `word v1 v2 ... vk` lines into a vocabulary of vectors."""
    vocab: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if not values:
                raise DimensionMismatch(f"{path}:{line_no}: token {word!r} has no vector")
            vocab[word] = np.array([float(v) for v in values], dtype=np.float64)
    return vocab


def _greedy_subtokens(word: str, vocab: dict):
    """Cover `word` left-to-right with the longest vocabulary tokens available."""
    pieces = []
    i = 0
    while i < len(word):
        for j in range(len(word), i, -1):
            if word[i:j] in vocab:
                pieces.append(word[i:j])
                i = j
                break
        else:
            return None
    return pieces


def load_attribute_embeddings(source, k: int) -> AttributeEmbeddings:
    """Build the 5-word embedding table from a vector file or a seed.

    An integer source draws a unit-variance Gaussian table from that seed
    (the architecture only needs fixed, distinct vectors). A path source
    reads a plain-text subword vector file; attribute words missing from
    the file are encoded as the mean of a greedy sub-token cover.
    """
    if k < 1:
        raise InvalidConfig(f"embedding length must be positive, got {k}")
    if isinstance(source, (int, np.integer)):
        rng = np.random.default_rng(int(source))
        table = {word: rng.standard_normal(k) for word in ATTRIBUTE_WORDS}
        return AttributeEmbeddings(table=table, k=k)

    path = Path(source)
    if not path.exists():
        raise MissingWord(f"embedding file not found: {path}")
    vocab = _read_vector_file(path)
    if not vocab:
        raise MissingWord(f"embedding file is empty: {path}")
    file_k = len(next(iter(vocab.values())))
    for word, vec in vocab.items():
        if len(vec) != file_k:
            raise DimensionMismatch(
                f"inconsistent vector lengths in {path}: {word!r} has {len(vec)}, expected {file_k}"
            )
    if file_k != k:
        raise DimensionMismatch(f"embedding file provides k={file_k}, requested k={k}")

    table = {}
    for word in ATTRIBUTE_WORDS:
        if word in vocab:
            table[word] = vocab[word]
            continue
        pieces = _greedy_subtokens(word, vocab)
        if pieces is None:
            raise MissingWord(f"no vector or sub-token cover for {word!r} in {path}")
        table[word] = np.mean([vocab[p] for p in pieces], axis=0)
    return AttributeEmbeddings(table=table, k=k)


def fuse_embeddings(probs, embeddings: AttributeEmbeddings, validate: bool = True) -> np.ndarray:
    """Scale each attribute word's embedding by its predicted probability.

    `probs` concatenates the count softmax (one, many) and the size softmax
    (small, medium, large). Returns the 5 x k fused matrix whose row j is
    probs[j] * embedding[word_j].
    """
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    if p.shape != (5,):
        raise ShapeMismatch(f"expected 5 probabilities, got shape {np.asarray(probs).shape}")
    if validate:
        if np.any(p < -PROB_SUM_TOLERANCE) or np.any(p > 1 + PROB_SUM_TOLERANCE):
            raise InvalidProbabilities(f"probabilities outside [0, 1]: {p}")
        if abs(p[:2].sum() - 1.0) > PROB_SUM_TOLERANCE:
            raise InvalidProbabilities(f"count probabilities sum to {p[:2].sum()}, expected 1")
        if abs(p[2:].sum() - 1.0) > PROB_SUM_TOLERANCE:
            raise InvalidProbabilities(f"size probabilities sum to {p[2:].sum()}, expected 1")
    return p[:, None] * embeddings.matrix()
