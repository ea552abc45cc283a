"""Annotated word lexicons: parsing, label normalization and data splits.

Two lexicon flavors exist: categorical (word -> class, e.g. polarity or an
emotion flag) and continuous (word -> real score on a declared annotation
scale, e.g. valence rated 1-9).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class LexiconError(ValueError):
    """Raised for malformed lexicon files or invalid lexicon contents."""


@dataclass(frozen=True)
class CategoricalLexicon:
    """Ordered token -> class mapping over a declared class set."""

    entries: dict[str, str]
    classes: tuple[str, ...]

    def __post_init__(self):
        if len(self.classes) < 2:
            raise LexiconError("a categorical lexicon needs at least 2 classes")
        if len(set(self.classes)) != len(self.classes):
            raise LexiconError("duplicate class labels")
        allowed = set(self.classes)
        for token, label in self.entries.items():
            if label not in allowed:
                raise LexiconError(f"label {label!r} of {token!r} not in classes")

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class ContinuousLexicon:
    """Ordered token -> real score mapping on a declared (min, max) scale."""

    entries: dict[str, float]
    scale: tuple[float, float]

    def __post_init__(self):
        lo, hi = self.scale
        if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
            raise LexiconError(f"invalid scale {self.scale}")
        for token, score in self.entries.items():
            if not math.isfinite(score):
                raise LexiconError(f"non-finite score for {token!r}")
            if score < lo or score > hi:
                raise LexiconError(
                    f"score {score} of {token!r} outside scale [{lo}, {hi}]"
                )

    def __len__(self) -> int:
        return len(self.entries)


def parse_lexicon(path, kind: str, scale: Optional[tuple[float, float]] = None):
    """Parse a TSV lexicon file: ``token<TAB>label``, '#' lines are comments.

    ``kind`` is ``"categorical"`` or ``"continuous"``. For continuous
    lexicons, ``scale`` declares the annotation scheme's (min, max); when
    omitted it falls back to the empirical score range. Duplicate tokens are
    rejected: the ground truth would be ambiguous.
    """
    path = Path(path)
    if kind not in ("categorical", "continuous"):
        raise ValueError(f"unknown lexicon kind {kind!r}")
    raw: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise LexiconError(
                    f"{path}: line {lineno}: expected 'token<TAB>label', got {line!r}"
                )
            token, label = parts
            if token in raw:
                raise LexiconError(f"{path}: line {lineno}: duplicate token {token!r}")
            raw[token] = label

    if kind == "categorical":
        classes = tuple(dict.fromkeys(raw.values()))
        return CategoricalLexicon(entries=raw, classes=classes)

    entries: dict[str, float] = {}
    for token, label in raw.items():
        try:
            score = float(label)
        except ValueError:
            raise LexiconError(
                f"{path}: non-numeric score {label!r} for token {token!r}"
            ) from None
        if not math.isfinite(score):
            raise LexiconError(f"{path}: non-finite score for token {token!r}")
        entries[token] = score
    if scale is None:
        values = list(entries.values())
        scale = (min(values), max(values)) if values else (0.0, 1.0)
    return ContinuousLexicon(entries=entries, scale=(float(scale[0]), float(scale[1])))


def write_lexicon_tsv(entries: dict, path) -> None:
    """Write token/label pairs as the TSV format :func:`parse_lexicon` reads.

    Float labels are serialized with 6 decimal places.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for token, label in entries.items():
            if isinstance(label, float):
                fh.write(f"{token}\t{label:.6f}\n")
            else:
                fh.write(f"{token}\t{label}\n")


def parse_multilabel_lexicon(path) -> dict[str, CategoricalLexicon]:
    """Parse a 3-column TSV ``token<TAB>property<TAB>flag`` into one binary
    categorical lexicon per property (flag values become the two classes)."""
    path = Path(path)
    per_property: dict[str, dict[str, str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise LexiconError(
                    f"{path}: line {lineno}: expected 'token<TAB>property<TAB>flag'"
                )
            token, prop, flag = parts
            bucket = per_property.setdefault(prop, {})
            if token in bucket:
                raise LexiconError(
                    f"{path}: line {lineno}: duplicate token {token!r} for {prop!r}"
                )
            bucket[token] = flag
    out = {}
    for prop, entries in per_property.items():
        classes = tuple(sorted(set(entries.values())))
        out[prop] = CategoricalLexicon(entries=entries, classes=classes)
    return out


def normalize_to_unit_range(lexicon: ContinuousLexicon) -> ContinuousLexicon:
    """Affinely map scores from the declared scale onto [-1, 1].

    The map is x -> 2*(x - min)/(max - min) - 1 over the annotation scale,
    not the empirical score range, so it is data-independent and strictly
    monotone (rankings are preserved exactly).
    """
    lo, hi = lexicon.scale
    if hi == lo:
        raise LexiconError(f"degenerate scale [{lo}, {hi}]")
    span = hi - lo
    entries = {t: 2.0 * (x - lo) / span - 1.0 for t, x in lexicon.entries.items()}
    return ContinuousLexicon(entries=entries, scale=(-1.0, 1.0))


def filter_neutral(lexicon: ContinuousLexicon, band: float = 0.2) -> ContinuousLexicon:
    """Drop weak-sentiment entries: keep only scores with ``|score| > band``.

    Expects scores already normalized into [-1, 1]; entry order is preserved.
    """
    if band < 0 or band >= 1:
        raise ValueError(f"band must be in [0, 1), got {band}")
    lo, hi = lexicon.scale
    if lo < -1 or hi > 1:
        raise LexiconError("filter_neutral expects scores normalized to [-1, 1]")
    entries = {t: x for t, x in lexicon.entries.items() if abs(x) > band}
    return ContinuousLexicon(entries=entries, scale=lexicon.scale)


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/dev/test partitions of lexicon entries."""

    train: tuple[tuple[str, object], ...]
    dev: tuple[tuple[str, object], ...]
    test: tuple[tuple[str, object], ...]
    seed: int
    classes: Optional[tuple[str, ...]] = None

    def to_manifest(self) -> dict:
        """JSON-ready record of the split: seed plus member tokens."""
        return {
            "seed": self.seed,
            "train": [t for t, _ in self.train],
            "dev": [t for t, _ in self.dev],
            "test": [t for t, _ in self.test],
        }


def _allocate(counts: Sequence[int], frac: float, total_target: int) -> list[int]:
    # Largest-remainder allocation of total_target across groups, so the
    # overall size stays within one item of the requested fraction.
    quotas = [c * frac for c in counts]
    base = [int(math.floor(q)) for q in quotas]
    short = total_target - sum(base)
    remainders = sorted(
        range(len(counts)), key=lambda i: (-(quotas[i] - base[i]), i)
    )
    for i in remainders[:short]:
        base[i] += 1
    return [min(b, c) for b, c in zip(base, counts)]


def split_dataset(
    lexicon,
    test_frac: float = 0.20,
    dev_frac_of_train: float = 0.20,
    seed: int = 0,
) -> DatasetSplit:
    """Shuffle lexicon entries and cut deterministic train/dev/test parts.

    The test part takes ``test_frac`` of all entries; the dev part takes
    ``dev_frac_of_train`` of the remainder. Categorical lexicons are split
    stratified per class when every class has at least 5 members; otherwise
    a plain shuffle is used and a warning logged.
    """
    if not (0 < test_frac < 1) or not (0 < dev_frac_of_train < 1):
        raise ValueError("fractions must lie in (0, 1)")
    items = list(lexicon.entries.items())
    if len(items) < 5:
        raise ValueError(f"need at least 5 entries to split, got {len(items)}")
    rng = np.random.default_rng(seed)
    classes = getattr(lexicon, "classes", None)

    stratify = False
    if classes is not None:
        sizes = {c: sum(1 for _, y in items if y == c) for c in classes}
        stratify = all(v >= 5 for v in sizes.values())
        if not stratify:
            logger.warning(
                "classes with fewer than 5 members (%s): falling back to a "
                "plain shuffle",
                {c: v for c, v in sizes.items() if v < 5},
            )

    if stratify:
        groups = {c: [it for it in items if it[1] == c] for c in classes}
        for group in groups.values():
            rng.shuffle(group)
        counts = [len(groups[c]) for c in classes]
        n = len(items)
        test_counts = _allocate(counts, test_frac, round(n * test_frac))
        rest = [c - t for c, t in zip(counts, test_counts)]
        dev_counts = _allocate(
            rest, dev_frac_of_train, round(sum(rest) * dev_frac_of_train)
        )
        test, dev, train = [], [], []
        for c, n_test, n_dev in zip(classes, test_counts, dev_counts):
            group = groups[c]
            test.extend(group[:n_test])
            dev.extend(group[n_test:n_test + n_dev])
            train.extend(group[n_test + n_dev:])
        # interleaved class blocks would bias per-example training order
        rng.shuffle(train)
        rng.shuffle(dev)
        rng.shuffle(test)
    else:
        rng.shuffle(items)
        n = len(items)
        n_test = round(n * test_frac)
        n_dev = round((n - n_test) * dev_frac_of_train)
        test = items[:n_test]
        dev = items[n_test:n_test + n_dev]
        train = items[n_test + n_dev:]

    return DatasetSplit(
        train=tuple(train),
        dev=tuple(dev),
        test=tuple(test),
        seed=seed,
        classes=tuple(classes) if classes is not None else None,
    )


def drop_missing(lexicon, embeddings):
    """Remove lexicon words that have no embedding, logging the count.

    Returns a lexicon of the same type restricted to covered words.
    """
    kept = {t: y for t, y in lexicon.entries.items() if t in embeddings}
    dropped = len(lexicon.entries) - len(kept)
    if dropped:
        logger.info(
            "dropped %d of %d lexicon words without embeddings",
            dropped, len(lexicon.entries),
        )
    if isinstance(lexicon, ContinuousLexicon):
        return ContinuousLexicon(entries=kept, scale=lexicon.scale)
    return CategoricalLexicon(entries=kept, classes=lexicon.classes)
