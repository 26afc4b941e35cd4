"""Ranked feature selection at fractional ratios of the feature count."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import KTooLarge


@dataclass
class SelectionResult:
    ratio: float
    k: int
    selected: list[int]  # global feature ids, best first
    scores: list[float]  # aligned with `selected`
    per_view_counts: dict[int, int] = field(default_factory=dict)


def ratio_to_k(ratio: float, d: int) -> int:
    """Feature count for a selection ratio: round-half-up, floor of 1."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    return max(1, int(np.floor(ratio * d + 0.5)))


def top_k(
    scores: dict[int, float],
    k: int,
    feature_view: np.ndarray | None = None,
    ratio: float | None = None,
) -> SelectionResult:
    """Global top-k by score, ties broken by ascending feature id.

    Selection ranks all features together regardless of which view owns
    them; `per_view_counts` is bookkeeping, not a quota.
    """
    if k > len(scores):
        raise KTooLarge(f"k={k} exceeds the {len(scores)} scored features")
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))[:k]
    selected = [gid for gid, _ in ranked]
    per_view: dict[int, int] = {}
    if feature_view is not None:
        for gid in selected:
            view = int(feature_view[gid])
            per_view[view] = per_view.get(view, 0) + 1
    return SelectionResult(
        ratio=ratio if ratio is not None else k / len(scores),
        k=k,
        selected=selected,
        scores=[float(s) for _, s in ranked],
        per_view_counts=per_view,
    )


def select_at_ratios(
    scores: dict[int, float],
    ratios: list[float],
    feature_view: np.ndarray | None = None,
) -> list[SelectionResult]:
    d = len(scores)
    return [top_k(scores, ratio_to_k(r, d), feature_view, ratio=r) for r in ratios]


def selections_to_csv(results: list[SelectionResult], feature_view: np.ndarray) -> str:
    """Delimited dump: one row per (ratio, rank) with stable float text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["ratio", "k", "rank", "global_feature_id", "view_id", "score"])
    for res in results:
        for rank, (gid, score) in enumerate(zip(res.selected, res.scores), start=1):
            writer.writerow(
                [repr(float(res.ratio)), res.k, rank, gid, int(feature_view[gid]), repr(score)]
            )
    return buf.getvalue()
