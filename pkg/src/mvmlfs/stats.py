"""Discretized mutual information and label co-occurrence statistics.

Everything downstream of the raw matrices starts here: MI between every
feature and every label, MI over all unordered feature pairs (across view
boundaries), per-view average MI against each label, and the label
co-occurrence count matrix.

Features are discretized by equal-frequency binning so MI is invariant to
monotone rescaling of a feature; labels are binary and used as-is.  All MI
values are in nats.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import LengthMismatch

DEFAULT_BINS = 10


@dataclass
class DiscreteColumn:
    codes: np.ndarray  # (n,) int64, values in [0, n_bins)
    n_bins: int


def discretize(column: np.ndarray, bins: int) -> DiscreteColumn:
    """Equal-frequency binning by rank; ties share the lower bin.

    Columns with at most `bins` distinct values are coded by distinct-value
    identity instead (a constant column collapses to a single code).
    """
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    column = np.asarray(column, dtype=np.float64)
    if not np.isfinite(column).all():
        raise ValueError("column contains NaN or Inf")
    uniq, inverse = np.unique(column, return_inverse=True)
    if uniq.size <= bins:
        return DiscreteColumn(codes=inverse.astype(np.int64), n_bins=int(uniq.size))
    ranks = rankdata(column, method="min").astype(np.int64) - 1
    codes = (ranks * bins) // column.size
    return DiscreteColumn(codes=codes, n_bins=bins)


def _joint_mi(counts: np.ndarray) -> float:
    """MI in nats from a 2-d joint count table, with 0*ln(0) := 0."""
    n = counts.sum()
    p = counts / n
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = p * np.log(p / (px * py))
    mi = float(np.sum(terms[counts > 0]))
    return max(mi, 0.0)


def mutual_information(x: DiscreteColumn, y: DiscreteColumn) -> float:
    """Plug-in MI estimate between two discrete columns, in nats.

    The pair is ordered canonically before the histogram is built so that
    mutual_information(x, y) == mutual_information(y, x) bit-exactly.
    """
    if x.codes.size != y.codes.size:
        raise LengthMismatch(f"column lengths differ: {x.codes.size} vs {y.codes.size}")
    key_x = (x.n_bins, x.codes.tobytes())
    key_y = (y.n_bins, y.codes.tobytes())
    if key_y < key_x:
        x, y = y, x
    joint = np.bincount(
        x.codes * y.n_bins + y.codes, minlength=x.n_bins * y.n_bins
    ).reshape(x.n_bins, y.n_bins)
    return _joint_mi(joint)


@dataclass
class MIMatrices:
    """All pairwise statistics needed to build the statistical graph."""

    fl: np.ndarray  # (d, c) feature-label MI
    ff_i: np.ndarray  # (m,) int64 global ids, i < j
    ff_j: np.ndarray  # (m,) int64
    ff_mi: np.ndarray  # (m,) feature-feature MI
    vl: np.ndarray  # (V, c) per-view mean of fl rows
    cooc: np.ndarray  # (c, c) int64 co-occurrence counts, diagonal = label counts
    bins: int
    dataset_digest: str

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            np.savez_compressed(
                fh,
                fl=self.fl,
                ff_i=self.ff_i,
                ff_j=self.ff_j,
                ff_mi=self.ff_mi,
                vl=self.vl,
                cooc=self.cooc,
                bins=np.int64(self.bins),
                dataset_digest=np.array(self.dataset_digest),
            )

    @classmethod
    def load(cls, path: str | Path) -> "MIMatrices":
        with np.load(path) as z:
            return cls(
                fl=z["fl"],
                ff_i=z["ff_i"],
                ff_j=z["ff_j"],
                ff_mi=z["ff_mi"],
                vl=z["vl"],
                cooc=z["cooc"],
                bins=int(z["bins"]),
                dataset_digest=str(z["dataset_digest"]),
            )

    def matches(self, dataset_digest: str, bins: int) -> bool:
        return self.dataset_digest == dataset_digest and self.bins == bins


def _one_hot(columns: list[DiscreteColumn]) -> tuple[np.ndarray, np.ndarray]:
    """Stack one-hot encodings column-wise; returns (n, sum B_i) and bin offsets."""
    n = columns[0].codes.size
    bounds = np.concatenate([[0], np.cumsum([c.n_bins for c in columns])])
    out = np.zeros((n, int(bounds[-1])))
    rows = np.arange(n)
    for offset, col in zip(bounds[:-1], columns):
        out[rows, offset + col.codes] = 1.0
    return out, bounds


def _pairwise_mi_block(
    oh_a: np.ndarray, bounds_a: np.ndarray, oh_b: np.ndarray, bounds_b: np.ndarray
) -> np.ndarray:
    """MI between every column of group A and every column of group B.

    One matrix product yields every joint histogram at once: the crossprod
    of the stacked one-hot encodings contains the (B_i x B_j) joint table
    of pair (i, j) as a sub-block, and marginals live on the bin axes.
    Summing the pointwise MI terms per sub-block (reduceat over the bin
    boundaries on both axes) gives the full MI matrix of the block pair.
    """
    n = oh_a.shape[0]
    counts = oh_a.T @ oh_b
    pa = oh_a.sum(axis=0) / n
    pb = oh_b.sum(axis=0) / n
    p = counts / n
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = p * np.log(p / np.outer(pa, pb))
    terms[counts == 0] = 0.0
    mi = np.add.reduceat(np.add.reduceat(terms, bounds_a[:-1], axis=0), bounds_b[:-1], axis=1)
    return np.maximum(mi, 0.0)


def _apply_top_m_cap(
    ff_i: np.ndarray, ff_j: np.ndarray, ff_mi: np.ndarray, d: int, top_m: int
) -> np.ndarray:
    """Keep a pair when it ranks in either endpoint's top-m strongest pairs."""
    keep = np.zeros(ff_mi.size, dtype=bool)
    incident_pair = np.concatenate([np.arange(ff_mi.size)] * 2)
    incident_feat = np.concatenate([ff_i, ff_j])
    order = np.argsort(incident_feat, kind="stable")
    incident_pair = incident_pair[order]
    incident_feat = incident_feat[order]
    starts = np.searchsorted(incident_feat, np.arange(d + 1))
    for f in range(d):
        pairs = incident_pair[starts[f]:starts[f + 1]]
        if pairs.size > top_m:
            strongest = pairs[np.argsort(-ff_mi[pairs], kind="stable")[:top_m]]
        else:
            strongest = pairs
        keep[strongest] = True
    return keep


def compute_mi_matrices(
    dataset,
    bins: int = DEFAULT_BINS,
    ff_top_m: int | None = None,
    block_size: int = 256,
) -> MIMatrices:
    """Compute all MI and co-occurrence statistics for a dataset.

    Feature-feature MI covers every unordered global feature pair,
    including pairs that straddle view boundaries.  `ff_top_m` optionally
    keeps only each feature's strongest pairs (a pair survives when either
    endpoint retains it).  Work proceeds in column blocks so the one-hot
    crossprods stay small; the result is independent of block size.
    """
    stacked = dataset.stacked()
    d = stacked.shape[1]
    c = dataset.n_labels

    feat_cols = [discretize(stacked[:, f], bins) for f in range(d)]
    label_cols = [
        DiscreteColumn(codes=dataset.labels[:, j].astype(np.int64), n_bins=2) for j in range(c)
    ]
    oh_labels, label_bounds = _one_hot(label_cols)

    blocks = [
        (start, min(start + block_size, d)) for start in range(0, d, block_size)
    ]
    oh_blocks = []
    for start, stop in blocks:
        oh_blocks.append(_one_hot(feat_cols[start:stop]))

    fl = np.empty((d, c))
    for (start, stop), (oh, bounds) in zip(blocks, oh_blocks):
        fl[start:stop] = _pairwise_mi_block(oh, bounds, oh_labels, label_bounds)

    ff_rows: list[np.ndarray] = []
    ff_cols: list[np.ndarray] = []
    ff_vals: list[np.ndarray] = []
    for a, ((start_a, stop_a), (oh_a, bounds_a)) in enumerate(zip(blocks, oh_blocks)):
        for (start_b, stop_b), (oh_b, bounds_b) in list(zip(blocks, oh_blocks))[a:]:
            mi = _pairwise_mi_block(oh_a, bounds_a, oh_b, bounds_b)
            ii, jj = np.meshgrid(
                np.arange(start_a, stop_a), np.arange(start_b, stop_b), indexing="ij"
            )
            upper = ii < jj
            ff_rows.append(ii[upper])
            ff_cols.append(jj[upper])
            ff_vals.append(mi[upper])
    ff_i = np.concatenate(ff_rows)
    ff_j = np.concatenate(ff_cols)
    ff_mi = np.concatenate(ff_vals)
    order = np.lexsort((ff_j, ff_i))
    ff_i, ff_j, ff_mi = ff_i[order], ff_j[order], ff_mi[order]

    if ff_top_m is not None:
        keep = _apply_top_m_cap(ff_i, ff_j, ff_mi, d, ff_top_m)
        ff_i, ff_j, ff_mi = ff_i[keep], ff_j[keep], ff_mi[keep]

    vl = np.empty((dataset.n_views, c))
    for view in dataset.views:
        lo = dataset.global_id(view.view_id, 0)
        vl[view.view_id] = fl[lo:lo + view.width].mean(axis=0)

    labels64 = dataset.labels.astype(np.int64)
    cooc = labels64.T @ labels64

    return MIMatrices(
        fl=fl,
        ff_i=ff_i,
        ff_j=ff_j,
        ff_mi=ff_mi,
        vl=vl,
        cooc=cooc,
        bins=bins,
        dataset_digest=dataset.digest(),
    )


def load_or_compute_mi(
    dataset,
    cache_path: str | Path,
    bins: int = DEFAULT_BINS,
    ff_top_m: int | None = None,
) -> tuple[MIMatrices, bool]:
    """Return (matrices, cache_hit); recompute and rewrite on any mismatch."""
    cache_path = Path(cache_path)
    if cache_path.is_file():
        try:
            cached = MIMatrices.load(cache_path)
        except Exception:
            cached = None
        if cached is not None and cached.matches(dataset.digest(), bins):
            return cached, True
    mi = compute_mi_matrices(dataset, bins=bins, ff_top_m=ff_top_m)
    cache_path.parent.mkdir(parents=True, exist_ok=True)
    mi.save(cache_path)
    return mi, False
