"""ML-kNN classifier, multi-label metrics and the repeated-split protocol.

The classifier is the standard Bayesian k-nearest-neighbour scheme for
multi-label data: per-label priors with Laplace smoothing plus posterior
tables over the number of positive neighbours.  Metrics:

* AP    macro-averaged average precision over labels (labels without a
        positive sample are skipped)
* AUC   macro ROC-AUC via the Mann-Whitney rank statistic with average
        ranks on ties; labels lacking both classes are skipped
* LRAP  sample-wise label ranking average precision, average-rank ties
* HL    Hamming loss over all (sample, label) cells

The protocol repeats a seeded 70/30 split, selects top-k features per
ratio, fits ML-kNN on the training side only (standardization statistics
included) and scores the test side.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .dataset import MultiViewDataset, split
from .errors import InternalError, NoPositives, ShapeMismatch, TooFewSamples
from .selection import ratio_to_k, top_k

METRICS = ("ap", "auc", "lrap", "hl")


@dataclass
class MlknnModel:
    k: int
    s: float
    priors: np.ndarray  # (c,)
    post_pos: np.ndarray  # (c, k+1)  P(t neighbours positive | label present)
    post_neg: np.ndarray  # (c, k+1)  P(t neighbours positive | label absent)
    train_features: np.ndarray  # standardized, selected columns only
    train_labels: np.ndarray
    feature_mean: np.ndarray
    feature_std: np.ndarray


def _standardize_fit(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    return mean, std


def _neighbor_counts(
    query: np.ndarray, train: np.ndarray, labels: np.ndarray, k: int, exclude_self: bool
) -> np.ndarray:
    """Positive-neighbour counts per (query, label); ties by ascending index."""
    sq_q = np.sum(query**2, axis=1)[:, None]
    sq_t = np.sum(train**2, axis=1)[None, :]
    dist = np.maximum(sq_q + sq_t - 2.0 * (query @ train.T), 0.0)
    if exclude_self:
        np.fill_diagonal(dist, np.inf)
    neighbors = np.argsort(dist, axis=1, kind="stable")[:, :k]
    return labels[neighbors].sum(axis=1).astype(np.int64)


def mlknn_fit(
    train_features: np.ndarray, train_labels: np.ndarray, k: int = 10, s: float = 1.0
) -> MlknnModel:
    n, c = train_labels.shape
    if k >= n:
        raise TooFewSamples(f"k={k} needs more than {n} training samples")
    if not np.isfinite(train_features).all():
        raise ValueError("training features contain NaN or Inf")
    mean, std = _standardize_fit(train_features)
    x = (train_features - mean) / std
    labels = train_labels.astype(np.int64)

    priors = (s + labels.sum(axis=0)) / (2.0 * s + n)
    counts = _neighbor_counts(x, x, labels, k, exclude_self=True)

    post_pos = np.empty((c, k + 1))
    post_neg = np.empty((c, k + 1))
    for j in range(c):
        positive = labels[:, j] == 1
        tally_pos = np.bincount(counts[positive, j], minlength=k + 1).astype(np.float64)
        tally_neg = np.bincount(counts[~positive, j], minlength=k + 1).astype(np.float64)
        post_pos[j] = (s + tally_pos) / (s * (k + 1) + tally_pos.sum())
        post_neg[j] = (s + tally_neg) / (s * (k + 1) + tally_neg.sum())

    return MlknnModel(
        k=k,
        s=s,
        priors=priors,
        post_pos=post_pos,
        post_neg=post_neg,
        train_features=x,
        train_labels=labels,
        feature_mean=mean,
        feature_std=std,
    )


def mlknn_predict(model: MlknnModel, test_features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior confidence per (sample, label) and the 0.5-thresholded
    decisions."""
    if test_features.shape[1] != model.train_features.shape[1]:
        raise ShapeMismatch(
            f"test has {test_features.shape[1]} columns, model expects "
            f"{model.train_features.shape[1]}"
        )
    x = (test_features - model.feature_mean) / model.feature_std
    counts = _neighbor_counts(x, model.train_features, model.train_labels, model.k, False)
    c = model.train_labels.shape[1]
    conf = np.empty((x.shape[0], c))
    for j in range(c):
        p_pos = model.priors[j] * model.post_pos[j, counts[:, j]]
        p_neg = (1.0 - model.priors[j]) * model.post_neg[j, counts[:, j]]
        conf[:, j] = p_pos / (p_pos + p_neg)
    return conf, (conf > 0.5).astype(np.int8)


# --- metrics ---


def metric_ap(y_true: np.ndarray, conf: np.ndarray) -> float:
    """Macro-averaged average precision over labels with >= 1 positive."""
    if y_true.shape != conf.shape:
        raise ShapeMismatch(f"shapes differ: {y_true.shape} vs {conf.shape}")
    values = []
    for j in range(y_true.shape[1]):
        truth = y_true[:, j]
        if truth.sum() == 0:
            continue
        order = np.argsort(-conf[:, j], kind="stable")
        hits = truth[order]
        cum_hits = np.cumsum(hits)
        positions = np.flatnonzero(hits) + 1
        values.append(float(np.mean(cum_hits[positions - 1] / positions)))
    if not values:
        raise NoPositives("no label has a positive sample")
    return float(np.mean(values))


def metric_macro_auc(y_true: np.ndarray, conf: np.ndarray) -> float:
    """Macro ROC-AUC (Mann-Whitney with average-rank tie correction)."""
    if y_true.shape != conf.shape:
        raise ShapeMismatch(f"shapes differ: {y_true.shape} vs {conf.shape}")
    values = []
    for j in range(y_true.shape[1]):
        truth = y_true[:, j].astype(bool)
        n_pos = int(truth.sum())
        n_neg = truth.size - n_pos
        if n_pos == 0 or n_neg == 0:
            continue
        ranks = rankdata(conf[:, j])
        auc = (ranks[truth].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
        values.append(float(auc))
    if not values:
        raise NoPositives("no label has both classes")
    return float(np.mean(values))


def metric_lrap(y_true: np.ndarray, conf: np.ndarray) -> float:
    """Sample-wise label ranking average precision with average-rank ties."""
    if y_true.shape != conf.shape:
        raise ShapeMismatch(f"shapes differ: {y_true.shape} vs {conf.shape}")
    values = []
    for i in range(y_true.shape[0]):
        positives = np.flatnonzero(y_true[i])
        if positives.size == 0:
            continue
        ranks = rankdata(-conf[i])
        pos_ranks = ranks[positives]
        per_label = [
            float(np.sum(pos_ranks <= r) / r) for r in pos_ranks
        ]
        values.append(float(np.mean(per_label)))
    if not values:
        raise NoPositives("no sample has a positive label")
    return float(np.mean(values))


def metric_hl(y_true: np.ndarray, decisions: np.ndarray) -> float:
    """Fraction of (sample, label) cells where decision differs from truth."""
    if y_true.shape != decisions.shape:
        raise ShapeMismatch(f"shapes differ: {y_true.shape} vs {decisions.shape}")
    return float(np.mean(y_true != decisions))


# --- protocol ---


@dataclass
class EvalReport:
    """Per-repeat metric values plus aggregation helpers."""

    rows: list[dict] = field(default_factory=list)
    repeats: int = 0
    base_seed: int = 0
    train_fraction: float = 0.7

    def add(self, method: str, ratio: float, repeat: int, metrics: dict[str, float]):
        self.rows.append({"method": method, "ratio": ratio, "repeat": repeat, **metrics})

    def methods(self) -> list[str]:
        seen = []
        for row in self.rows:
            if row["method"] not in seen:
                seen.append(row["method"])
        return seen

    def ratios(self) -> list[float]:
        seen = []
        for row in self.rows:
            if row["ratio"] not in seen:
                seen.append(row["ratio"])
        return seen

    def values(self, method: str, ratio: float, metric: str) -> np.ndarray:
        return np.array(
            [r[metric] for r in self.rows if r["method"] == method and r["ratio"] == ratio]
        )

    def mean_std(self, method: str, ratio: float, metric: str) -> tuple[float, float]:
        vals = self.values(method, ratio, metric)
        return float(vals.mean()), float(vals.std())

    def over_ratio_mean(self, method: str, metric: str) -> float:
        """Mean of the per-ratio means across the whole ratio sweep."""
        return float(
            np.mean([self.mean_std(method, r, metric)[0] for r in self.ratios()])
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", "ratio", "metric", "mean", "std", "repeats", "seed"])
        for method in self.methods():
            for ratio in self.ratios():
                for metric in METRICS:
                    mean, std = self.mean_std(method, ratio, metric)
                    writer.writerow(
                        [
                            method,
                            repr(float(ratio)),
                            metric,
                            repr(mean),
                            repr(std),
                            self.repeats,
                            self.base_seed,
                        ]
                    )
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "repeats": self.repeats,
                "base_seed": self.base_seed,
                "train_fraction": self.train_fraction,
                "rows": self.rows,
            },
            indent=1,
        )


def _check_range(name: str, value: float) -> float:
    if not 0.0 <= value <= 1.0:
        raise InternalError(f"metric {name}={value} outside [0, 1]")
    return value


def evaluate_selection(
    dataset: MultiViewDataset,
    selected: list[int],
    train_ids: np.ndarray,
    test_ids: np.ndarray,
    k: int = 10,
    s: float = 1.0,
) -> dict[str, float]:
    """Fit ML-kNN on the training rows of the selected columns, score test."""
    stacked = dataset.stacked()
    x_train = stacked[np.ix_(train_ids, selected)]
    x_test = stacked[np.ix_(test_ids, selected)]
    y_train = dataset.labels[train_ids]
    y_test = dataset.labels[test_ids]
    model = mlknn_fit(x_train, y_train, k=k, s=s)
    conf, decisions = mlknn_predict(model, x_test)
    return {
        "ap": _check_range("ap", metric_ap(y_test, conf)),
        "auc": _check_range("auc", metric_macro_auc(y_test, conf)),
        "lrap": _check_range("lrap", metric_lrap(y_test, conf)),
        "hl": _check_range("hl", metric_hl(y_test, decisions)),
    }


def run_protocol(
    dataset: MultiViewDataset,
    scores_or_method: dict[int, float] | str,
    ratios: list[float],
    repeats: int,
    base_seed: int,
    k: int = 10,
    s: float = 1.0,
    train_fraction: float = 0.7,
    method_name: str | None = None,
    report: EvalReport | None = None,
) -> EvalReport:
    """Repeated-split evaluation of one scoring method over a ratio sweep.

    `scores_or_method` is either a {feature id: score} map (fixed across
    repeats) or the string "random" for the seeded random-selection
    baseline, which redraws scores every repeat.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    d = dataset.n_features
    if report is None:
        report = EvalReport(repeats=repeats, base_seed=base_seed, train_fraction=train_fraction)
    if method_name is None:
        method_name = scores_or_method if isinstance(scores_or_method, str) else "scores"
    for repeat in range(repeats):
        indices = split(dataset.n, train_fraction, base_seed + repeat)
        if isinstance(scores_or_method, str):
            if scores_or_method != "random":
                raise ValueError(f"unknown method {scores_or_method!r}")
            rng = np.random.default_rng([base_seed + repeat, 0xBA5E])
            scores = {gid: float(v) for gid, v in enumerate(rng.permutation(d))}
        else:
            scores = scores_or_method
        for ratio in ratios:
            result = top_k(scores, ratio_to_k(ratio, d), dataset.feature_view, ratio=ratio)
            metrics = evaluate_selection(
                dataset, result.selected, indices.train_ids, indices.test_ids, k=k, s=s
            )
            report.add(method_name, ratio, repeat, metrics)
    return report
