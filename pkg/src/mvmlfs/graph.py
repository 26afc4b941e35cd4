"""Typed heterogeneous graph over view, feature and label nodes.

The graph carries two groups of relations.  Statistical relations are
thresholded and max-normalized from MI / co-occurrence material:

    fv_belongs  feature -> view   (unweighted membership, weight 1.0)
    fl_stat     feature -> label  (MI > tau1, weight MI / max MI)
    ff_stat     feature <-> feature (MI > tau2, normalized, both directions)
    ll_stat     label <-> label   (co-occurrence > 0, normalized off-diagonal)
    vl_stat     view -> label     (per-view mean MI > tau3, normalized)

Semantic relations keep the raw agent score as weight, thresholded at
delta:

    fl_sem      feature -> label
    vl_sem      view -> label
    ll_sem      label <-> label   (both directions)

Statistical and semantic edges stay under distinct relation keys so the
attention network can learn a different mixing per relation.  No relation
ever contains self-loops.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InternalError, NodeSetMismatch
from .semantic import SemanticScoreSet
from .stats import MIMatrices

# (relation key, source node type, target node type), in canonical order.
RELATION_SCHEMA: list[tuple[str, str, str]] = [
    ("fv_belongs", "feature", "view"),
    ("fl_stat", "feature", "label"),
    ("ff_stat", "feature", "feature"),
    ("ll_stat", "label", "label"),
    ("vl_stat", "view", "label"),
    ("fl_sem", "feature", "label"),
    ("vl_sem", "view", "label"),
    ("ll_sem", "label", "label"),
]

RELATION_TYPES = {name: (src, dst) for name, src, dst in RELATION_SCHEMA}
UNDIRECTED_RELATIONS = ("ff_stat", "ll_stat", "ll_sem")
NODE_TYPES = ("view", "feature", "label")


class EmptyRelationWarning(UserWarning):
    pass


@dataclass
class Thresholds:
    """Edge admission thresholds; floats are absolute, "qNN" strings are
    percentiles of the strictly positive raw scores of that relation."""

    delta: float = 0.5
    tau1: float | str = "q70"
    tau2: float | str = "q70"
    tau3: float | str = "q70"

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must be in [0, 1], got {self.delta}")


def resolve_threshold(spec: float | str, raw_values: np.ndarray) -> float:
    """Turn a threshold spec into an absolute cutoff for the given scores."""
    if isinstance(spec, str):
        if not spec.startswith("q"):
            raise ValueError(f"threshold spec {spec!r} is neither a number nor 'qNN'")
        q = float(spec[1:]) / 100.0
        positive = raw_values[raw_values > 0]
        if positive.size == 0:
            return float("inf")
        return float(np.quantile(positive, q))
    value = float(spec)
    if value < 0:
        raise ValueError(f"absolute threshold must be >= 0, got {value}")
    return value


@dataclass
class HeteroGraph:
    n_views: int
    n_features: int
    n_labels: int
    relations: dict[str, list[tuple[int, int, float]]] = field(default_factory=dict)

    def __post_init__(self):
        for name, _, _ in RELATION_SCHEMA:
            self.relations.setdefault(name, [])

    def node_count(self, node_type: str) -> int:
        return {"view": self.n_views, "feature": self.n_features, "label": self.n_labels}[
            node_type
        ]

    def edge_arrays(self, relation: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Edges of one relation as (src, dst, weight) arrays in canonical
        (src, dst) order."""
        edges = sorted(self.relations[relation])
        if not edges:
            empty = np.empty(0)
            return empty.astype(np.int64), empty.astype(np.int64), empty
        src, dst, w = zip(*edges)
        return (
            np.asarray(src, dtype=np.int64),
            np.asarray(dst, dtype=np.int64),
            np.asarray(w, dtype=np.float64),
        )

    def validate(self) -> None:
        """Raise InternalError on any violated structural invariant."""
        for name, src_type, dst_type in RELATION_SCHEMA:
            edges = self.relations[name]
            n_src = self.node_count(src_type)
            n_dst = self.node_count(dst_type)
            seen = set()
            max_w = 0.0
            for s, t, w in edges:
                if not (0 <= s < n_src and 0 <= t < n_dst):
                    raise InternalError(f"{name}: edge ({s}, {t}) out of range")
                if src_type == dst_type and s == t:
                    raise InternalError(f"{name}: self-loop at node {s}")
                if not 0.0 <= w <= 1.0:
                    raise InternalError(f"{name}: weight {w} outside [0, 1]")
                if (s, t) in seen:
                    raise InternalError(f"{name}: duplicate edge ({s}, {t})")
                seen.add((s, t))
                max_w = max(max_w, w)
            normalized = name in ("fv_belongs", "fl_stat", "ff_stat", "ll_stat", "vl_stat")
            if edges and normalized and abs(max_w - 1.0) > 1e-12:
                raise InternalError(f"{name}: max weight {max_w} != 1.0")
            if name in UNDIRECTED_RELATIONS:
                weights = {(s, t): w for s, t, w in edges}
                for (s, t), w in weights.items():
                    if weights.get((t, s)) != w:
                        raise InternalError(f"{name}: edge ({s}, {t}) lacks mirror")
        fv = self.relations["fv_belongs"]
        if len(fv) != self.n_features or len({s for s, _, _ in fv}) != self.n_features:
            raise InternalError("fv_belongs must map every feature to exactly one view")
        for _, _, w in fv:
            if w != 1.0:
                raise InternalError("fv_belongs edges must have weight 1.0")


def _warn_if_empty(name: str, edges: list, had_material: bool) -> None:
    if had_material and not edges:
        warnings.warn(f"relation {name} is empty after thresholding", EmptyRelationWarning)


def build_statistical_graph(
    mi: MIMatrices, thresholds: Thresholds, feature_view: np.ndarray
) -> HeteroGraph:
    """Build the statistical half of the graph from MI material.

    `feature_view` maps each global feature id to its owning view id (the
    dataset's index map).  Thresholds are strict: a value equal to the
    cutoff does not produce an edge.
    """
    d, c = mi.fl.shape
    n_views = mi.vl.shape[0]
    g = HeteroGraph(n_views=n_views, n_features=d, n_labels=c)

    g.relations["fv_belongs"] = [(f, int(feature_view[f]), 1.0) for f in range(d)]

    tau1 = resolve_threshold(thresholds.tau1, mi.fl.ravel())
    fl_max = mi.fl.max() if mi.fl.size else 0.0
    fl_edges = []
    if fl_max > 0:
        for f, j in zip(*np.nonzero(mi.fl > tau1)):
            fl_edges.append((int(f), int(j), float(mi.fl[f, j] / fl_max)))
    g.relations["fl_stat"] = fl_edges
    _warn_if_empty("fl_stat", fl_edges, bool((mi.fl > 0).any()))

    tau2 = resolve_threshold(thresholds.tau2, mi.ff_mi)
    ff_max = mi.ff_mi.max() if mi.ff_mi.size else 0.0
    ff_edges = []
    if ff_max > 0:
        for idx in np.flatnonzero(mi.ff_mi > tau2):
            i, j = int(mi.ff_i[idx]), int(mi.ff_j[idx])
            w = float(mi.ff_mi[idx] / ff_max)
            ff_edges.append((i, j, w))
            ff_edges.append((j, i, w))
    g.relations["ff_stat"] = ff_edges
    _warn_if_empty("ff_stat", ff_edges, bool((mi.ff_mi > 0).any()))

    off_diag = mi.cooc - np.diag(np.diag(mi.cooc))
    ll_max = off_diag.max() if c > 1 else 0
    ll_edges = []
    if ll_max > 0:
        for i, j in zip(*np.nonzero(np.triu(off_diag, k=1) > 0)):
            w = float(off_diag[i, j] / ll_max)
            ll_edges.append((int(i), int(j), w))
            ll_edges.append((int(j), int(i), w))
    g.relations["ll_stat"] = ll_edges
    _warn_if_empty("ll_stat", ll_edges, bool(off_diag.any()))

    tau3 = resolve_threshold(thresholds.tau3, mi.vl.ravel())
    vl_max = mi.vl.max() if mi.vl.size else 0.0
    vl_edges = []
    if vl_max > 0:
        for v, j in zip(*np.nonzero(mi.vl > tau3)):
            vl_edges.append((int(v), int(j), float(mi.vl[v, j] / vl_max)))
    g.relations["vl_stat"] = vl_edges
    _warn_if_empty("vl_stat", vl_edges, bool((mi.vl > 0).any()))

    return g


def build_semantic_graph(
    scores: SemanticScoreSet,
    delta: float,
    n_views: int,
    n_features: int,
    n_labels: int,
) -> HeteroGraph:
    """Build the semantic half of the graph: edges for scores strictly above
    delta, raw score kept as weight."""
    g = HeteroGraph(n_views=n_views, n_features=n_features, n_labels=n_labels)
    g.relations["fl_sem"] = [
        (f, j, float(s)) for (f, j), s in sorted(scores.fl.items()) if s > delta
    ]
    g.relations["vl_sem"] = [
        (v, j, float(s)) for (v, j), s in sorted(scores.vlw.items()) if s > delta
    ]
    ll = []
    for (i, j), s in sorted(scores.ll.items()):
        if s > delta and i != j:
            ll.append((i, j, float(s)))
            ll.append((j, i, float(s)))
    g.relations["ll_sem"] = ll
    return g


def merge(statistical: HeteroGraph, semantic: HeteroGraph) -> HeteroGraph:
    """Union of the two relation groups over an identical node set."""
    same_nodes = (
        statistical.n_views == semantic.n_views
        and statistical.n_features == semantic.n_features
        and statistical.n_labels == semantic.n_labels
    )
    if not same_nodes:
        raise NodeSetMismatch(
            f"statistical nodes ({statistical.n_views}, {statistical.n_features}, "
            f"{statistical.n_labels}) != semantic nodes ({semantic.n_views}, "
            f"{semantic.n_features}, {semantic.n_labels})"
        )
    out = HeteroGraph(
        n_views=statistical.n_views,
        n_features=statistical.n_features,
        n_labels=statistical.n_labels,
    )
    for name, _, _ in RELATION_SCHEMA:
        out.relations[name] = list(statistical.relations[name]) + list(semantic.relations[name])
    return out


def export_graph(graph: HeteroGraph) -> str:
    """Deterministic JSON dump: relations in schema order, edges sorted by
    (source, target)."""
    payload = {
        "nodes": {
            "view": graph.n_views,
            "feature": graph.n_features,
            "label": graph.n_labels,
        },
        "relations": {
            name: [[s, t, w] for s, t, w in sorted(graph.relations[name])]
            for name, _, _ in RELATION_SCHEMA
        },
    }
    return json.dumps(payload, indent=1)


def write_graph(graph: HeteroGraph, path: str | Path) -> None:
    Path(path).write_text(export_graph(graph) + "\n", encoding="utf-8")


def load_graph(path: str | Path) -> HeteroGraph:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    nodes = payload["nodes"]
    g = HeteroGraph(
        n_views=nodes["view"], n_features=nodes["feature"], n_labels=nodes["label"]
    )
    for name, edges in payload["relations"].items():
        g.relations[name] = [(int(s), int(t), float(w)) for s, t, w in edges]
    return g
