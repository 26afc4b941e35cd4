"""Type-aware heterogeneous graph attention network, in plain numpy.

One single-head attention layer is instantiated per relation; messages
flow along edge direction, and per-relation outputs targeting the same
node type are summed.  For an edge (u -> v, weight w) in relation r:

    e_uv   = LeakyReLU(a_r . [W_r h_u || W_r h_v] + b_r * w)
    alpha  = softmax of e over v's in-neighbors within r
    msg    = alpha * W_r h_u

Self-loops are never added; nodes with zero in-degree under every
relation keep a learned per-type bias vector instead of an aggregate.
ELU is applied between layers but not after the last one.

Training is self-supervised: a dot-product decoder over final embeddings
reconstructs feature-label and label-label edge weights (against an equal
number of sampled non-edges with target 0), and a scalar readout over
feature embeddings regresses each feature's total incident feature-label
plus feature-feature edge weight, min-max rescaled to [0, 1].  The readout
value of a feature node is its selection score.

Everything is float64 and deterministic given a seed, which makes the
finite-difference gradient check in :func:`gradient_check` meaningful.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import (
    GradCheckFailure,
    NonFiniteLoss,
    NoSupervisionEdges,
    ShapeMismatch,
)
from .graph import NODE_TYPES, RELATION_SCHEMA, UNDIRECTED_RELATIONS, HeteroGraph

INPUT_STATS = 4  # [sum, max, mean, degree] per relation block
INPUT_DIM = INPUT_STATS * len(RELATION_SCHEMA)


@dataclass
class TrainConfig:
    seed: int
    hidden_dim: int = 32
    layers: int = 2
    epochs: int = 200
    learning_rate: float = 0.01
    negative_ratio: float = 1.0
    lambda_score: float = 1.0
    leaky_slope: float = 0.2
    optimizer: str = "adam"

    def __post_init__(self):
        for name in ("hidden_dim", "layers", "epochs", "learning_rate", "leaky_slope"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.negative_ratio < 0 or self.lambda_score < 0:
            raise ValueError("negative_ratio and lambda_score must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class GatParameters:
    """Trained (or freshly initialized) parameter set plus its config."""

    values: dict[str, np.ndarray]
    config: TrainConfig
    loss_history: list[float] = field(default_factory=list)


def init_node_features(graph: HeteroGraph, seed: int) -> dict[str, np.ndarray]:
    """Initial node embeddings from incident-edge weight statistics.

    For every relation in the schema (in fixed order) each node gets a
    [sum, max, mean, degree] block over its incident weights in that
    relation: outgoing edges where its type is the source, incoming where
    it is the target, incoming only for same-type undirected relations
    (each neighbor counted once).  Blocks of relations not touching the
    node's type stay zero, so every type shares one schema-determined
    width.  Columns are z-scored per node type; construction is fully
    determined by the graph (`seed` is accepted for interface stability).
    """
    del seed
    tables: dict[str, np.ndarray] = {}
    for node_type in NODE_TYPES:
        n = graph.node_count(node_type)
        blocks = []
        for rel, src_type, dst_type in RELATION_SCHEMA:
            block = np.zeros((n, INPUT_STATS))
            if node_type in (src_type, dst_type):
                src, dst, w = graph.edge_arrays(rel)
                if rel in UNDIRECTED_RELATIONS or node_type == dst_type:
                    idx = dst
                else:
                    idx = src
                if idx.size:
                    sums = np.zeros(n)
                    degree = np.zeros(n)
                    maxes = np.zeros(n)
                    np.add.at(sums, idx, w)
                    np.add.at(degree, idx, 1.0)
                    np.maximum.at(maxes, idx, w)
                    means = np.where(degree > 0, sums / np.maximum(degree, 1.0), 0.0)
                    block = np.stack([sums, maxes, means, degree], axis=1)
            blocks.append(block)
        raw = np.concatenate(blocks, axis=1)
        mean = raw.mean(axis=0)
        std = raw.std(axis=0)
        tables[node_type] = (raw - mean) / np.where(std > 1e-12, std, 1.0)
    return tables


def _leaky(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


def _leaky_grad(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, 1.0, slope)


def _elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def _elu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class _Relation:
    """Edge arrays of one relation, sorted by target for segment softmax."""

    def __init__(self, name: str, src_type: str, dst_type: str, graph: HeteroGraph):
        self.name = name
        self.src_type = src_type
        self.dst_type = dst_type
        src, dst, w = graph.edge_arrays(name)
        order = np.lexsort((src, dst))
        self.src = src[order]
        self.dst = dst[order]
        self.w = w[order]
        self.n_edges = self.src.size
        if self.n_edges:
            change = np.flatnonzero(np.diff(self.dst)) + 1
            self.seg_starts = np.concatenate([[0], change])
            counts = np.diff(np.concatenate([self.seg_starts, [self.n_edges]]))
            self.seg_id = np.repeat(np.arange(self.seg_starts.size), counts)
        else:
            self.seg_starts = np.empty(0, dtype=np.int64)
            self.seg_id = np.empty(0, dtype=np.int64)

    def softmax(self, logits: np.ndarray) -> np.ndarray:
        peak = np.maximum.reduceat(logits, self.seg_starts)
        ex = np.exp(logits - peak[self.seg_id])
        total = np.add.reduceat(ex, self.seg_starts)
        return ex / total[self.seg_id]


class HeteroGat:
    """Forward/backward machinery bound to one graph."""

    def __init__(self, graph: HeteroGraph, config: TrainConfig):
        self.graph = graph
        self.config = config
        self.relations = [
            _Relation(name, src, dst, graph) for name, src, dst in RELATION_SCHEMA
        ]
        self.inputs = init_node_features(graph, config.seed)
        self.covered = {
            t: np.zeros(graph.node_count(t), dtype=bool) for t in NODE_TYPES
        }
        for rel in self.relations:
            if rel.n_edges:
                self.covered[rel.dst_type][rel.dst] = True

    # --- parameters ---

    def param_names(self) -> list[str]:
        names = []
        for layer in range(self.config.layers):
            for rel, _, _ in RELATION_SCHEMA:
                names += [f"l{layer}.{rel}.W", f"l{layer}.{rel}.a", f"l{layer}.{rel}.b"]
            for t in NODE_TYPES:
                names.append(f"l{layer}.bias.{t}")
        names += ["readout.w", "readout.b"]
        return names

    def init_parameters(self) -> GatParameters:
        rng = np.random.default_rng(self.config.seed)
        h = self.config.hidden_dim
        values: dict[str, np.ndarray] = {}
        for layer in range(self.config.layers):
            in_dim = INPUT_DIM if layer == 0 else h
            for rel, _, _ in RELATION_SCHEMA:
                scale = np.sqrt(2.0 / (in_dim + h))
                values[f"l{layer}.{rel}.W"] = rng.normal(0.0, scale, size=(in_dim, h))
                values[f"l{layer}.{rel}.a"] = rng.normal(0.0, np.sqrt(1.0 / h), size=2 * h)
                values[f"l{layer}.{rel}.b"] = np.zeros(1)
            for t in NODE_TYPES:
                values[f"l{layer}.bias.{t}"] = np.zeros(h)
        values["readout.w"] = rng.normal(0.0, np.sqrt(1.0 / h), size=h)
        values["readout.b"] = np.zeros(1)
        return GatParameters(values=values, config=self.config)

    # --- forward / backward ---

    def layer_forward(
        self, values: dict[str, np.ndarray], layer: int, embeddings: dict[str, np.ndarray]
    ):
        """One message-passing layer.

        Returns (pre-activation outputs per type, relation caches).  The
        caller applies ELU between layers.
        """
        h = self.config.hidden_dim
        slope = self.config.leaky_slope
        for t in NODE_TYPES:
            if embeddings[t].shape[0] != self.graph.node_count(t):
                raise ShapeMismatch(
                    f"embeddings for {t}: {embeddings[t].shape[0]} rows, "
                    f"expected {self.graph.node_count(t)}"
                )
        out = {t: np.zeros((self.graph.node_count(t), h)) for t in NODE_TYPES}
        rel_caches = {}
        for rel in self.relations:
            if rel.n_edges == 0:
                continue
            W = values[f"l{layer}.{rel.name}.W"]
            a = values[f"l{layer}.{rel.name}.a"]
            b = values[f"l{layer}.{rel.name}.b"]
            if embeddings[rel.src_type].shape[1] != W.shape[0]:
                raise ShapeMismatch(
                    f"{rel.name} layer {layer}: input width "
                    f"{embeddings[rel.src_type].shape[1]} vs W rows {W.shape[0]}"
                )
            xu = embeddings[rel.src_type] @ W
            xv = embeddings[rel.dst_type] @ W
            pre = xu[rel.src] @ a[:h] + xv[rel.dst] @ a[h:] + b[0] * rel.w
            alpha = rel.softmax(_leaky(pre, slope))
            msg = alpha[:, None] * xu[rel.src]
            np.add.at(out[rel.dst_type], rel.dst, msg)
            rel_caches[rel.name] = (xu, xv, pre, alpha)
        for t in NODE_TYPES:
            uncovered = ~self.covered[t]
            if uncovered.any():
                out[t][uncovered] = values[f"l{layer}.bias.{t}"]
        return out, rel_caches

    def _layer_backward(
        self,
        values: dict[str, np.ndarray],
        grads: dict[str, np.ndarray],
        layer: int,
        d_out: dict[str, np.ndarray],
        embeddings: dict[str, np.ndarray],
        rel_caches: dict,
    ) -> dict[str, np.ndarray]:
        h = self.config.hidden_dim
        slope = self.config.leaky_slope
        d_emb = {t: np.zeros_like(embeddings[t]) for t in NODE_TYPES}
        d_msg_by_type = {}
        for t in NODE_TYPES:
            uncovered = ~self.covered[t]
            if uncovered.any():
                grads[f"l{layer}.bias.{t}"] += d_out[t][uncovered].sum(axis=0)
            d_msg_by_type[t] = np.where(self.covered[t][:, None], d_out[t], 0.0)
        for rel in self.relations:
            if rel.n_edges == 0:
                continue
            W = values[f"l{layer}.{rel.name}.W"]
            a = values[f"l{layer}.{rel.name}.a"]
            xu, xv, pre, alpha = rel_caches[rel.name]
            d_msg = d_msg_by_type[rel.dst_type][rel.dst]
            d_alpha = np.sum(d_msg * xu[rel.src], axis=1)
            seg_dot = np.add.reduceat(alpha * d_alpha, rel.seg_starts)
            d_logit = alpha * (d_alpha - seg_dot[rel.seg_id])
            d_pre = d_logit * _leaky_grad(pre, slope)
            grads[f"l{layer}.{rel.name}.a"][:h] += d_pre @ xu[rel.src]
            grads[f"l{layer}.{rel.name}.a"][h:] += d_pre @ xv[rel.dst]
            grads[f"l{layer}.{rel.name}.b"][0] += float(d_pre @ rel.w)
            d_xu = np.zeros_like(xu)
            d_xv = np.zeros_like(xv)
            np.add.at(d_xu, rel.src, alpha[:, None] * d_msg + np.outer(d_pre, a[:h]))
            np.add.at(d_xv, rel.dst, np.outer(d_pre, a[h:]))
            grads[f"l{layer}.{rel.name}.W"] += (
                embeddings[rel.src_type].T @ d_xu + embeddings[rel.dst_type].T @ d_xv
            )
            d_emb[rel.src_type] += d_xu @ W.T
            d_emb[rel.dst_type] += d_xv @ W.T
        return d_emb

    def forward(self, values: dict[str, np.ndarray]):
        """All layers; returns (final embeddings, per-layer caches)."""
        embeddings = self.inputs
        caches = []
        for layer in range(self.config.layers):
            out, rel_caches = self.layer_forward(values, layer, embeddings)
            last = layer == self.config.layers - 1
            nxt = {t: (out[t] if last else _elu(out[t])) for t in NODE_TYPES}
            caches.append((embeddings, out, rel_caches))
            embeddings = nxt
        return embeddings, caches

    def readout(self, values: dict[str, np.ndarray], z_feature: np.ndarray) -> np.ndarray:
        return z_feature @ values["readout.w"] + values["readout.b"][0]

    def loss_only(self, values: dict[str, np.ndarray], supervision: "Supervision") -> float:
        cfg = self.config
        z, _ = self.forward(values)
        total_pairs = sum(g.u.size for g in supervision.groups)
        loss_rec = 0.0
        for g in supervision.groups:
            if g.u.size == 0:
                continue
            s = np.sum(z[g.type_a][g.u] * z[g.type_b][g.v], axis=1)
            loss_rec += float(np.sum((_sigmoid(s) - g.target) ** 2))
        loss_rec /= max(total_pairs, 1)
        diff = self.readout(values, z["feature"]) - supervision.score_target
        return loss_rec + cfg.lambda_score * float(np.mean(diff**2))

    def loss_and_grad(self, values: dict[str, np.ndarray], supervision: "Supervision"):
        cfg = self.config
        z, caches = self.forward(values)
        grads = {k: np.zeros_like(v) for k, v in values.items()}
        d_z = {t: np.zeros_like(z[t]) for t in NODE_TYPES}

        total_pairs = sum(g.u.size for g in supervision.groups)
        loss_rec = 0.0
        for g in supervision.groups:
            if g.u.size == 0:
                continue
            za = z[g.type_a][g.u]
            zb = z[g.type_b][g.v]
            s = np.sum(za * zb, axis=1)
            p = _sigmoid(s)
            loss_rec += float(np.sum((p - g.target) ** 2))
            d_s = 2.0 * (p - g.target) / total_pairs * p * (1.0 - p)
            np.add.at(d_z[g.type_a], g.u, d_s[:, None] * zb)
            np.add.at(d_z[g.type_b], g.v, d_s[:, None] * za)
        loss_rec /= max(total_pairs, 1)

        r = self.readout(values, z["feature"])
        diff = r - supervision.score_target
        loss_score = float(np.mean(diff**2))
        d_r = 2.0 * cfg.lambda_score * diff / diff.size
        grads["readout.w"] += z["feature"].T @ d_r
        grads["readout.b"][0] += float(d_r.sum())
        d_z["feature"] += np.outer(d_r, values["readout.w"])

        d_h = d_z
        for layer in reversed(range(cfg.layers)):
            embeddings, out, rel_caches = caches[layer]
            if layer == cfg.layers - 1:
                d_out = d_h
            else:
                d_out = {t: d_h[t] * _elu_grad(out[t]) for t in NODE_TYPES}
            d_h = self._layer_backward(values, grads, layer, d_out, embeddings, rel_caches)

        return loss_rec + cfg.lambda_score * loss_score, grads


@dataclass
class _PairGroup:
    type_a: str
    type_b: str
    u: np.ndarray
    v: np.ndarray
    target: np.ndarray


@dataclass
class Supervision:
    groups: list[_PairGroup]
    score_target: np.ndarray


def _sample_non_edges(rng, n_a: int, n_b: int, taken: set, count: int, same_type: bool):
    out = []
    attempts = 0
    limit = 50 * count + 100
    while len(out) < count and attempts < limit:
        attempts += 1
        u = int(rng.integers(n_a))
        v = int(rng.integers(n_b))
        if same_type and u == v:
            continue
        if (u, v) in taken:
            continue
        taken.add((u, v))
        out.append((u, v))
    return out


def build_supervision(graph: HeteroGraph, config: TrainConfig) -> Supervision:
    """Reconstruction targets: feature-label and label-label edges plus an
    equal share of sampled non-edges, and the readout regression target."""
    rng = np.random.default_rng([config.seed, 0x5EED])
    groups = []
    specs = [
        ("feature", "label", ("fl_stat", "fl_sem")),
        ("label", "label", ("ll_stat", "ll_sem")),
    ]
    n_fl_edges = 0
    for type_a, type_b, rel_names in specs:
        us, vs, ws = [], [], []
        for name in rel_names:
            src, dst, w = graph.edge_arrays(name)
            us.append(src)
            vs.append(dst)
            ws.append(w)
        u = np.concatenate(us)
        v = np.concatenate(vs)
        w = np.concatenate(ws)
        if type_a == "feature":
            n_fl_edges = u.size
        n_neg = int(round(config.negative_ratio * u.size))
        taken = set(zip(u.tolist(), v.tolist()))
        negatives = _sample_non_edges(
            rng,
            graph.node_count(type_a),
            graph.node_count(type_b),
            taken,
            n_neg,
            same_type=type_a == type_b,
        )
        if negatives:
            nu, nv = map(np.asarray, zip(*negatives))
        else:
            nu = nv = np.empty(0, dtype=np.int64)
        groups.append(
            _PairGroup(
                type_a=type_a,
                type_b=type_b,
                u=np.concatenate([u, nu]).astype(np.int64),
                v=np.concatenate([v, nv]).astype(np.int64),
                target=np.concatenate([w, np.zeros(nu.size)]),
            )
        )
    if n_fl_edges == 0:
        raise NoSupervisionEdges("graph has no feature-label edges to reconstruct")

    d = graph.n_features
    total = np.zeros(d)
    for name in ("fl_stat", "fl_sem"):
        src, _, w = graph.edge_arrays(name)
        np.add.at(total, src, w)
    _, dst, w = graph.edge_arrays("ff_stat")
    np.add.at(total, dst, w)
    lo, hi = float(total.min()), float(total.max())
    if hi - lo < 1e-12:
        score_target = np.full(d, 0.5)
    else:
        score_target = (total - lo) / (hi - lo)
    return Supervision(groups=groups, score_target=score_target)


class _Adam:
    def __init__(self, values: dict[str, np.ndarray], lr: float):
        self.lr = lr
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.m = {k: np.zeros_like(v) for k, v in values.items()}
        self.v = {k: np.zeros_like(v) for k, v in values.items()}
        self.t = 0

    def step(self, values, grads):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for key in values:
            g = grads[key]
            self.m[key] = self.beta1 * self.m[key] + (1 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1 - self.beta2) * g * g
            values[key] -= self.lr * (self.m[key] / b1c) / (
                np.sqrt(self.v[key] / b2c) + self.eps
            )


def train(graph: HeteroGraph, config: TrainConfig) -> GatParameters:
    """Full-batch self-supervised training; deterministic given the seed."""
    model = HeteroGat(graph, config)
    params = model.init_parameters()
    supervision = build_supervision(graph, config)
    optimizer = _Adam(params.values, config.learning_rate) if config.optimizer == "adam" else None
    for epoch in range(config.epochs):
        loss, grads = model.loss_and_grad(params.values, supervision)
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"loss became non-finite at epoch {epoch}")
        params.loss_history.append(loss)
        if optimizer is not None:
            optimizer.step(params.values, grads)
        else:
            for key in params.values:
                params.values[key] -= config.learning_rate * grads[key]
    return params


def feature_scores(params: GatParameters, graph: HeteroGraph) -> dict[int, float]:
    """Scalar importance score per global feature id."""
    model = HeteroGat(graph, params.config)
    z, _ = model.forward(params.values)
    r = model.readout(params.values, z["feature"])
    return {f: float(r[f]) for f in range(graph.n_features)}


def layer_forward(
    graph: HeteroGraph,
    params: GatParameters,
    layer_index: int,
    embeddings: dict[str, np.ndarray],
):
    """One layer's output embeddings plus per-relation attention weights.

    Attention is returned as {relation: (src, dst, alpha)} for the edges
    present; coefficients into each target node sum to 1 per relation.
    """
    model = HeteroGat(graph, params.config)
    out, rel_caches = model.layer_forward(params.values, layer_index, embeddings)
    if layer_index < params.config.layers - 1:
        out = {t: _elu(out[t]) for t in NODE_TYPES}
    attention = {}
    for rel in model.relations:
        if rel.n_edges:
            _, _, _, alpha = rel_caches[rel.name]
            attention[rel.name] = (rel.src.copy(), rel.dst.copy(), alpha)
    return out, attention


def gradient_check(
    params: GatParameters,
    graph: HeteroGraph,
    config: TrainConfig,
    step: float = 1e-5,
    tolerance: float = 1e-4,
    raise_on_failure: bool = True,
) -> float:
    """Compare backprop gradients with central finite differences.

    Relative error per element is |ga - gf| / max(1e-3, |ga|, |gf|); the
    maximum over all parameter blocks is returned.  If any attention
    pre-activation sits on the LeakyReLU kink (within 10x the step), the
    checked point is nudged by a small deterministic jitter first, since
    the derivative is not defined at the kink itself.
    """
    model = HeteroGat(graph, config)
    supervision = build_supervision(graph, config)
    values = {k: v.copy() for k, v in params.values.items()}

    def min_pre_gap(vals):
        gap = np.inf
        embeddings = model.inputs
        for layer in range(config.layers):
            out, rel_caches = model.layer_forward(vals, layer, embeddings)
            for rel in model.relations:
                if rel.n_edges:
                    pre = rel_caches[rel.name][2]
                    if pre.size:
                        gap = min(gap, float(np.min(np.abs(pre))))
            embeddings = {
                t: (out[t] if layer == config.layers - 1 else _elu(out[t]))
                for t in NODE_TYPES
            }
        return gap

    jitter_rng = np.random.default_rng([config.seed, 0x01F])
    for _ in range(5):
        if min_pre_gap(values) > 10 * step:
            break
        for key in values:
            values[key] = values[key] + jitter_rng.normal(0.0, 1e-3, size=values[key].shape)

    _, analytic = model.loss_and_grad(values, supervision)

    worst = 0.0
    worst_block = ""
    for key in model.param_names():
        array = values[key]
        flat = array.ravel()
        ga = analytic[key].ravel()
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            loss_hi = model.loss_only(values, supervision)
            flat[i] = keep - step
            loss_lo = model.loss_only(values, supervision)
            flat[i] = keep
            gf = (loss_hi - loss_lo) / (2 * step)
            rel_err = abs(ga[i] - gf) / max(1e-3, abs(ga[i]), abs(gf))
            if rel_err > worst:
                worst = rel_err
                worst_block = key
    if raise_on_failure and worst > tolerance:
        raise GradCheckFailure(
            f"max relative error {worst:.3e} in parameter block {worst_block!r}"
        )
    return worst


def save_checkpoint(params: GatParameters, path) -> None:
    meta = json.dumps(asdict(params.config))
    with open(path, "wb") as fh:
        np.savez_compressed(
            fh,
            __config__=np.array(meta),
            __loss__=np.asarray(params.loss_history),
            **params.values,
        )


def load_checkpoint(path) -> GatParameters:
    with np.load(path) as z:
        config = TrainConfig(**json.loads(str(z["__config__"])))
        history = [float(x) for x in z["__loss__"]]
        values = {k: z[k] for k in z.files if not k.startswith("__")}
    return GatParameters(values=values, config=config, loss_history=history)
