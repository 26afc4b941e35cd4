"""End-to-end pipeline: ingest -> stats -> (semantic) -> graph -> train ->
select -> eval, with on-disk artifacts for every stage.

Modes:

* ``statistical``       statistical relations only, no semantic scoring,
                        guaranteed free of network access.
* ``semantic-mock``     adds semantic relations scored by the offline
                        deterministic token-overlap agent.
* ``semantic-llm``      adds semantic relations scored over a configured
                        chat-completion endpoint (cached).
* ``ablation-halfdata`` semantic relations as in the mock/llm path, but
                        the statistical graph is built from a fixed seeded
                        50% row subsample; evaluation still runs the full
                        protocol on all samples.

Artifacts are deterministic in statistical and semantic-mock modes: the
same config reproduces byte-identical stats, graph, scores, selections
and reports.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gat, graph as graph_mod, semantic, stats
from .dataset import MultiViewDataset, TextCatalog, load_dataset, subset_rows
from .errors import ConfigError
from .evaluation import EvalReport, run_protocol
from .graph import HeteroGraph, Thresholds
from .selection import select_at_ratios, selections_to_csv
from .semantic import HttpChatScorer, MockScorer, ScoreCache, SemanticScoreSet

log = logging.getLogger("mvmlfs")

MODES = ("statistical", "semantic-mock", "semantic-llm", "ablation-halfdata")
STAGES = ("ingest", "stats", "semantic", "graph", "train", "select", "eval")
DEFAULT_RATIOS = [round(0.02 * i, 2) for i in range(1, 11)]


@dataclass
class RunConfig:
    manifest: str
    out_dir: str
    mode: str = "statistical"
    seed: int = 7
    bins: int = 10
    ff_top_m: int | None = None
    delta: float = 0.5
    tau1: float | str = "q70"
    tau2: float | str = "q70"
    tau3: float | str = "q70"
    hidden_dim: int = 32
    layers: int = 2
    epochs: int = 200
    learning_rate: float = 0.01
    negative_ratio: float = 1.0
    lambda_score: float = 1.0
    ratios: list[float] = field(default_factory=lambda: list(DEFAULT_RATIOS))
    repeats: int = 10
    mlknn_k: int = 10
    mlknn_s: float = 1.0
    train_fraction: float = 0.7
    ablation_fraction: float = 0.5
    with_baselines: bool = True
    synonyms: str | None = None  # path to a JSON token->canonical map
    batch_size: int = 20
    llm_endpoint: str | None = None
    llm_model: str | None = None
    api_key_env: str = "MVMLFS_API_KEY"
    semantic_cache: str | None = None  # defaults to <out_dir>/semantic_cache.jsonl

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.ratios or not all(0 < r <= 1 for r in self.ratios):
            raise ConfigError(f"ratios must lie in (0, 1], got {self.ratios}")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")

    def thresholds(self) -> Thresholds:
        return Thresholds(delta=self.delta, tau1=self.tau1, tau2=self.tau2, tau3=self.tau3)

    def train_config(self) -> gat.TrainConfig:
        return gat.TrainConfig(
            seed=self.seed,
            hidden_dim=self.hidden_dim,
            layers=self.layers,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            negative_ratio=self.negative_ratio,
            lambda_score=self.lambda_score,
        )

    def method_name(self) -> str:
        return f"hgat-{self.mode}"

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**payload)


def scores_to_csv(scores: dict[int, float]) -> str:
    lines = ["global_feature_id,score"]
    lines += [f"{gid},{repr(scores[gid])}" for gid in sorted(scores)]
    return "\n".join(lines) + "\n"


def scores_from_csv(text: str) -> dict[int, float]:
    out = {}
    for line in text.splitlines()[1:]:
        gid, score = line.split(",")
        out[int(gid)] = float(score)
    return out


def semantic_scores_to_json(scores: SemanticScoreSet) -> str:
    payload = {
        "fl": [[a, b, s] for (a, b), s in sorted(scores.fl.items())],
        "vl": [[a, b, s] for (a, b), s in sorted(scores.vlw.items())],
        "ll": [[a, b, s] for (a, b), s in sorted(scores.ll.items())],
    }
    return json.dumps(payload, indent=1)


def mi_max_scores(mi: stats.MIMatrices) -> dict[int, float]:
    """Raw-MI ranking baseline: each feature's best MI against any label."""
    return {f: float(mi.fl[f].max()) for f in range(mi.fl.shape[0])}


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class PipelineRun:
    """Executes pipeline stages for one RunConfig, recording artifacts."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.out = Path(config.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.dataset: MultiViewDataset | None = None
        self.catalog: TextCatalog | None = None
        self.mi: stats.MIMatrices | None = None
        self.semantic_scores: SemanticScoreSet | None = None
        self.graph: HeteroGraph | None = None
        self.params: gat.GatParameters | None = None
        self.scores: dict[int, float] | None = None
        self.report: EvalReport | None = None
        self.artifacts: dict[str, str] = {}
        (self.out / "run_config.json").write_text(config.to_json() + "\n", encoding="utf-8")

    def _record(self, name: str, path: Path) -> None:
        self.artifacts[name] = _file_digest(path)

    # --- stages ---

    def ingest(self) -> None:
        self.dataset, self.catalog = load_dataset(self.config.manifest)
        log.info(
            "ingest: n=%d views=%d d=%d c=%d",
            self.dataset.n,
            self.dataset.n_views,
            self.dataset.n_features,
            self.dataset.n_labels,
        )

    def _stats_source(self) -> MultiViewDataset:
        if self.config.mode != "ablation-halfdata":
            return self.dataset
        n = self.dataset.n
        rng = np.random.default_rng([self.config.seed, 0xAB1A])
        keep = np.sort(rng.permutation(n)[: max(2, int(n * self.config.ablation_fraction))])
        log.info("stats: ablation subsample of %d/%d rows", keep.size, n)
        return subset_rows(self.dataset, keep)

    def run_stats(self) -> None:
        source = self._stats_source()
        cache = self.out / "mi_cache.npz"
        self.mi, hit = stats.load_or_compute_mi(
            source, cache, bins=self.config.bins, ff_top_m=self.config.ff_top_m
        )
        log.info("stats: %s (%s)", cache.name, "cache hit" if hit else "computed")
        self._record("mi_cache", cache)

    def _scoring_agent(self):
        if self.config.mode == "semantic-llm" or (
            self.config.mode == "ablation-halfdata" and self.config.llm_endpoint
        ):
            if not (self.config.llm_endpoint and self.config.llm_model):
                raise ConfigError("semantic-llm mode requires llm_endpoint and llm_model")
            return HttpChatScorer(
                endpoint=self.config.llm_endpoint,
                model=self.config.llm_model,
                api_key_env=self.config.api_key_env,
            )
        synonyms = {}
        if self.config.synonyms:
            synonyms = json.loads(Path(self.config.synonyms).read_text(encoding="utf-8"))
        return MockScorer(synonyms=synonyms)

    def run_semantic(self) -> None:
        if self.config.mode == "statistical":
            return
        cache_path = self.config.semantic_cache or str(self.out / "semantic_cache.jsonl")
        cache = ScoreCache(cache_path)
        agent = self._scoring_agent()
        self.semantic_scores = semantic.score_dataset(
            self.dataset, self.catalog, agent, cache, batch_size=self.config.batch_size
        )
        path = self.out / "semantic_scores.json"
        path.write_text(semantic_scores_to_json(self.semantic_scores) + "\n", encoding="utf-8")
        self._record("semantic_scores", path)
        log.info(
            "semantic: %d fl, %d vl, %d ll scores",
            len(self.semantic_scores.fl),
            len(self.semantic_scores.vlw),
            len(self.semantic_scores.ll),
        )

    def build_graph(self) -> None:
        statistical = graph_mod.build_statistical_graph(
            self.mi, self.config.thresholds(), self.dataset.feature_view
        )
        if self.semantic_scores is not None:
            semantic_part = graph_mod.build_semantic_graph(
                self.semantic_scores,
                self.config.delta,
                n_views=self.dataset.n_views,
                n_features=self.dataset.n_features,
                n_labels=self.dataset.n_labels,
            )
            self.graph = graph_mod.merge(statistical, semantic_part)
        else:
            self.graph = statistical
        self.graph.validate()
        path = self.out / "graph.json"
        graph_mod.write_graph(self.graph, path)
        self._record("graph", path)
        log.info(
            "graph: %s",
            {name: len(edges) for name, edges in self.graph.relations.items()},
        )

    def train(self) -> None:
        self.params = gat.train(self.graph, self.config.train_config())
        checkpoint = self.out / "checkpoint.npz"
        gat.save_checkpoint(self.params, checkpoint)
        self._record("checkpoint", checkpoint)
        self.scores = gat.feature_scores(self.params, self.graph)
        path = self.out / "scores.csv"
        path.write_text(scores_to_csv(self.scores), encoding="utf-8")
        self._record("scores", path)
        log.info(
            "train: %d epochs, loss %.6f -> %.6f",
            len(self.params.loss_history),
            self.params.loss_history[0],
            self.params.loss_history[-1],
        )

    def select(self) -> None:
        results = select_at_ratios(self.scores, self.config.ratios, self.dataset.feature_view)
        path = self.out / "selections.csv"
        path.write_text(
            selections_to_csv(results, self.dataset.feature_view), encoding="utf-8"
        )
        self._record("selections", path)

    def evaluate(self) -> None:
        cfg = self.config
        report = run_protocol(
            self.dataset,
            self.scores,
            cfg.ratios,
            cfg.repeats,
            cfg.seed,
            k=cfg.mlknn_k,
            s=cfg.mlknn_s,
            train_fraction=cfg.train_fraction,
            method_name=cfg.method_name(),
        )
        if cfg.with_baselines:
            run_protocol(
                self.dataset,
                "random",
                cfg.ratios,
                cfg.repeats,
                cfg.seed,
                k=cfg.mlknn_k,
                s=cfg.mlknn_s,
                train_fraction=cfg.train_fraction,
                method_name="random",
                report=report,
            )
            run_protocol(
                self.dataset,
                mi_max_scores(self.mi),
                cfg.ratios,
                cfg.repeats,
                cfg.seed,
                k=cfg.mlknn_k,
                s=cfg.mlknn_s,
                train_fraction=cfg.train_fraction,
                method_name="mi-max",
                report=report,
            )
        self.report = report
        csv_path = self.out / "report.csv"
        csv_path.write_text(report.to_csv(), encoding="utf-8")
        self._record("report", csv_path)
        full_path = self.out / "report_full.json"
        full_path.write_text(report.to_json() + "\n", encoding="utf-8")
        self._record("report_full", full_path)

    def finish(self, until: str) -> None:
        manifest = {
            "config": json.loads(self.config.to_json()),
            "dataset_digest": self.dataset.digest() if self.dataset else None,
            "completed_until": until,
            "artifacts": dict(sorted(self.artifacts.items())),
        }
        (self.out / "run_manifest.json").write_text(
            json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8"
        )


def run_pipeline(config: RunConfig, until: str = "eval") -> PipelineRun:
    """Run stages in order up to and including `until`; returns the run."""
    if until not in STAGES:
        raise ConfigError(f"unknown stage {until!r}, expected one of {STAGES}")
    run = PipelineRun(config)
    order = STAGES[: STAGES.index(until) + 1]
    for stage in order:
        if stage == "ingest":
            run.ingest()
        elif stage == "stats":
            run.run_stats()
        elif stage == "semantic":
            run.run_semantic()
        elif stage == "graph":
            run.build_graph()
        elif stage == "train":
            run.train()
        elif stage == "select":
            run.select()
        elif stage == "eval":
            run.evaluate()
    run.finish(until)
    return run
