"""Multi-view multi-label feature selection.

Semantic relevance among feature/view/label descriptions (scored by an
LLM agent or an offline mock) is fused with mutual-information and label
co-occurrence statistics into a typed heterogeneous graph; a small
attention network over that graph learns per-feature importance scores,
and selected subsets are judged with ML-kNN under a repeated-split
multi-label protocol.
"""

from .dataset import (
    MultiViewDataset,
    SplitIndices,
    TextCatalog,
    ViewBlock,
    load_dataset,
    pseudo_name,
    split,
    write_dataset,
)
from .evaluation import (
    EvalReport,
    metric_ap,
    metric_hl,
    metric_lrap,
    metric_macro_auc,
    mlknn_fit,
    mlknn_predict,
    run_protocol,
)
from .gat import (
    GatParameters,
    TrainConfig,
    feature_scores,
    gradient_check,
    init_node_features,
    train,
)
from .graph import (
    HeteroGraph,
    Thresholds,
    build_semantic_graph,
    build_statistical_graph,
    merge,
)
from .pipeline import RunConfig, run_pipeline
from .selection import SelectionResult, ratio_to_k, top_k
from .semantic import (
    MockScorer,
    PromptSpec,
    ScoreCache,
    SemanticScoreSet,
    build_prompt,
    mock_score,
    score_dataset,
    score_pairs,
)
from .stats import MIMatrices, compute_mi_matrices, discretize, mutual_information

__version__ = "0.1.0"

__all__ = [
    "MultiViewDataset",
    "SplitIndices",
    "TextCatalog",
    "ViewBlock",
    "load_dataset",
    "pseudo_name",
    "split",
    "write_dataset",
    "EvalReport",
    "metric_ap",
    "metric_hl",
    "metric_lrap",
    "metric_macro_auc",
    "mlknn_fit",
    "mlknn_predict",
    "run_protocol",
    "GatParameters",
    "TrainConfig",
    "feature_scores",
    "gradient_check",
    "init_node_features",
    "train",
    "HeteroGraph",
    "Thresholds",
    "build_semantic_graph",
    "build_statistical_graph",
    "merge",
    "RunConfig",
    "run_pipeline",
    "SelectionResult",
    "ratio_to_k",
    "top_k",
    "MockScorer",
    "PromptSpec",
    "ScoreCache",
    "SemanticScoreSet",
    "build_prompt",
    "mock_score",
    "score_dataset",
    "score_pairs",
    "MIMatrices",
    "compute_mi_matrices",
    "discretize",
    "mutual_information",
]
