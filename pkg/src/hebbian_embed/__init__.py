"""Node embeddings by annealed Hebbian propagation, with ranking evaluations."""

__version__ = "0.1.0"

from .graph import (  # noqa: E402
    EdgeListError,
    EdgeSplit,
    RawEdgeList,
    WeightedGraph,
    build_graph,
    graph_from_pairs,
    load_edge_list,
    load_split,
    sample_negative,
    save_split,
    split_edges,
)
from .engine import (  # noqa: E402
    AnnealingSchedule,
    DivergenceError,
    TrainConfig,
    TrainResult,
    anneal_step,
    init_embeddings,
    iterate,
    perturb,
    train,
)
from .evaluation import (  # noqa: E402
    EvalReport,
    InteractionLog,
    average_precision,
    binary_link_ap,
    hit_rate_at_k,
    map_link_prediction,
    map_reconstruction,
    rank_candidates,
    score,
)
