from .ancestor import common_ancestor, common_ancestor_many, lift, plain_common_ancestor
from .clustering import (
    AnonConfig, KAnonReport, KAnonResult, Strategy, anonymize_clusters, init_centers, nearest_cluster,
    plan_suppression, reassign_clusters, secure_kanonymize,
)
from .protocols import (
    compute_min_index, non_k_clusters, padded_counts, recompute_centers, reveal_index, sed, sed_matrix,
    zero_test,
)
from .reference import ReferenceResult, reference_kanonymize

__all__ = [
    "AnonConfig", "KAnonReport", "KAnonResult", "ReferenceResult", "Strategy", "anonymize_clusters",
    "common_ancestor", "common_ancestor_many", "compute_min_index", "init_centers", "lift",
    "nearest_cluster", "non_k_clusters", "padded_counts", "plain_common_ancestor", "plan_suppression",
    "reassign_clusters", "recompute_centers", "reference_kanonymize", "reveal_index", "secure_kanonymize",
    "sed", "sed_matrix", "zero_test",
]
