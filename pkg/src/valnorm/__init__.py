"""Value-normalization workbench.

Clusters a string list with size-capped agglomerative clustering, picks
the machine/human plan with the least estimated human cleaning effort,
and drives (or simulates) the guided split/merge cleaning procedure to an
exactly correct partition, for one or several collaborating users.
"""

from .core import (
    Cluster,
    ConflictingEvidence,
    GoldPartition,
    PairAssertion,
    Partition,
    TransitivityIndex,
    ValueTable,
    VerificationSet,
    is_gold_sequence,
    match_set_size,
    precision_recall,
)
from .costmodel import GlobalParams, PlanEstimate, PurityModel, UserParams
from .hac import HACResult, SimilarityConfig, jaccard_similarity, run_hac, run_joint

__version__ = "0.1.0"

__all__ = [
    "Cluster",
    "ConflictingEvidence",
    "GlobalParams",
    "GoldPartition",
    "HACResult",
    "PairAssertion",
    "Partition",
    "PlanEstimate",
    "PurityModel",
    "SimilarityConfig",
    "TransitivityIndex",
    "UserParams",
    "ValueTable",
    "VerificationSet",
    "is_gold_sequence",
    "jaccard_similarity",
    "match_set_size",
    "precision_recall",
    "run_hac",
    "run_joint",
    "__version__",
]
