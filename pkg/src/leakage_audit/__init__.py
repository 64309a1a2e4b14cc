"""Train/test identity-overlap auditing from precomputed embeddings."""

from .annotations import AnnotationRecord, append_verdict, effective_state, read_verdict_log
from .errors import AuditError, FormatError, ValidationError
from .matcher import MatchResult, cosine_similarity, histogram, top_k
from .overlap import (
    IdentityLinkGraph,
    OverlapReport,
    OverlapTotals,
    PairVerdict,
    ThresholdPolicy,
    aggregate_overlap,
    auto_classify,
    build_link_graph,
    flag_discordant,
    merge_annotations,
)
from .report import AccuracyRecord, BiasReport, compute_bias, importance_curve
from .store import (
    DatasetManifest,
    EmbeddingSet,
    fuse_flip,
    l2_normalize,
    load_embeddings,
    load_manifest,
    validate_manifest,
    write_embeddings,
    write_manifest,
)
from .subsets import SplitMix64, SubsetSpec, build_disjoint, build_overlap_c, build_overlap_r
from .verify import PairProtocol, VerificationReport, best_threshold, evaluate, load_protocol, pair_scores

__version__ = "0.1.0"

__all__ = [
    "AccuracyRecord",
    "AnnotationRecord",
    "AuditError",
    "BiasReport",
    "DatasetManifest",
    "EmbeddingSet",
    "FormatError",
    "IdentityLinkGraph",
    "MatchResult",
    "OverlapReport",
    "OverlapTotals",
    "PairProtocol",
    "PairVerdict",
    "SplitMix64",
    "SubsetSpec",
    "ThresholdPolicy",
    "ValidationError",
    "VerificationReport",
    "aggregate_overlap",
    "append_verdict",
    "auto_classify",
    "best_threshold",
    "build_disjoint",
    "build_link_graph",
    "build_overlap_c",
    "build_overlap_r",
    "compute_bias",
    "cosine_similarity",
    "effective_state",
    "evaluate",
    "flag_discordant",
    "fuse_flip",
    "histogram",
    "importance_curve",
    "l2_normalize",
    "load_embeddings",
    "load_manifest",
    "load_protocol",
    "merge_annotations",
    "pair_scores",
    "read_verdict_log",
    "top_k",
    "validate_manifest",
    "write_embeddings",
    "write_manifest",
]
