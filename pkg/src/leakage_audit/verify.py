"""Fold-structured pair-verification evaluation over embeddings.

For every fold, a threshold is chosen on the union of all other folds'
pairs and the fold's accuracy is measured at that threshold; the report
carries per-fold values plus their mean and sample standard deviation.

Two metrics are exposed: cosine similarity (higher is more similar) and
Euclidean distance on normalized vectors (lower is more similar), related
by ``d^2 = 2 - 2*cos`` on unit vectors. The threshold search always runs on
the similarity scale and the chosen cut is mapped into the requested
metric's scale, so the two metrics select the same acceptance partition and
produce identical accuracies by construction.

Protocol files: the native format is tab-separated with a
``pairs-protocol`` header; the classic pairs text (``name n1 n2`` genuine
lines, ``name1 n1 name2 n2`` impostor lines, ``folds pairs`` header) is
imported with image ids rendered as ``{name}_{n:04d}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .store import EmbeddingSet, fuse_flip

METRICS = ("cosine", "euclidean")


@dataclass
class Fold:
    genuine: list[tuple[str, str]]
    impostor: list[tuple[str, str]]


@dataclass
class PairProtocol:
    name: str
    folds: list[Fold]

    def __post_init__(self) -> None:
        if not self.folds:
            raise ValidationError("protocol has no folds")
        for i, fold in enumerate(self.folds, start=1):
            for a, b in fold.genuine + fold.impostor:
                if a == b:
                    raise ValidationError(f"fold {i}: pair has identical ids {a!r}")

    def validate_standard_shape(self) -> None:
        if len(self.folds) != 10:
            raise ValidationError(f"strict protocol needs 10 folds, got {len(self.folds)}")
        for i, fold in enumerate(self.folds, start=1):
            if len(fold.genuine) != 300 or len(fold.impostor) != 300:
                raise ValidationError(
                    f"strict protocol needs 300+300 pairs per fold, fold {i} has "
                    f"{len(fold.genuine)}+{len(fold.impostor)}"
                )


@dataclass(frozen=True)
class FoldResult:
    threshold: float
    accuracy: float  # in [0, 1]


@dataclass
class VerificationReport:
    name: str
    metric: str
    fusion: str  # original | original+flip
    folds: list[FoldResult]
    mean_accuracy: float
    std_accuracy: float


def load_protocol(path: str | Path, strict: bool = True) -> PairProtocol:
    """Load the native format or import the classic pairs text.

    ``strict`` enforces the standard 10 x (300 genuine + 300 impostor)
    shape; disable it for toy protocols.
    """
    path = Path(path)
    lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line]
    if not lines:
        raise FormatError(f"{path}: empty protocol file")
    if lines[0].split("\t")[0] == "pairs-protocol":
        protocol = _parse_native(path, lines)
    else:
        protocol = _parse_classic(path, lines)
    if strict:
        protocol.validate_standard_shape()
    return protocol


def _parse_native(path: Path, lines: list[str]) -> PairProtocol:
    head = lines[0].split("\t")
    if len(head) != 3:
        raise FormatError(f"{path}: native header must be pairs-protocol<TAB>name<TAB>folds")
    name = head[1]
    try:
        n_folds = int(head[2])
    except ValueError as exc:
        raise FormatError(f"{path}: non-integer fold count") from exc
    folds = [Fold([], []) for _ in range(n_folds)]
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != 4:
            raise FormatError(f"{path}:{lineno}: expected fold<TAB>kind<TAB>id1<TAB>id2")
        try:
            fold_idx = int(fields[0])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: non-integer fold index") from exc
        if not 1 <= fold_idx <= n_folds:
            raise FormatError(f"{path}:{lineno}: fold index {fold_idx} outside 1..{n_folds}")
        kind = fields[1]
        pair = (fields[2], fields[3])
        if kind == "genuine":
            folds[fold_idx - 1].genuine.append(pair)
        elif kind == "impostor":
            folds[fold_idx - 1].impostor.append(pair)
        else:
            raise FormatError(f"{path}:{lineno}: kind must be genuine or impostor")
    return PairProtocol(name, folds)


def _parse_classic(path: Path, lines: list[str]) -> PairProtocol:
    head = lines[0].split()
    if len(head) != 2:
        raise FormatError(f"{path}: classic header must be two integers (folds, pairs-per-class)")
    try:
        n_folds, per_class = int(head[0]), int(head[1])
    except ValueError as exc:
        raise FormatError(f"{path}: classic header must be two integers") from exc
    expected = 1 + n_folds * per_class * 2
    if len(lines) != expected:
        raise FormatError(
            f"{path}: classic file should have {expected} non-empty lines, found {len(lines)}"
        )
    folds = []
    cursor = 1
    for _ in range(n_folds):
        genuine = []
        for _ in range(per_class):
            fields = lines[cursor].split()
            if len(fields) != 3:
                raise FormatError(f"{path}:{cursor + 1}: genuine line must be name n1 n2")
            name, n1, n2 = fields
            genuine.append((_classic_id(path, cursor, name, n1), _classic_id(path, cursor, name, n2)))
            cursor += 1
        impostor = []
        for _ in range(per_class):
            fields = lines[cursor].split()
            if len(fields) != 4:
                raise FormatError(f"{path}:{cursor + 1}: impostor line must be name1 n1 name2 n2")
            name1, n1, name2, n2 = fields
            impostor.append(
                (_classic_id(path, cursor, name1, n1), _classic_id(path, cursor, name2, n2))
            )
            cursor += 1
        folds.append(Fold(genuine, impostor))
    return PairProtocol(path.stem, folds)


def _classic_id(path: Path, cursor: int, name: str, number: str) -> str:
    try:
        return f"{name}_{int(number):04d}"
    except ValueError as exc:
        raise FormatError(f"{path}:{cursor + 1}: non-integer image number {number!r}") from exc


def save_protocol(protocol: PairProtocol, path: str | Path) -> None:
    lines = [f"pairs-protocol\t{protocol.name}\t{len(protocol.folds)}"]
    for i, fold in enumerate(protocol.folds, start=1):
        for a, b in fold.genuine:
            lines.append(f"{i}\tgenuine\t{a}\t{b}")
        for a, b in fold.impostor:
            lines.append(f"{i}\timpostor\t{a}\t{b}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class FoldScores:
    genuine: np.ndarray
    impostor: np.ndarray


def _pair_cosines(emb: EmbeddingSet, pairs: list[tuple[str, str]]) -> np.ndarray:
    if not pairs:
        return np.empty(0, dtype=np.float64)
    rows_a = np.array([emb.row_of(a) for a, _ in pairs])
    rows_b = np.array([emb.row_of(b) for _, b in pairs])
    va = emb.vectors[rows_a].astype(np.float64)
    vb = emb.vectors[rows_b].astype(np.float64)
    sims = np.einsum("ij,ij->i", va, vb)
    return np.clip(sims, -1.0, 1.0)


def _fold_cosines(emb: EmbeddingSet, protocol: PairProtocol) -> list[FoldScores]:
    if not emb.is_normalized():
        raise ValidationError("embeddings are not unit-normalized; run l2_normalize first")
    return [
        FoldScores(_pair_cosines(emb, f.genuine), _pair_cosines(emb, f.impostor))
        for f in protocol.folds
    ]


def cosine_to_euclidean(sim: np.ndarray | float) -> np.ndarray | float:
    """Distance between unit vectors with the given cosine: sqrt(2 - 2*sim)."""
    return np.sqrt(np.maximum(2.0 - 2.0 * np.asarray(sim, dtype=np.float64), 0.0))


def pair_scores(emb: EmbeddingSet, protocol: PairProtocol, metric: str = "cosine") -> list[FoldScores]:
    """Per-fold genuine/impostor scores in the requested metric's scale."""
    if metric not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}, expected one of {METRICS}")
    folds = _fold_cosines(emb, protocol)
    if metric == "cosine":
        return folds
    return [
        FoldScores(cosine_to_euclidean(f.genuine), cosine_to_euclidean(f.impostor))
        for f in folds
    ]


def _search_similarity_space(genuine: np.ndarray, impostor: np.ndarray) -> tuple[float, float]:
    """Best accept-if-score>=t cut over midpoint candidates plus sentinels.

    Ties broken by the smallest threshold. Returns (threshold, accuracy).
    """
    if genuine.size == 0 or impostor.size == 0:
        raise ValidationError("threshold search needs at least one score of each class")
    scores = np.concatenate([genuine, impostor])
    distinct = np.unique(scores)
    candidates = np.concatenate(
        [[distinct[0] - 1.0], (distinct[:-1] + distinct[1:]) / 2.0, [distinct[-1] + 1.0]]
    )
    g_sorted = np.sort(genuine)
    i_sorted = np.sort(impostor)
    accepted_genuine = genuine.size - np.searchsorted(g_sorted, candidates, side="left")
    rejected_impostor = np.searchsorted(i_sorted, candidates, side="left")
    accuracy = (accepted_genuine + rejected_impostor) / scores.size
    best = int(np.argmax(accuracy))  # candidates ascend, argmax takes the first
    return float(candidates[best]), float(accuracy[best])


def _similarity_to_metric_threshold(t_sim: float, metric: str) -> float:
    if metric == "cosine":
        return t_sim
    if t_sim > 1.0:
        return -1.0  # reject-all cut: no distance is <= -1
    return float(cosine_to_euclidean(t_sim))


def best_threshold(
    genuine: np.ndarray, impostor: np.ndarray, metric: str = "cosine"
) -> tuple[float, float]:
    """Accuracy-maximizing threshold for the given scores.

    Acceptance rule: cosine score >= t accepts; Euclidean score <= t
    accepts. Euclidean inputs are mapped to the similarity scale
    (``sim = 1 - d^2/2``) for the search and the returned threshold is
    mapped back, which keeps the chosen acceptance partition identical
    across the two metrics.
    """
    if metric not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}, expected one of {METRICS}")
    genuine = np.asarray(genuine, dtype=np.float64)
    impostor = np.asarray(impostor, dtype=np.float64)
    if metric == "euclidean":
        genuine = 1.0 - 0.5 * genuine * genuine
        impostor = 1.0 - 0.5 * impostor * impostor
    t_sim, accuracy = _search_similarity_space(genuine, impostor)
    return _similarity_to_metric_threshold(t_sim, metric), accuracy


def evaluate(
    emb: EmbeddingSet,
    protocol: PairProtocol,
    metric: str = "cosine",
    flipped: EmbeddingSet | None = None,
) -> VerificationReport:
    """Cross-validated verification accuracy.

    Fold i's threshold is chosen on the union of all other folds and its
    accuracy measured on fold i. With ``flipped`` given, original and
    flipped features are fused (summed and renormalized) before scoring.
    """
    if metric not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}, expected one of {METRICS}")
    fusion = "original"
    if flipped is not None:
        emb = fuse_flip(emb, flipped)
        fusion = "original+flip"
    folds = _fold_cosines(emb, protocol)

    results = []
    for i, fold in enumerate(folds):
        val_genuine = np.concatenate([f.genuine for j, f in enumerate(folds) if j != i])
        val_impostor = np.concatenate([f.impostor for j, f in enumerate(folds) if j != i])
        t_sim, _ = _search_similarity_space(val_genuine, val_impostor)
        hits = int(np.sum(fold.genuine >= t_sim)) + int(np.sum(fold.impostor < t_sim))
        n = fold.genuine.size + fold.impostor.size
        if n == 0:
            raise ValidationError(f"fold {i + 1} has no pairs")
        results.append(
            FoldResult(
                threshold=_similarity_to_metric_threshold(t_sim, metric),
                accuracy=hits / n,
            )
        )

    accuracies = np.array([r.accuracy for r in results])
    mean = float(np.mean(accuracies))
    std = float(np.std(accuracies, ddof=1)) if len(results) > 1 else 0.0
    return VerificationReport(
        name=protocol.name,
        metric=metric,
        fusion=fusion,
        folds=results,
        mean_accuracy=mean,
        std_accuracy=std,
    )


def write_verification_report(report: VerificationReport, path: str | Path) -> None:
    """Per-fold lines plus mean/std footer; accuracies as 2-decimal percentages."""
    lines = [
        f"verification-report\t{report.name}",
        f"metric\t{report.metric}",
        f"fusion\t{report.fusion}",
        "fold\tthreshold\taccuracy",
    ]
    for i, fold in enumerate(report.folds, start=1):
        lines.append(f"{i}\t{fold.threshold:.6f}\t{fold.accuracy * 100:.2f}")
    lines.append(f"mean\t{report.mean_accuracy * 100:.2f}")
    lines.append(f"std\t{report.std_accuracy * 100:.2f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def verification_summary(report: VerificationReport) -> str:
    return (
        f"{report.name} [{report.metric}, {report.fusion}]: "
        f"{report.mean_accuracy * 100:.2f} +/- {report.std_accuracy * 100:.2f} "
        f"over {len(report.folds)} folds"
    )


def euclidean_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Direct distance between two unit vectors (norm of the difference)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return math.sqrt(float(np.einsum("i,i->", diff, diff)))
