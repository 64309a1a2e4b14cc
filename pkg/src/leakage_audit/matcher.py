"""Exact blocked top-k cosine search of probes against a gallery.

The gallery is processed in contiguous blocks sized to a working-set budget
(default 64 MiB); each worker owns a contiguous range of probes and keeps a
fixed-size running top-k buffer. Scores are dot products of unit vectors:
float32 inputs, float64 accumulation via ``np.einsum`` without optimization,
whose summation order does not depend on block shape. Together with the
ascending-gallery-index tie rule this makes results byte-identical across
block sizes and worker counts.

Match output file: one line per result,
``probe_id<TAB>rank<TAB>gallery_id<TAB>gallery_label<TAB>similarity`` with
the similarity printed to 9 decimal digits.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .store import UNIT_NORM_TOL, EmbeddingSet

DEFAULT_BLOCK_BUDGET = 64 * 1024 * 1024
_PROBE_CHUNK = 256


@dataclass(frozen=True)
class MatchResult:
    probe_id: str
    rank: int  # 1-based
    gallery_id: str
    gallery_label: str
    similarity: float


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of two unit vectors, clamped to [-1, 1].

    Exactly symmetric in its arguments and bitwise-consistent with the
    blocked matrix path used by :func:`top_k`.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    for name, v in (("a", a), ("b", b)):
        norm = math.sqrt(float(np.einsum("i,i->", v, v)))
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise ValidationError(f"vector {name} is not unit-norm (norm={norm!r})")
    score = float(np.einsum("i,i->", a, b))
    return min(1.0, max(-1.0, score))


def top_k(
    probes: EmbeddingSet,
    gallery: EmbeddingSet,
    k: int,
    block_budget_bytes: int = DEFAULT_BLOCK_BUDGET,
    workers: int = 1,
) -> list[list[MatchResult]]:
    """For each probe, the k most cosine-similar gallery rows.

    Ties broken by ascending gallery record index. Returns one rank-ordered
    list per probe, in probe order.
    """
    if probes.dim != gallery.dim:
        raise ValidationError(f"dimension mismatch: probes {probes.dim} vs gallery {gallery.dim}")
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if k > gallery.count:
        raise ValidationError(f"k={k} exceeds gallery size {gallery.count}")
    if workers < 1:
        raise ValidationError(f"workers must be >= 1, got {workers}")
    if not probes.is_normalized():
        raise ValidationError("probes are not unit-normalized; run l2_normalize first")
    if not gallery.is_normalized():
        raise ValidationError("gallery is not unit-normalized; run l2_normalize first")

    gallery64 = gallery.vectors.astype(np.float64)
    block_rows = max(1, block_budget_bytes // ((gallery.dim + _PROBE_CHUNK) * 8))

    chunks = [
        (start, min(start + _PROBE_CHUNK, probes.count))
        for start in range(0, probes.count, _PROBE_CHUNK)
    ]

    def run_chunk(bounds: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
        start, stop = bounds
        chunk64 = probes.vectors[start:stop].astype(np.float64)
        return _chunk_top_k(chunk64, gallery64, k, block_rows)

    if workers == 1 or len(chunks) == 1:
        parts = [run_chunk(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run_chunk, chunks))

    results: list[list[MatchResult]] = []
    for (start, _), (scores, indices) in zip(chunks, parts):
        for local, probe_row in enumerate(range(start, start + scores.shape[0])):
            probe_id = probes.image_ids[probe_row]
            per_probe = []
            for rank in range(k):
                g = int(indices[local, rank])
                sim = min(1.0, max(-1.0, float(scores[local, rank])))
                per_probe.append(
                    MatchResult(
                        probe_id=probe_id,
                        rank=rank + 1,
                        gallery_id=gallery.image_ids[g],
                        gallery_label=gallery.identity_labels[g],
                        similarity=sim,
                    )
                )
            results.append(per_probe)
    return results


def _chunk_top_k(
    probes64: np.ndarray, gallery64: np.ndarray, k: int, block_rows: int
) -> tuple[np.ndarray, np.ndarray]:
    """Running top-k over gallery blocks for one contiguous probe chunk."""
    p = probes64.shape[0]
    g = gallery64.shape[0]
    best_scores = np.full((p, k), -np.inf)
    best_idx = np.full((p, k), np.iinfo(np.int64).max, dtype=np.int64)

    for start in range(0, g, block_rows):
        block = gallery64[start : start + block_rows]
        scores = np.einsum("pd,gd->pg", probes64, block, optimize=False)
        width = block.shape[0]
        kb = min(k, width)
        # stable sort on descending score keeps ascending index among ties
        order = np.argsort(-scores, axis=1, kind="stable")[:, :kb]
        blk_scores = np.take_along_axis(scores, order, axis=1)
        blk_idx = order.astype(np.int64) + start

        cand_scores = np.concatenate([best_scores, blk_scores], axis=1)
        cand_idx = np.concatenate([best_idx, blk_idx], axis=1)
        # lexsort: primary = score descending, secondary = index ascending
        sel = np.lexsort((cand_idx, -cand_scores), axis=1)[:, :k]
        best_scores = np.take_along_axis(cand_scores, sel, axis=1)
        best_idx = np.take_along_axis(cand_idx, sel, axis=1)

    return best_scores, best_idx


def write_match_file(results: list[list[MatchResult]], path: str | Path) -> None:
    lines = []
    for per_probe in results:
        for r in per_probe:
            lines.append(
                f"{r.probe_id}\t{r.rank}\t{r.gallery_id}\t{r.gallery_label}\t{r.similarity:.9f}"
            )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_match_file(path: str | Path) -> list[MatchResult]:
    path = Path(path)
    results = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise FormatError(f"{path}:{lineno}: expected 5 tab-separated fields")
        try:
            rank = int(fields[1])
            similarity = float(fields[4])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: bad rank or similarity") from exc
        results.append(MatchResult(fields[0], rank, fields[2], fields[3], similarity))
    return results


@dataclass(frozen=True)
class HistogramBin:
    lo: float
    hi: float
    count: int


def histogram(scores, bin_width: float) -> list[HistogramBin]:
    """Fixed-width bins covering [-1, 1]; counts sum to the input length.

    Bins are half-open ``[lo, lo+width)`` except the last, which includes 1.
    """
    if bin_width <= 0:
        raise ValidationError(f"bin_width must be positive, got {bin_width}")
    nbins = max(1, math.ceil(2.0 / bin_width))
    scores = np.asarray(list(scores), dtype=np.float64)
    if scores.size:
        idx = np.floor((scores + 1.0) / bin_width).astype(np.int64)
        idx = np.clip(idx, 0, nbins - 1)
        counts = np.bincount(idx, minlength=nbins)
    else:
        counts = np.zeros(nbins, dtype=np.int64)
    bins = []
    for i in range(nbins):
        lo = -1.0 + i * bin_width
        hi = 1.0 if i == nbins - 1 else lo + bin_width
        bins.append(HistogramBin(lo, hi, int(counts[i])))
    return bins


def write_histogram(bins: list[HistogramBin], path: str | Path) -> None:
    lines = ["lo\thi\tcount"]
    for b in bins:
        lines.append(f"{b.lo:.6f}\t{b.hi:.6f}\t{b.count}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
