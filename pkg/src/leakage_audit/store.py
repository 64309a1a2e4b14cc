"""Embedding sets and dataset manifests: loading, validation, normalization, fusion.

On-disk formats owned by this module:

* Blob file: magic ``EMB1``, u32 little-endian version (=1), u32 dim,
  u64 count, then ``count * dim`` little-endian float32 values, row-major,
  no padding.
* Sidecar file (UTF-8 text): line 1 ``dataset_id<TAB>dim<TAB>count``, then
  one line per record ``image_id<TAB>identity_label``.
* Manifest file (UTF-8 text): line 1 ``dataset_id<TAB>n_folders<TAB>n_images``,
  then one line per identity folder ``label<TAB>img1<TAB>img2...``.

Vectors are stored at 32-bit precision. All arithmetic that produces new
vectors (normalization, fusion) accumulates in float64 and rounds the result
back to float32, so the stored direction of a vector does not depend on any
positive scale factor applied to the raw inputs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

BLOB_MAGIC = b"EMB1"
BLOB_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")

UNIT_NORM_TOL = 1e-6


@dataclass(eq=False)
class EmbeddingSet:
    """Identified, labeled, fixed-dimension vectors for one dataset.

    Treated as immutable after construction; safe to share across workers.
    """

    dataset_id: str
    image_ids: list[str]
    identity_labels: list[str]
    vectors: np.ndarray  # (count, dim) float32

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2:
            raise ValidationError(f"vectors must be 2-D, got shape {self.vectors.shape}")
        count = self.vectors.shape[0]
        if len(self.image_ids) != count or len(self.identity_labels) != count:
            raise ValidationError(
                f"record count mismatch: {count} vectors, {len(self.image_ids)} ids, "
                f"{len(self.identity_labels)} labels"
            )
        seen: dict[str, int] = {}
        for i, image_id in enumerate(self.image_ids):
            if image_id in seen:
                raise ValidationError(
                    f"duplicate image_id {image_id!r} at records {seen[image_id]} and {i}"
                )
            seen[image_id] = i
        for i, label in enumerate(self.identity_labels):
            if not label:
                raise ValidationError(f"empty identity_label at record {i}")
        bad = np.flatnonzero(~np.isfinite(self.vectors).all(axis=1))
        if bad.size:
            raise ValidationError(
                f"non-finite component at record {bad[0]} (image_id {self.image_ids[bad[0]]!r})"
            )
        self._row_index: dict[str, int] = seen

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def row_of(self, image_id: str) -> int:
        try:
            return self._row_index[image_id]
        except KeyError:
            raise ValidationError(
                f"image_id {image_id!r} not present in dataset {self.dataset_id!r}"
            ) from None

    def row_norms(self) -> np.ndarray:
        """Euclidean norm of every row, accumulated in float64."""
        v = self.vectors.astype(np.float64)
        return np.sqrt(np.einsum("ij,ij->i", v, v))

    def is_normalized(self, tol: float = UNIT_NORM_TOL) -> bool:
        return bool(np.all(np.abs(self.row_norms() - 1.0) <= tol))


@dataclass(eq=False)
class DatasetManifest:
    """Identity-folder to image-id listing for one dataset.

    Folder order and per-folder image order are significant and preserved
    by the serializer, so equal manifests produce identical bytes.
    """

    dataset_id: str
    identities: dict[str, list[str]]

    def __post_init__(self) -> None:
        owner: dict[str, str] = {}
        for label, images in self.identities.items():
            if not label:
                raise ValidationError("empty identity folder label")
            if not images:
                raise ValidationError(f"identity folder {label!r} has no images")
            for image_id in images:
                if image_id in owner:
                    raise ValidationError(
                        f"image {image_id!r} listed under both {owner[image_id]!r} and {label!r}"
                    )
                owner[image_id] = label

    @property
    def folder_count(self) -> int:
        return len(self.identities)

    @property
    def image_count(self) -> int:
        return sum(len(images) for images in self.identities.values())

    def image_ids(self) -> list[str]:
        return [img for images in self.identities.values() for img in images]


def load_embeddings(blob_path: str | Path, sidecar_path: str | Path) -> EmbeddingSet:
    """Load and fully validate an embedding set from blob + sidecar.

    Vectors are returned exactly as stored; normalization is a separate,
    explicit step (see :func:`l2_normalize`).
    """
    blob_path = Path(blob_path)
    sidecar_path = Path(sidecar_path)
    raw = blob_path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{blob_path}: too short for blob header ({len(raw)} bytes)")
    magic, version, dim, count = _HEADER.unpack_from(raw)
    if magic != BLOB_MAGIC:
        raise FormatError(f"{blob_path}: bad magic {magic!r}, expected {BLOB_MAGIC!r}")
    if version != BLOB_VERSION:
        raise FormatError(f"{blob_path}: unsupported version {version}")
    if dim == 0:
        raise FormatError(f"{blob_path}: dim must be positive")
    payload = len(raw) - _HEADER.size
    expected = dim * count * 4
    if payload != expected:
        raise FormatError(
            f"{blob_path}: payload is {payload} bytes, expected dim*count*4 = {expected}"
        )
    vectors = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(count, dim)

    sidecar_id, sidecar_dim, records = _read_sidecar(sidecar_path)
    if sidecar_dim != dim:
        raise FormatError(
            f"{sidecar_path}: sidecar dim {sidecar_dim} != blob dim {dim}"
        )
    if len(records) != count:
        raise FormatError(
            f"{sidecar_path}: sidecar lists {len(records)} records, blob holds {count}"
        )
    image_ids = [r[0] for r in records]
    labels = [r[1] for r in records]
    return EmbeddingSet(sidecar_id, image_ids, labels, vectors.copy())


def write_embeddings(
    emb: EmbeddingSet, blob_path: str | Path, sidecar_path: str | Path
) -> None:
    """Write blob + sidecar; load_embeddings round-trips bit-exactly."""
    blob_path = Path(blob_path)
    sidecar_path = Path(sidecar_path)
    header = _HEADER.pack(BLOB_MAGIC, BLOB_VERSION, emb.dim, emb.count)
    body = np.ascontiguousarray(emb.vectors, dtype="<f4").tobytes()
    blob_path.write_bytes(header + body)
    lines = [f"{emb.dataset_id}\t{emb.dim}\t{emb.count}"]
    for image_id, label in zip(emb.image_ids, emb.identity_labels):
        lines.append(f"{image_id}\t{label}")
    sidecar_path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_sidecar(path: Path) -> tuple[str, int, list[tuple[str, str]]]:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise FormatError(f"{path}: empty sidecar")
    head = lines[0].split("\t")
    if len(head) != 3:
        raise FormatError(f"{path}: header must be dataset_id<TAB>dim<TAB>count")
    dataset_id = head[0]
    try:
        dim = int(head[1])
        count = int(head[2])
    except ValueError as exc:
        raise FormatError(f"{path}: non-integer dim/count in header") from exc
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise FormatError(f"{path}:{lineno}: expected image_id<TAB>identity_label")
        records.append((fields[0], fields[1]))
    if len(records) != count:
        raise FormatError(
            f"{path}: header declares {count} records, file lists {len(records)}"
        )
    return dataset_id, dim, records


def l2_normalize(emb: EmbeddingSet) -> EmbeddingSet:
    """Scale every row to unit Euclidean norm.

    Norms are accumulated in float64 and the result is rounded to float32,
    which makes the output invariant (bit-exact) under any positive float64
    scaling of the inputs. Zero-norm rows are extraction failures and raise.
    """
    v = emb.vectors.astype(np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", v, v))
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValidationError(
            f"zero-norm row for image_id {emb.image_ids[zero[0]]!r} (record {zero[0]})"
        )
    out = (v / norms[:, None]).astype(np.float32)
    return EmbeddingSet(emb.dataset_id, list(emb.image_ids), list(emb.identity_labels), out)


def normalize_rows(vectors: np.ndarray) -> np.ndarray:
    """float64-accumulated row normalization of an arbitrary real matrix."""
    v = np.asarray(vectors, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", v, v))
    if np.any(norms == 0.0):
        raise ValidationError("zero-norm row")
    return (v / norms[:, None]).astype(np.float32)


def fuse_flip(original: EmbeddingSet, flipped: EmbeddingSet) -> EmbeddingSet:
    """Fuse per-record features by summing and renormalizing.

    Both sets must list the same image_ids in the same order. A zero-norm
    sum (antipodal inputs) is an error naming the offending image.
    """
    if original.dim != flipped.dim:
        raise ValidationError(
            f"dim mismatch: original {original.dim} vs flipped {flipped.dim}"
        )
    if original.count != flipped.count:
        raise ValidationError(
            f"count mismatch: original {original.count} vs flipped {flipped.count}"
        )
    for i, (a, b) in enumerate(zip(original.image_ids, flipped.image_ids)):
        if a != b:
            raise ValidationError(
                f"image_id order mismatch at record {i}: {a!r} vs {b!r}"
            )
    summed = original.vectors.astype(np.float64) + flipped.vectors.astype(np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", summed, summed))
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValidationError(
            f"zero-norm fused vector for image_id {original.image_ids[zero[0]]!r}"
        )
    fused = (summed / norms[:, None]).astype(np.float32)
    return EmbeddingSet(
        original.dataset_id,
        list(original.image_ids),
        list(original.identity_labels),
        fused,
    )


@dataclass
class ManifestCoverage:
    """Report-only summary of manifest vs embedding-set coverage."""

    missing_embeddings: list[str]  # in manifest, no embedding
    unlisted_embeddings: list[str]  # embedded, not in manifest

    @property
    def consistent(self) -> bool:
        return not self.missing_embeddings and not self.unlisted_embeddings


def validate_manifest(manifest: DatasetManifest, emb: EmbeddingSet) -> ManifestCoverage:
    """Cross-check manifest image ids against embedding records without mutating."""
    have = set(emb.image_ids)
    listed = set()
    missing = []
    for images in manifest.identities.values():
        for image_id in images:
            listed.add(image_id)
            if image_id not in have:
                missing.append(image_id)
    unlisted = [image_id for image_id in emb.image_ids if image_id not in listed]
    return ManifestCoverage(missing, unlisted)


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise FormatError(f"{path}: empty manifest")
    head = lines[0].split("\t")
    if len(head) != 3:
        raise FormatError(f"{path}: header must be dataset_id<TAB>n_folders<TAB>n_images")
    dataset_id = head[0]
    try:
        n_folders = int(head[1])
        n_images = int(head[2])
    except ValueError as exc:
        raise FormatError(f"{path}: non-integer counts in header") from exc
    identities: dict[str, list[str]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) < 2:
            raise FormatError(f"{path}:{lineno}: folder line needs label and >= 1 image")
        label = fields[0]
        if label in identities:
            raise FormatError(f"{path}:{lineno}: duplicate folder label {label!r}")
        identities[label] = fields[1:]
    manifest = DatasetManifest(dataset_id, identities)
    if manifest.folder_count != n_folders:
        raise FormatError(
            f"{path}: header declares {n_folders} folders, file lists {manifest.folder_count}"
        )
    if manifest.image_count != n_images:
        raise FormatError(
            f"{path}: header declares {n_images} images, file lists {manifest.image_count}"
        )
    return manifest


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    lines = [f"{manifest.dataset_id}\t{manifest.folder_count}\t{manifest.image_count}"]
    for label, images in manifest.identities.items():
        lines.append("\t".join([label, *images]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
