import numpy as np
import pytest

from leakage_audit.store import DatasetManifest, EmbeddingSet, normalize_rows


def make_set(
    dataset_id: str,
    count: int,
    dim: int,
    seed: int = 0,
    normalized: bool = True,
    prefix: str = "img",
    labels=None,
) -> EmbeddingSet:
    rng = np.random.default_rng(seed)
    vectors = rng.standard_normal((count, dim)).astype(np.float32)
    if normalized:
        vectors = normalize_rows(vectors)
    image_ids = [f"{prefix}{i:05d}" for i in range(count)]
    if labels is None:
        labels = [f"person{i % max(1, count // 3):04d}" for i in range(count)]
    return EmbeddingSet(dataset_id, image_ids, list(labels), vectors)


def make_manifest(dataset_id: str, n_folders: int, images_per_folder: int = 3) -> DatasetManifest:
    identities = {
        f"id_{i:04d}": [f"{dataset_id}_{i:04d}_{j}" for j in range(images_per_folder)]
        for i in range(n_folders)
    }
    return DatasetManifest(dataset_id, identities)


@pytest.fixture
def tiny_set() -> EmbeddingSet:
    return make_set("tiny", count=6, dim=4, seed=7)
