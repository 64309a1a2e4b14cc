"""Deterministic construction of the three training-set variants.

* ``ID-Disjoint`` drops every overlapped identity folder.
* ``ID-Overlap-R`` keeps the overlapped folders and instead drops the same
  number of non-overlapped folders, sampled without replacement.
* ``ID-Overlap-C`` is ``ID-Overlap-R`` with each accepted merge group of
  split-identity folders collapsed into a single folder.

Sampling uses SplitMix64, a portable 64-bit generator, driving a partial
Fisher-Yates shuffle of the lexicographically sorted non-overlapped folder
list, so the same (manifest, spec) pair yields byte-identical output on any
platform or implementation. Surviving folders keep their manifest order; a
merged folder sits where its earliest member sat, is labeled with the
lexicographically smallest member, and concatenates image lists in member
label order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError
from .store import DatasetManifest

VARIANTS = ("ID-Disjoint", "ID-Overlap-R", "ID-Overlap-C")

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    """SplitMix64 stream; state advances by the golden-ratio increment."""

    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return (z ^ (z >> 31)) & _MASK64

    def below(self, bound: int) -> int:
        """Unbiased draw in [0, bound) by rejection."""
        if bound <= 0:
            raise ValidationError(f"bound must be positive, got {bound}")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            x = self.next()
            if x < limit:
                return x % bound

    def sample(self, items: list[str], m: int) -> list[str]:
        """First m elements of a partial Fisher-Yates shuffle of items."""
        if m > len(items):
            raise ValidationError(f"cannot sample {m} from {len(items)} items")
        pool = list(items)
        n = len(pool)
        for i in range(m):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:m]


@dataclass(frozen=True)
class SubsetSpec:
    variant: str
    seed: int
    overlapped_folders: frozenset[str]
    accepted_merges: tuple[tuple[str, ...], ...] = ()

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if not 0 <= self.seed < (1 << 64):
            raise ValidationError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        seen: set[str] = set()
        for group in self.accepted_merges:
            if len(group) < 2:
                raise ValidationError(f"merge group {group} has fewer than 2 folders")
            for folder in group:
                if folder in seen:
                    raise ValidationError(f"folder {folder!r} appears in multiple merge groups")
                seen.add(folder)
            if not set(group) <= self.overlapped_folders:
                outside = sorted(set(group) - self.overlapped_folders)
                raise ValidationError(
                    f"merge group members outside the overlapped folder set: {outside}"
                )


@dataclass
class SubsetProvenance:
    variant: str
    seed: int
    dropped_folders: list[str]
    applied_merges: list[list[str]] = field(default_factory=list)


def _check_overlapped_present(manifest: DatasetManifest, spec: SubsetSpec) -> None:
    missing = sorted(spec.overlapped_folders - manifest.identities.keys())
    if missing:
        raise ValidationError(
            f"overlapped folders not present in manifest: {', '.join(missing)}"
        )


def build_disjoint(
    manifest: DatasetManifest, spec: SubsetSpec
) -> tuple[DatasetManifest, SubsetProvenance]:
    """Manifest minus every overlapped folder."""
    if spec.variant != "ID-Disjoint":
        raise ValidationError(f"spec variant is {spec.variant!r}, expected ID-Disjoint")
    _check_overlapped_present(manifest, spec)
    identities = {
        label: list(images)
        for label, images in manifest.identities.items()
        if label not in spec.overlapped_folders
    }
    out = DatasetManifest(manifest.dataset_id, identities)
    return out, SubsetProvenance("ID-Disjoint", spec.seed, sorted(spec.overlapped_folders))


def build_overlap_r(
    manifest: DatasetManifest, spec: SubsetSpec
) -> tuple[DatasetManifest, SubsetProvenance]:
    """Keep overlapped folders; drop as many seeded-random non-overlapped ones."""
    if spec.variant != "ID-Overlap-R":
        raise ValidationError(f"spec variant is {spec.variant!r}, expected ID-Overlap-R")
    _check_overlapped_present(manifest, spec)
    non_overlapped = sorted(
        label for label in manifest.identities if label not in spec.overlapped_folders
    )
    n_drop = len(spec.overlapped_folders)
    if len(non_overlapped) < n_drop:
        raise ValidationError(
            f"need {n_drop} non-overlapped folders to drop, only {len(non_overlapped)} available"
        )
    dropped = set(SplitMix64(spec.seed).sample(non_overlapped, n_drop))
    identities = {
        label: list(images)
        for label, images in manifest.identities.items()
        if label not in dropped
    }
    out = DatasetManifest(manifest.dataset_id, identities)
    return out, SubsetProvenance("ID-Overlap-R", spec.seed, sorted(dropped))


def build_overlap_c(
    manifest: DatasetManifest, spec: SubsetSpec
) -> tuple[DatasetManifest, SubsetProvenance]:
    """Overlap-R output with accepted merge groups collapsed into one folder each."""
    if spec.variant != "ID-Overlap-C":
        raise ValidationError(f"spec variant is {spec.variant!r}, expected ID-Overlap-C")
    base, provenance = build_overlap_r(
        manifest,
        SubsetSpec("ID-Overlap-R", spec.seed, spec.overlapped_folders, spec.accepted_merges),
    )
    group_of: dict[str, tuple[str, ...]] = {}
    for group in spec.accepted_merges:
        missing = sorted(set(group) - base.identities.keys())
        if missing:
            raise ValidationError(
                f"merge group references dropped/absent folder(s): {', '.join(missing)}"
            )
        for folder in group:
            group_of[folder] = group

    identities: dict[str, list[str]] = {}
    done: set[tuple[str, ...]] = set()
    for label, images in base.identities.items():
        group = group_of.get(label)
        if group is None:
            identities[label] = list(images)
            continue
        if group in done:
            continue  # already emitted at the earliest member's position
        done.add(group)
        members = sorted(group)
        merged_images = [img for m in members for img in base.identities[m]]
        identities[members[0]] = merged_images

    out = DatasetManifest(manifest.dataset_id, identities)
    provenance.variant = "ID-Overlap-C"
    provenance.applied_merges = [sorted(g) for g in spec.accepted_merges]
    return out, provenance


def build_subset(
    manifest: DatasetManifest, spec: SubsetSpec
) -> tuple[DatasetManifest, SubsetProvenance]:
    builders = {
        "ID-Disjoint": build_disjoint,
        "ID-Overlap-R": build_overlap_r,
        "ID-Overlap-C": build_overlap_c,
    }
    return builders[spec.variant](manifest, spec)


def write_provenance(provenance: SubsetProvenance, path: str | Path) -> None:
    lines = [
        f"variant\t{provenance.variant}",
        f"seed\t{provenance.seed}",
        f"dropped-folders\t{len(provenance.dropped_folders)}",
    ]
    lines.extend(f"dropped\t{label}" for label in provenance.dropped_folders)
    lines.append(f"applied-merges\t{len(provenance.applied_merges)}")
    lines.extend("merged\t" + "\t".join(group) for group in provenance.applied_merges)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_folder_set(path: str | Path) -> frozenset[str]:
    """One folder label per line; blank lines and # comments ignored."""
    labels = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            labels.add(line)
    return frozenset(labels)


def write_folder_set(folders: set[str] | frozenset[str], path: str | Path) -> None:
    lines = sorted(folders)
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
