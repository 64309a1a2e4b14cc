"""Turn match scores and human verdicts into overlap reports and merge proposals.

The classification defaults come straight from the shape of the top-2
similarity distribution: scores at or above ``tau_dup`` mark near-duplicate
images, scores at or above ``tau_id`` mark same-identity pairs, and the
band ``[review_low, review_high]`` is queued for human review. Human
verdicts override automatic ones; discordant pairs (high similarity judged
different, low similarity judged same) are surfaced for re-examination.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .annotations import AnnotationRecord, make_pair_id, parse_timestamp
from .errors import FormatError, ValidationError
from .matcher import MatchResult


@dataclass(frozen=True)
class ThresholdPolicy:
    tau_dup: float = 0.9
    tau_id: float = 0.5
    review_low: float = 0.4
    review_high: float = 0.8

    def __post_init__(self) -> None:
        values = (self.tau_dup, self.tau_id, self.review_low, self.review_high)
        if not all(-1.0 <= v <= 1.0 for v in values):
            raise ValidationError(f"policy thresholds must lie in [-1, 1]: {values}")
        if not (self.review_low <= self.tau_id <= self.review_high <= self.tau_dup):
            raise ValidationError(
                "policy must satisfy review_low <= tau_id <= review_high <= tau_dup, "
                f"got {values}"
            )


@dataclass(frozen=True)
class PairVerdict:
    probe_id: str
    gallery_id: str
    similarity: float
    verdict: str  # same | different | unsure
    duplicate: bool
    source: str  # auto | human
    needs_review: bool = False

    @property
    def pair_id(self) -> str:
        return make_pair_id(self.probe_id, self.gallery_id)


def auto_classify(matches: list[MatchResult], policy: ThresholdPolicy | None = None) -> list[PairVerdict]:
    """Threshold classification of match results, flagging the review band."""
    policy = policy or ThresholdPolicy()
    verdicts = []
    for m in matches:
        s = m.similarity
        if s >= policy.tau_dup:
            verdict, duplicate = "same", True
        elif s >= policy.tau_id:
            verdict, duplicate = "same", False
        else:
            verdict, duplicate = "different", False
        verdicts.append(
            PairVerdict(
                probe_id=m.probe_id,
                gallery_id=m.gallery_id,
                similarity=s,
                verdict=verdict,
                duplicate=duplicate,
                source="auto",
                needs_review=policy.review_low <= s <= policy.review_high,
            )
        )
    return verdicts


def merge_annotations(
    auto: list[PairVerdict], annotations: list[AnnotationRecord]
) -> list[PairVerdict]:
    """Apply human verdicts over automatic ones.

    The latest annotation per pair wins (timestamp, then input order).
    Annotations for pairs absent from ``auto`` are an error listing every
    offending pair id.
    """
    known = {v.pair_id for v in auto}
    unknown = sorted({a.pair_id for a in annotations} - known)
    if unknown:
        raise ValidationError(
            f"annotations reference {len(unknown)} unknown pair(s): {', '.join(unknown)}"
        )
    latest: dict[str, AnnotationRecord] = {}
    for record in annotations:
        current = latest.get(record.pair_id)
        if current is None or parse_timestamp(record.timestamp) >= parse_timestamp(
            current.timestamp
        ):
            latest[record.pair_id] = record
    merged = []
    for v in auto:
        record = latest.get(v.pair_id)
        if record is None:
            merged.append(v)
        else:
            merged.append(
                PairVerdict(
                    probe_id=v.probe_id,
                    gallery_id=v.gallery_id,
                    similarity=v.similarity,
                    verdict=record.verdict,
                    duplicate=record.duplicate,
                    source="human",
                    needs_review=v.needs_review,
                )
            )
    return merged


def flag_discordant(
    verdicts: list[PairVerdict], policy: ThresholdPolicy | None = None
) -> tuple[list[PairVerdict], list[PairVerdict]]:
    """Pairs where matcher score and verdict disagree.

    Returns ``(hsns, lsts)``: high similarity judged different, and low
    similarity judged same.
    """
    policy = policy or ThresholdPolicy()
    hsns = [v for v in verdicts if v.similarity >= policy.review_high and v.verdict == "different"]
    lsts = [v for v in verdicts if v.similarity <= policy.review_low and v.verdict == "same"]
    return hsns, lsts


@dataclass(frozen=True)
class OverlapTotals:
    """Denominators for report fractions (supplied, not inferred)."""

    test_identities: int
    probe_images: int
    train_folders: int | None = None
    total_images: int | None = None  # optional wider denominator for duplicates


@dataclass
class OverlapReport:
    overlapped_test_identities: set[str]
    matched_train_folders: set[str]
    duplicate_images: list[tuple[str, str]]
    totals: OverlapTotals
    hsns: list[PairVerdict] = field(default_factory=list)
    lsts: list[PairVerdict] = field(default_factory=list)

    @property
    def overlapped_count(self) -> int:
        return len(self.overlapped_test_identities)

    @property
    def overlapped_fraction(self) -> float:
        return self.overlapped_count / self.totals.test_identities if self.totals.test_identities else 0.0

    @property
    def matched_folder_count(self) -> int:
        return len(self.matched_train_folders)

    @property
    def matched_folder_fraction(self) -> float | None:
        if self.totals.train_folders:
            return self.matched_folder_count / self.totals.train_folders
        return None

    @property
    def duplicate_pair_count(self) -> int:
        return len(self.duplicate_images)

    @property
    def duplicate_count(self) -> int:
        """Distinct probe images with at least one duplicate partner."""
        return len({probe for probe, _ in self.duplicate_images})

    @property
    def duplicate_fraction(self) -> float:
        return self.duplicate_count / self.totals.probe_images if self.totals.probe_images else 0.0

    @property
    def duplicate_fraction_of_total(self) -> float | None:
        if self.totals.total_images:
            return self.duplicate_count / self.totals.total_images
        return None


def aggregate_overlap(
    verdicts: list[PairVerdict],
    probe_labels: dict[str, str],
    gallery_labels: dict[str, str],
    totals: OverlapTotals,
    policy: ThresholdPolicy | None = None,
) -> OverlapReport:
    """Summarize verdicts into the identity-overlap report.

    A test identity is overlapped as soon as one of its probes has a same
    verdict; the verdict "unsure" counts as different here (conservative
    toward disjointness) but stays in the review queue.
    """
    policy = policy or ThresholdPolicy()
    overlapped: set[str] = set()
    matched: set[str] = set()
    duplicates: list[tuple[str, str]] = []
    for v in verdicts:
        if v.probe_id not in probe_labels:
            raise ValidationError(f"probe id {v.probe_id!r} has no identity label")
        if v.gallery_id not in gallery_labels:
            raise ValidationError(f"gallery id {v.gallery_id!r} has no identity label")
        if v.verdict == "same":
            overlapped.add(probe_labels[v.probe_id])
            matched.add(gallery_labels[v.gallery_id])
            if v.duplicate:
                duplicates.append((v.probe_id, v.gallery_id))
    duplicates.sort()
    hsns, lsts = flag_discordant(verdicts, policy)
    return OverlapReport(
        overlapped_test_identities=overlapped,
        matched_train_folders=matched,
        duplicate_images=duplicates,
        totals=totals,
        hsns=hsns,
        lsts=lsts,
    )


class _UnionFind:
    """Union-find with path compression; element domain is folder labels."""

    def __init__(self) -> None:
        self.parent: dict[str, str] = {}

    def add(self, x: str) -> None:
        self.parent.setdefault(x, x)

    def find(self, x: str) -> str:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # deterministic: smaller label becomes the root
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


@dataclass
class IdentityLinkGraph:
    """Bipartite test-identity to train-folder links plus merge proposals.

    Proposals are connected components (projected onto train folders through
    shared test identities) with at least two members; they are proposals
    only — downstream consumers take an explicit accepted-merge file so a
    human can veto false components.
    """

    edges: set[tuple[str, str]]  # (test_identity, train_folder)
    merge_proposals: list[list[str]]

    @property
    def linked_test_identities(self) -> set[str]:
        return {t for t, _ in self.edges}

    @property
    def linked_train_folders(self) -> set[str]:
        return {f for _, f in self.edges}


def build_link_graph(
    verdicts: list[PairVerdict],
    probe_labels: dict[str, str],
    gallery_labels: dict[str, str],
) -> IdentityLinkGraph:
    """Link graph from same-verdicts; proposals sorted for stable output."""
    edges: set[tuple[str, str]] = set()
    for v in verdicts:
        if v.verdict != "same":
            continue
        if v.probe_id not in probe_labels:
            raise ValidationError(f"probe id {v.probe_id!r} has no identity label")
        if v.gallery_id not in gallery_labels:
            raise ValidationError(f"gallery id {v.gallery_id!r} has no identity label")
        edges.add((probe_labels[v.probe_id], gallery_labels[v.gallery_id]))

    by_test: dict[str, list[str]] = {}
    for test_id, folder in edges:
        by_test.setdefault(test_id, []).append(folder)

    uf = _UnionFind()
    for folders in by_test.values():
        for f in folders:
            uf.add(f)
        for f in folders[1:]:
            uf.union(folders[0], f)

    components: dict[str, list[str]] = {}
    for folder in uf.parent:
        components.setdefault(uf.find(folder), []).append(folder)
    proposals = sorted(
        (sorted(members) for members in components.values() if len(members) >= 2),
        key=lambda group: group[0],
    )
    return IdentityLinkGraph(edges=edges, merge_proposals=proposals)


def write_merge_proposals(proposals: list[list[str]], path: str | Path) -> None:
    """One proposal per line, folder labels tab-separated."""
    lines = ["\t".join(group) for group in proposals]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_merge_groups(path: str | Path) -> list[list[str]]:
    """Accepted-merge file: same shape as the proposal file."""
    path = Path(path)
    groups = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line or line.startswith("#"):
            continue
        members = line.split("\t")
        if len(members) < 2:
            raise FormatError(f"{path}:{lineno}: a merge group needs >= 2 folders")
        if len(set(members)) != len(members):
            raise FormatError(f"{path}:{lineno}: duplicate folder within group")
        groups.append(members)
    return groups


def write_overlap_report(report: OverlapReport, path: str | Path) -> None:
    lines = ["identity-overlap-report"]
    t = report.totals
    lines.append(f"probe-images\t{t.probe_images}")
    lines.append(f"test-identities\t{t.test_identities}")
    lines.append(
        f"overlapped-identities\t{report.overlapped_count}\t{report.overlapped_fraction * 100:.2f}%"
    )
    if report.matched_folder_fraction is not None:
        lines.append(
            f"matched-train-folders\t{report.matched_folder_count}\t{report.matched_folder_fraction * 100:.2f}%"
        )
    else:
        lines.append(f"matched-train-folders\t{report.matched_folder_count}")
    dup_line = f"duplicate-images\t{report.duplicate_count}\t{report.duplicate_fraction * 100:.2f}%-of-probes"
    if report.duplicate_fraction_of_total is not None:
        dup_line += f"\t{report.duplicate_fraction_of_total * 100:.2f}%-of-dataset"
    lines.append(dup_line)
    lines.append(f"duplicate-pairs\t{report.duplicate_pair_count}")
    lines.append(f"hsns\t{len(report.hsns)}")
    lines.append(f"lsts\t{len(report.lsts)}")

    lines.append("")
    lines.append("[overlapped-identities]")
    lines.extend(sorted(report.overlapped_test_identities))
    lines.append("")
    lines.append("[matched-train-folders]")
    lines.extend(sorted(report.matched_train_folders))
    lines.append("")
    lines.append("[duplicate-images]")
    lines.extend(f"{p}\t{g}" for p, g in report.duplicate_images)
    lines.append("")
    lines.append("[hsns]")
    lines.extend(
        f"{v.probe_id}\t{v.gallery_id}\t{v.similarity:.9f}\t{v.verdict}" for v in report.hsns
    )
    lines.append("")
    lines.append("[lsts]")
    lines.extend(
        f"{v.probe_id}\t{v.gallery_id}\t{v.similarity:.9f}\t{v.verdict}" for v in report.lsts
    )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_verdicts(verdicts: list[PairVerdict], path: str | Path) -> None:
    """Classified-pairs artifact consumed by the report and subset stages."""
    lines = ["probe_id\tgallery_id\tsimilarity\tverdict\tduplicate\tsource\tneeds_review"]
    for v in verdicts:
        lines.append(
            f"{v.probe_id}\t{v.gallery_id}\t{v.similarity:.9f}\t{v.verdict}"
            f"\t{'true' if v.duplicate else 'false'}\t{v.source}"
            f"\t{'true' if v.needs_review else 'false'}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_verdicts(path: str | Path) -> list[PairVerdict]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("probe_id\t"):
        raise FormatError(f"{path}: missing verdict header line")
    verdicts = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 7:
            raise FormatError(f"{path}:{lineno}: expected 7 fields")
        probe_id, gallery_id, sim, verdict, dup, source, review = fields
        verdicts.append(
            PairVerdict(
                probe_id=probe_id,
                gallery_id=gallery_id,
                similarity=float(sim),
                verdict=verdict,
                duplicate=dup == "true",
                source=source,
                needs_review=review == "true",
            )
        )
    return verdicts
