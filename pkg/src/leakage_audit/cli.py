"""Command-line entry points for the full audit workflow.

Subcommands: normalize, match, hist, classify, serve, overlap-report,
link-graph, subset, eval, bias-report. Every subcommand is idempotent given
identical inputs and seed. Configuration precedence is flags > config file
> ``LEAKAGE_AUDIT_HOME`` (whose ``config.json`` is picked up when no
--config is given).

Exit codes: 0 success, 2 usage error, 3 data/validation error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import matcher, overlap, plots, report as report_mod, service, store, subsets, verify
from .annotations import read_verdict_log
from .errors import AuditError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_IO = 4

ENV_HOME = "LEAKAGE_AUDIT_HOME"


def load_config(path: str | None) -> dict:
    """Explicit --config, else $LEAKAGE_AUDIT_HOME/config.json, else empty."""
    if path is None:
        home = os.environ.get(ENV_HOME)
        if home:
            candidate = Path(home) / "config.json"
            if candidate.is_file():
                path = str(candidate)
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        config = json.load(fh)
    if not isinstance(config, dict):
        raise AuditError(f"{path}: config must be a JSON object")
    return config


def _policy(args: argparse.Namespace, config: dict) -> overlap.ThresholdPolicy:
    defaults = overlap.ThresholdPolicy()
    cfg = config.get("policy", {})

    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        return cfg.get(key, default)

    return overlap.ThresholdPolicy(
        tau_dup=pick(args.tau_dup, "tau_dup", defaults.tau_dup),
        tau_id=pick(args.tau_id, "tau_id", defaults.tau_id),
        review_low=pick(args.review_low, "review_low", defaults.review_low),
        review_high=pick(args.review_high, "review_high", defaults.review_high),
    )


def _add_policy_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tau-dup", type=float, default=None, dest="tau_dup",
                        help="duplicate threshold (default 0.9)")
    parser.add_argument("--tau-id", type=float, default=None, dest="tau_id",
                        help="same-identity threshold (default 0.5)")
    parser.add_argument("--review-low", type=float, default=None, dest="review_low",
                        help="lower review-band bound (default 0.4)")
    parser.add_argument("--review-high", type=float, default=None, dest="review_high",
                        help="upper review-band bound (default 0.8)")


def _load_set(blob: str, sidecar: str, normalize: bool) -> store.EmbeddingSet:
    emb = store.load_embeddings(blob, sidecar)
    return store.l2_normalize(emb) if normalize else emb


def cmd_normalize(args: argparse.Namespace, config: dict) -> int:
    emb = store.load_embeddings(args.embeddings, args.sidecar)
    normalized = store.l2_normalize(emb)
    out_sidecar = args.out_sidecar or args.out_embeddings + ".sidecar"
    store.write_embeddings(normalized, args.out_embeddings, out_sidecar)
    print(f"normalized {normalized.count} vectors (dim {normalized.dim}) -> {args.out_embeddings}")
    return EXIT_OK


def cmd_match(args: argparse.Namespace, config: dict) -> int:
    workers = args.workers if args.workers is not None else config.get("workers", 1)
    probes = _load_set(args.probes, args.probe_sidecar, args.normalize)
    gallery = _load_set(args.gallery, args.gallery_sidecar, args.normalize)
    results = matcher.top_k(
        probes,
        gallery,
        args.k,
        block_budget_bytes=args.block_mib * 1024 * 1024,
        workers=workers,
    )
    matcher.write_match_file(results, args.out)
    total = sum(len(r) for r in results)
    print(f"matched {probes.count} probes x top-{args.k} -> {total} pairs in {args.out}")
    return EXIT_OK


def cmd_hist(args: argparse.Namespace, config: dict) -> int:
    matches = matcher.read_match_file(args.matches)
    bins = matcher.histogram([m.similarity for m in matches], args.bin_width)
    matcher.write_histogram(bins, args.out)
    if args.figure:
        plots.save_histogram_figure(bins, args.figure)
        print(f"histogram -> {args.out}, figure -> {args.figure}")
    else:
        print(f"histogram -> {args.out}")
    return EXIT_OK


def _classified_verdicts(args: argparse.Namespace, policy: overlap.ThresholdPolicy) -> list:
    matches = matcher.read_match_file(args.matches)
    verdicts = overlap.auto_classify(matches, policy)
    if getattr(args, "annotations", None):
        log = read_verdict_log(args.annotations)
        verdicts = overlap.merge_annotations(verdicts, log.records)
    return verdicts


def cmd_classify(args: argparse.Namespace, config: dict) -> int:
    policy = _policy(args, config)
    verdicts = _classified_verdicts(args, policy)
    overlap.write_verdicts(verdicts, args.out)
    review = [v for v in verdicts if v.needs_review and v.source == "auto"]
    if args.review_queue:
        lines = [f"{v.probe_id}\t{v.gallery_id}\t{v.similarity:.9f}" for v in review]
        Path(args.review_queue).write_text(
            "\n".join(lines) + ("\n" if lines else ""), encoding="utf-8"
        )
    same = sum(1 for v in verdicts if v.verdict == "same")
    dup = sum(1 for v in verdicts if v.duplicate)
    print(
        f"classified {len(verdicts)} pairs: {same} same ({dup} duplicates), "
        f"{len(review)} queued for review -> {args.out}"
    )
    return EXIT_OK


def _sidecar_labels(sidecar: str) -> dict[str, str]:
    labels: dict[str, str] = {}
    lines = Path(sidecar).read_text(encoding="utf-8").splitlines()
    for line in lines[1:]:
        if not line:
            continue
        image_id, _, label = line.partition("\t")
        labels[image_id] = label
    return labels


def cmd_overlap_report(args: argparse.Namespace, config: dict) -> int:
    policy = _policy(args, config)
    verdicts = _classified_verdicts(args, policy)
    probe_labels = _sidecar_labels(args.probe_sidecar)
    matches = matcher.read_match_file(args.matches)
    gallery_labels = {m.gallery_id: m.gallery_label for m in matches}
    totals = overlap.OverlapTotals(
        test_identities=len(set(probe_labels.values())),
        probe_images=len(set(probe_labels)),
        train_folders=args.train_folders,
        total_images=args.total_images,
    )
    rep = overlap.aggregate_overlap(verdicts, probe_labels, gallery_labels, totals, policy)
    overlap.write_overlap_report(rep, args.out)
    if args.matched_folders_out:
        subsets.write_folder_set(rep.matched_train_folders, args.matched_folders_out)
    print(
        f"overlap: {rep.overlapped_count}/{totals.test_identities} test identities "
        f"({rep.overlapped_fraction * 100:.2f}%), {rep.matched_folder_count} train folders, "
        f"{rep.duplicate_count} duplicates, {len(rep.hsns)} HSNS, {len(rep.lsts)} LSTS -> {args.out}"
    )
    return EXIT_OK


def cmd_link_graph(args: argparse.Namespace, config: dict) -> int:
    policy = _policy(args, config)
    verdicts = _classified_verdicts(args, policy)
    probe_labels = _sidecar_labels(args.probe_sidecar)
    matches = matcher.read_match_file(args.matches)
    gallery_labels = {m.gallery_id: m.gallery_label for m in matches}
    graph = overlap.build_link_graph(verdicts, probe_labels, gallery_labels)
    overlap.write_merge_proposals(graph.merge_proposals, args.out)
    print(
        f"link graph: {len(graph.linked_test_identities)} test identities -> "
        f"{len(graph.linked_train_folders)} train folders, "
        f"{len(graph.merge_proposals)} merge proposals -> {args.out}"
    )
    return EXIT_OK


def cmd_subset(args: argparse.Namespace, config: dict) -> int:
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    manifest = store.load_manifest(args.manifest)
    overlapped = subsets.read_folder_set(args.overlapped)
    merges = ()
    if args.merges:
        merges = tuple(tuple(g) for g in overlap.read_merge_groups(args.merges))
    variant = {
        "disjoint": "ID-Disjoint",
        "overlap-r": "ID-Overlap-R",
        "overlap-c": "ID-Overlap-C",
    }[args.variant]
    spec = subsets.SubsetSpec(variant, seed, overlapped, merges)
    out_manifest, provenance = subsets.build_subset(manifest, spec)
    store.write_manifest(out_manifest, args.out)
    prov_path = args.provenance or args.out + ".prov"
    subsets.write_provenance(provenance, prov_path)
    print(
        f"{variant}: {out_manifest.folder_count} folders, {out_manifest.image_count} images "
        f"-> {args.out} (provenance {prov_path})"
    )
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, config: dict) -> int:
    emb = _load_set(args.embeddings, args.sidecar, normalize=True)
    flipped = None
    if args.flipped:
        if not args.flipped_sidecar:
            raise AuditError("--flipped requires --flipped-sidecar")
        flipped = _load_set(args.flipped, args.flipped_sidecar, normalize=True)
    protocol = verify.load_protocol(args.protocol, strict=args.strict)
    rep = verify.evaluate(emb, protocol, metric=args.metric, flipped=flipped)
    verify.write_verification_report(rep, args.out)
    print(verify.verification_summary(rep) + f" -> {args.out}")
    return EXIT_OK


def cmd_bias_report(args: argparse.Namespace, config: dict) -> int:
    records = report_mod.read_accuracy_records(args.records)
    rep = report_mod.compute_bias(records)
    report_mod.write_bias_ledger(rep, args.out)
    outputs = [args.out]
    if args.series:
        report_mod.write_importance_series(rep, args.series)
        outputs.append(args.series)
    if args.figure:
        plots.save_importance_figure(report_mod.importance_curve(rep), args.figure)
        outputs.append(args.figure)
    print(f"bias ledger over {len(rep.cells)} cells -> {', '.join(outputs)}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace, config: dict) -> int:
    roots = dict(config.get("roots", {}))
    home = os.environ.get(ENV_HOME)
    for spec in args.images or []:
        dataset, sep, path = spec.partition("=")
        if not sep:
            raise AuditError(f"--images expects DATASET=DIR, got {spec!r}")
        roots[dataset] = path
    resolved = {}
    for dataset, path in roots.items():
        p = Path(path)
        if not p.is_absolute() and home:
            p = Path(home) / p
        resolved[dataset] = p
    band = service.parse_band(args.band) if args.band else None
    sess = service.ReviewSession(
        args.matches,
        args.verdicts,
        filters=service.SessionFilters(band=band, unannotated_only=True),
        policy=_policy(args, config),
        probe_dataset=args.probe_dataset,
        gallery_dataset=args.gallery_dataset,
        image_roots=service.ImageRoots(resolved),
    )
    server = service.make_server(sess, host=args.host, port=args.port, ui_root=args.ui)
    service.serve_forever(server)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leakage-audit",
        description="Audit identity/image overlap between a training set and a "
        "test set from precomputed embeddings.",
    )
    parser.add_argument("--config", default=None, help="JSON config file (flags win)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("normalize", help="L2-normalize an embedding set")
    p.add_argument("--embeddings", required=True, help="input blob file")
    p.add_argument("--sidecar", required=True, help="input sidecar file")
    p.add_argument("--out-embeddings", required=True, help="output blob file")
    p.add_argument("--out-sidecar", default=None, help="output sidecar (default: <out>.sidecar)")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("match", help="exact top-k cosine search of probes vs gallery")
    p.add_argument("--probes", required=True, help="probe blob file")
    p.add_argument("--probe-sidecar", required=True)
    p.add_argument("--gallery", required=True, help="gallery blob file")
    p.add_argument("--gallery-sidecar", required=True)
    p.add_argument("--k", type=int, default=2, help="matches per probe (default 2)")
    p.add_argument("--out", required=True, help="match output file")
    p.add_argument("--block-mib", type=int, default=64, help="gallery block budget in MiB (default 64)")
    p.add_argument("--workers", type=int, default=None, help="parallel probe workers (default from config, else 1)")
    p.add_argument("--normalize", action="store_true",
                   help="L2-normalize inputs in memory before matching")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("hist", help="similarity histogram of a match file")
    p.add_argument("--matches", required=True)
    p.add_argument("--bin-width", type=float, default=0.05, help="histogram bin width (default 0.05)")
    p.add_argument("--out", required=True, help="bins output file")
    p.add_argument("--figure", default=None, help="optional rendered figure (png/svg)")
    p.set_defaults(func=cmd_hist)

    p = sub.add_parser("classify", help="threshold-classify match pairs")
    p.add_argument("--matches", required=True)
    p.add_argument("--annotations", default=None, help="verdict log to merge over auto verdicts")
    p.add_argument("--out", required=True, help="classified pairs output file")
    p.add_argument("--review-queue", default=None, help="optional review-band listing")
    _add_policy_flags(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("serve", help="run the annotation review service")
    p.add_argument("--matches", required=True)
    p.add_argument("--verdicts", required=True, help="append-only verdict log path")
    p.add_argument("--band", default=None, help="similarity band LO,HI for the queue (default: all pairs)")
    p.add_argument("--images", action="append", default=None, metavar="DATASET=DIR",
                   help="image root per dataset id (repeatable)")
    p.add_argument("--probe-dataset", default="probe", help="dataset id for probe image URLs (default probe)")
    p.add_argument("--gallery-dataset", default="gallery", help="dataset id for gallery image URLs (default gallery)")
    p.add_argument("--ui", default=None, help="static directory for the review UI")
    p.add_argument("--host", default="127.0.0.1", help="bind address (default 127.0.0.1)")
    p.add_argument("--port", type=int, default=8300, help="listen port (default 8300)")
    _add_policy_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("overlap-report", help="aggregate verdicts into the overlap report")
    p.add_argument("--matches", required=True)
    p.add_argument("--probe-sidecar", required=True, help="sidecar supplying probe identity labels")
    p.add_argument("--annotations", default=None, help="verdict log to merge over auto verdicts")
    p.add_argument("--train-folders", type=int, default=None,
                   help="total train folders (denominator for the matched fraction)")
    p.add_argument("--total-images", type=int, default=None,
                   help="full test-set image count (wider duplicate denominator)")
    p.add_argument("--out", required=True)
    p.add_argument("--matched-folders-out", default=None,
                   help="also write matched folder labels, one per line")
    _add_policy_flags(p)
    p.set_defaults(func=cmd_overlap_report)

    p = sub.add_parser("link-graph", help="identity links and split-identity merge proposals")
    p.add_argument("--matches", required=True)
    p.add_argument("--probe-sidecar", required=True)
    p.add_argument("--annotations", default=None, help="verdict log to merge over auto verdicts")
    p.add_argument("--out", required=True, help="merge-proposal output file")
    _add_policy_flags(p)
    p.set_defaults(func=cmd_link_graph)

    p = sub.add_parser("subset", help="build a training-set variant manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--variant", required=True, choices=("disjoint", "overlap-r", "overlap-c"))
    p.add_argument("--seed", type=int, default=None, help="64-bit sampling seed (default from config, else 0)")
    p.add_argument("--overlapped", required=True, help="overlapped folder labels, one per line")
    p.add_argument("--merges", default=None, help="accepted-merge file (overlap-c)")
    p.add_argument("--out", required=True, help="output manifest")
    p.add_argument("--provenance", default=None, help="provenance sidecar (default: <out>.prov)")
    p.set_defaults(func=cmd_subset)

    p = sub.add_parser("eval", help="10-fold pair-verification evaluation")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--sidecar", required=True)
    p.add_argument("--flipped", default=None, help="flipped-image blob for feature fusion")
    p.add_argument("--flipped-sidecar", default=None, help="sidecar for the flipped blob")
    p.add_argument("--protocol", required=True, help="native or classic pairs file")
    p.add_argument("--metric", choices=verify.METRICS, default="cosine", help="scoring metric (default cosine)")
    p.add_argument("--no-strict", dest="strict", action="store_false",
                   help="allow non-standard fold shapes")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval, strict=True)

    p = sub.add_parser("bias-report", help="optimistic-bias ledger from accuracy records")
    p.add_argument("--records", required=True, help="method,variant,test_set,accuracy CSV")
    p.add_argument("--out", required=True, help="bias ledger output")
    p.add_argument("--series", default=None, help="plot-series CSV output")
    p.add_argument("--figure", default=None, help="rendered difficulty/importance figure")
    p.set_defaults(func=cmd_bias_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        return args.func(args, config)
    except AuditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        name = exc.filename or ""
        print(f"i/o error: {exc}" + (f" ({name})" if name and name not in str(exc) else ""),
              file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"error: bad JSON config: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
