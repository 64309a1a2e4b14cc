export type Verdict = "same" | "different" | "unsure";

export const VERDICTS: readonly Verdict[] = ["same", "different", "unsure"];

export interface StoredVerdict {
  verdict: Verdict;
  duplicate: boolean;
  annotator: string;
  timestamp: string;
}

/** One queued pair, mirroring the service's pair descriptor exactly. */
export interface ReviewItem {
  pairId: string;
  probeId: string;
  galleryId: string;
  galleryLabel: string;
  similarity: number;
  probeImage: string;
  galleryImage: string;
  inReviewBand: boolean;
  autoDuplicateBand: boolean;
  currentVerdict: StoredVerdict | null;
}

export interface Progress {
  annotated: number;
  total: number;
  verdicts: Record<Verdict, number>;
}

/** Locally staged verdict; kept until the service acknowledges it. */
export interface Draft {
  verdict: Verdict | null;
  duplicate: boolean;
}

export function emptyDraft(): Draft {
  return { verdict: null, duplicate: false };
}

function fail(context: string, payload: unknown): never {
  throw new Error(`unexpected ${context} payload: ${JSON.stringify(payload)}`);
}

export function parseReviewItem(payload: unknown): ReviewItem {
  const p = payload as Record<string, unknown>;
  if (
    typeof p?.pair_id !== "string" ||
    typeof p?.probe_id !== "string" ||
    typeof p?.gallery_id !== "string" ||
    typeof p?.similarity !== "number" ||
    typeof p?.probe_image !== "string" ||
    typeof p?.gallery_image !== "string"
  ) {
    fail("pair descriptor", payload);
  }
  const current = p.current_verdict as Record<string, unknown> | null;
  return {
    pairId: p.pair_id as string,
    probeId: p.probe_id as string,
    galleryId: p.gallery_id as string,
    galleryLabel: String(p.gallery_label ?? ""),
    similarity: p.similarity as number,
    probeImage: p.probe_image as string,
    galleryImage: p.gallery_image as string,
    inReviewBand: Boolean(p.in_review_band),
    autoDuplicateBand: Boolean(p.auto_duplicate_band),
    currentVerdict:
      current == null
        ? null
        : {
            verdict: current.verdict as Verdict,
            duplicate: Boolean(current.duplicate),
            annotator: String(current.annotator ?? ""),
            timestamp: String(current.timestamp ?? ""),
          },
  };
}

export function parseProgress(payload: unknown): Progress {
  const p = payload as Record<string, unknown>;
  if (typeof p?.annotated !== "number" || typeof p?.total !== "number") {
    fail("progress", payload);
  }
  const counts = (p.verdicts ?? {}) as Record<string, number>;
  return {
    annotated: p.annotated,
    total: p.total,
    verdicts: {
      same: counts.same ?? 0,
      different: counts.different ?? 0,
      unsure: counts.unsure ?? 0,
    },
  };
}
