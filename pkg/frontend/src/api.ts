import {
  Progress,
  ReviewItem,
  StoredVerdict,
  Verdict,
  parseProgress,
  parseReviewItem,
} from "./types.js";

export type PostResult =
  | { ok: true; record: StoredVerdict & { pairId: string } }
  | { ok: false; status: number; error: string };

/**
 * Typed client for the annotation service. Network failures reject the
 * returned promise; HTTP-level rejections (409 rule violation, 404 unknown
 * pair) resolve as structured results so callers can keep their draft.
 */
export class ServiceClient {
  constructor(private readonly baseUrl: string = "") {}

  imageUrl(path: string): string {
    return this.baseUrl + path;
  }

  async nextPair(band: [number, number] | null = null): Promise<ReviewItem | null> {
    const params = new URLSearchParams({ unannotated: "true" });
    if (band) {
      params.set("band", `${band[0]},${band[1]}`);
    }
    const resp = await fetch(`${this.baseUrl}/api/queue/next?${params}`);
    if (resp.status === 204) {
      return null; // queue exhausted
    }
    if (!resp.ok) {
      throw new Error(`queue fetch failed with status ${resp.status}`);
    }
    return parseReviewItem(await resp.json());
  }

  async postVerdict(
    pairId: string,
    verdict: Verdict,
    duplicate: boolean,
    annotator: string,
  ): Promise<PostResult> {
    const resp = await fetch(`${this.baseUrl}/api/verdict`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ pair_id: pairId, verdict, duplicate, annotator }),
    });
    const body = (await resp.json()) as Record<string, unknown>;
    if (resp.status === 201) {
      return {
        ok: true,
        record: {
          pairId: String(body.pair_id),
          verdict: body.verdict as Verdict,
          duplicate: Boolean(body.duplicate),
          annotator: String(body.annotator),
          timestamp: String(body.timestamp),
        },
      };
    }
    return { ok: false, status: resp.status, error: String(body.error ?? "rejected") };
  }

  async progress(): Promise<Progress> {
    const resp = await fetch(`${this.baseUrl}/api/progress`);
    if (!resp.ok) {
      throw new Error(`progress fetch failed with status ${resp.status}`);
    }
    return parseProgress(await resp.json());
  }
}
