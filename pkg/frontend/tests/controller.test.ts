import { describe, expect, it } from "vitest";

import { ServiceClient, PostResult } from "../src/api.js";
import { ReviewController, ViewState } from "../src/controller.js";
import { Progress, ReviewItem, Verdict } from "../src/types.js";

function item(pairId: string, similarity = 0.7): ReviewItem {
  const [probeId, galleryId] = pairId.split("|") as [string, string];
  return {
    pairId,
    probeId,
    galleryId,
    galleryLabel: "folder",
    similarity,
    probeImage: `/images/probe/${probeId}`,
    galleryImage: `/images/gallery/${galleryId}`,
    inReviewBand: similarity >= 0.4 && similarity <= 0.8,
    autoDuplicateBand: similarity >= 0.9,
    currentVerdict: null,
  };
}

interface Posted {
  pairId: string;
  verdict: Verdict;
  duplicate: boolean;
}

class FakeClient extends ServiceClient {
  queue: ReviewItem[];
  posted: Posted[] = [];
  failNetwork = false;
  rejectWith: number | null = null;
  annotatedCount = 0;

  constructor(items: ReviewItem[]) {
    super("");
    this.queue = [...items];
  }

  override async nextPair(): Promise<ReviewItem | null> {
    if (this.failNetwork) {
      throw new TypeError("fetch failed");
    }
    return this.queue[0] ?? null;
  }

  override async postVerdict(
    pairId: string,
    verdict: Verdict,
    duplicate: boolean,
  ): Promise<PostResult> {
    if (this.failNetwork) {
      throw new TypeError("fetch failed");
    }
    if (this.rejectWith !== null) {
      return { ok: false, status: this.rejectWith, error: "refused" };
    }
    this.posted.push({ pairId, verdict, duplicate });
    this.queue = this.queue.filter((i) => i.pairId !== pairId);
    this.annotatedCount += 1;
    return {
      ok: true,
      record: { pairId, verdict, duplicate, annotator: "t", timestamp: "2024-01-01T00:00:00+00:00" },
    };
  }

  override async progress(): Promise<Progress> {
    if (this.failNetwork) {
      throw new TypeError("fetch failed");
    }
    return {
      annotated: this.annotatedCount,
      total: this.annotatedCount + this.queue.length,
      verdicts: { same: 0, different: 0, unsure: 0 },
    };
  }
}

function harness(items: ReviewItem[]) {
  const client = new FakeClient(items);
  const states: ViewState[] = [];
  const controller = new ReviewController(client, (s) => states.push(s), "t");
  return { client, controller, states };
}

describe("keyboard protocol", () => {
  it("maps s/d/u to verdicts and x toggles duplicate only on same", async () => {
    const { controller } = harness([item("a|b")]);
    await controller.start();

    controller.handleKey("x");
    expect(controller.snapshot.draft.duplicate).toBe(false); // no verdict yet

    controller.handleKey("d");
    expect(controller.snapshot.draft.verdict).toBe("different");
    controller.handleKey("x");
    expect(controller.snapshot.draft.duplicate).toBe(false); // blocked on different

    controller.handleKey("s");
    controller.handleKey("x");
    expect(controller.snapshot.draft).toEqual({ verdict: "same", duplicate: true });
    controller.handleKey("x");
    expect(controller.snapshot.draft.duplicate).toBe(false);
  });

  it("switching away from same clears the duplicate flag", async () => {
    const { controller } = harness([item("a|b")]);
    await controller.start();
    controller.setVerdict("same");
    controller.toggleDuplicate();
    controller.setVerdict("unsure");
    expect(controller.snapshot.draft).toEqual({ verdict: "unsure", duplicate: false });
  });
});

describe("submission flow", () => {
  it("posts on Enter and advances to the next pair", async () => {
    const { client, controller } = harness([item("a|b"), item("c|d", 0.5)]);
    await controller.start();
    controller.setVerdict("same");
    await controller.submit();
    expect(client.posted).toEqual([{ pairId: "a|b", verdict: "same", duplicate: false }]);
    expect(controller.snapshot.item?.pairId).toBe("c|d");
    expect(controller.snapshot.draft.verdict).toBeNull();
  });

  it("submit without a verdict is a no-op", async () => {
    const { client, controller } = harness([item("a|b")]);
    await controller.start();
    await controller.submit();
    expect(client.posted).toEqual([]);
  });

  it("shows the completion screen with counts once exhausted", async () => {
    const { controller } = harness([item("a|b")]);
    await controller.start();
    controller.setVerdict("unsure");
    await controller.submit();
    const state = controller.snapshot;
    expect(state.phase).toBe("complete");
    expect(state.progress?.annotated).toBe(1);
    expect(state.progress?.total).toBe(1);
  });
});

describe("failure handling", () => {
  it("keeps the draft across a network outage and retries without double-posting", async () => {
    const { client, controller } = harness([item("a|b")]);
    await controller.start();
    controller.setVerdict("same");
    controller.toggleDuplicate();

    client.failNetwork = true;
    await controller.submit();
    expect(controller.snapshot.phase).toBe("offline");
    expect(controller.snapshot.draft).toEqual({ verdict: "same", duplicate: true });
    expect(client.posted).toEqual([]); // nothing acknowledged

    client.failNetwork = false;
    await controller.retry();
    expect(client.posted).toEqual([{ pairId: "a|b", verdict: "same", duplicate: true }]);
    expect(controller.snapshot.phase).toBe("complete");
  });

  it("a service rejection keeps the pair and the draft", async () => {
    const { client, controller } = harness([item("a|b")]);
    await controller.start();
    controller.setVerdict("same");
    client.rejectWith = 409;
    await controller.submit();
    const state = controller.snapshot;
    expect(state.phase).toBe("rejected");
    expect(state.banner).toContain("409");
    expect(state.item?.pairId).toBe("a|b");
    expect(state.draft.verdict).toBe("same");
  });

  it("start during an outage lands in offline with a retry path", async () => {
    const { client, controller } = harness([item("a|b")]);
    client.failNetwork = true;
    await controller.start();
    expect(controller.snapshot.phase).toBe("offline");
    client.failNetwork = false;
    await controller.retry();
    expect(controller.snapshot.phase).toBe("reviewing");
  });
});
