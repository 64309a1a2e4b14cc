import { ServiceClient } from "./api.js";
import { Draft, Progress, ReviewItem, Verdict, emptyDraft } from "./types.js";

export type Phase =
  | "loading"
  | "reviewing"
  | "complete"
  | "offline" // service unreachable; draft retained, retry available
  | "rejected"; // service refused the verdict (rule violation / unknown pair)

export interface ViewState {
  phase: Phase;
  item: ReviewItem | null;
  draft: Draft;
  progress: Progress | null;
  banner: string | null;
  band: [number, number] | null;
  submitting: boolean;
}

export type RenderFn = (state: ViewState) => void;

/**
 * Review-loop state machine, independent of the DOM.
 *
 * A pair is only considered done once the service acknowledges the posted
 * verdict (201); until then the staged draft survives network failures and
 * rejections. The duplicate flag can only be staged on a "same" verdict, so
 * the service's 409 rule is unreachable through this controller.
 */
export class ReviewController {
  private state: ViewState = {
    phase: "loading",
    item: null,
    draft: emptyDraft(),
    progress: null,
    banner: null,
    band: null,
    submitting: false,
  };

  constructor(
    private readonly api: ServiceClient,
    private readonly render: RenderFn,
    private readonly annotator: string = "anonymous",
  ) {}

  get snapshot(): ViewState {
    return {
      ...this.state,
      draft: { ...this.state.draft },
      progress: this.state.progress ? { ...this.state.progress } : null,
    };
  }

  private update(partial: Partial<ViewState>): void {
    this.state = { ...this.state, ...partial };
    this.render(this.snapshot);
  }

  async start(band: [number, number] | null = null): Promise<void> {
    this.state.band = band;
    await this.advance();
  }

  async setBand(band: [number, number] | null): Promise<void> {
    this.state.band = band;
    this.update({ draft: emptyDraft() });
    await this.advance();
  }

  /** Keyboard protocol: s=same, d=different, u=unsure, x=duplicate, Enter=submit. */
  handleKey(key: string): void {
    switch (key) {
      case "s":
        this.setVerdict("same");
        break;
      case "d":
        this.setVerdict("different");
        break;
      case "u":
        this.setVerdict("unsure");
        break;
      case "x":
        this.toggleDuplicate();
        break;
      case "Enter":
        void this.submit();
        break;
    }
  }

  setVerdict(verdict: Verdict): void {
    if (this.state.phase !== "reviewing" && this.state.phase !== "rejected") {
      return;
    }
    // duplicate is only meaningful for same-identity pairs
    const duplicate = verdict === "same" ? this.state.draft.duplicate : false;
    this.update({ draft: { verdict, duplicate }, banner: null, phase: "reviewing" });
  }

  toggleDuplicate(): void {
    if (this.state.draft.verdict !== "same") {
      return; // disabled unless verdict=same, mirroring the service invariant
    }
    this.update({
      draft: { verdict: "same", duplicate: !this.state.draft.duplicate },
    });
  }

  async submit(): Promise<void> {
    const { item, draft } = this.state;
    if (!item || draft.verdict === null || this.state.submitting) {
      return;
    }
    this.update({ submitting: true });
    let result;
    try {
      result = await this.api.postVerdict(
        item.pairId,
        draft.verdict,
        draft.duplicate,
        this.annotator,
      );
    } catch {
      // network failure: nothing was acknowledged, keep the draft for retry
      this.update({
        submitting: false,
        phase: "offline",
        banner: "service unreachable - verdict kept locally, retry when back online",
      });
      return;
    }
    if (!result.ok) {
      this.update({
        submitting: false,
        phase: "rejected",
        banner: `service refused the verdict (${result.status}): ${result.error}`,
      });
      return;
    }
    // acknowledged: only now is the pair done
    this.update({ submitting: false, draft: emptyDraft(), banner: null });
    await this.advance();
  }

  /** Re-attempt after an outage: unsubmitted draft first, then the queue. */
  async retry(): Promise<void> {
    if (this.state.item && this.state.draft.verdict !== null) {
      this.update({ phase: "reviewing", banner: null });
      await this.submit();
    } else {
      await this.advance();
    }
  }

  private async advance(): Promise<void> {
    this.update({ phase: "loading", banner: null });
    let progress: Progress;
    let item: ReviewItem | null;
    try {
      progress = await this.api.progress();
      item = await this.api.nextPair(this.state.band);
    } catch {
      this.update({
        phase: "offline",
        banner: "service unreachable - retry when back online",
      });
      return;
    }
    if (item === null) {
      this.update({ phase: "complete", item: null, progress });
      return;
    }
    this.update({ phase: "reviewing", item, progress, draft: emptyDraft() });
  }
}
