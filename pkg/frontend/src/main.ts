import { ServiceClient } from "./api.js";
import { ReviewController, ViewState } from "./controller.js";
import { VERDICTS } from "./types.js";

const api = new ServiceClient("");

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function render(state: ViewState): void {
  const banner = el<HTMLDivElement>("banner");
  banner.textContent = state.banner ?? "";
  banner.className = state.banner ? `banner ${state.phase}` : "banner hidden";
  el<HTMLButtonElement>("retry").style.display =
    state.phase === "offline" ? "inline-block" : "none";

  const progress = el<HTMLDivElement>("progress");
  if (state.progress) {
    const { annotated, total, verdicts } = state.progress;
    progress.textContent =
      `${annotated}/${total} annotated - ` +
      `same ${verdicts.same}, different ${verdicts.different}, unsure ${verdicts.unsure}`;
  } else {
    progress.textContent = "";
  }

  const review = el<HTMLDivElement>("review");
  const complete = el<HTMLDivElement>("complete");
  if (state.phase === "complete") {
    review.style.display = "none";
    complete.style.display = "block";
    if (state.progress) {
      el<HTMLDivElement>("complete-counts").textContent =
        `same: ${state.progress.verdicts.same} - ` +
        `different: ${state.progress.verdicts.different} - ` +
        `unsure: ${state.progress.verdicts.unsure}`;
    }
    return;
  }
  complete.style.display = "none";
  review.style.display = state.item ? "block" : "none";
  if (!state.item) {
    return;
  }

  el<HTMLImageElement>("probe-img").src = api.imageUrl(state.item.probeImage);
  el<HTMLImageElement>("gallery-img").src = api.imageUrl(state.item.galleryImage);
  el<HTMLDivElement>("probe-caption").textContent = state.item.probeId;
  el<HTMLDivElement>("gallery-caption").textContent =
    `${state.item.galleryId} (${state.item.galleryLabel})`;
  el<HTMLDivElement>("similarity").textContent =
    `similarity ${state.item.similarity.toFixed(4)}` +
    (state.item.inReviewBand ? " - review band" : "") +
    (state.item.autoDuplicateBand ? " - likely duplicate" : "");

  for (const v of VERDICTS) {
    el<HTMLButtonElement>(`btn-${v}`).classList.toggle(
      "active",
      state.draft.verdict === v,
    );
  }
  const dup = el<HTMLButtonElement>("btn-duplicate");
  dup.disabled = state.draft.verdict !== "same";
  dup.classList.toggle("active", state.draft.duplicate);
  el<HTMLButtonElement>("btn-submit").disabled =
    state.draft.verdict === null || state.submitting;
}

const controller = new ReviewController(api, render, "browser");

function bandFromInputs(): [number, number] | null {
  const lo = parseFloat(el<HTMLInputElement>("band-lo").value);
  const hi = parseFloat(el<HTMLInputElement>("band-hi").value);
  if (Number.isFinite(lo) && Number.isFinite(hi) && lo <= hi) {
    return [lo, hi];
  }
  return null;
}

window.addEventListener("DOMContentLoaded", () => {
  el<HTMLButtonElement>("btn-same").onclick = () => controller.setVerdict("same");
  el<HTMLButtonElement>("btn-different").onclick = () => controller.setVerdict("different");
  el<HTMLButtonElement>("btn-unsure").onclick = () => controller.setVerdict("unsure");
  el<HTMLButtonElement>("btn-duplicate").onclick = () => controller.toggleDuplicate();
  el<HTMLButtonElement>("btn-submit").onclick = () => void controller.submit();
  el<HTMLButtonElement>("retry").onclick = () => void controller.retry();
  el<HTMLButtonElement>("band-apply").onclick = () =>
    void controller.setBand(bandFromInputs());

  document.addEventListener("keydown", (event) => {
    if (event.target instanceof HTMLInputElement) {
      return; // typing in the band boxes
    }
    controller.handleKey(event.key);
  });

  void controller.start(bandFromInputs());
});
