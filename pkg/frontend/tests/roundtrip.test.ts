import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ServiceClient } from "../src/api.js";
import { ReviewController } from "../src/controller.js";
import { Verdict } from "../src/types.js";

const FIXTURE = join(fileURLToPath(new URL(".", import.meta.url)), "fixture_service.py");

let child: ChildProcess;
let baseUrl: string;
let verdictFile: string;

beforeAll(async () => {
  const workdir = mkdtempSync(join(tmpdir(), "review-ui-"));
  child = spawn("python3", [FIXTURE, workdir, "20"], { stdio: ["ignore", "pipe", "inherit"] });
  const firstLine = await new Promise<string>((resolve, reject) => {
    let buffer = "";
    child.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const newline = buffer.indexOf("\n");
      if (newline >= 0) {
        resolve(buffer.slice(0, newline));
      }
    });
    child.on("exit", (code) => reject(new Error(`fixture exited early (${code})`)));
    setTimeout(() => reject(new Error("fixture startup timed out")), 15000);
  });
  const info = JSON.parse(firstLine) as { port: number; verdict_file: string };
  baseUrl = `http://127.0.0.1:${info.port}`;
  verdictFile = info.verdict_file;
}, 20000);

afterAll(() => {
  child?.kill();
});

// the scripted session: verdict for the i-th served pair
function scriptedVerdict(i: number): { verdict: Verdict; duplicate: boolean } {
  if (i < 5) return { verdict: "same", duplicate: true };
  if (i < 10) return { verdict: "same", duplicate: false };
  if (i < 15) return { verdict: "different", duplicate: false };
  return { verdict: "unsure", duplicate: false };
}

describe("scripted browser session against the real service", () => {
  it("posts 20 verdicts; the log holds exactly those records in order", async () => {
    const api = new ServiceClient(baseUrl);
    const controller = new ReviewController(api, () => {}, "scripted");
    await controller.start();

    const served: string[] = [];
    for (let i = 0; i < 20; i++) {
      const state = controller.snapshot;
      expect(state.phase).toBe("reviewing");
      const pairId = state.item!.pairId;
      served.push(pairId);
      const { verdict, duplicate } = scriptedVerdict(i);
      controller.handleKey(verdict[0]!); // s / d / u
      if (duplicate) {
        controller.handleKey("x");
      }
      controller.handleKey("Enter");
      // Enter fires submit asynchronously; wait for the ack + advance
      await new Promise((r) => setTimeout(r, 30));
      while (controller.snapshot.submitting) {
        await new Promise((r) => setTimeout(r, 10));
      }
    }
    expect(controller.snapshot.phase).toBe("complete");

    // queue is served in descending similarity = fixture file order
    expect(served).toEqual(
      Array.from({ length: 20 }, (_, i) => `p${String(i).padStart(2, "0")}|g${String(i).padStart(2, "0")}`),
    );

    const lines = readFileSync(verdictFile, "utf-8").trimEnd().split("\n");
    expect(lines).toHaveLength(20);
    lines.forEach((line, i) => {
      const [pairId, verdict, duplicate, annotator] = line.split("\t");
      const expected = scriptedVerdict(i);
      expect(pairId).toBe(served[i]);
      expect(verdict).toBe(expected.verdict);
      expect(duplicate).toBe(expected.duplicate ? "true" : "false");
      expect(annotator).toBe("scripted");
    });
  }, 30000);

  it("a reloaded session shows 20/20 progress and the completion screen", async () => {
    const api = new ServiceClient(baseUrl);
    const controller = new ReviewController(api, () => {}, "reloaded");
    await controller.start();
    const state = controller.snapshot;
    expect(state.phase).toBe("complete");
    expect(state.progress).toMatchObject({
      annotated: 20,
      total: 20,
      verdicts: { same: 10, different: 5, unsure: 5 },
    });
  });

  it("duplicate+different is unreachable client-side and rejected server-side", async () => {
    const api = new ServiceClient(baseUrl);
    const controller = new ReviewController(api, () => {}, "violator");
    controller.setVerdict("different");
    controller.toggleDuplicate(); // client-side: blocked
    expect(controller.snapshot.draft.duplicate).toBe(false);

    // force the violation past the client
    const resp = await fetch(`${baseUrl}/api/verdict`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        pair_id: "p00|g00",
        verdict: "different",
        duplicate: true,
        annotator: "violator",
      }),
    });
    expect(resp.status).toBe(409);
    // the forced attempt must not have appended anything
    const lines = readFileSync(verdictFile, "utf-8").trimEnd().split("\n");
    expect(lines).toHaveLength(20);
  });
});
