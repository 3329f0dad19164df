/** Acceptance: scripted transcript against a live session service.
 *
 * Spawns `python3 -m driveworld.cli serve` (oracle imagination), drives
 * create -> 3 steps -> imagine 3 commands -> commit, checks every displayed
 * r_total against the component product within 1e-6, and verifies transcript
 * replay reproduces the identical display model.
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { SessionClient } from "../src/api.js";
import {
  initialModel,
  reduce,
  replayTranscript,
  type TranscriptEvent,
} from "../src/model.js";

const PORT = 8741;
const BASE = `http://127.0.0.1:${PORT}`;
const run = process.env.RUN_SERVER_TESTS === "1";

let server: ChildProcess | null = null;

async function waitReady(timeoutMs = 90_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/sessions`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ seed: 999, checkpoint: "oracle" }),
      });
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 500));
  }
  throw new Error("server did not become ready");
}

describe.runIf(run)("explorer against a live server", () => {
  beforeAll(async () => {
    const dir = mkdtempSync(join(tmpdir(), "driveworld-ui-"));
    const cfg = join(dir, "server.cfg");
    writeFileSync(cfg, "planner.horizon = 4\n");
    server = spawn(
      "python3",
      ["-m", "driveworld.cli", "serve", "--port", String(PORT), "--config", cfg],
      { stdio: "inherit" },
    );
    await waitReady();
  }, 120_000);

  afterAll(() => {
    server?.kill("SIGTERM");
  });

  it("runs the scripted transcript with consistent rewards", async () => {
    const client = new SessionClient(BASE);
    const transcript: TranscriptEvent[] = [];
    let model = initialModel();
    const apply = (event: TranscriptEvent) => {
      transcript.push(event);
      model = reduce(model, event);
    };

    apply({ kind: "created", seed: 5, body: await client.create(5) });
    expect(model.sessionId).not.toBeNull();
    expect(model.frames.length).toBeGreaterThanOrEqual(2);

    for (let i = 0; i < 3; i++) {
      const action = { dx: 1.5, dy: 0 };
      const body = await client.step(action.dx, action.dy);
      apply({ kind: "stepped", action, body });
      const reward = body.reward;
      expect(Math.abs(reward.r_map * reward.r_object - reward.r_total))
        .toBeLessThanOrEqual(1e-6);
    }
    expect(model.stepCount).toBe(3);

    const commands = ["left", "straight", "right"];
    apply({ kind: "imagined", commands, body: await client.imagine(commands) });
    expect(model.branches).toHaveLength(3);
    for (const branch of model.branches) {
      expect(branch.productConsistent).toBe(true);
      const r = branch.reward;
      expect(Math.abs(r.r_map * r.r_object - r.r_total)).toBeLessThanOrEqual(1e-6);
      expect(branch.filmstrip.length).toBeGreaterThan(0);
    }

    const chosen = model.branches[1];
    apply({
      kind: "committed",
      branch: chosen.branchId,
      body: await client.commit(chosen.branchId),
    });
    expect(model.stepCount).toBe(4);
    expect(model.treeDepth).toBe(1);

    const replayed = replayTranscript(transcript);
    expect(replayed).toEqual(model);

    const tree = await client.tree();
    expect(tree.depth).toBe(1);
  }, 120_000);
});
