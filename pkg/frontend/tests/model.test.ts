import { describe, expect, it } from "vitest";

import { actionFromControls } from "../src/api.js";
import {
  PRODUCT_TOLERANCE,
  checkProduct,
  initialModel,
  reduce,
  replayTranscript,
  type TranscriptEvent,
} from "../src/model.js";

const reward = (total: number, map = 1.0, object = total) => ({
  r_curb: map,
  r_center: 1.0,
  r_map: map,
  r_object: object,
  r_total: map * object,
  low_confidence: false,
});

function branch(id: string, command: string, rTotal = 0.5) {
  return {
    branch: id,
    candidate: { command, waypoints: [[0, 0], [2, 0], [4, 0]] },
    frames: [["AAAA"], ["BBBB"]],
    reward_breakdown: reward(rTotal),
  };
}

const transcript: TranscriptEvent[] = [
  { kind: "created", seed: 3, body: { id: "s1", frames: ["f0", "f1"] } },
  {
    kind: "stepped",
    action: { dx: 2, dy: 0 },
    body: {
      frames: ["g0", "g1"],
      perceived: { agents: [], centerline_points: [], curb_points: [] },
      reward: reward(1.0),
      step: 1,
    },
  },
  {
    kind: "imagined",
    commands: ["left", "straight", "right"],
    body: {
      branches: [branch("1:0", "left", 0.2), branch("1:1", "straight", 0.9),
                 branch("1:2", "right", 0.0)],
    },
  },
  { kind: "committed", branch: "1:1", body: { frames: ["h0", "h1"], step: 2 } },
];

describe("display model reducer", () => {
  it("starts empty", () => {
    const m = initialModel();
    expect(m.sessionId).toBeNull();
    expect(m.branches).toEqual([]);
  });

  it("folds a full interaction", () => {
    let m = initialModel();
    for (const e of transcript.slice(0, 3)) m = reduce(m, e);
    expect(m.sessionId).toBe("s1");
    expect(m.stepCount).toBe(1);
    expect(m.branches).toHaveLength(3);
    expect(m.branches[1].command).toBe("straight");
    expect(m.branches.every((b) => b.productConsistent)).toBe(true);
    expect(m.branches[2].collision).toBe(true); // zero object reward
    m = reduce(m, transcript[3]);
    expect(m.treeDepth).toBe(1);
    expect(m.branches).toEqual([]);
    expect(m.selectedBranch).toBe("1:1");
    expect(m.actionHistory).toHaveLength(2);
    expect(m.actionHistory[1]).toEqual({ dx: 2, dy: 0 });
  });

  it("replay reproduces the identical model", () => {
    let live = initialModel();
    for (const e of transcript) live = reduce(live, e);
    const replayed = replayTranscript(transcript);
    expect(replayed).toEqual(live);
  });

  it("flags product mismatches beyond the tolerance", () => {
    const bad = { ...reward(0.5), r_total: 0.5 + 5 * PRODUCT_TOLERANCE };
    expect(checkProduct(bad)).toBe(false);
    const ok = { ...reward(0.5), r_total: 0.5 + 0.5 * PRODUCT_TOLERANCE };
    expect(checkProduct(ok)).toBe(true);
  });

  it("errors never mutate session state", () => {
    let m = replayTranscript(transcript.slice(0, 3));
    const before = JSON.stringify({ ...m, error: null });
    m = reduce(m, { kind: "failed", message: "boom" });
    expect(m.error).toBe("boom");
    expect(JSON.stringify({ ...m, error: null, busy: false })).toBe(before);
  });

  it("converts controls to displacements", () => {
    const { dx, dy } = actionFromControls(4, 0, 0, 0.5);
    expect(dx).toBeCloseTo(2, 9);
    expect(dy).toBeCloseTo(0, 9);
    const turn = actionFromControls(4, 90, 0, 0.5);
    expect(turn.dx).toBeCloseTo(0, 9);
    expect(turn.dy).toBeCloseTo(2, 9);
  });
});
