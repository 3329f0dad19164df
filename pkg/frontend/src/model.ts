/** Display model: a pure fold over the transcript of server interactions.
 *
 * Replaying a recorded transcript reproduces the exact same model, which the
 * integration test asserts; the client-side product check recomputes r_total
 * from its displayed components and flags any mismatch above 1e-6.
 */

import type {
  Branch,
  CommitResponse,
  CreateResponse,
  ImagineResponse,
  RewardBreakdown,
  StepResponse,
} from "./api.js";

export const PRODUCT_TOLERANCE = 1e-6;

export interface BranchView {
  branchId: string;
  command: string;
  filmstrip: string[][];
  reward: RewardBreakdown;
  productConsistent: boolean;
  collision: boolean; // zero object reward renders a collision badge
  firstAction: { dx: number; dy: number }; // ego-frame first step of the branch
}

export interface DisplayModel {
  sessionId: string | null;
  frames: string[];
  stepCount: number;
  actionHistory: { dx: number; dy: number }[];
  headingRad: number;
  branches: BranchView[];
  selectedBranch: string | null;
  treeDepth: number;
  busy: boolean;
  error: string | null;
}

export type TranscriptEvent =
  | { kind: "created"; seed: number; body: CreateResponse }
  | { kind: "stepped"; action: { dx: number; dy: number }; body: StepResponse }
  | { kind: "imagined"; commands: string[]; body: ImagineResponse }
  | { kind: "committed"; branch: string; body: CommitResponse }
  | { kind: "busy" }
  | { kind: "failed"; message: string };

export function initialModel(): DisplayModel {
  return {
    sessionId: null,
    frames: [],
    stepCount: 0,
    actionHistory: [],
    headingRad: 0,
    branches: [],
    selectedBranch: null,
    treeDepth: 0,
    busy: false,
    error: null,
  };
}

export function checkProduct(reward: RewardBreakdown): boolean {
  const product = reward.r_map * reward.r_object;
  return Math.abs(product - reward.r_total) <= PRODUCT_TOLERANCE;
}

function branchView(branch: Branch): BranchView {
  const [x0, y0] = branch.candidate.waypoints[0];
  const [x1, y1] = branch.candidate.waypoints[1];
  return {
    branchId: branch.branch,
    command: branch.candidate.command,
    filmstrip: branch.frames,
    reward: branch.reward_breakdown,
    productConsistent: checkProduct(branch.reward_breakdown),
    collision: branch.reward_breakdown.r_object === 0,
    firstAction: { dx: x1 - x0, dy: y1 - y0 },
  };
}

function headingAfter(current: number, dx: number, dy: number): number {
  return Math.hypot(dx, dy) > 1e-6 ? Math.atan2(dy, dx) : current;
}

export function reduce(model: DisplayModel, event: TranscriptEvent): DisplayModel {
  switch (event.kind) {
    case "created":
      return {
        ...initialModel(),
        sessionId: event.body.id,
        frames: event.body.frames,
      };
    case "stepped":
      return {
        ...model,
        frames: event.body.frames,
        stepCount: event.body.step,
        actionHistory: [...model.actionHistory, event.action],
        headingRad: headingAfter(model.headingRad, event.action.dx, event.action.dy),
        branches: [],
        selectedBranch: null,
        error: null,
      };
    case "imagined":
      return {
        ...model,
        branches: event.body.branches.map(branchView),
        selectedBranch: null,
        error: null,
      };
    case "committed": {
      const chosen = model.branches.find((b) => b.branchId === event.branch);
      const action = chosen ? chosen.firstAction : { dx: 0, dy: 0 };
      return {
        ...model,
        frames: event.body.frames,
        stepCount: event.body.step,
        actionHistory: [...model.actionHistory, action],
        headingRad: headingAfter(model.headingRad, action.dx, action.dy),
        branches: [],
        selectedBranch: event.branch,
        treeDepth: model.treeDepth + 1,
        error: null,
      };
    }
    case "busy":
      return { ...model, busy: true };
    case "failed":
      // errors surface as a toast and never mutate session state
      return { ...model, busy: false, error: event.message };
    default:
      return model;
  }
}

export function replayTranscript(events: TranscriptEvent[]): DisplayModel {
  return events.reduce(reduce, initialModel());
}
