/** DOM wiring: action panel, what-if branches, tree view.
 *
 * One in-flight request at a time, mirroring the server's 409 contract; a
 * busy 409 disables the controls instead of queueing.
 */

import { ApiError, SessionClient, actionFromControls } from "./api.js";
import {
  DisplayModel,
  TranscriptEvent,
  initialModel,
  reduce,
} from "./model.js";

const DT_S = 0.5;

export class ExplorerApp {
  model: DisplayModel = initialModel();
  transcript: TranscriptEvent[] = [];
  private inFlight = false;

  constructor(
    private readonly client: SessionClient,
    private readonly root: HTMLElement,
  ) {}

  private apply(event: TranscriptEvent): void {
    this.transcript.push(event);
    this.model = reduce(this.model, event);
    this.render();
  }

  private async guarded<T>(op: () => Promise<T>,
                           onDone: (body: T) => TranscriptEvent): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    this.render();
    try {
      const body = await op();
      this.apply(onDone(body));
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.apply({ kind: "busy" });
      } else {
        this.apply({ kind: "failed", message: String(err) });
      }
    } finally {
      this.inFlight = false;
      this.render();
    }
  }

  async createSession(seed: number): Promise<void> {
    await this.guarded(
      () => this.client.create(seed),
      (body) => ({ kind: "created", seed, body }),
    );
  }

  async stepControls(speedMps: number, steeringDeg: number): Promise<void> {
    const { dx, dy } = actionFromControls(
      speedMps, steeringDeg, this.model.headingRad, DT_S);
    await this.stepAction(dx, dy);
  }

  async stepAction(dx: number, dy: number): Promise<void> {
    await this.guarded(
      () => this.client.step(dx, dy),
      (body) => ({ kind: "stepped", action: { dx, dy }, body }),
    );
  }

  async imagine(commands: string[]): Promise<void> {
    await this.guarded(
      () => this.client.imagine(commands),
      (body) => ({ kind: "imagined", commands, body }),
    );
  }

  async commit(branchId: string): Promise<void> {
    await this.guarded(
      () => this.client.commit(branchId),
      (body) => ({ kind: "committed", branch: branchId, body }),
    );
  }

  render(): void {
    const m = this.model;
    const bar = (value: number) =>
      `<span class="bar"><span class="fill" style="width:${Math.round(value * 100)}%"></span></span>` +
      `<span class="val">${value.toFixed(3)}</span>`;
    const views = m.frames
      .map((b64) => `<img class="view" src="data:image/png;base64,${b64}">`)
      .join("");
    const branches = m.branches
      .map((b) => {
        const strip = b.filmstrip
          .map((frame) => `<img class="thumb" src="data:image/png;base64,${frame[0]}">`)
          .join("");
        const badge = b.collision ? `<span class="badge collision">collision</span>` : "";
        const warn = b.productConsistent ? "" :
          `<span class="badge warn">reward product mismatch</span>`;
        return `<div class="branch" data-branch="${b.branchId}">
          <h4>${b.command} ${badge} ${warn}</h4>
          <div class="strip">${strip}</div>
          <div class="rewards">
            <div>curb ${bar(b.reward.r_curb)}</div>
            <div>center ${bar(b.reward.r_center)}</div>
            <div>object ${bar(b.reward.r_object)}</div>
            <div>total ${bar(b.reward.r_total)}</div>
          </div>
          <button class="commit" data-branch="${b.branchId}"
                  ${this.inFlight ? "disabled" : ""}>commit</button>
        </div>`;
      })
      .join("");
    this.root.innerHTML = `
      <section class="strip-row">${views}</section>
      <section class="status">
        step ${m.stepCount} | depth ${m.treeDepth} |
        actions ${m.actionHistory.length}
        ${m.busy ? '<span class="badge warn">busy</span>' : ""}
        ${m.error ? `<div class="toast">${m.error}</div>` : ""}
      </section>
      <section class="branches">${branches}</section>`;
    this.root.querySelectorAll<HTMLButtonElement>("button.commit").forEach((btn) => {
      btn.onclick = () => void this.commit(btn.dataset.branch ?? "");
    });
  }
}

export function mount(root: HTMLElement, baseUrl: string): ExplorerApp {
  return new ExplorerApp(new SessionClient(baseUrl), root);
}
