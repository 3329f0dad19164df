/** Typed client for the driveworld session service (JSON + base64 PNG). */

export interface RewardBreakdown {
  r_curb: number;
  r_center: number;
  r_map: number;
  r_object: number;
  r_total: number;
  low_confidence: boolean;
}

export interface PerceivedOverlay {
  agents: { category: string; x: number; y: number; confidence: number }[];
  centerline_points: number[][];
  curb_points: number[][];
}

export interface CreateResponse {
  id: string;
  frames: string[];
}

export interface StepResponse {
  frames: string[];
  perceived: PerceivedOverlay;
  reward: RewardBreakdown;
  step: number;
}

export interface Branch {
  branch: string;
  candidate: { command: string; waypoints: number[][] };
  frames: string[][]; // [frame][view] base64 PNG
  reward_breakdown: RewardBreakdown;
}

export interface ImagineResponse {
  branches: Branch[];
}

export interface CommitResponse {
  frames: string[];
  step: number;
}

export interface TreeResponse {
  depth: number;
  committed: number[][];
  node: unknown;
}

export class ApiError extends Error {
  constructor(public status: number, public code: string, message: string) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  const body = await resp.json();
  if (!resp.ok) {
    throw new ApiError(resp.status, body.code ?? "unknown", body.error ?? "request failed");
  }
  return body as T;
}

export class SessionClient {
  constructor(
    public readonly baseUrl: string,
    public sessionId: string | null = null,
  ) {}

  async create(seed: number, checkpoint = "oracle"): Promise<CreateResponse> {
    const body = await request<CreateResponse>(`${this.baseUrl}/sessions`, {
      method: "POST",
      body: JSON.stringify({ seed, checkpoint }),
    });
    this.sessionId = body.id;
    return body;
  }

  private idOrThrow(): string {
    if (!this.sessionId) throw new Error("no live session");
    return this.sessionId;
  }

  async step(dx: number, dy: number): Promise<StepResponse> {
    return request<StepResponse>(
      `${this.baseUrl}/sessions/${this.idOrThrow()}/step`,
      { method: "POST", body: JSON.stringify({ action: { dx, dy } }) },
    );
  }

  async imagine(commands: string[]): Promise<ImagineResponse> {
    return request<ImagineResponse>(
      `${this.baseUrl}/sessions/${this.idOrThrow()}/imagine`,
      { method: "POST", body: JSON.stringify({ commands }) },
    );
  }

  async commit(branch: string): Promise<CommitResponse> {
    return request<CommitResponse>(
      `${this.baseUrl}/sessions/${this.idOrThrow()}/commit`,
      { method: "POST", body: JSON.stringify({ branch }) },
    );
  }

  async tree(): Promise<TreeResponse> {
    return request<TreeResponse>(
      `${this.baseUrl}/sessions/${this.idOrThrow()}/tree`,
      { method: "GET" },
    );
  }
}

/** Steering/speed controls to the ego displacement the service expects. */
export function actionFromControls(
  speedMps: number,
  steeringDeg: number,
  headingRad: number,
  dtS: number,
): { dx: number; dy: number; heading: number } {
  const heading = headingRad + (steeringDeg * Math.PI) / 180;
  return {
    dx: speedMps * dtS * Math.cos(heading),
    dy: speedMps * dtS * Math.sin(heading),
    heading,
  };
}
