/** Wire types and client for the vsl session service.
 *
 * The workbench holds no simulation authority: every state change goes
 * through these endpoints and comes back as an ordered event stream.
 */

export type Phase = "idle" | "demonstrating" | "learned" | "reproducing";

export interface ObjectView {
  id: string;
  pose: [number, number, number]; // x, y, theta in degrees
}

export interface LandmarkView {
  id: string;
  kind: string;
  dynamic: boolean;
}

export interface WorldSnapshot {
  width: number;
  height: number;
  render_hash: string;
  render_png_b64: string;
  objects: ObjectView[];
  landmarks: LandmarkView[];
}

export interface StepResult {
  op_index: number;
  action: string;
  object: string | null;
  pick: [number, number];
  place: [number, number] | null;
  score_pre: number;
  score_post: number;
}

export interface SessionEvent {
  type:
    | "session_created"
    | "demo_op"
    | "demo_finished"
    | "reshuffled"
    | "reproduce_started"
    | "robot_step"
    | "intervened"
    | "step_failed";
  payload: Record<string, unknown>;
  seq: number;
}

export interface TutorOpBody {
  action?: string;
  pick: [number, number];
  place?: [number, number, number];
}

export class ServiceError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

/** Minimal WebSocket surface so node tests can inject the `ws` package. */
export interface SocketLike {
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

async function jsonOrThrow(res: Response): Promise<any> {
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = await res.json();
      detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body);
    } catch {
      /* keep the status text */
    }
    throw new ServiceError(res.status, detail);
  }
  return res.json();
}

export class SessionClient {
  constructor(
    private baseUrl: string,
    private socketFactory?: SocketFactory,
  ) {}

  async createSession(scenario: string): Promise<{ id: string; scenario: string; phase: Phase }> {
    const res = await fetch(`${this.baseUrl}/session`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ scenario }),
    });
    return jsonOrThrow(res);
  }

  async world(id: string): Promise<WorldSnapshot & { phase: Phase }> {
    return jsonOrThrow(await fetch(`${this.baseUrl}/session/${id}/world`));
  }

  private async post(path: string, body?: unknown): Promise<any> {
    const res = await fetch(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: body === undefined ? "{}" : JSON.stringify(body),
    });
    return jsonOrThrow(res);
  }

  demoOp(id: string, op: TutorOpBody) {
    return this.post(`/session/${id}/demo/op`, op);
  }

  demoFinish(id: string): Promise<{ eta: number; policy: string[]; phase: Phase }> {
    return this.post(`/session/${id}/demo/finish`);
  }

  reshuffle(id: string, seed: number) {
    return this.post(`/session/${id}/reshuffle`, { seed });
  }

  reproduceStart(id: string, mode: "sequential" | "reactive") {
    return this.post(`/session/${id}/reproduce/start`, { mode });
  }

  reproduceStep(id: string): Promise<{ done: boolean; remaining: number; step?: StepResult }> {
    return this.post(`/session/${id}/reproduce/step`);
  }

  intervene(id: string, op: TutorOpBody): Promise<{ response?: StepResult }> {
    return this.post(`/session/${id}/intervene`, op);
  }

  async pddl(id: string): Promise<{ domain: string; problem: string }> {
    return jsonOrThrow(await fetch(`${this.baseUrl}/session/${id}/pddl`));
  }

  /** Subscribe to the ordered event stream, replaying from `since`. */
  events(id: string, since: number, onEvent: (ev: SessionEvent) => void): SocketLike {
    const wsUrl =
      this.baseUrl.replace(/^http/, "ws") + `/session/${id}/events?since=${since}`;
    const factory: SocketFactory =
      this.socketFactory ?? ((url) => new WebSocket(url) as unknown as SocketLike);
    const socket = factory(wsUrl);
    socket.onmessage = (ev) => {
      onEvent(JSON.parse(String(ev.data)) as SessionEvent);
    };
    return socket;
  }
}
