/** Session view state, derived solely from service events.
 *
 * Events apply strictly in sequence order; a reconnect replays the log from
 * the last applied sequence number, and already-seen events are dropped.
 */

import type { Phase, SessionEvent, StepResult, WorldSnapshot } from "./protocol.js";

export interface TimelineEntry {
  seq: number;
  kind: "tutor_op" | "robot_step" | "intervention" | "note";
  label: string;
  step?: StepResult;
}

export interface UiSessionView {
  sessionId: string;
  scenario: string;
  phase: Phase;
  world: WorldSnapshot | null;
  eta: number;
  remaining: number | null;
  mode: "sequential" | "reactive" | null;
  timeline: TimelineEntry[];
  banners: string[];
  lastSeq: number;
}

export function emptyView(sessionId: string): UiSessionView {
  return {
    sessionId,
    scenario: "",
    phase: "idle",
    world: null,
    eta: 0,
    remaining: null,
    mode: null,
    timeline: [],
    banners: [],
    lastSeq: -1,
  };
}

function describeStep(step: StepResult): string {
  const place = step.place ? ` -> (${step.place[0]}, ${step.place[1]})` : "";
  return `op ${step.op_index}: ${step.action} ${step.object ?? "?"}${place}`;
}

/** Pure reducer: returns the next view, or the same view for stale events. */
export function applyEvent(view: UiSessionView, event: SessionEvent): UiSessionView {
  if (event.seq <= view.lastSeq) {
    return view; // replayed duplicate after a reconnect
  }
  if (event.seq !== view.lastSeq + 1) {
    throw new Error(
      `event gap: expected seq ${view.lastSeq + 1}, got ${event.seq}`,
    );
  }
  const next: UiSessionView = {
    ...view,
    timeline: [...view.timeline],
    banners: [...view.banners],
    lastSeq: event.seq,
  };
  const payload = event.payload as any;
  if (payload && payload.world) {
    next.world = payload.world as WorldSnapshot;
  }
  switch (event.type) {
    case "session_created":
      next.scenario = String(payload.scenario ?? "");
      next.phase = "idle";
      break;
    case "demo_op":
      next.phase = "demonstrating";
      next.eta = Number(payload.eta ?? next.eta);
      next.timeline.push({
        seq: event.seq,
        kind: "tutor_op",
        label: `demo op ${payload.op_index}: ${payload.action}`,
      });
      break;
    case "demo_finished":
      next.phase = "learned";
      next.eta = Number(payload.eta ?? next.eta);
      next.timeline.push({
        seq: event.seq,
        kind: "note",
        label: `learned ${next.eta} operations`,
      });
      break;
    case "reshuffled":
      next.timeline.push({
        seq: event.seq,
        kind: "note",
        label: `reshuffled with seed ${payload.seed}`,
      });
      break;
    case "reproduce_started":
      next.phase = "reproducing";
      next.mode = payload.mode === "reactive" ? "reactive" : "sequential";
      next.remaining = next.eta;
      break;
    case "robot_step": {
      const step = payload as unknown as StepResult & { remaining?: number };
      next.remaining = Number(payload.remaining ?? next.remaining ?? 0);
      next.timeline.push({
        seq: event.seq,
        kind: "robot_step",
        label: describeStep(step),
        step,
      });
      break;
    }
    case "intervened": {
      next.timeline.push({
        seq: event.seq,
        kind: "intervention",
        label: "tutor intervened",
      });
      if (payload.response) {
        const step = payload.response as StepResult;
        next.timeline.push({
          seq: event.seq,
          kind: "robot_step",
          label: describeStep(step),
          step,
        });
      }
      break;
    }
    case "step_failed":
      next.banners.push(String(payload.detail ?? "step failed"));
      break;
  }
  return next;
}

export function applyAll(view: UiSessionView, events: SessionEvent[]): UiSessionView {
  return events.reduce(applyEvent, view);
}
