import { describe, expect, it } from "vitest";

import type { SessionEvent } from "../src/protocol.js";
import { applyAll, applyEvent, emptyView } from "../src/store.js";

function ev(seq: number, type: SessionEvent["type"], payload: object = {}): SessionEvent {
  return { seq, type, payload: payload as Record<string, unknown> };
}

describe("session view reducer", () => {
  it("applies events in sequence order and tracks phase", () => {
    let view = emptyView("s1");
    view = applyAll(view, [
      ev(0, "session_created", { scenario: "alphabet" }),
      ev(1, "demo_op", { op_index: 1, action: "pick-and-place", eta: 1 }),
      ev(2, "demo_op", { op_index: 2, action: "pick-and-place", eta: 2 }),
      ev(3, "demo_finished", { eta: 2 }),
      ev(4, "reshuffled", { seed: 9 }),
      ev(5, "reproduce_started", { mode: "sequential" }),
    ]);
    expect(view.phase).toBe("reproducing");
    expect(view.eta).toBe(2);
    expect(view.timeline.map((t) => t.kind)).toEqual([
      "tutor_op", "tutor_op", "note", "note",
    ]);
    expect(view.lastSeq).toBe(5);
  });

  it("drops replayed duplicates after a reconnect", () => {
    let view = emptyView("s1");
    const first = ev(0, "session_created", { scenario: "alphabet" });
    view = applyEvent(view, first);
    const again = applyEvent(view, first);
    expect(again).toBe(view);
  });

  it("rejects gaps in the sequence", () => {
    const view = applyEvent(emptyView("s1"),
      ev(0, "session_created", { scenario: "a" }));
    expect(() => applyEvent(view, ev(2, "demo_op", {}))).toThrow(/gap/);
  });

  it("keeps only service-provided world state", () => {
    const world = {
      width: 10, height: 10, render_hash: "h", render_png_b64: "",
      objects: [], landmarks: [],
    };
    let view = applyEvent(emptyView("s"),
      ev(0, "session_created", { scenario: "a", world }));
    expect(view.world?.render_hash).toBe("h");
    view = applyEvent(view, ev(1, "demo_op", { op_index: 1, eta: 1 }));
    expect(view.world?.render_hash).toBe("h"); // unchanged without payload
  });

  it("surfaces step failures as banners", () => {
    let view = applyEvent(emptyView("s"),
      ev(0, "session_created", { scenario: "a" }));
    view = applyEvent(view, ev(1, "step_failed", { detail: "no match" }));
    expect(view.banners).toEqual(["no match"]);
  });
});
