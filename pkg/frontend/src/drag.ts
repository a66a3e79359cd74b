/** Pointer interaction: dragging a sprite demonstrates (or intervenes).
 *
 * Pick is the grabbed object's centroid at mousedown; place is the drop
 * point plus whatever rotation the scroll wheel accumulated during the
 * drag.  Drops outside the canvas are rejected before any service call.
 */

import type { Phase, TutorOpBody, WorldSnapshot } from "./protocol.js";

export type { TutorOpBody };

export interface DragGesture {
  objectId: string;
  pickX: number;
  pickY: number;
  rotationDeg: number;
}

export interface DragOptions {
  grabRadius?: number;       // px around an object centroid that grabs it
  rotationStepDeg?: number;  // per wheel notch
}

export class DragController {
  private gesture: DragGesture | null = null;
  private grabRadius: number;
  private rotationStep: number;

  constructor(opts: DragOptions = {}) {
    this.grabRadius = opts.grabRadius ?? 40;
    this.rotationStep = opts.rotationStepDeg ?? 5;
  }

  /** True when dragging is allowed at all in the current phase. */
  canDrag(phase: Phase, interventionMode: boolean): boolean {
    if (phase === "idle" || phase === "demonstrating") return true;
    return phase === "reproducing" && interventionMode;
  }

  /** Begin a drag at canvas coordinates; null when nothing is grabbable. */
  begin(
    world: WorldSnapshot,
    phase: Phase,
    interventionMode: boolean,
    x: number,
    y: number,
  ): DragGesture | null {
    if (!this.canDrag(phase, interventionMode)) return null;
    let best: { id: string; cx: number; cy: number; d: number } | null = null;
    for (const obj of world.objects) {
      const [cx, cy] = obj.pose;
      const d = Math.hypot(cx - x, cy - y);
      if (d <= this.grabRadius && (best === null || d < best.d)) {
        best = { id: obj.id, cx, cy, d };
      }
    }
    if (!best) return null;
    this.gesture = {
      objectId: best.id,
      pickX: best.cx,
      pickY: best.cy,
      rotationDeg: 0,
    };
    return this.gesture;
  }

  wheel(deltaY: number): void {
    if (!this.gesture) return;
    this.gesture.rotationDeg += (deltaY > 0 ? 1 : -1) * this.rotationStep;
  }

  active(): DragGesture | null {
    return this.gesture;
  }

  cancel(): void {
    this.gesture = null;
  }

  /** Finish the drag; returns the tutor operation, or null for a rejected
   * drop (outside the canvas), which never reaches the service. */
  drop(world: WorldSnapshot, x: number, y: number): TutorOpBody | null {
    const g = this.gesture;
    this.gesture = null;
    if (!g) return null;
    if (x < 0 || y < 0 || x >= world.width || y >= world.height) {
      return null;
    }
    return {
      action: "pick-and-place",
      pick: [g.pickX, g.pickY],
      place: [x, y, g.rotationDeg],
    };
  }
}
