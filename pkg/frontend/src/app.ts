/** Browser entry point: wires the canvas, timeline and controls to the
 * session service.  All state flows service -> events -> store -> DOM.
 */

import { DragController } from "./drag.js";
import type { SessionEvent, WorldSnapshot } from "./protocol.js";
import { SessionClient } from "./protocol.js";
import { CanvasTarget, WorldPainter } from "./renderer.js";
import { applyEvent, emptyView, type UiSessionView } from "./store.js";

interface Controls {
  canvas: HTMLCanvasElement;
  scenario: HTMLSelectElement;
  newSession: HTMLButtonElement;
  finish: HTMLButtonElement;
  reshuffle: HTMLButtonElement;
  start: HTMLButtonElement;
  startReactive: HTMLButtonElement;
  step: HTMLButtonElement;
  intervention: HTMLInputElement;
  dominoMode: HTMLInputElement;
  phase: HTMLElement;
  timeline: HTMLElement;
  banner: HTMLElement;
}

function grab(id: string): any {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

export class Workbench {
  private client: SessionClient;
  private view: UiSessionView = emptyView("");
  private drag = new DragController();
  private painter: WorldPainter;
  private socket: { close(): void } | null = null;
  private robotTurnQueued = false;

  constructor(private ui: Controls, baseUrl: string) {
    this.client = new SessionClient(baseUrl);
    this.painter = new WorldPainter(new CanvasTarget(ui.canvas));
    this.bind();
  }

  private bind(): void {
    this.ui.newSession.onclick = () => void this.newSession();
    this.ui.finish.onclick = () => void this.call(() =>
      this.client.demoFinish(this.view.sessionId));
    this.ui.reshuffle.onclick = () => void this.call(() =>
      this.client.reshuffle(this.view.sessionId, Math.floor(Math.random() * 1e6)));
    this.ui.start.onclick = () => void this.call(() =>
      this.client.reproduceStart(this.view.sessionId, "sequential"));
    this.ui.startReactive.onclick = () => void this.call(() =>
      this.client.reproduceStart(this.view.sessionId, "reactive"));
    this.ui.step.onclick = () => void this.call(() =>
      this.client.reproduceStep(this.view.sessionId));

    this.ui.canvas.onpointerdown = (ev) => {
      if (!this.view.world) return;
      const { x, y } = this.canvasPoint(ev);
      const g = this.drag.begin(this.view.world, this.view.phase,
        this.ui.intervention.checked || this.ui.dominoMode.checked, x, y);
      this.ui.canvas.style.cursor = g ? "grabbing" :
        this.drag.canDrag(this.view.phase,
          this.ui.intervention.checked || this.ui.dominoMode.checked)
          ? "grab" : "not-allowed";
    };
    this.ui.canvas.onwheel = (ev) => {
      ev.preventDefault();
      this.drag.wheel(ev.deltaY);
    };
    this.ui.canvas.onpointerup = (ev) => {
      if (!this.view.world) return;
      const { x, y } = this.canvasPoint(ev);
      const op = this.drag.drop(this.view.world, x, y);
      this.ui.canvas.style.cursor = "default";
      if (!op) return;
      if (this.view.phase === "reproducing") {
        void this.call(async () => {
          await this.client.intervene(this.view.sessionId, op);
          if (this.ui.dominoMode.checked && this.view.mode === "sequential") {
            this.robotTurnQueued = true;
          }
        });
      } else {
        void this.call(() => this.client.demoOp(this.view.sessionId, op));
      }
    };
  }

  private canvasPoint(ev: PointerEvent): { x: number; y: number } {
    const rect = this.ui.canvas.getBoundingClientRect();
    const sx = this.ui.canvas.width / rect.width;
    const sy = this.ui.canvas.height / rect.height;
    return { x: (ev.clientX - rect.left) * sx, y: (ev.clientY - rect.top) * sy };
  }

  private async call(fn: () => Promise<unknown>): Promise<void> {
    try {
      await fn();
    } catch (err) {
      this.ui.banner.textContent = String(err);
    }
  }

  async newSession(): Promise<void> {
    this.socket?.close();
    const created = await this.client.createSession(this.ui.scenario.value);
    this.view = emptyView(created.id);
    this.connect(0);
  }

  /** (Re)connect the event stream, replaying everything after lastSeq. */
  private connect(since: number): void {
    this.socket = this.client.events(this.view.sessionId, since, (ev) =>
      void this.onEvent(ev));
    const sock = this.socket as { onclose?: (() => void) | null };
    sock.onclose = () => {
      setTimeout(() => this.connect(this.view.lastSeq + 1), 500);
    };
  }

  private async onEvent(event: SessionEvent): Promise<void> {
    this.view = applyEvent(this.view, event);
    await this.render();
    if (this.robotTurnQueued && event.type === "intervened") {
      // domino mode: the engine answers automatically after each tutor turn
      this.robotTurnQueued = false;
      await this.call(() => this.client.reproduceStep(this.view.sessionId));
    }
  }

  private async render(): Promise<void> {
    this.ui.phase.textContent =
      `${this.view.scenario} — ${this.view.phase}` +
      (this.view.remaining !== null ? ` (${this.view.remaining} left)` : "");
    if (this.view.phase === "reproducing" && this.view.remaining === 0) {
      this.ui.banner.textContent = "task complete";
    } else if (this.view.banners.length) {
      this.ui.banner.textContent = this.view.banners[this.view.banners.length - 1];
    }
    this.ui.timeline.innerHTML = "";
    for (const entry of this.view.timeline.slice(-12)) {
      const li = document.createElement("li");
      li.textContent = entry.label;
      this.ui.timeline.appendChild(li);
    }
    const world = this.view.world as WorldSnapshot | null;
    if (world) {
      await this.painter.show(world);
    }
  }
}

export function mount(baseUrl = location.origin): Workbench {
  return new Workbench(
    {
      canvas: grab("world"),
      scenario: grab("scenario"),
      newSession: grab("new-session"),
      finish: grab("finish"),
      reshuffle: grab("reshuffle"),
      start: grab("start"),
      startReactive: grab("start-reactive"),
      step: grab("step"),
      intervention: grab("intervention"),
      dominoMode: grab("domino-mode"),
      phase: grab("phase"),
      timeline: grab("timeline"),
      banner: grab("banner"),
    },
    baseUrl,
  );
}
