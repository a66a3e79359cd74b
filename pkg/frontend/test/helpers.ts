/** Test harness: spawn the real session service and talk to it. */

import { spawn, type ChildProcess } from "node:child_process";
import { createHash } from "node:crypto";
import { createServer } from "node:net";
import WebSocket from "ws";

import type { SessionEvent, SocketLike } from "../src/protocol.js";
import { SessionClient } from "../src/protocol.js";
import type { RenderTarget } from "../src/renderer.js";

export async function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer();
    srv.listen(0, "127.0.0.1", () => {
      const address = srv.address();
      if (address && typeof address === "object") {
        const port = address.port;
        srv.close(() => resolve(port));
      } else {
        reject(new Error("no port"));
      }
    });
  });
}

export interface Service {
  baseUrl: string;
  client: SessionClient;
  stop(): void;
}

export const nodeSocketFactory = (url: string): SocketLike =>
  new WebSocket(url) as unknown as SocketLike;

export async function startService(): Promise<Service> {
  const port = await freePort();
  const proc: ChildProcess = spawn(
    "python3",
    ["-m", "vsl.interface.cli", "serve", "--port", String(port)],
    { stdio: ["ignore", "pipe", "pipe"], cwd: "/root/pkg" },
  );
  let stderr = "";
  proc.stderr?.on("data", (chunk) => (stderr += String(chunk)));
  const baseUrl = `http://127.0.0.1:${port}`;
  const deadline = Date.now() + 30_000;
  for (;;) {
    try {
      const res = await fetch(`${baseUrl}/session/probe/world`);
      if (res.status === 404) break; // service answers: it is up
    } catch {
      /* not yet */
    }
    if (Date.now() > deadline) {
      proc.kill();
      throw new Error(`service did not come up: ${stderr}`);
    }
    await new Promise((r) => setTimeout(r, 150));
  }
  return {
    baseUrl,
    client: new SessionClient(baseUrl, nodeSocketFactory),
    stop: () => {
      proc.kill("SIGTERM");
    },
  };
}

/** Render target that records painted bytes instead of drawing them. */
export class RecordingTarget implements RenderTarget {
  public painted = 0;
  private digest: string | null = null;

  paint(pngBytes: Uint8Array, _w: number, _h: number): void {
    this.painted += 1;
    this.digest = createHash("sha256").update(pngBytes).digest("hex");
  }

  lastDigest(): string | null {
    return this.digest;
  }
}

/** Collects the event stream with an ordered-arrival guarantee. */
export class EventCollector {
  public events: SessionEvent[] = [];
  private socket: SocketLike;
  private waiters: Array<() => void> = [];

  constructor(client: SessionClient, sessionId: string, since = 0) {
    this.socket = client.events(sessionId, since, (ev) => {
      this.events.push(ev);
      for (const w of this.waiters.splice(0)) w();
    });
  }

  async waitFor(pred: (ev: SessionEvent) => boolean, timeoutMs = 30_000): Promise<SessionEvent> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const hit = this.events.find(pred);
      if (hit) return hit;
      if (Date.now() > deadline) {
        throw new Error(
          `timed out; saw: ${this.events.map((e) => e.type).join(",")}`,
        );
      }
      await new Promise<void>((resolve) => {
        this.waiters.push(resolve);
        setTimeout(resolve, 200);
      });
    }
  }

  close(): void {
    this.socket.close();
  }
}
