/** Canvas rendering seam.
 *
 * The workbench never rasterizes the world itself: it paints the PNG the
 * service published with each event.  The surface is abstract so tests can
 * substitute a recording target and verify the painted bytes hash-match the
 * service's render hash.
 */

import type { WorldSnapshot } from "./protocol.js";

export interface RenderTarget {
  /** Present the world's PNG bytes at the given canvas size. */
  paint(pngBytes: Uint8Array, width: number, height: number): Promise<void> | void;
  /** Identity of the most recently painted bitmap (hex sha-256). */
  lastDigest(): Promise<string | null> | string | null;
}

export function decodeBase64(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const raw = atob(b64);
    const out = new Uint8Array(raw.length);
    for (let i = 0; i < raw.length; i++) out[i] = raw.charCodeAt(i);
    return out;
  }
  return new Uint8Array(Buffer.from(b64, "base64"));
}

export class WorldPainter {
  constructor(private target: RenderTarget) {}

  async show(world: WorldSnapshot): Promise<void> {
    await this.target.paint(
      decodeBase64(world.render_png_b64),
      world.width,
      world.height,
    );
  }

  /** True when the canvas content is byte-identical to the service render. */
  async converged(world: WorldSnapshot): Promise<boolean> {
    const digest = await this.target.lastDigest();
    return digest !== null && digest === world.render_hash;
  }
}

/** Browser target: decodes the PNG into an HTMLCanvasElement. */
export class CanvasTarget implements RenderTarget {
  private digest: string | null = null;

  constructor(private canvas: HTMLCanvasElement) {}

  async paint(pngBytes: Uint8Array, width: number, height: number): Promise<void> {
    this.canvas.width = width;
    this.canvas.height = height;
    const blob = new Blob([pngBytes.slice().buffer as ArrayBuffer], { type: "image/png" });
    const bitmap = await createImageBitmap(blob);
    const ctx = this.canvas.getContext("2d");
    if (!ctx) throw new Error("2d context unavailable");
    ctx.drawImage(bitmap, 0, 0);
    const hashBuf = await crypto.subtle.digest("SHA-256", pngBytes.slice().buffer as ArrayBuffer);
    this.digest = [...new Uint8Array(hashBuf)]
      .map((b) => b.toString(16).padStart(2, "0"))
      .join("");
  }

  lastDigest(): string | null {
    return this.digest;
  }
}
