"""Low-level raster helpers: PNG codec, bilinear warps, compositing, drawing.

Rasters are uint8 arrays, shape (H, W, 3) for RGB and (H, W) for alpha masks,
row-major with y increasing downward.  Everything here is deterministic.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image


def decode_png(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    """Decode PNG bytes to (rgb, alpha); opaque alpha if the file has none."""
    img = Image.open(io.BytesIO(data))
    img = img.convert("RGBA")
    arr = np.asarray(img, dtype=np.uint8)
    return arr[:, :, :3].copy(), arr[:, :, 3].copy()


def encode_png(rgb: np.ndarray, alpha: np.ndarray | None = None) -> bytes:
    if alpha is not None:
        arr = np.dstack([rgb, alpha])
        img = Image.fromarray(arr, "RGBA")
    else:
        img = Image.fromarray(rgb, "RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG", compress_level=6)
    return buf.getvalue()


def to_gray(rgb: np.ndarray) -> np.ndarray:
    """Luma conversion to float64 in [0, 255]."""
    r = rgb[..., 0].astype(np.float64)
    g = rgb[..., 1].astype(np.float64)
    b = rgb[..., 2].astype(np.float64)
    return 0.299 * r + 0.587 * g + 0.114 * b


def crop_with_pad(raster: np.ndarray, x0: int, y0: int, w: int, h: int,
                  fill) -> np.ndarray:
    """Crop [y0:y0+h, x0:x0+w]; areas outside the raster take `fill`."""
    out_shape = (h, w) + raster.shape[2:]
    out = np.empty(out_shape, dtype=raster.dtype)
    out[...] = fill
    sy0, sy1 = max(y0, 0), min(y0 + h, raster.shape[0])
    sx0, sx1 = max(x0, 0), min(x0 + w, raster.shape[1])
    if sy0 < sy1 and sx0 < sx1:
        out[sy0 - y0:sy1 - y0, sx0 - x0:sx1 - x0] = raster[sy0:sy1, sx0:sx1]
    return out


def _bilinear(channel: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample a single float channel at fractional coords; outside -> 0."""
    h, w = channel.shape
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0

    def tap(ix, iy):
        valid = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
        vals = np.zeros(ix.shape, dtype=np.float64)
        vals[valid] = channel[iy[valid], ix[valid]]
        return vals

    v00 = tap(x0, y0)
    v10 = tap(x0 + 1, y0)
    v01 = tap(x0, y0 + 1)
    v11 = tap(x0 + 1, y0 + 1)
    top = v00 * (1 - fx) + v10 * fx
    bot = v01 * (1 - fx) + v11 * fx
    return top * (1 - fy) + bot * fy


def rotate_sprite(rgb: np.ndarray, alpha: np.ndarray, theta: float
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Rotate a sprite about its center by `theta` radians (alpha-premultiplied
    bilinear resampling).  Returns (rgb', alpha') on an expanded canvas that
    contains the whole rotated footprint; the center stays the canvas center.
    """
    if theta == 0.0:
        return rgb.copy(), alpha.copy()
    h, w = alpha.shape
    c, s = np.cos(theta), np.sin(theta)
    # Expanded bounding box of the rotated rectangle.  The expansion stays
    # even so the sampling grid keeps its sub-pixel phase: small angles then
    # resample near-identically instead of picking up a half-pixel blur.
    nw = int(np.ceil(abs(w * c) + abs(h * s))) + 2
    nh = int(np.ceil(abs(w * s) + abs(h * c))) + 2
    nw += (nw - w) % 2
    nh += (nh - h) % 2
    cx_dst, cy_dst = (nw - 1) / 2.0, (nh - 1) / 2.0
    cx_src, cy_src = (w - 1) / 2.0, (h - 1) / 2.0
    yy, xx = np.mgrid[0:nh, 0:nw]
    dx = xx - cx_dst
    dy = yy - cy_dst
    # Inverse mapping: rotate destination offsets by -theta into source coords.
    xs = c * dx + s * dy + cx_src
    ys = -s * dx + c * dy + cy_src
    a = alpha.astype(np.float64) / 255.0
    out_a = _bilinear(a, xs, ys)
    out_rgb = np.zeros((nh, nw, 3), dtype=np.float64)
    for ch in range(3):
        pre = rgb[:, :, ch].astype(np.float64) * a
        num = _bilinear(pre, xs, ys)
        with np.errstate(invalid="ignore", divide="ignore"):
            out_rgb[:, :, ch] = np.where(out_a > 1e-6, num / np.maximum(out_a, 1e-6), 0.0)
    return (np.clip(np.round(out_rgb), 0, 255).astype(np.uint8),
            np.clip(np.round(out_a * 255.0), 0, 255).astype(np.uint8))


def composite(canvas: np.ndarray, rgb: np.ndarray, alpha: np.ndarray,
              cx: float, cy: float) -> None:
    """Alpha-blend a sprite onto `canvas` in place, sprite center at (cx, cy).

    Sub-pixel centers are resolved by shifting the sprite with the same
    bilinear sampler used for rotation, keeping rendering fully deterministic.
    """
    h, w = alpha.shape
    x0f = cx - (w - 1) / 2.0
    y0f = cy - (h - 1) / 2.0
    x0 = int(np.floor(x0f))
    y0 = int(np.floor(y0f))
    fx = x0f - x0
    fy = y0f - y0
    if fx > 1e-9 or fy > 1e-9:
        # Resample on a one-pixel-larger grid shifted by the fraction.
        nh, nw = h + 1, w + 1
        yy, xx = np.mgrid[0:nh, 0:nw]
        xs = xx - fx
        ys = yy - fy
        a = alpha.astype(np.float64) / 255.0
        out_a = _bilinear(a, xs, ys)
        out_rgb = np.zeros((nh, nw, 3), dtype=np.float64)
        for ch in range(3):
            pre = rgb[:, :, ch].astype(np.float64) * a
            num = _bilinear(pre, xs, ys)
            out_rgb[:, :, ch] = np.where(out_a > 1e-6, num / np.maximum(out_a, 1e-6), 0.0)
        rgbf, af = out_rgb, out_a
        h, w = nh, nw
    else:
        rgbf = rgb.astype(np.float64)
        af = alpha.astype(np.float64) / 255.0

    cy0, cy1 = max(y0, 0), min(y0 + h, canvas.shape[0])
    cx0, cx1 = max(x0, 0), min(x0 + w, canvas.shape[1])
    if cy0 >= cy1 or cx0 >= cx1:
        return
    sy0, sx0 = cy0 - y0, cx0 - x0
    region = canvas[cy0:cy1, cx0:cx1].astype(np.float64)
    a = af[sy0:sy0 + cy1 - cy0, sx0:sx0 + cx1 - cx0][..., None]
    src = rgbf[sy0:sy0 + cy1 - cy0, sx0:sx0 + cx1 - cx0]
    blended = src * a + region * (1.0 - a)
    canvas[cy0:cy1, cx0:cx1] = np.clip(np.round(blended), 0, 255).astype(np.uint8)


def draw_line(canvas: np.ndarray, p0: tuple[float, float], p1: tuple[float, float],
              color, thickness: int = 3) -> None:
    """Rasterize a straight segment by stamping square pens along its length."""
    x0, y0 = p0
    x1, y1 = p1
    length = float(np.hypot(x1 - x0, y1 - y0))
    n = max(int(np.ceil(length)) * 2, 1)
    ts = np.linspace(0.0, 1.0, n + 1)
    xs = np.round(x0 + (x1 - x0) * ts).astype(np.int64)
    ys = np.round(y0 + (y1 - y0) * ts).astype(np.int64)
    r = thickness // 2
    hgt, wid = canvas.shape[:2]
    for x, y in zip(xs, ys):
        ya, yb = max(y - r, 0), min(y + r + 1, hgt)
        xa, xb = max(x - r, 0), min(x + r + 1, wid)
        if ya < yb and xa < xb:
            canvas[ya:yb, xa:xb] = color


def draw_rect_outline(canvas: np.ndarray, x: float, y: float, w: float, h: float,
                      color, thickness: int = 3) -> None:
    draw_line(canvas, (x, y), (x + w, y), color, thickness)
    draw_line(canvas, (x + w, y), (x + w, y + h), color, thickness)
    draw_line(canvas, (x + w, y + h), (x, y + h), color, thickness)
    draw_line(canvas, (x, y + h), (x, y), color, thickness)
