"""Observation capture, change detection, feature matching and transforms.

The matcher is contract-level: sparse corner features with rotation-normalized
intensity descriptors, consensus transform estimation, and a masked normalized
cross-correlation fallback/verifier.  All entry points are pure and seeded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.signal import fftconvolve

from ._raster import crop_with_pad, rotate_sprite, to_gray
from .errors import (Ambiguous, DegenerateTransform, FrameOutOfBounds,
                     InsufficientMatches, MultiObjectChange, NoChangeDetected,
                     NoConsensus, NoMatch, PatchTooSmall, ReflectionDetected)
from .world import Pose2

DIFF_THRESHOLD = 30          # 0..255 per-pixel difference
MIN_BLOB_AREA = 64           # px^2
AMBIGUITY_MARGIN = 0.05      # score units
NO_MATCH_FLOOR = 0.5
CANDIDATE_FLOOR = 0.3
ADAPTIVE_GROWTH = 1.25


# --- observation capture -----------------------------------------------------

@dataclass(frozen=True)
class Frame:
    center: tuple[float, float]
    width: int
    height: int

    def top_left(self) -> tuple[int, int]:
        return (int(round(self.center[0] - self.width / 2.0)),
                int(round(self.center[1] - self.height / 2.0)))


@dataclass(frozen=True)
class Observation:
    patch: np.ndarray
    frame: Frame
    phase: str                  # 'pre' | 'post'
    op_index: int               # 1-based


def capture_observation(raster: np.ndarray, frame: Frame, phase: str,
                        op_index: int, fill=(205, 205, 205)) -> Observation:
    """Crop `frame` out of the raster; parts outside are padded with `fill`."""
    H, W = raster.shape[:2]
    if not (1 <= frame.width <= W and 1 <= frame.height <= H):
        raise FrameOutOfBounds(
            f"frame {frame.width}x{frame.height} exceeds world {W}x{H}")
    x0, y0 = frame.top_left()
    if x0 + frame.width <= 0 or x0 >= W or y0 + frame.height <= 0 or y0 >= H:
        raise FrameOutOfBounds("frame does not intersect the world")
    patch = crop_with_pad(raster, x0, y0, frame.width, frame.height, fill)
    return Observation(patch=patch, frame=frame, phase=phase, op_index=op_index)


# --- change detection --------------------------------------------------------

@dataclass(frozen=True)
class DiffResult:
    source_pose: Pose2
    dest_pose: Pose2
    object_patch: np.ndarray            # pre-image crop at the source bbox
    object_mask: np.ndarray             # bool, same dims as object_patch
    source_mask: np.ndarray             # bool, frame-sized
    dest_mask: np.ndarray               # bool, frame-sized

    def __iter__(self):
        return iter((self.source_pose, self.dest_pose, self.object_patch))


def _aligned_blob_ncc(gray_a: np.ndarray, mask_a: np.ndarray,
                      gray_b: np.ndarray, mask_b: np.ndarray) -> float:
    """Masked correlation of two blobs after centroid alignment."""
    def crop(gray, mask):
        ys, xs = np.nonzero(mask)
        y0, y1 = int(ys.min()), int(ys.max()) + 1
        x0, x1 = int(xs.min()), int(xs.max()) + 1
        cy, cx = float(ys.mean()) - y0, float(xs.mean()) - x0
        return gray[y0:y1, x0:x1], mask[y0:y1, x0:x1], (cx, cy)

    ga, ma, (cax, cay) = crop(gray_a, mask_a)
    gb, mb, (cbx, cby) = crop(gray_b, mask_b)
    h = max(ga.shape[0], gb.shape[0]) + 2
    w = max(ga.shape[1], gb.shape[1]) + 2

    def paste(g, m, cx, cy):
        canvas = np.zeros((h, w))
        hit = np.zeros((h, w), dtype=bool)
        y0 = int(round(h / 2.0 - cy))
        x0 = int(round(w / 2.0 - cx))
        y0 = max(0, min(y0, h - g.shape[0]))
        x0 = max(0, min(x0, w - g.shape[1]))
        canvas[y0:y0 + g.shape[0], x0:x0 + g.shape[1]] = g
        hit[y0:y0 + m.shape[0], x0:x0 + m.shape[1]] = m
        return canvas, hit

    ca, ha = paste(ga, ma, cax, cay)
    cb, hb = paste(gb, mb, cbx, cby)
    both = ha & hb
    if both.sum() < 8:
        return 0.0
    va = ca[both] - ca[both].mean()
    vb = cb[both] - cb[both].mean()
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na < 1e-9 or nb < 1e-9:
        return 0.0
    return float(np.dot(va, vb) / (na * nb))


def diff_object(pre: Observation, post: Observation,
                threshold: int = DIFF_THRESHOLD,
                min_area: int = MIN_BLOB_AREA) -> DiffResult:
    """Locate the single moved object between two same-frame observations."""
    if pre.frame != post.frame:
        raise ValueError("observations use different frames")
    d = np.abs(pre.patch.astype(np.int16) - post.patch.astype(np.int16))
    changed = d.max(axis=2) > threshold
    labels, count = ndimage.label(changed)
    comps = []
    for idx in range(1, count + 1):
        mask = labels == idx
        area = int(mask.sum())
        if area >= min_area:
            comps.append(mask)
    if not comps:
        raise NoChangeDetected("no stable difference blob")
    if len(comps) > 2:
        raise MultiObjectChange(f"{len(comps)} stable blobs; expected at most 2")

    gray_pre = to_gray(pre.patch)
    gray_post = to_gray(post.patch)
    if len(comps) == 1:
        src_mask = dst_mask = comps[0]
    else:
        # The moved object is the content common to the source blob's pre
        # image and the destination blob's post image, so the orientation
        # whose cross-blob correlation is higher identifies the source.
        a, b = comps
        forward = _aligned_blob_ncc(gray_pre, a, gray_post, b)
        backward = _aligned_blob_ncc(gray_pre, b, gray_post, a)
        src_mask, dst_mask = (a, b) if forward >= backward else (b, a)

    x0, y0 = pre.frame.top_left()
    sy, sx = np.nonzero(src_mask)
    dy, dx = np.nonzero(dst_mask)
    source = Pose2(x0 + float(sx.mean()), y0 + float(sy.mean()))
    dest = Pose2(x0 + float(dx.mean()), y0 + float(dy.mean()))
    bx0, bx1 = int(sx.min()), int(sx.max()) + 1
    by0, by1 = int(sy.min()), int(sy.max()) + 1
    patch = pre.patch[by0:by1, bx0:bx1].copy()
    mask = src_mask[by0:by1, bx0:bx1].copy()
    return DiffResult(source_pose=source, dest_pose=dest, object_patch=patch,
                      object_mask=mask, source_mask=src_mask, dest_mask=dst_mask)


# --- sparse features ---------------------------------------------------------

@dataclass(frozen=True)
class FeatureSet:
    keypoints: np.ndarray               # (N, 2) float64, columns x, y
    descriptors: np.ndarray             # (N, D) float64, L2-normalized rows

    def __len__(self):
        return self.keypoints.shape[0]


_DESC_GRID = 16          # sampled window is 16x16 around the keypoint
_DESC_POOL = 2           # 2x2 average pooling -> 8x8 = 64-dim descriptor
_BORDER = 10


def _corner_response(gray: np.ndarray) -> np.ndarray:
    gx = ndimage.sobel(gray, axis=1) / 8.0
    gy = ndimage.sobel(gray, axis=0) / 8.0
    gxx = ndimage.gaussian_filter(gx * gx, 1.5)
    gyy = ndimage.gaussian_filter(gy * gy, 1.5)
    gxy = ndimage.gaussian_filter(gx * gy, 1.5)
    tr = gxx + gyy
    det_term = np.sqrt((gxx - gyy) ** 2 + 4.0 * gxy ** 2)
    return (tr - det_term) / 2.0   # smaller structure-tensor eigenvalue


def _orientation_peaks(gx: np.ndarray, gy: np.ndarray, x: float, y: float,
                       radius: int = 7, rel: float = 0.8,
                       max_peaks: int = 3) -> list[float]:
    """Dominant gradient orientations; several when the histogram is
    multi-modal (e.g. right-angle corners), as such keypoints need one
    descriptor per mode to stay matchable under rotation."""
    h, w = gx.shape
    ix, iy = int(round(x)), int(round(y))
    x0, x1 = max(ix - radius, 0), min(ix + radius + 1, w)
    y0, y1 = max(iy - radius, 0), min(iy + radius + 1, h)
    wx = gx[y0:y1, x0:x1]
    wy = gy[y0:y1, x0:x1]
    mag = np.hypot(wx, wy)
    ang = np.arctan2(wy, wx)
    bins = 36
    idx = np.floor((ang + math.pi) / (2 * math.pi) * bins).astype(int) % bins
    hist = np.bincount(idx.ravel(), weights=mag.ravel(), minlength=bins)
    # Light circular smoothing stabilizes peaks under resampling noise.
    hist = np.convolve(np.concatenate([hist[-1:], hist, hist[:1]]),
                       [0.25, 0.5, 0.25], mode="valid")
    top = hist.max()
    if top <= 0:
        return [0.0]
    out = []
    for k in range(bins):
        lo, mid, hi = hist[(k - 1) % bins], hist[k], hist[(k + 1) % bins]
        if mid < rel * top or mid < lo or mid <= hi:
            continue
        denom = lo - 2 * mid + hi
        off = 0.0 if abs(denom) < 1e-12 else 0.5 * (lo - hi) / denom
        out.append((mid, -math.pi + (k + 0.5 + off) * 2 * math.pi / bins))
    out.sort(reverse=True)
    return [theta for _v, theta in out[:max_peaks]] or [0.0]


def _sample_rotated(gray: np.ndarray, x: float, y: float, theta: float,
                    grid: int) -> np.ndarray:
    half = (grid - 1) / 2.0
    js, is_ = np.mgrid[0:grid, 0:grid]
    u = is_ - half
    v = js - half
    c, s = math.cos(theta), math.sin(theta)
    xs = x + c * u - s * v
    ys = y + s * u + c * v
    from ._raster import _bilinear
    return _bilinear(gray, xs, ys)


def extract_features(patch: np.ndarray, max_keypoints: int = 200,
                     quality: float = 0.05, abs_floor: float = 20.0,
                     mask: np.ndarray | None = None,
                     mask_erosion: int = 0) -> FeatureSet:
    """Corner keypoints plus rotation-normalized intensity descriptors.

    A uniform patch legitimately yields an empty set.  `mask`, when given,
    restricts keypoints to true pixels; `mask_erosion` additionally shrinks it
    so no descriptor window samples masked-out content.
    """
    if patch.shape[0] < 16 or patch.shape[1] < 16:
        raise PatchTooSmall(f"patch {patch.shape[1]}x{patch.shape[0]} < 16x16")
    gray = to_gray(patch) if patch.ndim == 3 else patch.astype(np.float64)
    resp = _corner_response(gray)
    h, w = resp.shape
    border = min(_BORDER, h // 4, w // 4)
    edge = np.zeros_like(resp, dtype=bool)
    edge[border:h - border, border:w - border] = True
    resp = np.where(edge, resp, 0.0)
    if mask is not None:
        if mask_erosion > 0 and not mask.all():
            mask = ndimage.minimum_filter(mask, size=2 * mask_erosion + 1)
        resp = np.where(mask, resp, 0.0)
    peak = resp.max()
    if peak <= abs_floor:
        return FeatureSet(np.zeros((0, 2)), np.zeros((0, _DESC_GRID ** 2 // _DESC_POOL ** 2)))
    nms = ndimage.maximum_filter(resp, size=5)
    ys, xs = np.nonzero((resp == nms) & (resp > max(abs_floor, quality * peak)))
    order = np.argsort(resp[ys, xs])[::-1][:max_keypoints]
    ys, xs = ys[order], xs[order]

    gx = ndimage.sobel(gray, axis=1) / 8.0
    gy = ndimage.sobel(gray, axis=0) / 8.0
    kps = []
    descs = []
    for x, y in zip(xs, ys):
        # quadratic sub-pixel refinement of the response peak
        fx = fy = 0.0
        if 0 < x < w - 1:
            d = resp[y, x - 1] - 2 * resp[y, x] + resp[y, x + 1]
            if d < -1e-12:
                fx = 0.5 * (resp[y, x - 1] - resp[y, x + 1]) / d
        if 0 < y < h - 1:
            d = resp[y - 1, x] - 2 * resp[y, x] + resp[y + 1, x]
            if d < -1e-12:
                fy = 0.5 * (resp[y - 1, x] - resp[y + 1, x]) / d
        px, py = x + np.clip(fx, -0.5, 0.5), y + np.clip(fy, -0.5, 0.5)
        for theta in _orientation_peaks(gx, gy, px, py):
            window = _sample_rotated(gray, px, py, theta, _DESC_GRID)
            pooled = window.reshape(_DESC_GRID // _DESC_POOL, _DESC_POOL,
                                    _DESC_GRID // _DESC_POOL, _DESC_POOL
                                    ).mean(axis=(1, 3))
            vec = pooled.ravel()
            vec = vec - vec.mean()
            norm = np.linalg.norm(vec)
            if norm < 1e-9:
                continue
            kps.append((px, py))
            descs.append(vec / norm)
    if not kps:
        return FeatureSet(np.zeros((0, 2)), np.zeros((0, _DESC_GRID ** 2 // _DESC_POOL ** 2)))
    return FeatureSet(np.asarray(kps, dtype=np.float64),
                      np.asarray(descs, dtype=np.float64))


def match_features(a: FeatureSet, b: FeatureSet, ratio: float = 0.8,
                   mutual: bool = False) -> list[tuple[int, int]]:
    """Nearest-neighbor descriptor matches with a ratio test.

    The runner-up for the ratio is the best match at a spatially distinct
    keypoint, so multi-orientation twins of the same corner don't veto their
    own match.
    """
    if len(a) == 0 or len(b) == 0:
        return []
    sims = a.descriptors @ b.descriptors.T
    out = []
    best_j = np.argmax(sims, axis=1)
    if mutual:
        best_i = np.argmax(sims, axis=0)
    for i in range(len(a)):
        j = int(best_j[i])
        order = np.argsort(sims[i])[::-1]
        s1 = sims[i, order[0]]
        pj = b.keypoints[order[0]]
        s2 = None
        for k in order[1:]:
            q = b.keypoints[k]
            if (q[0] - pj[0]) ** 2 + (q[1] - pj[1]) ** 2 > 16.0:
                s2 = sims[i, k]
                break
        d1 = math.sqrt(max(2.0 - 2.0 * s1, 0.0))
        d2 = math.sqrt(max(2.0 - 2.0 * s2, 0.0)) if s2 is not None else 2.0
        if d2 > 1e-12 and d1 / d2 > ratio:
            continue
        if mutual and int(best_i[j]) != i:
            continue
        out.append((i, j))
    return out


# --- consensus transform estimation ------------------------------------------

_MIN_SAMPLES = {"similarity": 2, "affine": 3, "homography": 4}


def _fit_similarity(src, dst):
    n = src.shape[0]
    A = np.zeros((2 * n, 4))
    bvec = np.zeros(2 * n)
    A[0::2, 0] = src[:, 0]
    A[0::2, 1] = -src[:, 1]
    A[0::2, 2] = 1.0
    A[1::2, 0] = src[:, 1]
    A[1::2, 1] = src[:, 0]
    A[1::2, 3] = 1.0
    bvec[0::2] = dst[:, 0]
    bvec[1::2] = dst[:, 1]
    sol, *_ = np.linalg.lstsq(A, bvec, rcond=None)
    a, b, tx, ty = sol
    return np.array([[a, -b, tx], [b, a, ty], [0.0, 0.0, 1.0]])


def _fit_affine(src, dst):
    n = src.shape[0]
    A = np.zeros((2 * n, 6))
    bvec = np.zeros(2 * n)
    A[0::2, 0] = src[:, 0]
    A[0::2, 1] = src[:, 1]
    A[0::2, 2] = 1.0
    A[1::2, 3] = src[:, 0]
    A[1::2, 4] = src[:, 1]
    A[1::2, 5] = 1.0
    bvec[0::2] = dst[:, 0]
    bvec[1::2] = dst[:, 1]
    sol, *_ = np.linalg.lstsq(A, bvec, rcond=None)
    return np.array([[sol[0], sol[1], sol[2]],
                     [sol[3], sol[4], sol[5]],
                     [0.0, 0.0, 1.0]])


def _normalize_pts(pts):
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    s = math.sqrt(2.0) / max(d, 1e-12)
    T = np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])
    return (pts - c) * s, T


def _fit_homography(src, dst):
    sn, Ts = _normalize_pts(src)
    dn, Td = _normalize_pts(dst)
    n = src.shape[0]
    A = np.zeros((2 * n, 9))
    for k in range(n):
        x, y = sn[k]
        u, v = dn[k]
        A[2 * k] = [-x, -y, -1, 0, 0, 0, u * x, u * y, u]
        A[2 * k + 1] = [0, 0, 0, -x, -y, -1, v * x, v * y, v]
    _, _, vt = np.linalg.svd(A)
    H = vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ H @ Ts
    if abs(H[2, 2]) < 1e-12:
        return None
    return H / H[2, 2]


def apply_transform(t: np.ndarray, pts: np.ndarray) -> np.ndarray:
    ph = np.hstack([pts, np.ones((pts.shape[0], 1))])
    out = ph @ t.T
    w = out[:, 2:3]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(np.abs(w) > 1e-12, out[:, :2] / w, np.inf)


def estimate_transform(matches, model: str = "similarity", iters: int = 300,
                       inlier_tol_px: float = 2.0, seed: int = 0,
                       min_inlier_ratio: float = 0.3
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Consensus fit over noisy correspondences; refits on inliers.

    `matches` is a sequence of ((x, y), (x, y)) pairs or an (N, 2, 2) array.
    Returns (3x3 transform, boolean inlier mask).
    """
    arr = np.asarray([(p[0], p[1]) for p in matches], dtype=np.float64)
    n = arr.shape[0]
    need = _MIN_SAMPLES[model]
    if n < need:
        raise InsufficientMatches(f"{n} matches < minimal sample {need} for {model}")
    src = arr[:, 0, :]
    dst = arr[:, 1, :]
    fit = {"similarity": _fit_similarity, "affine": _fit_affine,
           "homography": _fit_homography}[model]
    rng = np.random.default_rng(seed)
    # Tiny sets have few distinct minimal samples; more draws add nothing.
    iters = min(iters, 4 * math.comb(n, need) + 8)
    best = None   # (count, -rms, transform, mask)
    for _ in range(iters):
        idx = rng.choice(n, size=need, replace=False)
        t = fit(src[idx], dst[idx])
        if t is None or not np.all(np.isfinite(t)):
            continue
        proj = apply_transform(t, src)
        err = np.sqrt(((proj - dst) ** 2).sum(axis=1))
        inl = err < inlier_tol_px
        count = int(inl.sum())
        if count < need:
            continue
        rms = float(np.sqrt((err[inl] ** 2).mean()))
        key = (count, -rms)
        if best is None or key > best[0]:
            best = (key, t, inl)
    if best is None or best[0][0] < max(need, min_inlier_ratio * n):
        raise NoConsensus("no transform reaches the inlier threshold")
    _, _, inl = best
    t = fit(src[inl], dst[inl])
    proj = apply_transform(t, src)
    err = np.sqrt(((proj - dst) ** 2).sum(axis=1))
    final = err < inlier_tol_px
    if final.sum() < max(need, min_inlier_ratio * n):
        raise NoConsensus("inlier set collapsed after refit")
    return t, final


# --- transform decomposition --------------------------------------------------

@dataclass(frozen=True)
class DecomposedTransform:
    alpha: float
    T: np.ndarray
    R_theta: np.ndarray
    R_phi: np.ndarray
    S_v: np.ndarray
    P: np.ndarray

    def recompose(self) -> np.ndarray:
        r_phi_inv = self.R_phi.T.copy()   # rotation block orthogonal
        return self.T @ self.R_theta @ r_phi_inv @ self.S_v @ self.R_phi @ self.P


def decompose(t: np.ndarray) -> DecomposedTransform:
    """Factor a planar homogeneous transform into translation, rotations,
    axis-aligned scale and a pure projective part."""
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (3, 3):
        raise DegenerateTransform("expected a 3x3 matrix")
    if abs(t[2, 2]) < 1e-12:
        raise DegenerateTransform("normalization undefined: t[3][3] = 0")
    alpha = 1.0 / t[2, 2]
    nt = alpha * t
    P = np.eye(3)
    P[2, :] = nt[2, :]
    P_inv = np.eye(3)
    P_inv[2, 0] = -nt[2, 0]
    P_inv[2, 1] = -nt[2, 1]
    TA = nt @ P_inv
    A = TA[:2, :2]
    U, D, Vt = np.linalg.svd(A)
    if D[-1] <= 1e-12 * max(D[0], 1.0):
        raise DegenerateTransform("linear part is numerically singular")
    if np.linalg.det(U @ Vt) < 0:
        # Fold the reflection sign into the scale, which must stay positive.
        raise ReflectionDetected("planar moves cannot contain a reflection")
    T = np.eye(3)
    T[0, 2] = TA[0, 2]
    T[1, 2] = TA[1, 2]
    S_v = np.diag([D[0], D[1], 1.0])
    R_theta = np.eye(3)
    R_theta[:2, :2] = U @ Vt
    R_phi = np.eye(3)
    R_phi[:2, :2] = Vt
    return DecomposedTransform(alpha=alpha, T=T, R_theta=R_theta,
                               R_phi=R_phi, S_v=S_v, P=P)


def extract_rotation(d: DecomposedTransform, convention: str = "standard") -> float:
    """Rotation angle of the orienting factor.

    'standard' reads the angle off the rotation block with atan2;
    'paper_literal' evaluates arctan(R(2,2)/R(2,1)) exactly as printed in the
    source formula (kept for fidelity experiments; returns pi/2 - theta mod pi).
    """
    R = d.R_theta
    if convention == "standard":
        return math.atan2(R[1, 0], R[1, 1])
    if convention == "paper_literal":
        if abs(R[1, 0]) < 1e-15:
            return math.pi / 2.0 if R[1, 1] >= 0 else -math.pi / 2.0
        return math.atan(R[1, 1] / R[1, 0])
    raise ValueError(f"unknown convention {convention!r}")


# --- masked normalized cross-correlation --------------------------------------

def downsample2(arr: np.ndarray) -> np.ndarray:
    """2x2 box mean; trailing odd row/column is dropped."""
    h2 = arr.shape[0] // 2 * 2
    w2 = arr.shape[1] // 2 * 2
    a = arr[:h2, :w2].astype(np.float64)
    return a.reshape(h2 // 2, 2, w2 // 2, 2).mean(axis=(1, 3))


class SceneCache:
    """Per-raster caches shared across matches against the same world render:
    grayscale planes (full and half resolution), padded image spectra, and
    lazily extracted features."""

    # Templates up to this size share one padded spectrum per raster.
    PAD_CLASS = 164

    def __init__(self, rgb: np.ndarray):
        self.rgb = rgb
        self.gray = to_gray(rgb)
        self._planes: dict = {}
        self._ffts: dict = {}
        self._features: FeatureSet | None = None

    def features(self) -> FeatureSet:
        if self._features is None:
            self._features = extract_features(self.rgb)
        return self._features

    def plane(self, scale: int) -> tuple[np.ndarray, np.ndarray]:
        if scale not in self._planes:
            g = self.gray if scale == 1 else downsample2(self.gray)
            self._planes[scale] = (g, g ** 2)
        return self._planes[scale]

    def padded_shape(self, th: int, tw: int, scale: int) -> tuple[int, int]:
        from scipy.fft import next_fast_len
        H, W = self.plane(scale)[0].shape
        cls = self.PAD_CLASS if max(th, tw) <= self.PAD_CLASS else max(th, tw)
        return (next_fast_len(H + cls), next_fast_len(W + cls))

    def spectra(self, shape: tuple[int, int], scale: int):
        key = (scale, shape)
        if key not in self._ffts:
            from scipy.fft import rfft2
            g, g2 = self.plane(scale)
            self._ffts[key] = (rfft2(g, shape), rfft2(g2, shape))
        return self._ffts[key]


def _corr_valid(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return fftconvolve(image, kernel[::-1, ::-1], mode="valid")


def masked_ncc_map(image_gray: np.ndarray, template_gray: np.ndarray,
                   mask: np.ndarray, scene: SceneCache | None = None,
                   scene_scale: int = 1) -> np.ndarray:
    """Zero-mean NCC of a masked template at every valid offset.

    Template pixels participate with weight mask in [0, 1]; an exact copy
    scores 1.0.  Output[y, x] corresponds to the template's top-left corner at
    (x, y).  `image_gray` must be the scene's plane at `scene_scale` when a
    scene cache is supplied.
    """
    th, tw = template_gray.shape
    out_h = image_gray.shape[0] - th + 1
    out_w = image_gray.shape[1] - tw + 1
    m = mask.astype(np.float64)
    n = m.sum()
    if n < 4 or out_h <= 0 or out_w <= 0:
        return np.zeros((max(out_h, 0), max(out_w, 0)))
    t = template_gray.astype(np.float64)
    tbar = (m * t).sum() / n
    tc = m * (t - tbar)
    sigma_t2 = (tc * (t - tbar)).sum()
    # Under half a gray level of spread the template is blank: no evidence.
    if sigma_t2 < 0.25 * n:
        return np.zeros((out_h, out_w))
    if scene is not None:
        from scipy.fft import irfft2, rfft2
        shape = scene.padded_shape(th, tw, scene_scale)
        rf, rf2 = scene.spectra(shape, scene_scale)
        tf = rfft2(tc[::-1, ::-1], shape)
        mf = rfft2(m[::-1, ::-1], shape)
        s_it = irfft2(rf * tf, shape)[th - 1:th - 1 + out_h, tw - 1:tw - 1 + out_w]
        s_i = irfft2(rf * mf, shape)[th - 1:th - 1 + out_h, tw - 1:tw - 1 + out_w]
        s_i2 = irfft2(rf2 * mf, shape)[th - 1:th - 1 + out_h, tw - 1:tw - 1 + out_w]
    else:
        s_it = _corr_valid(image_gray, tc)
        s_i = _corr_valid(image_gray, m)
        s_i2 = _corr_valid(image_gray ** 2, m)
    var_i = np.maximum(s_i2 - s_i ** 2 / n, 0.0)
    den = np.sqrt(sigma_t2 * var_i)
    with np.errstate(divide="ignore", invalid="ignore"):
        ncc = np.where(den > 1e-9, s_it / den, 0.0)
    return np.clip(ncc, -1.0, 1.0)


def ncc_at(image: np.ndarray, template: np.ndarray, mask: np.ndarray,
           x0: int, y0: int) -> float:
    """Direct color masked NCC with the template's top-left at (x0, y0)."""
    h, w = template.shape[:2]
    H, W = image.shape[:2]
    if x0 < 0 or y0 < 0 or x0 + w > W or y0 + h > H:
        # Clip to the overlapping region.
        sx0, sy0 = max(-x0, 0), max(-y0, 0)
        sx1 = min(w, W - x0)
        sy1 = min(h, H - y0)
        if sx1 <= sx0 or sy1 <= sy0:
            return 0.0
        template = template[sy0:sy1, sx0:sx1]
        mask = mask[sy0:sy1, sx0:sx1]
        x0, y0 = x0 + sx0, y0 + sy0
        h, w = template.shape[:2]
    region = image[y0:y0 + h, x0:x0 + w]
    mm = mask.astype(bool)
    if mm.sum() < 4:
        return 0.0
    a = template[mm].astype(np.float64).ravel()
    b = region[mm].astype(np.float64).ravel()
    a = a - a.mean()
    b = b - b.mean()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    # Require at least half a gray level of spread on both sides.
    blank = 0.5 * math.sqrt(a.size)
    if na < blank or nb < blank:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


# --- match finding -------------------------------------------------------------

@dataclass
class MatchCandidate:
    x: float                 # anchor position in world pixels
    y: float
    theta: float
    score: float
    source: str = "ncc"      # 'ncc' | 'features'


@dataclass
class AdaptiveReport:
    sizes: list[int] = field(default_factory=list)
    counts: list[int] = field(default_factory=list)


def _subpixel(surface, x, y):
    fx = fy = 0.0
    if 0 < x < surface.shape[1] - 1:
        d = surface[y, x - 1] - 2 * surface[y, x] + surface[y, x + 1]
        if d < -1e-12:
            fx = float(np.clip(0.5 * (surface[y, x - 1] - surface[y, x + 1]) / d,
                               -0.5, 0.5))
    if 0 < y < surface.shape[0] - 1:
        d = surface[y - 1, x] - 2 * surface[y, x] + surface[y + 1, x]
        if d < -1e-12:
            fy = float(np.clip(0.5 * (surface[y - 1, x] - surface[y + 1, x]) / d,
                               -0.5, 0.5))
    return fx, fy


def _refine_peak(gray, tpl_gray, mask, x0, y0):
    """Full-resolution local 3x3 polish of a coarse correlation peak."""
    for _ in range(3):
        grid = np.full((3, 3), -2.0)
        for j in range(3):
            for i in range(3):
                grid[j, i] = ncc_at(gray, tpl_gray, mask, x0 + i - 1, y0 + j - 1)
        jy, jx = np.unravel_index(int(np.argmax(grid)), grid.shape)
        if (jy, jx) == (1, 1):
            fx, fy = _subpixel(grid, 1, 1)
            return x0 + fx, y0 + fy, float(grid[1, 1])
        x0 += jx - 1
        y0 += jy - 1
    return float(x0), float(y0), float(grid[jy, jx])


def _ncc_candidates(world_gray, template_gray, mask, anchor_dx, anchor_dy,
                    floor=CANDIDATE_FLOOR, max_candidates=8, scene=None):
    th, tw = template_gray.shape
    # Coarse scan at half resolution when the template affords it.
    scale = 2 if scene is not None and min(th, tw) >= 40 else 1
    if scale == 2:
        tpl_s = downsample2(template_gray)
        mask_s = downsample2(mask.astype(np.float64))
        img_s = scene.plane(2)[0]
        ncc = masked_ncc_map(img_s, tpl_s, mask_s, scene=scene, scene_scale=2)
    else:
        tpl_s, mask_s, img_s = template_gray, mask, world_gray
        ncc = masked_ncc_map(img_s, tpl_s, mask_s, scene=scene, scene_scale=1)
    if ncc.size == 0:
        return []
    suppress = max(3, min(tpl_s.shape) // 2)
    peaks = (ncc == ndimage.maximum_filter(ncc, size=suppress)) & (ncc >= floor - 0.05)
    ys, xs = np.nonzero(peaks)
    if ys.size == 0:
        return []
    order = np.argsort(ncc[ys, xs])[::-1][:max_candidates * 3]
    best_coarse = float(ncc[ys[order[0]], xs[order[0]]])
    out = []
    taken = []
    for k in order:
        y, x = int(ys[k]), int(xs[k])
        coarse = float(ncc[y, x])
        # Peaks far below the leader cannot become real candidates.
        if coarse < max(floor - 0.05, best_coarse - 0.25):
            break
        if any((x - tx) ** 2 + (y - ty) ** 2 < suppress ** 2 for tx, ty in taken):
            continue
        taken.append((x, y))
        if scale == 2:
            xf, yf, score = _refine_peak(world_gray, template_gray, mask,
                                         2 * x, 2 * y)
        else:
            fx, fy = _subpixel(ncc, x, y)
            xf, yf, score = x + fx, y + fy, coarse
        if score < floor:
            continue
        out.append(MatchCandidate(x=xf + anchor_dx, y=yf + anchor_dy,
                                  theta=0.0, score=score))
        if len(out) >= max_candidates:
            break
    return out


def _feature_candidates(template_rgb, template_mask, anchor_dx, anchor_dy,
                        world_features, template_features, seed=0,
                        max_hypotheses=3):
    """Sequential consensus hypotheses from descriptor matches."""
    if template_features is None or len(template_features) < 4 or \
            world_features is None or len(world_features) < 4:
        return []
    pairs = match_features(template_features, world_features, ratio=0.85)
    if len(pairs) < 4:
        return []
    src = template_features.keypoints[[i for i, _ in pairs]]
    dst = world_features.keypoints[[j for _, j in pairs]]
    remaining = np.ones(len(pairs), dtype=bool)
    out = []
    for _ in range(max_hypotheses):
        idx = np.nonzero(remaining)[0]
        if idx.size < 4:
            break
        corr = [((src[i][0], src[i][1]), (dst[i][0], dst[i][1])) for i in idx]
        try:
            t, inl = estimate_transform(corr, model="similarity", iters=200,
                                        inlier_tol_px=2.5, seed=seed)
        except (InsufficientMatches, NoConsensus):
            break
        try:
            d = decompose(t)
            theta = extract_rotation(d, "standard")
        except (DegenerateTransform, ReflectionDetected):
            remaining[idx[inl]] = False
            continue
        anchor = apply_transform(t, np.array([[anchor_dx, anchor_dy]]))
        out.append(MatchCandidate(x=float(anchor[0, 0]), y=float(anchor[0, 1]),
                                  theta=theta, score=0.0, source="features"))
        remaining[idx[inl]] = False
    return out


def _verify_candidate(world_rgb, template_rgb, template_mask, cand,
                      anchor_dx, anchor_dy):
    """Re-score a candidate with full-color masked NCC (warping if rotated)."""
    if abs(cand.theta) > 1e-3:
        rgb, rot_alpha = rotate_sprite(
            template_rgb, (template_mask * 255).astype(np.uint8), cand.theta)
        mask = rot_alpha >= 128
        th, tw = rgb.shape[:2]
        x0 = int(round(cand.x - (tw - 1) / 2.0))
        y0 = int(round(cand.y - (th - 1) / 2.0))
        # rotation is about the template center, so re-anchor accordingly
        cx = (template_rgb.shape[1] - 1) / 2.0
        cy = (template_rgb.shape[0] - 1) / 2.0
        c, s = math.cos(cand.theta), math.sin(cand.theta)
        ax, ay = anchor_dx - cx, anchor_dy - cy
        rx = c * ax - s * ay
        ry = s * ax + c * ay
        x0 = int(round(cand.x - rx - (tw - 1) / 2.0))
        y0 = int(round(cand.y - ry - (th - 1) / 2.0))
        return ncc_at(world_rgb, rgb, mask, x0, y0)
    x0 = int(round(cand.x - anchor_dx))
    y0 = int(round(cand.y - anchor_dy))
    return ncc_at(world_rgb, template_rgb, template_mask, x0, y0)


# A correlation peak at or above this gate is trusted without the (costlier)
# feature path; below it, rotation may be in play and features are consulted.
FEATURE_GATE = 0.9


def find_match_candidates(world_rgb, template_rgb, template_mask=None, *,
                          anchor=None, world_features=None,
                          template_features=None, seed=0,
                          floor=CANDIDATE_FLOOR, max_candidates=8,
                          scene: SceneCache | None = None
                          ) -> list[MatchCandidate]:
    """Scored world locations resembling the masked template.

    `anchor` is the template-local point reported as the candidate position
    (defaults to the template center).  Scores are color masked NCC in [0, 1].
    `template_features` / `world_features` may be zero-argument callables that
    are only invoked when the correlation path is inconclusive.
    """
    th, tw = template_rgb.shape[:2]
    if template_mask is None:
        template_mask = np.ones((th, tw), dtype=bool)
    if anchor is None:
        anchor = ((tw - 1) / 2.0, (th - 1) / 2.0)
    ax, ay = anchor
    if scene is None:
        scene = SceneCache(world_rgb)
    world_gray = scene.gray
    template_gray = to_gray(template_rgb)
    m = template_mask.astype(np.float64)
    n = m.sum()
    if n < 4:
        return []
    tbar = (m * template_gray).sum() / n
    if (m * (template_gray - tbar) ** 2).sum() < 0.25 * n:
        return []   # a blank template carries no evidence at all
    cands = _ncc_candidates(world_gray, template_gray, template_mask, ax, ay,
                            floor=floor, max_candidates=max_candidates,
                            scene=scene)
    if not cands or cands[0].score < FEATURE_GATE:
        tf = template_features() if callable(template_features) else template_features
        wf = world_features() if callable(world_features) else world_features
        if wf is None:
            wf = scene.features()
        cands += _feature_candidates(template_rgb, template_mask, ax, ay,
                                     wf, tf, seed=seed)
    suppress = max(4.0, min(th, tw) / 2.0)
    verified: list[MatchCandidate] = []
    for c in cands:
        c.score = max(0.0, _verify_candidate(world_rgb, template_rgb,
                                             template_mask, c, ax, ay))
        dup = None
        for v in verified:
            if (v.x - c.x) ** 2 + (v.y - c.y) ** 2 < suppress ** 2:
                dup = v
                break
        if dup is None:
            verified.append(c)
        elif c.score > dup.score:
            dup.x, dup.y, dup.theta = c.x, c.y, c.theta
            dup.score, dup.source = c.score, c.source
    verified = [c for c in verified if c.score >= floor]
    verified.sort(key=lambda c: (-c.score, c.y, c.x))
    return verified[:max_candidates]


def _crop_template(obs: Observation, anchor_world, size):
    """Cut a size x size template out of an observation around a world point."""
    x0, y0 = obs.frame.top_left()
    ax = anchor_world[0] - x0
    ay = anchor_world[1] - y0
    half = size / 2.0
    cx0 = int(round(ax - half))
    cy0 = int(round(ay - half))
    cx0 = max(0, min(cx0, obs.patch.shape[1] - size))
    cy0 = max(0, min(cy0, obs.patch.shape[0] - size))
    tpl = obs.patch[cy0:cy0 + size, cx0:cx0 + size]
    return tpl, (ax - cx0, ay - cy0), (cx0, cy0)


def find_best_match(world_raster, obs: Observation, features: FeatureSet | None = None,
                    mode: str = "fixed", margin: float = AMBIGUITY_MARGIN, *,
                    anchor=None, mask=None, template_size=None,
                    world_features=None, seed=0, report: AdaptiveReport | None = None,
                    scene: SceneCache | None = None
                    ) -> tuple[Pose2, float, Frame]:
    """Locate the observation's content in a world raster.

    fixed mode scans once at the observation (or `template_size`) frame and
    raises Ambiguous when several candidates fall within `margin`; adaptive
    mode starts at the smallest feasible frame and grows it by 1.25x per step,
    stopping as soon as the best candidate leads the runner-up by `margin`.
    """
    x0, y0 = obs.frame.top_left()
    if anchor is None:
        anchor = (x0 + obs.frame.width / 2.0, y0 + obs.frame.height / 2.0)
    full_mask = np.ones(obs.patch.shape[:2], dtype=bool) if mask is None else mask
    if scene is None:
        scene = SceneCache(world_raster)

    def attempt(size):
        size = int(min(size, obs.patch.shape[0], obs.patch.shape[1],
                       world_raster.shape[0], world_raster.shape[1]))
        tpl, (adx, ady), (cx0, cy0) = _crop_template(obs, anchor, size)
        tmask = full_mask[cy0:cy0 + size, cx0:cx0 + size]
        tf = features
        if tf is None and tpl.shape[0] >= 16 and tpl.shape[1] >= 16:
            tf = lambda: extract_features(tpl, mask=tmask, mask_erosion=12)  # noqa: E731
        cands = find_match_candidates(
            world_raster, tpl, tmask, anchor=(adx, ady),
            world_features=world_features, template_features=tf, seed=seed,
            scene=scene)
        return cands, size

    if mode == "fixed":
        size = template_size or min(obs.frame.width, obs.frame.height)
        cands, size = attempt(size)
        if not cands or cands[0].score < NO_MATCH_FLOOR:
            raise NoMatch(f"best score {cands[0].score:.3f} < {NO_MATCH_FLOOR}"
                          if cands else "no candidate above floor")
        within = [c for c in cands if cands[0].score - c.score < margin]
        if len(within) >= 2:
            raise Ambiguous(f"{len(within)} candidates within margin {margin}",
                            candidates=within)
        best = cands[0]
        return (Pose2(best.x, best.y, best.theta), best.score,
                Frame(center=(best.x, best.y), width=size, height=size))

    if mode != "adaptive":
        raise ValueError(f"unknown mode {mode!r}")

    limit = min(obs.patch.shape[0], obs.patch.shape[1],
                world_raster.shape[0], world_raster.shape[1])
    size = int(min(template_size or 32, limit))
    cands: list[MatchCandidate] | None = None
    while True:
        new_cands, used = attempt(size)
        if cands is None:
            cands = new_cands or None
        else:
            # Growing context only filters and re-localizes candidates found
            # at smaller frames; it never introduces new ones.
            keep = []
            radius = max(8.0, used / 2.0)
            for old in cands:
                near = [c for c in new_cands
                        if (c.x - old.x) ** 2 + (c.y - old.y) ** 2 < radius ** 2]
                if near:
                    keep.append(max(near, key=lambda c: c.score))
            seen = []
            cands = []
            for c in sorted(keep, key=lambda c: (-c.score, c.y, c.x)):
                if all((c.x - o.x) ** 2 + (c.y - o.y) ** 2 > 16.0 for o in seen):
                    cands.append(c)
                    seen.append(c)
        if report is not None:
            report.sizes.append(used)
            report.counts.append(len(cands or []))
        if cands:
            within = [c for c in cands if cands[0].score - c.score < margin]
            if len(within) <= 1 or used >= limit:
                break
        elif used >= limit:
            raise NoMatch("no candidate above floor at any frame size")
        size = int(min(math.ceil(size * ADAPTIVE_GROWTH), limit))
    if not cands or cands[0].score < NO_MATCH_FLOOR:
        raise NoMatch("best adaptive score below floor")
    best = cands[0]
    return (Pose2(best.x, best.y, best.theta), best.score,
            Frame(center=(best.x, best.y), width=size, height=size))
