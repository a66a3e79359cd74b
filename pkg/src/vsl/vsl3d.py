"""Minimal 3D perception chain on synthetic point clouds.

Pass-through cropping, voxel-grid downsampling (centroid per occupied cell),
nearest-neighbor cloud subtraction, PCA surface normals, and iterative
closest-point rigid alignment.  Clouds are immutable value objects; spatial
queries run on a per-call kd-tree.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .errors import NoConvergence


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray                       # (N, 3) float64 meters
    colors: np.ndarray | None = None         # (N, 3) uint8
    normals: np.ndarray | None = None        # (N, 3) unit vectors
    normal_flags: np.ndarray | None = None   # bool: True where normal valid

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class VoxelGrid:
    leaf: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.leaf <= 0:
            raise ValueError("leaf size must be positive")


def passthrough_filter(cloud: PointCloud, bounds) -> PointCloud:
    """Keep points inside the axis-aligned box; bounds = ((xmin, xmax), ...)."""
    keep = np.ones(len(cloud), dtype=bool)
    for axis, (lo, hi) in enumerate(bounds):
        if lo >= hi:
            raise ValueError(f"axis {axis}: min must be below max")
        keep &= (cloud.points[:, axis] >= lo) & (cloud.points[:, axis] <= hi)
    return _take(cloud, keep)


def _take(cloud: PointCloud, idx) -> PointCloud:
    return PointCloud(
        points=cloud.points[idx],
        colors=None if cloud.colors is None else cloud.colors[idx],
        normals=None if cloud.normals is None else cloud.normals[idx],
        normal_flags=None if cloud.normal_flags is None else cloud.normal_flags[idx])


def voxelize(cloud: PointCloud, grid: VoxelGrid) -> PointCloud:
    """One point per occupied voxel: the centroid of its members."""
    if len(cloud) == 0:
        return PointCloud(points=np.zeros((0, 3)))
    rel = (cloud.points - np.asarray(grid.origin)) / grid.leaf
    keys = np.floor(rel).astype(np.int64)
    _uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True,
                                       return_counts=True)[0:3]
    sums = np.zeros((counts.shape[0], 3))
    np.add.at(sums, inverse, cloud.points)
    centroids = sums / counts[:, None]
    order = np.lexsort((centroids[:, 2], centroids[:, 1], centroids[:, 0]))
    return PointCloud(points=centroids[order])


def knn_subtract(a: PointCloud, b: PointCloud, dist_threshold: float) -> PointCloud:
    """Points of `a` whose nearest neighbor in `b` lies beyond the threshold."""
    if dist_threshold <= 0:
        raise ValueError("distance threshold must be positive")
    if len(a) == 0:
        return _take(a, np.zeros(0, dtype=bool))
    if len(b) == 0:
        return a
    tree = cKDTree(b.points)
    d, _ = tree.query(a.points, k=1)
    return _take(a, d > dist_threshold)


def estimate_normals(cloud: PointCloud, radius: float,
                     viewpoint=(0.0, 0.0, 0.0)) -> PointCloud:
    """PCA normal per point over its radius neighborhood, oriented toward the
    viewpoint; points with fewer than 3 neighbors are flagged and carry no
    normal."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    n = len(cloud)
    normals = np.zeros((n, 3))
    flags = np.zeros(n, dtype=bool)
    if n == 0:
        return replace(cloud, normals=normals, normal_flags=flags)
    tree = cKDTree(cloud.points)
    neighbors = tree.query_ball_point(cloud.points, r=radius)
    vp = np.asarray(viewpoint, dtype=np.float64)
    for i, idx in enumerate(neighbors):
        if len(idx) < 3:
            continue
        pts = cloud.points[idx]
        centered = pts - pts.mean(axis=0)
        cov = centered.T @ centered / len(idx)
        evals, evecs = np.linalg.eigh(cov)
        normal = evecs[:, 0]
        if np.dot(normal, vp - cloud.points[i]) < 0:
            normal = -normal
        normals[i] = normal
        flags[i] = True
    return replace(cloud, normals=normals, normal_flags=flags)


# --- rigid alignment -----------------------------------------------------------

def _kabsch(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Least-squares rigid transform aligning src onto dst (4x4)."""
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    H = (src - cs).T @ (dst - cd)
    U, _S, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    D = np.diag([1.0, 1.0, d])
    R = Vt.T @ D @ U.T
    t = cd - R @ cs
    out = np.eye(4)
    out[:3, :3] = R
    out[:3, 3] = t
    return out


def transform_cloud(cloud: PointCloud, t: np.ndarray) -> PointCloud:
    pts = cloud.points @ t[:3, :3].T + t[:3, 3]
    return replace(cloud, points=pts)


@dataclass
class IcpResult:
    transform: np.ndarray
    fitness: float
    mse: float
    iterations: int
    mse_history: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.transform, self.fitness))


def icp_match(template: PointCloud, scene: PointCloud,
              init: np.ndarray | None = None, max_iters: int = 60,
              corr_dist: float = 0.05, min_fitness: float = 0.3) -> IcpResult:
    """Iterative closest point with kd-tree correspondences and SVD updates.

    Stops when the mean-squared correspondence error improves by less than
    1e-8 or the iteration budget runs out; fitness is the inlier fraction at
    `corr_dist`.
    """
    if len(template) == 0 or len(scene) == 0:
        raise ValueError("both clouds must be non-empty")
    if init is None:
        # Centroid pre-alignment removes the bulk translation and widens the
        # rotation basin considerably.
        t = np.eye(4)
        t[:3, 3] = scene.points.mean(axis=0) - template.points.mean(axis=0)
    else:
        t = np.asarray(init, dtype=np.float64).copy()
    tree = cKDTree(scene.points)
    prev_mse = np.inf
    mse = np.inf
    history = []
    iterations = 0
    for iterations in range(1, max_iters + 1):
        moved = template.points @ t[:3, :3].T + t[:3, 3]
        d, j = tree.query(moved, k=1)
        good = d <= corr_dist
        if good.sum() < 3:
            break
        src = moved[good]
        dst = scene.points[j[good]]
        step = _kabsch(src, dst)
        t = step @ t
        moved = template.points @ t[:3, :3].T + t[:3, 3]
        d, j = tree.query(moved, k=1)
        # Mean-squared closest-point error over the whole template: the
        # quantity with the classical non-increase guarantee.
        mse = float((d ** 2).mean())
        history.append(mse)
        if prev_mse - mse < 1e-8:
            break
        prev_mse = mse
    moved = template.points @ t[:3, :3].T + t[:3, 3]
    d, _ = tree.query(moved, k=1)
    fitness = float((d <= corr_dist).mean())
    if fitness < min_fitness:
        raise NoConvergence(f"fitness {fitness:.3f} below {min_fitness}")
    return IcpResult(transform=t, fitness=fitness, mse=mse,
                     iterations=iterations, mse_history=history)


# --- synthetic scenes and I/O ------------------------------------------------------

def box_cloud(center, size, spacing: float = 0.004,
              viewpoint=(0.0, 0.0, 1.0), noise: float = 0.0,
              seed: int = 0) -> PointCloud:
    """Sample the faces of an axis-aligned box visible from a viewpoint."""
    cx, cy, cz = center
    sx, sy, sz = size
    vp = np.asarray(viewpoint, dtype=np.float64)
    faces = [
        ((1, 0, 0), (cx + sx / 2, cy, cz), (sy, sz), (1, 2)),
        ((-1, 0, 0), (cx - sx / 2, cy, cz), (sy, sz), (1, 2)),
        ((0, 1, 0), (cx, cy + sy / 2, cz), (sx, sz), (0, 2)),
        ((0, -1, 0), (cx, cy - sy / 2, cz), (sx, sz), (0, 2)),
        ((0, 0, 1), (cx, cy, cz + sz / 2), (sx, sy), (0, 1)),
        ((0, 0, -1), (cx, cy, cz - sz / 2), (sx, sy), (0, 1)),
    ]
    pts = []
    for normal, origin, (du, dv), (iu, iv) in faces:
        if np.dot(normal, vp - np.asarray(origin)) <= 0:
            continue   # back face from this viewpoint
        nu = max(int(round(du / spacing)) + 1, 2)
        nv = max(int(round(dv / spacing)) + 1, 2)
        us = np.linspace(-du / 2, du / 2, nu)
        vs = np.linspace(-dv / 2, dv / 2, nv)
        uu, vv = np.meshgrid(us, vs)
        face = np.tile(np.asarray(origin, dtype=np.float64),
                       (uu.size, 1))
        face[:, iu] += uu.ravel()
        face[:, iv] += vv.ravel()
        pts.append(face)
    points = np.vstack(pts) if pts else np.zeros((0, 3))
    if noise > 0:
        rng = np.random.default_rng(seed)
        points = points + rng.normal(0.0, noise, points.shape)
    return PointCloud(points=points)


def tabletop_scene(boxes, table_size=(0.8, 0.6), spacing: float = 0.004,
                   viewpoint=(0.0, 0.0, 1.0)) -> PointCloud:
    """A flat table patch at z=0 plus visible box faces."""
    tx, ty = table_size
    nu = int(round(tx / spacing)) + 1
    nv = int(round(ty / spacing)) + 1
    us = np.linspace(-tx / 2, tx / 2, nu)
    vs = np.linspace(-ty / 2, ty / 2, nv)
    uu, vv = np.meshgrid(us, vs)
    table = np.column_stack([uu.ravel(), vv.ravel(), np.zeros(uu.size)])
    clouds = [table]
    for center, size in boxes:
        clouds.append(box_cloud(center, size, spacing, viewpoint).points)
    return PointCloud(points=np.vstack(clouds))


def rotz(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    t = np.eye(4)
    t[0, 0], t[0, 1], t[1, 0], t[1, 1] = c, -s, s, c
    return t


def save_ply(path: str, cloud: PointCloud) -> None:
    """ASCII PLY with optional normals and colors."""
    has_n = cloud.normals is not None
    has_c = cloud.colors is not None
    with open(path, "w", encoding="ascii") as f:
        f.write("ply\nformat ascii 1.0\n")
        f.write(f"element vertex {len(cloud)}\n")
        f.write("property float x\nproperty float y\nproperty float z\n")
        if has_n:
            f.write("property float nx\nproperty float ny\nproperty float nz\n")
        if has_c:
            f.write("property uchar red\nproperty uchar green\nproperty uchar blue\n")
        f.write("end_header\n")
        for i in range(len(cloud)):
            row = list(cloud.points[i])
            if has_n:
                row += list(cloud.normals[i])
            txt = " ".join(f"{v:.6f}" for v in row)
            if has_c:
                txt += " " + " ".join(str(int(v)) for v in cloud.colors[i])
            f.write(txt + "\n")


def load_ply(path: str) -> PointCloud:
    with open(path, "r", encoding="ascii") as f:
        assert f.readline().strip() == "ply"
        props = []
        count = 0
        while True:
            line = f.readline().strip()
            if line.startswith("element vertex"):
                count = int(line.split()[-1])
            elif line.startswith("property"):
                props.append(line.split()[-1])
            elif line == "end_header":
                break
        rows = [f.readline().split() for _ in range(count)]
    data = np.asarray(rows, dtype=np.float64) if rows else np.zeros((0, len(props)))
    cols = {name: i for i, name in enumerate(props)}
    pts = data[:, [cols["x"], cols["y"], cols["z"]]] if count else np.zeros((0, 3))
    normals = None
    colors = None
    if "nx" in cols:
        normals = data[:, [cols["nx"], cols["ny"], cols["nz"]]]
    if "red" in cols:
        colors = data[:, [cols["red"], cols["green"], cols["blue"]]].astype(np.uint8)
    return PointCloud(points=pts, colors=colors, normals=normals)
