"""Confidence and forward-backward consistency filtering, then point fusion."""

import warnings
from dataclasses import dataclass

import numpy as np

from .costvol import DepthEstimate
from .errors import ConfigError
from .formats import write_ply
from .geometry import backproject, pixel_grid, project


class EmptyCloudWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FusionConfig:
    """Thresholds: confidence ``tau_c``, reprojection ``tau_p`` (pixels),
    relative depth ``tau_d`` and minimum consistent sources ``min_views``."""

    tau_c: float = 0.3
    tau_p: float = 1.0
    tau_d: float = 0.01
    min_views: int = 2

    def __post_init__(self):
        if not 0.0 <= self.tau_c <= 1.0:
            raise ConfigError("tau_c must lie in [0, 1]")
        if not self.tau_p > 0 or not self.tau_d > 0:
            raise ConfigError("tau_p and tau_d must be positive")
        if self.min_views < 1:
            raise ConfigError("min_views must be >= 1")


@dataclass(frozen=True, eq=False)
class PointCloud:
    xyz: np.ndarray  # (N, 3) world units
    rgb: np.ndarray  # (N, 3) uint8

    def __len__(self):
        return len(self.xyz)

    def write(self, path):
        write_ply(path, self.xyz, self.rgb)


def _reproject(ref_depth, ref_cam, src_depth, src_cam):
    """Forward-backward reprojection of every reference pixel.

    Returns reprojected reference coordinates ``(u, v)``, their depth, the
    source-side world points and a mask of pixels that landed on the source
    raster with a finite positive depth there.
    """
    h, w = ref_depth.shape
    hs, ws = src_depth.shape
    X = backproject(ref_depth, ref_cam)
    u, v, _ = project(X, src_cam)
    ix = np.floor(np.nan_to_num(u, nan=-1.0)).astype(np.int64)
    iy = np.floor(np.nan_to_num(v, nan=-1.0)).astype(np.int64)
    inside = (ix >= 0) & (ix < ws) & (iy >= 0) & (iy < hs) & np.isfinite(u) & np.isfinite(v)
    ixc = np.clip(ix, 0, ws - 1)
    iyc = np.clip(iy, 0, hs - 1)
    d_src = src_depth[iyc, ixc]
    ok = inside & np.isfinite(d_src) & (d_src > 0)
    # lift the source pixel centre at its own depth and bring it back
    pix = np.stack([ixc + 0.5, iyc + 0.5, np.ones_like(d_src, dtype=np.float64)])
    rays = np.linalg.solve(src_cam.intrinsics, pix.reshape(3, -1)) * np.where(ok, d_src, 1.0).reshape(1, -1)
    Xs = src_cam.rotation.T @ (rays - src_cam.translation[:, None])
    Xs = Xs.reshape(3, h, w)
    u2, v2, z2 = project(Xs, ref_cam)
    return u2, v2, z2, Xs, ok


def geometric_consistency(ref_depth, ref_cam, src_depth, src_cam, tau_p=1.0, tau_d=0.01,
                          return_points=False):
    """Boolean grid of reference pixels that survive the round trip.

    A pixel passes when its reprojection lands within ``tau_p`` pixels of
    where it started and the returned depth differs from the reference depth
    by less than ``tau_d`` relative. Rays leaving the source raster fail.
    """
    ref_depth = np.asarray(ref_depth, dtype=np.float64)
    src_depth = np.asarray(src_depth, dtype=np.float64)
    h, w = ref_depth.shape
    valid = np.isfinite(ref_depth) & (ref_depth > 0)
    d = np.where(valid, ref_depth, 1.0)
    u2, v2, z2, Xs, ok = _reproject(d, ref_cam, src_depth, src_cam)
    grid = pixel_grid(h, w)
    with np.errstate(invalid="ignore"):
        dist = np.hypot(u2 - grid[0], v2 - grid[1])
        rel = np.abs(z2 - d) / d
        passed = valid & ok & (dist < tau_p) & (rel < tau_d)
    passed &= np.isfinite(dist)
    if return_points:
        return passed, Xs
    return passed


def _as_depth_conf(est):
    if isinstance(est, DepthEstimate):
        return est.depth, est.neighborhood_confidence()
    d = np.asarray(est, dtype=np.float64)
    return d, np.ones_like(d)


def _colors(image, mask):
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = np.repeat(img[None], 3, axis=0)
    vals = img[:, mask].T
    return np.clip(np.round(vals * 255.0), 0, 255).astype(np.uint8)


def fuse(depths, views, cfg=None, pairs=None):
    """Fuse per-view depth maps into one cloud.

    ``depths[i]`` is a :class:`DepthEstimate` (confidence from the three
    planes around the winner) or a plain grid (confidence 1) for
    ``views[i]``. ``pairs`` maps a view to the sources it is checked
    against; by default every other view. Each surviving pixel contributes
    the mean of its own point and its consistent source points.
    """
    cfg = cfg or FusionConfig()
    if len(depths) != len(views):
        raise ConfigError("need one depth map per view")
    if len(views) < 2:
        raise ConfigError("fusion needs at least two views")
    grids = [_as_depth_conf(e) for e in depths]
    xyz_all, rgb_all = [], []
    for i, (depth, conf) in enumerate(grids):
        ref = views[i]
        if depth.shape != tuple(ref.shape):
            raise ConfigError(f"depth map {i} does not match its view resolution")
        if pairs is not None and i in pairs:
            src_ids = [j for j, _ in pairs[i]]
        else:
            src_ids = [j for j in range(len(views)) if j != i]
        valid = np.isfinite(depth) & (depth > 0)
        d = np.where(valid, depth, 1.0)
        X = backproject(d, ref)
        acc = np.where(valid, X, 0.0)
        count = np.zeros(depth.shape, dtype=np.int64)
        for j in src_ids:
            passed, Xs = geometric_consistency(depth, ref, grids[j][0], views[j],
                                               cfg.tau_p, cfg.tau_d, return_points=True)
            acc = acc + np.where(passed, Xs, 0.0)
            count += passed
        keep = valid & (conf >= cfg.tau_c) & (count >= cfg.min_views)
        if not keep.any():
            continue
        xyz_all.append((acc[:, keep] / (count[keep] + 1)).T)
        rgb_all.append(_colors(ref.image, keep))
    if not xyz_all:
        warnings.warn("no pixel survived fusion filtering", EmptyCloudWarning, stacklevel=2)
        return PointCloud(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.uint8))
    return PointCloud(np.concatenate(xyz_all), np.concatenate(rgb_all))
