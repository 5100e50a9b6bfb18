"""Procedurally textured scenes with analytic depth.

Cameras sit on a ring: the reference view looks down the world +z axis from
``(0, 0, -ring_radius)``; the others are tilted ``ring_angle`` degrees off
that axis, spread evenly in azimuth, and all look at the origin. Depth and
intensity come from exact ray evaluation per pixel centre.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputShapeError
from .geometry import CameraView, pixel_grid
from .scene import SceneBundle

KINDS = ("plane", "sphere", "step")


@dataclass(frozen=True)
class SyntheticScene:
    kind: str = "plane"
    texture: str = "noise"
    ring_radius: float = 5.0
    ring_angle: float = 12.0
    focal: float = 1.25  # in units of image width
    plane_z: float = 0.0
    sphere_radius: float = 1.5
    backdrop_z: float = -0.5  # cuts the sphere; the visible part is a cap
    step_height: float = 0.5
    depth_range: tuple = (3.0, 7.0)
    n_waves: int = 24
    min_wavelength: float = 0.25
    max_wavelength: float = 2.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"scene kind must be one of {KINDS}")
        if self.texture not in ("noise", "checker"):
            raise ConfigError("texture must be 'noise' or 'checker'")
        if not self.ring_radius > 0:
            raise ConfigError("camera ring radius must be positive")
        if self.focal <= 0:
            raise ConfigError("focal must be positive")

    # -- geometry --------------------------------------------------------------

    def camera_pose(self, index, n_views):
        """World-to-camera 4x4 transform of view ``index``."""
        rho = self.ring_radius
        if index == 0:
            center = np.array([0.0, 0.0, -rho])
        else:
            a = np.deg2rad(self.ring_angle)
            phi = 2 * np.pi * (index - 1) / max(n_views - 1, 1)
            center = rho * np.array([np.sin(a) * np.cos(phi), np.sin(a) * np.sin(phi), -np.cos(a)])
        z = -center / np.linalg.norm(center)
        x = np.cross([0.0, 1.0, 0.0], z)
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        R = np.stack([x, y, z])
        T = np.eye(4)
        T[:3, :3] = R
        T[:3, 3] = -R @ center
        return T

    def intrinsics(self, h, w):
        f = self.focal * w
        return np.array([[f, 0.0, w / 2.0], [0.0, f, h / 2.0], [0.0, 0.0, 1.0]])

    def _plane_hit(self, c, d, z0):
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (z0 - c[2]) / d[2]
        return np.where(np.isfinite(s) & (s > 0), s, np.inf)

    def ray_depth(self, c, d):
        """Camera depth of the first hit along rays ``c + s d`` (``d`` has camera z = 1)."""
        if self.kind == "plane":
            return self._plane_hit(c, d, self.plane_z)
        if self.kind == "step":
            s0 = self._plane_hit(c, d, self.plane_z)
            s1 = self._plane_hit(c, d, self.plane_z - self.step_height)
            x0 = c[0] + s0 * d[0]
            x1 = c[0] + s1 * d[0]
            s0 = np.where(np.isfinite(s0) & (x0 < 0), s0, np.inf)
            s1 = np.where(np.isfinite(s1) & (x1 >= 0), s1, np.inf)
            return np.minimum(s0, s1)
        r = self.sphere_radius
        a = (d * d).sum(axis=0)
        b = 2 * (c[:, None] * d).sum(axis=0) if d.ndim > 1 else 2 * c @ d
        cc = c @ c - r * r
        disc = b * b - 4 * a * cc
        with np.errstate(invalid="ignore"):
            s = (-b - np.sqrt(disc)) / (2 * a)
        s = np.where((disc >= 0) & (s > 0), s, np.inf)
        return np.minimum(s, self._plane_hit(c, d, self.backdrop_z))

    def analytic_depth(self, T, K, u, v):
        """Depth seen at continuous pixel coordinates ``(u, v)``."""
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        p = np.stack([u.ravel(), v.ravel(), np.ones(u.size)])
        R, t = T[:3, :3], T[:3, 3]
        c = -R.T @ t
        d = R.T @ np.linalg.solve(K, p)
        return self.ray_depth(c, d).reshape(u.shape)

    def surface_distance(self, points):
        """Unsigned distance of world points ``(N, 3)`` to the scene surface."""
        P = np.asarray(points, dtype=np.float64)
        if self.kind == "plane":
            return np.abs(P[:, 2] - self.plane_z)
        if self.kind == "step":
            lo = np.where(P[:, 0] < 0, np.abs(P[:, 2] - self.plane_z), np.inf)
            hi = np.where(P[:, 0] >= 0, np.abs(P[:, 2] - self.plane_z + self.step_height), np.inf)
            return np.minimum(lo, hi)
        # visible surface: sphere cap in front of the backdrop plus the plane outside it
        r, z0 = self.sphere_radius, self.backdrop_z
        a = np.sqrt(max(r * r - z0 * z0, 0.0)) if abs(z0) < r else 0.0
        rxy = np.hypot(P[:, 0], P[:, 1])
        norm = np.linalg.norm(P, axis=1)
        rim = np.hypot(rxy - a, P[:, 2] - z0)
        with np.errstate(invalid="ignore", divide="ignore"):
            on_cap = (r * P[:, 2] / norm) <= z0
        cap = np.where(on_cap & (norm > 0), np.abs(norm - r), rim)
        if abs(z0) >= r:
            cap = np.abs(norm - r) if z0 >= r else np.full(len(P), np.inf)
        plane = np.where(rxy >= a, np.abs(P[:, 2] - z0), rim)
        return np.minimum(cap, plane)

    # -- appearance ------------------------------------------------------------

    def _waves(self):
        rng = np.random.default_rng(self.seed)
        dirs = rng.normal(size=(self.n_waves, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        lam = np.exp(rng.uniform(np.log(self.min_wavelength), np.log(self.max_wavelength),
                                 self.n_waves))
        phase = rng.uniform(0, 2 * np.pi, self.n_waves)
        amp = np.sqrt(lam / self.max_wavelength)
        return dirs * (2 * np.pi / lam)[:, None], phase, amp

    def texture_at(self, X):
        """Intensity in ``[0, 1]`` at world points ``(3, N)``."""
        if self.texture == "checker":
            cell = self.max_wavelength / 2
            k = np.floor(X / cell).sum(axis=0)
            return np.where(k % 2 == 0, 0.8, 0.2)
        omega, phase, amp = self._waves()
        s = (amp[:, None] * np.sin(omega @ X + phase[:, None])).sum(axis=0)
        s /= np.sqrt(0.5 * (amp ** 2).sum())
        return 0.5 + 0.5 * np.tanh(0.75 * s)

    # -- rendering ---------------------------------------------------------------

    def render(self, T, K, h, w):
        """``(image, depth)`` for one camera; misses get depth ``inf`` and intensity 0."""
        R, t = T[:3, :3], T[:3, 3]
        c = -R.T @ t
        d = R.T @ np.linalg.solve(K, pixel_grid(h, w).reshape(3, -1))
        s = self.ray_depth(c, d)
        hit = np.isfinite(s)
        X = c[:, None] + np.where(hit, s, 0.0) * d
        img = np.where(hit, self.texture_at(X), 0.0)
        return img.reshape(h, w), s.reshape(h, w)


def generate_synthetic(scene=None, n_views=5, resolution=(64, 80), seed=None):
    """Render ``n_views`` views; returns a :class:`SceneBundle` with ground truth.

    ``seed`` overrides the scene's texture seed.
    """
    scene = scene or SyntheticScene()
    if seed is not None:
        scene = SyntheticScene(**{**scene.__dict__, "seed": seed})
    h, w = resolution
    if h % 8 or w % 8 or h <= 0 or w <= 0:
        raise InputShapeError(f"resolution {h}x{w} is not divisible by 8")
    if n_views < 1:
        raise ConfigError("need at least one view")
    if n_views > 1 and scene.ring_angle % 360 == 0:
        raise ConfigError("a zero ring angle puts every camera at the same spot")
    K = scene.intrinsics(h, w)
    views, gts = [], []
    for i in range(n_views):
        T = scene.camera_pose(i, n_views)
        img, depth = scene.render(T, K, h, w)
        views.append(CameraView(K, T, img, scene.depth_range, name=f"{i:08d}"))
        gts.append(depth)
    centers = [v.center for v in views]
    pairs = {}
    for i in range(n_views):
        scored = []
        for j in range(n_views):
            if j == i:
                continue
            base = np.linalg.norm(centers[i] - centers[j])
            scored.append((j, float(base)))
        scored.sort(key=lambda js: -js[1] if i == 0 else js[1])
        pairs[i] = scored
    return SceneBundle(views, pairs, gts)
