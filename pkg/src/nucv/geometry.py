"""Pinhole cameras, plane-induced homographies and feature warping.

Pixel convention: integer pixel ``(x, y)`` (column, row) is centred at the
continuous image coordinate ``(x + 0.5, y + 0.5)``. Intrinsic matrices act on
continuous coordinates, so downsampling an image by ``s`` scales the first two
rows of ``K`` by ``1/s`` with no half-pixel correction.

Grids are stored channel-first: features ``(C, H, W)``, depths ``(H, W)``.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import _nn
from .errors import ConfigError, InputShapeError, InvalidCameraError
from .paramfile import load_tensors

W_EPS = 1e-12
EDGE_EPS = 1e-9
ORTHO_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CameraView:
    """One calibrated view.

    ``extrinsics`` maps world to camera coordinates; ``image`` is either a
    luminance grid ``(H, W)`` or a feature grid ``(C, H, W)``.
    """

    intrinsics: np.ndarray
    extrinsics: np.ndarray
    image: np.ndarray
    depth_range: tuple = (0.1, 100.0)
    name: str = ""

    def __post_init__(self):
        K = np.asarray(self.intrinsics, dtype=np.float64)
        T = np.asarray(self.extrinsics, dtype=np.float64)
        object.__setattr__(self, "intrinsics", K)
        object.__setattr__(self, "extrinsics", T)
        object.__setattr__(self, "image", np.asarray(self.image, dtype=np.float64))
        object.__setattr__(self, "depth_range", tuple(float(v) for v in self.depth_range))
        validate_camera(K, T, self.depth_range)

    @property
    def rotation(self):
        return self.extrinsics[:3, :3]

    @property
    def translation(self):
        return self.extrinsics[:3, 3]

    @property
    def center(self):
        """Camera centre in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def features(self):
        img = self.image
        return img[None] if img.ndim == 2 else img

    @property
    def shape(self):
        return self.features.shape[-2:]

    def scaled(self, factor):
        """Same camera for an image downsampled by ``factor``."""
        S = np.diag([1.0 / factor, 1.0 / factor, 1.0])
        return replace(self, intrinsics=S @ self.intrinsics)

    def with_image(self, image):
        return replace(self, image=image)


def validate_camera(K, T, depth_range):
    if K.shape != (3, 3) or T.shape != (4, 4):
        raise InvalidCameraError(f"bad matrix shapes K{K.shape} T{T.shape}")
    if not (np.all(np.isfinite(K)) and np.all(np.isfinite(T))):
        raise InvalidCameraError("non-finite camera matrix")
    if abs(K[1, 0]) > 1e-12 or abs(K[2, 0]) > 1e-12 or abs(K[2, 1]) > 1e-12:
        raise InvalidCameraError("intrinsics are not upper-triangular")
    if K[0, 0] <= 0 or K[1, 1] <= 0:
        raise InvalidCameraError("focal lengths must be positive")
    if K[2, 2] == 0 or abs(np.linalg.det(K)) < 1e-300:
        raise InvalidCameraError("singular intrinsics")
    R = T[:3, :3]
    if np.abs(R.T @ R - np.eye(3)).max() > ORTHO_TOL:
        raise InvalidCameraError("rotation block is not orthonormal")
    if np.linalg.det(R) <= 0:
        raise InvalidCameraError("rotation block has negative determinant")
    if np.any(T[3] != (0.0, 0.0, 0.0, 1.0)):
        raise InvalidCameraError("extrinsics bottom row must be (0, 0, 0, 1)")
    d_min, d_max = depth_range
    if not (0 < d_min < d_max):
        raise InvalidCameraError(f"invalid depth range ({d_min}, {d_max})")


def nearest_rotation(R):
    """Project a nearly orthonormal matrix onto SO(3)."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] *= -1
        Q = U @ Vt
    return Q


def relative_pose(ref, src):
    """Rotation and translation taking reference-camera to source-camera coordinates."""
    rel = src.extrinsics @ np.linalg.inv(ref.extrinsics)
    return rel[:3, :3], rel[:3, 3]


def homography_for_depth(ref, src, d):
    """3x3 map from reference pixels to source pixels via the plane z = d.

    The plane is fronto-parallel in the reference camera. With relative pose
    (R, t) and plane normal n = e_z, points on the plane satisfy
    ``n . X / d = 1``, so ``X_src = (R + t n^T / d) X_ref``.
    """
    if not d > 0:
        raise ValueError(f"depth must be positive, got {d}")
    R, t = relative_pose(ref, src)
    n = np.array([0.0, 0.0, 1.0])
    try:
        K_ref_inv = np.linalg.inv(ref.intrinsics)
    except np.linalg.LinAlgError as exc:
        raise InvalidCameraError("singular reference intrinsics") from exc
    return src.intrinsics @ (R + np.outer(t, n) / d) @ K_ref_inv


def pixel_grid(h, w):
    """Homogeneous continuous coordinates of pixel centres, shape (3, h, w)."""
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return np.stack([xs + 0.5, ys + 0.5, np.ones_like(xs)])


def backproject(depth, cam):
    """World points (3, H, W) for a depth map seen from ``cam``."""
    h, w = depth.shape
    rays = np.linalg.solve(cam.intrinsics, pixel_grid(h, w).reshape(3, -1))
    X_cam = rays * depth.reshape(1, -1)
    X_world = cam.rotation.T @ (X_cam - cam.translation[:, None])
    return X_world.reshape(3, h, w)


def project(points, cam):
    """Continuous pixel coordinates and camera depth of world points (3, ...).

    Returns ``(u, v, z)``; ``u, v`` are NaN where ``z`` is below the
    homogeneous threshold.
    """
    shape = points.shape[1:]
    X = cam.rotation @ points.reshape(3, -1) + cam.translation[:, None]
    p = cam.intrinsics @ X
    z = p[2]
    ok = z > W_EPS
    safe = np.where(ok, z, 1.0)
    u = np.where(ok, p[0] / safe, np.nan)
    v = np.where(ok, p[1] / safe, np.nan)
    return u.reshape(shape), v.reshape(shape), X[2].reshape(shape)


def bilinear_sample(features, u, v):
    """Sample ``features`` (C, H, W) at continuous coordinates ``u, v``.

    A sample is valid when all four bilinear taps lie inside the raster,
    i.e. its pixel-index coordinate is within ``[0, W-1] x [0, H-1]``.
    Invalid samples are zero.
    """
    c, h, w = features.shape
    ix = u - 0.5
    iy = v - 0.5
    finite = np.isfinite(ix) & np.isfinite(iy)
    ix = np.where(finite, ix, -1.0)
    iy = np.where(finite, iy, -1.0)
    mask = (
        finite
        & (ix >= -EDGE_EPS) & (ix <= w - 1 + EDGE_EPS)
        & (iy >= -EDGE_EPS) & (iy <= h - 1 + EDGE_EPS)
    )
    ix = np.clip(ix, 0.0, w - 1)
    iy = np.clip(iy, 0.0, h - 1)
    x0 = np.minimum(np.floor(ix).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(iy).astype(np.intp), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = ix - x0
    fy = iy - y0
    flat = features.reshape(c, -1)
    out = (
        flat[:, y0 * w + x0] * ((1 - fx) * (1 - fy))
        + flat[:, y0 * w + x1] * (fx * (1 - fy))
        + flat[:, y1 * w + x0] * ((1 - fx) * fy)
        + flat[:, y1 * w + x1] * (fx * fy)
    )
    out = np.where(mask, out, 0.0)
    return out, mask


def warp_grid(src_features, H, out_shape=None):
    """Warp a source grid into the reference raster through homography ``H``.

    Returns ``(warped (C, h, w), mask (h, w))``. ``out_shape`` defaults to the
    source raster size.
    """
    feats = src_features[None] if src_features.ndim == 2 else src_features
    H = np.asarray(H, dtype=np.float64)
    if not np.all(np.isfinite(H)):
        raise ValueError("homography must be finite")
    h, w = out_shape if out_shape is not None else feats.shape[-2:]
    q = H @ pixel_grid(h, w).reshape(3, -1)
    ok = q[2] > W_EPS
    safe = np.where(ok, q[2], 1.0)
    u = np.where(ok, q[0] / safe, np.nan).reshape(h, w)
    v = np.where(ok, q[1] / safe, np.nan).reshape(h, w)
    out, mask = bilinear_sample(feats, u, v)
    if src_features.ndim == 2:
        out = out[0]
    return out, mask


def warp_by_depth(src_features, ref, src, depth):
    """Per-pixel warp: lift each reference pixel to ``depth``, project into ``src``.

    ``depth`` has shape ``(..., h, w)`` with ``(h, w)`` the reference raster;
    the output is ``(C, ..., h, w)`` plus a mask ``(..., h, w)``.
    """
    h, w = depth.shape[-2:]
    R, t = relative_pose(ref, src)
    rays = np.linalg.solve(ref.intrinsics, pixel_grid(h, w).reshape(3, -1))
    rot = src.intrinsics @ R @ rays  # (3, h*w)
    trans = src.intrinsics @ t
    d = depth.reshape(-1, h * w)
    q = d[:, None, :] * rot[None] + trans[None, :, None]  # (n, 3, h*w)
    z = q[:, 2]
    ok = (z > W_EPS) & (d > 0)
    safe = np.where(ok, z, 1.0)
    u = np.where(ok, q[:, 0] / safe, np.nan).reshape(depth.shape)
    v = np.where(ok, q[:, 1] / safe, np.nan).reshape(depth.shape)
    return bilinear_sample(src_features, u, v)


# ---------------------------------------------------------------------------
# Feature pyramids


@dataclass(frozen=True, eq=False)
class FeaturePyramid:
    """Four grids, coarse (H/8) to fine (H)."""

    levels: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.levels) != 4:
            raise ValueError("a feature pyramid has exactly four levels")
        for a, b in zip(self.levels, self.levels[1:]):
            if (2 * a.shape[1], 2 * a.shape[2]) != b.shape[1:]:
                raise ValueError("pyramid levels must differ by a factor of 2")

    def __getitem__(self, k):
        return self.levels[k]

    @property
    def channels(self):
        return tuple(level.shape[0] for level in self.levels)


DEFAULT_CHANNELS = (64, 32, 16, 8)
LEVEL_FACTORS = (8, 4, 2, 1)


def area_downsample(grid, factor):
    """Mean over non-overlapping ``factor x factor`` blocks of the last two axes."""
    if factor == 1:
        return grid
    *lead, h, w = grid.shape
    g = grid.reshape(*lead, h // factor, factor, w // factor, factor)
    return g.mean(axis=(-3, -1))


def to_luminance(image):
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        if img.shape[0] == 3:
            return 0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]
        return img.mean(axis=0)
    return img


def photometric_level(lum, grad_weight=1.0):
    gy, gx = np.gradient(lum)
    return np.stack([lum, grad_weight * gx, grad_weight * gy])


def init_tiny_conv(channels=DEFAULT_CHANNELS, seed=0, base=8):
    """He-initialised parameters for the tiny encoder-decoder."""
    c1, c2, c3, c4 = channels
    rng = np.random.default_rng(seed)
    shapes = {
        "enc0": (base, 1),
        "enc1": (2 * base, base),
        "enc2": (4 * base, 2 * base),
        "enc3": (c1, 4 * base),
        "dec2": (c2, c1 + 4 * base),
        "dec1": (c3, c2 + 2 * base),
        "dec0": (c4, c3 + base),
    }
    params = {}
    for name, (cout, cin) in shapes.items():
        w = rng.normal(0.0, np.sqrt(2.0 / (9 * cin)), size=(cout, cin, 3, 3))
        params[f"{name}.w"] = w.astype(np.float32).astype(np.float64)
        params[f"{name}.b"] = np.zeros(cout)
    return params


def tiny_conv_forward(lum, params):
    relu = lambda a: np.maximum(a, 0.0)  # noqa: E731
    x = lum[None, :, :, None]
    e0 = relu(_nn.conv2d(x, params["enc0.w"], params["enc0.b"]))
    e1 = relu(_nn.conv2d(e0, params["enc1.w"], params["enc1.b"], stride=2))
    e2 = relu(_nn.conv2d(e1, params["enc2.w"], params["enc2.b"], stride=2))
    f1 = _nn.conv2d(e2, params["enc3.w"], params["enc3.b"], stride=2)
    f2 = _nn.conv2d(np.concatenate([_nn.upsample2(f1), e2], -1), params["dec2.w"], params["dec2.b"])
    f3 = _nn.conv2d(np.concatenate([_nn.upsample2(f2), e1], -1), params["dec1.w"], params["dec1.b"])
    f4 = _nn.conv2d(np.concatenate([_nn.upsample2(f3), e0], -1), params["dec0.w"], params["dec0.b"])
    return tuple(np.ascontiguousarray(f[0].transpose(2, 0, 1)) for f in (f1, f2, f3, f4))


def extract_features(image, mode="photometric", params=None, channels=DEFAULT_CHANNELS,
                     seed=0, grad_weight=1.0):
    """Build the four-level feature pyramid of an image.

    ``mode="photometric"`` gives three channels per level (intensity and its
    x/y central differences) on area-averaged copies of the image.
    ``mode="tiny-conv"`` runs a small strided encoder-decoder whose level
    channel counts are ``channels``; ``params`` may be a dict or a path to a
    parameter file, otherwise weights are drawn from ``seed``.
    """
    lum = to_luminance(image)
    h, w = lum.shape
    if h % 8 or w % 8 or h == 0 or w == 0:
        raise InputShapeError(f"image dimensions {h}x{w} are not divisible by 8")
    if mode == "photometric":
        levels = tuple(photometric_level(area_downsample(lum, f), grad_weight)
                       for f in LEVEL_FACTORS)
    elif mode == "tiny-conv":
        if params is None:
            params = init_tiny_conv(channels, seed)
        elif not isinstance(params, dict):
            _, params = load_tensors(params, kind="tiny-conv")
        levels = tiny_conv_forward(lum, params)
    else:
        raise ConfigError(f"unknown feature mode {mode!r}")
    return FeaturePyramid(levels)
