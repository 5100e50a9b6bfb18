"""Fast oracle checks runnable from the command line (``nucv selftest``)."""

import time

import numpy as np

from . import cascade, costvol, sampling
from .geometry import CameraView, homography_for_depth, warp_by_depth


def _random_camera(rng, h=4, w=4, image=None):
    f = rng.uniform(3.0, 6.0)
    K = np.array([[f, 0.0, w / 2], [0.0, f * rng.uniform(0.9, 1.1), h / 2], [0.0, 0.0, 1.0]])
    a = rng.normal(size=3) * 0.1
    ax = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    R = np.eye(3) + np.sin(np.linalg.norm(a)) / np.linalg.norm(a) * ax + \
        (1 - np.cos(np.linalg.norm(a))) / np.linalg.norm(a) ** 2 * ax @ ax
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = rng.normal(size=3) * 0.2
    if image is None:
        image = rng.uniform(size=(h, w))
    return CameraView(K, T, image, (1.0, 10.0))


def check_homography(rng, n=200):
    worst = 0.0
    for _ in range(n):
        ref, src = _random_camera(rng), _random_camera(rng)
        d = rng.uniform(1.0, 10.0)
        x = np.array([rng.uniform(0, 4), rng.uniform(0, 4), 1.0])
        p = homography_for_depth(ref, src, d) @ x
        X = ref.rotation.T @ (np.linalg.solve(ref.intrinsics, x) * d - ref.translation)
        q = src.intrinsics @ (src.rotation @ X + src.translation)
        a, b = p[:2] / p[2], q[:2] / q[2]
        worst = max(worst, float(np.abs(a - b).max() / max(np.abs(b).max(), 1.0)))
    return worst < 1e-9, f"max relative deviation {worst:.2e}"


def check_centering(rng, n=2000):
    worst = 0.0
    for D in (4, 8, 16, 48):
        dd = rng.uniform(0.01, 1.0, size=(D, n))
        prev = rng.uniform(1.0, 10.0, size=n)
        L = sampling.plane_depths(prev, dd)
        mid = 0.5 * (L[D // 2 - 1] + L[D // 2])
        worst = max(worst, float(np.max(np.abs(mid - prev) / prev)))
    return worst <= 1e-12, f"max relative offset {worst:.2e}"


def check_regression(rng):
    planes = np.array([6.5, 8.5, 11.5, 15.5])[:, None, None]
    eq = costvol.depth_regression(np.zeros((4, 1, 1)), planes).depth.item()
    hot = costvol.depth_regression(np.array([0.0, 0.0, 1e6, 0.0])[:, None, None], planes).depth.item()
    return eq == 10.5 and hot == 11.5, f"equal logits {eq}, saturated {hot}"


def _scalar_variance(ref, src, depths):
    D, h, w = depths.shape
    out = np.zeros((D, h, w))
    img = src.image
    for j in range(D):
        for y in range(h):
            for x in range(w):
                d = depths[j, y, x]
                Xc = np.linalg.solve(ref.intrinsics, [x + 0.5, y + 0.5, 1.0]) * d
                Xw = ref.rotation.T @ (Xc - ref.translation)
                p = src.intrinsics @ (src.rotation @ Xw + src.translation)
                u, v = p[0] / p[2] - 0.5, p[1] / p[2] - 0.5
                if -1e-9 <= u <= w - 1 + 1e-9 and -1e-9 <= v <= h - 1 + 1e-9:
                    x0, y0 = min(int(np.floor(u)), w - 2), min(int(np.floor(v)), h - 2)
                    fx, fy = u - x0, v - y0
                    s = (img[y0, x0] * (1 - fx) * (1 - fy) + img[y0, x0 + 1] * fx * (1 - fy)
                         + img[y0 + 1, x0] * (1 - fx) * fy + img[y0 + 1, x0 + 1] * fx * fy)
                    r = ref.image[y, x]
                    m = 0.5 * (r + s)
                    out[j, y, x] = 0.5 * ((r - m) ** 2 + (s - m) ** 2)
                else:
                    out[j, y, x] = np.nan
    return out


def check_small_volume(rng):
    ref = _random_camera(rng)
    src = _random_camera(rng)
    depths = rng.uniform(2.0, 8.0, size=(4, 4, 4))
    vol = costvol.build_cost_volume(ref, [src], depths)
    want = _scalar_variance(ref, src, depths)
    ok = np.isfinite(want)
    err = float(np.abs(vol.cost[ok] - want[ok]).max()) if ok.any() else 0.0
    agree = err < 1e-9 and np.array_equal(vol.counts > 0, ok)
    return agree, f"max deviation {err:.2e} over {int(ok.sum())} valid cells"


def check_loss(rng):
    est = [np.full((1, 1), 1.5) for _ in range(4)]
    gt = [np.ones((1, 1)) for _ in range(4)]
    masks = [np.ones((1, 1), bool) for _ in range(4)]
    val = cascade.cascade_loss(est, gt, masks)
    return val == 0.46875, f"loss {val!r}"


def check_warp_identity(rng):
    cam = _random_camera(rng, 8, 8)
    feats = cam.features
    out, mask = warp_by_depth(feats, cam, cam, np.full((8, 8), 3.0))
    err = float(np.abs(out[:, mask] - feats[:, mask]).max())
    return err < 1e-9 and mask.all(), f"self-warp deviation {err:.2e}"


CHECKS = (
    ("homography vs lift-transform-project", check_homography),
    ("plane placement centring", check_centering),
    ("depth regression oracle values", check_regression),
    ("self warp is identity", check_warp_identity),
    ("vectorised vs scalar cost volume", check_small_volume),
    ("multi-stage loss example", check_loss),
)


def run(seed=0, out=print):
    """Run every check; returns True when all pass."""
    rng = np.random.default_rng(seed)
    all_ok = True
    for name, fn in CHECKS:
        t = time.perf_counter()
        ok, detail = fn(rng)
        all_ok &= bool(ok)
        out(f"{'PASS' if ok else 'FAIL'}  {name}: {detail} ({time.perf_counter() - t:.2f}s)")
    return all_ok
