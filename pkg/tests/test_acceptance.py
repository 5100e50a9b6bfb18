"""Acceptance criteria 1-10.

Each test prints one ``[criterion N] PASS|FAIL`` line (visible under ``-v``
or ``-s``) before asserting, so a failing criterion still reports its
measured value.
"""

import time
import warnings

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from nucv.cascade import CascadeConfig, cascade_loss, run_cascade, smooth_l1
from nucv.costvol import build_cost_volume, depth_regression, regularize, relative_cost
from nucv.fusion import EmptyCloudWarning, FusionConfig, fuse
from nucv.geometry import CameraView, homography_for_depth
from nucv.metrics import evaluate_depth, final_spacing
from nucv.sampler import (PatchSamplerParams, SamplerInput, heuristic_distribution, patchnet_forward,
                          patchnet_gradient, probe_objective)
from nucv.sampling import (HypothesisPlanes, intervals_from_distribution, plane_depths, sample_cost,
                           uniform_distribution)
from nucv.synthetic import SyntheticScene, generate_synthetic

SPACING = final_spacing((3.0, 7.0))  # 0.04 * 4 / 8 = 0.02


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return emit


def camera(rng, h, w, image=None):
    f = rng.uniform(0.8, 1.5) * w
    K = np.array([[f, rng.uniform(-0.5, 0.5), w / 2 + rng.uniform(-1, 1)],
                  [0.0, f * rng.uniform(0.9, 1.1), h / 2 + rng.uniform(-1, 1)],
                  [0.0, 0.0, 1.0]])
    T = np.eye(4)
    T[:3, :3] = Rotation.from_rotvec(rng.normal(size=3) * 0.15).as_matrix()
    T[:3, 3] = rng.normal(size=3) * 0.2
    if image is None:
        image = rng.uniform(size=(h, w))
    return CameraView(K, T, image, (1.0, 10.0))


# -- 1 -------------------------------------------------------------------------

def test_c1_homography_oracle(report):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        ref, src = camera(rng, 8, 8), camera(rng, 8, 8)
        d = rng.uniform(1.0, 10.0)
        x = np.array([rng.uniform(0, 8), rng.uniform(0, 8), 1.0])
        p = homography_for_depth(ref, src, d) @ x
        Xw = ref.rotation.T @ (np.linalg.inv(ref.intrinsics) @ x * d - ref.translation)
        q = src.intrinsics @ (src.rotation @ Xw + src.translation)
        a, b = p[:2] / p[2], q[:2] / q[2]
        worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1.0))))
    dt = time.perf_counter() - t0
    ok = report(1, worst < 1e-9 and dt < 1.0, f"max rel deviation {worst:.2e}, {dt:.3f}s")
    assert ok


# -- 2 -------------------------------------------------------------------------

def test_c2_centering_identity(report):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = 0.0
    for D in (4, 8, 16, 48):
        dd = rng.uniform(0.001, 1.0, size=(D, 10000))
        prev = rng.uniform(0.5, 100.0, size=10000)
        L = plane_depths(prev, dd)
        mid = 0.5 * (L[D // 2 - 1] + L[D // 2])
        worst = max(worst, float(np.max(np.abs(mid - prev) / prev)))
    dt = time.perf_counter() - t0
    ok = report(2, worst <= 1e-12 and dt < 1.0, f"max rel offset {worst:.2e}, {dt:.3f}s")
    assert ok


# -- 3 -------------------------------------------------------------------------

def test_c3_normalization(report):
    rng = np.random.default_rng(3)
    worst_s, worst_d = 0.0, 0.0
    for D_prev, D in ((48, 16), (16, 8), (8, 8)):
        h, w = 16, 24
        dR_prev = rng.uniform(0.5, 4.0)
        prev = rng.uniform(3, 7, size=(h, w))
        planes = HypothesisPlanes(plane_depths(prev, intervals_from_distribution(
            rng.dirichlet(np.ones(D_prev), size=(h, w)).transpose(2, 0, 1), dR_prev)), dR_prev)
        logits = rng.normal(size=(D_prev, h, w)) * 3
        prob = np.exp(logits) / np.exp(logits).sum(axis=0)
        est = (prob * planes.depths).sum(axis=0)
        S = sample_cost(planes, est, prob)
        worst_s = max(worst_s, float(np.abs(S.sum(axis=0) - 1).max()))
        dR = dR_prev * rng.uniform(0.1, 0.9)
        inp = SamplerInput(S, rng.uniform(size=(h, w)), rng.uniform(size=(h, w)), D, dR, dR_prev)
        producers = [heuristic_distribution(inp, 4.0), uniform_distribution(D, (h, w)),
                     patchnet_forward(inp, PatchSamplerParams.init(D, seed=D))]
        for P in producers:
            dd = intervals_from_distribution(P, dR)
            worst_d = max(worst_d, float(np.abs(dd.sum(axis=0) - dR).max()))
    # zero deviation: every previous plane at the estimate
    flat = HypothesisPlanes(np.full((8, 4, 4), 5.0), 1.0)
    S0 = sample_cost(flat, np.full((4, 4), 5.0), np.full((8, 4, 4), 1 / 8))
    exact_uniform = bool(np.all(S0 == 1 / 8))
    ok = report(3, worst_s < 1e-6 and worst_d < 1e-6 and exact_uniform,
                f"|sum dS - 1| {worst_s:.1e}, |sum dd - dR| {worst_d:.1e}, zero-deviation uniform {exact_uniform}")
    assert ok


# -- 4 -------------------------------------------------------------------------

def test_c4_depth_regression(report):
    rng = np.random.default_rng(4)
    planes = np.array([6.5, 8.5, 11.5, 15.5])[:, None, None]
    eq = depth_regression(np.zeros((4, 1, 1)), planes).depth.item()
    hot_ok = True
    for j in range(4):
        logits = np.zeros((4, 1, 1))
        logits[j] = 1e4
        hot_ok &= depth_regression(logits, planes).depth.item() == planes[j, 0, 0]
    L = np.sort(rng.uniform(1, 20, size=(8, 10000)), axis=0)
    logits = rng.normal(size=(8, 10000)) * rng.uniform(0.1, 50, size=10000)
    d = depth_regression(logits, L).depth
    hull = bool(np.all(d >= L.min(axis=0)) and np.all(d <= L.max(axis=0)))
    ok = report(4, eq == 10.5 and hot_ok and hull, f"equal logits {eq}, one-hot exact {hot_ok}, hull {hull}")
    assert ok


# -- 5 -------------------------------------------------------------------------

def test_c5_sampler_gradient(report):
    rng = np.random.default_rng(5)
    D, h, w = 4, 8, 8
    logits = rng.normal(size=(6, h, w))
    inp = SamplerInput(np.exp(logits) / np.exp(logits).sum(axis=0), rng.uniform(size=(h, w)),
                       rng.uniform(size=(h, w)), D, 0.8, 2.0)
    params = PatchSamplerParams.init(D, seed=5)
    upstream = rng.normal(size=(D, h, w))
    step, batch = 1e-5, 64
    t0 = time.perf_counter()
    grads = patchnet_gradient(inp, params, upstream)
    worst, n = 0.0, 0
    for name, g in grads.items():
        flat = g.ravel()
        for s in range(0, flat.size, batch):
            idx = np.arange(s, min(s + batch, flat.size))
            fp, fm = probe_objective(inp, params, upstream, name, idx, step)
            num = (fp - fm) / (2 * step)
            ana = flat[idx]
            rel = np.abs(ana - num) / np.maximum(np.maximum(np.abs(ana), np.abs(num)), 1e-6)
            worst = max(worst, float(rel.max()))
            n += idx.size
    dt = time.perf_counter() - t0
    ok = report(5, worst < 1e-4 and dt < 30.0, f"{n} parameters, max rel error {worst:.2e}, {dt:.1f}s")
    assert n == params.size
    assert ok


# -- 6 -------------------------------------------------------------------------

def _scalar_sample(img, u, v):
    h, w = img.shape
    ix, iy = u - 0.5, v - 0.5
    if not (-1e-9 <= ix <= w - 1 + 1e-9 and -1e-9 <= iy <= h - 1 + 1e-9):
        return None
    ix = min(max(ix, 0.0), w - 1)
    iy = min(max(iy, 0.0), h - 1)
    x0 = min(int(ix), w - 2)
    y0 = min(int(iy), h - 2)
    fx, fy = ix - x0, iy - y0
    return (img[y0, x0] * (1 - fx) * (1 - fy) + img[y0, x0 + 1] * fx * (1 - fy)
            + img[y0 + 1, x0] * (1 - fx) * fy + img[y0 + 1, x0 + 1] * fx * fy)


def _scalar_pipeline(ref, src, depths, scale):
    D, h, w = depths.shape
    Kinv = np.linalg.inv(ref.intrinsics)
    cost = [[[None] * w for _ in range(h)] for _ in range(D)]
    for j in range(D):
        for y in range(h):
            for x in range(w):
                d = depths[j, y, x]
                Xc = Kinv @ np.array([x + 0.5, y + 0.5, 1.0]) * d
                Xw = ref.rotation.T @ (Xc - ref.translation)
                p = src.intrinsics @ (src.rotation @ Xw + src.translation)
                s = _scalar_sample(src.image, p[0] / p[2], p[1] / p[2]) if p[2] > 1e-12 else None
                if s is not None:
                    r = ref.image[y, x]
                    m = (r + s) / 2
                    cost[j][y][x] = ((r - m) ** 2 + (s - m) ** 2) / 2
    valid = [c for plane in cost for row in plane for c in row if c is not None]
    sentinel = max(valid)
    vol = np.array([[[sentinel if c is None else c for c in row] for row in plane] for plane in cost])
    med = sorted(vol.ravel())
    med = (med[len(med) // 2 - 1] + med[len(med) // 2]) / 2
    vol_rel = vol / med
    # 3x3x3 box average with replicated borders
    smooth = np.zeros_like(vol)
    for j in range(D):
        for y in range(h):
            for x in range(w):
                acc = 0.0
                for dj in (-1, 0, 1):
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            jj = min(max(j + dj, 0), D - 1)
                            yy = min(max(y + dy, 0), h - 1)
                            xx = min(max(x + dx, 0), w - 1)
                            acc += vol_rel[jj, yy, xx]
                smooth[j, y, x] = acc / 27
    depth = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            lg = [-scale * smooth[j, y, x] for j in range(D)]
            top = max(lg)
            e = [np.exp(v - top) for v in lg]
            depth[y, x] = sum(e[j] * depths[j, y, x] for j in range(D)) / sum(e)
    return vol, depth


def test_c6_small_pipeline_oracle(report):
    rng = np.random.default_rng(6)
    ref, src = camera(rng, 4, 4), camera(rng, 4, 4)
    depths = np.sort(rng.uniform(2.0, 8.0, size=(4, 4, 4)), axis=0)
    vol = build_cost_volume(ref, [src], depths)
    logits = regularize(relative_cost(vol), "filter", (1, 1, 1), "box", scale=10.0)
    est = depth_regression(logits, depths)
    want_vol, want_depth = _scalar_pipeline(ref, src, depths, 10.0)
    e_vol = float(np.abs(vol.cost - want_vol).max())
    e_depth = float(np.abs(est.depth - want_depth).max())
    ok = report(6, e_vol < 1e-9 and e_depth < 1e-9,
                f"cost deviation {e_vol:.1e}, depth deviation {e_depth:.1e}, "
                f"{int((vol.counts > 0).sum())}/64 valid cells")
    assert (vol.counts > 0).any()
    assert ok


# -- 7 -------------------------------------------------------------------------

def test_c7_synthetic_plane(report):
    b = generate_synthetic(SyntheticScene(kind="plane"), 5, (64, 80))
    t0 = time.perf_counter()
    final = run_cascade(b.views[0], b.sources(0), CascadeConfig(sampler="uniform", threads=1))[-1]
    dt = time.perf_counter() - t0
    m = evaluate_depth(final.depth, b.ground_truth[0], spacing=SPACING)
    ok = report(7, m.mae < SPACING and dt < 60.0, f"MAE {m.mae:.5f} (< {SPACING}), {dt:.2f}s")
    assert ok


# -- 8 -------------------------------------------------------------------------

def _sphere_mae(b, sampler):
    cfg = CascadeConfig(sampler=sampler)
    errs = [evaluate_depth(run_cascade(v, b.sources(i), cfg)[-1].depth, b.ground_truth[i]).mae
            for i, v in enumerate(b.views)]
    return float(np.mean(errs))


def test_c8_nonuniform_vs_uniform(report):
    rows = []
    for seed in range(5):
        b = generate_synthetic(SyntheticScene(kind="sphere"), 5, (64, 80), seed=seed)
        rows.append((seed, _sphere_mae(b, "uniform"), _sphere_mae(b, "heuristic")))
    wins = sum(h <= u for _, u, h in rows)
    detail = ", ".join(f"seed {s}: {u:.4f} vs {h:.4f}" for s, u, h in rows)
    ok = report(8, wins == 5, f"heuristic <= uniform on {wins}/5 ({detail})")
    assert ok


# -- 9 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def sphere_depths():
    scene = SyntheticScene(kind="sphere")
    b = generate_synthetic(scene, 5, (64, 80))
    ests = [run_cascade(v, b.sources(i))[-1] for i, v in enumerate(b.views)]
    return scene, b, ests


def _count(b, ests, cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyCloudWarning)
        return len(fuse(ests, b.views, cfg, b.pairs))


def test_c9_fusion(report, sphere_depths):
    scene, b, ests = sphere_depths
    cloud = fuse(ests, b.views, FusionConfig(), b.pairs)
    dist = scene.surface_distance(cloud.xyz)
    mean = float(dist.mean()) if len(cloud) else float("inf")
    sweeps = {
        "tau_p": [FusionConfig(tau_p=v) for v in (4.0, 2.0, 1.0, 0.5, 0.25)],
        "tau_d": [FusionConfig(tau_d=v) for v in (0.05, 0.02, 0.01, 0.005, 0.002)],
        "m": [FusionConfig(min_views=v) for v in (1, 2, 3, 4)],
    }
    mono = {}
    for key, cfgs in sweeps.items():
        counts = [_count(b, ests, c) for c in cfgs]
        mono[key] = counts == sorted(counts, reverse=True)
    ok = report(9, len(cloud) > 0 and mean < SPACING and all(mono.values()),
                f"{len(cloud)} points, mean surface distance {mean:.5f} (< {SPACING}), monotone {mono}")
    assert ok


# -- 10 ------------------------------------------------------------------------

def test_c10_loss(report):
    est = [np.full((3, 3), 2.5)] * 4
    gt = [np.full((3, 3), 2.0)] * 4
    masks = [np.ones((3, 3), bool)] * 4
    loss = cascade_loss(est, gt, masks, (0.25, 0.5, 1.0, 2.0))
    gap = max(abs(smooth_l1(s * (1 - 1e-12)) - smooth_l1(s * (1 + 1e-12))) for s in (1.0, -1.0))
    ok = report(10, loss == 0.46875 and gap < 1e-10 and smooth_l1(1.0) == 0.5,
                f"loss {loss!r}, jump at |x|=1 {gap:.1e}")
    assert ok
