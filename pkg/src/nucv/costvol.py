"""Plane-sweep cost volumes, regularisation and soft depth regression."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _nn
from .errors import ConfigError, ParseError
from .geometry import warp_by_depth
from .paramfile import load_tensors
from .sampling import HypothesisPlanes


@dataclass(frozen=True, eq=False)
class CostVolume:
    """Aggregated matching cost ``(D, H, W)``.

    ``counts`` holds the number of source views that contributed at each
    plane and pixel; entries with zero count carry ``sentinel``.
    """

    cost: np.ndarray
    counts: np.ndarray
    sentinel: float

    @property
    def shape(self):
        return self.cost.shape


@dataclass(frozen=True, eq=False)
class DepthEstimate:
    """Regressed depth ``(H, W)`` with its plane probabilities ``(D, H, W)``."""

    depth: np.ndarray
    prob: np.ndarray
    planes: np.ndarray
    stage_range: float = float("nan")

    @property
    def confidence(self):
        return self.prob.max(axis=0)

    def neighborhood_confidence(self):
        """Probability mass of the winning plane and its two neighbours."""
        D = self.prob.shape[0]
        win = self.prob.argmax(axis=0)
        total = np.zeros(self.depth.shape)
        for off in (-1, 0, 1):
            j = win + off
            ok = (j >= 0) & (j < D)
            picked = np.take_along_axis(self.prob, np.clip(j, 0, D - 1)[None], axis=0)[0]
            total += np.where(ok, picked, 0.0)
        return total


def _plane_chunk(ref_feats, ref, sources, depths, aggregation):
    warped = []
    masks = []
    for src in sources:
        w, m = warp_by_depth(src.features, ref, src, depths)
        warped.append(w)
        masks.append(m)
    warped = np.stack(warped)  # (S, C, d, H, W)
    masks = np.stack(masks)  # (S, d, H, W)
    counts = masks.sum(axis=0)
    ref_b = ref_feats[:, None]  # (C, 1, H, W)
    m = masks[:, None]
    if aggregation == "variance":
        n = counts + 1
        mean = (ref_b + (warped * m).sum(axis=0)) / n
        sq = (ref_b - mean) ** 2 + (((warped - mean) ** 2) * m).sum(axis=0)
        cost = (sq / n).mean(axis=0)
    elif aggregation == "msd":
        sq = (((warped - ref_b) ** 2) * m).sum(axis=0).mean(axis=0)
        cost = sq / np.maximum(counts, 1)
    else:
        raise ConfigError(f"unknown aggregation {aggregation!r}")
    return cost, counts


def build_cost_volume(ref, sources, planes, level=None, aggregation="variance", threads=1):
    """Warp each source onto the reference's per-pixel planes and aggregate.

    ``ref`` and ``sources`` are :class:`~nucv.geometry.CameraView` objects
    whose images are feature grids at the plane resolution. The default
    aggregation is the per-channel variance across the reference and every
    valid source, averaged over channels; ``"msd"`` is the mean squared
    difference to the reference. Work is split over plane chunks when
    ``threads > 1``; chunks write disjoint slices.
    """
    if not sources:
        raise ConfigError("at least one source view is required")
    depths = planes.depths if isinstance(planes, HypothesisPlanes) else np.asarray(planes)
    if depths.shape[1:] != tuple(ref.shape):
        raise ConfigError(f"plane grid {depths.shape[1:]} does not match reference {ref.shape}")
    D = depths.shape[0]
    cost = np.empty(depths.shape)
    counts = np.empty(depths.shape, dtype=np.int64)
    ref_feats = ref.features

    def work(sl):
        c, n = _plane_chunk(ref_feats, ref, sources, depths[sl], aggregation)
        cost[sl] = c
        counts[sl] = n

    if threads > 1 and D > 1:
        bounds = np.linspace(0, D, min(threads, D) + 1).astype(int)
        chunks = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, chunks))
    else:
        work(slice(0, D))

    empty = counts == 0
    valid_cost = cost[~empty]
    sentinel = float(valid_cost.max()) if valid_cost.size else 1.0
    cost[empty] = sentinel
    return CostVolume(cost, counts, sentinel)


def relative_cost(vol):
    """Divide a volume by its median cost so a logit scale is dimensionless.

    Feature magnitudes differ between levels and feature modes; the median
    keeps one temperature usable across all of them.
    """
    cost = vol.cost if isinstance(vol, CostVolume) else np.asarray(vol, dtype=np.float64)
    med = float(np.median(cost))
    if not med > 0:
        med = 1.0
    if isinstance(vol, CostVolume):
        return CostVolume(cost / med, vol.counts, vol.sentinel / med)
    return cost / med


def init_tiny_3d(hidden=4, seed=0):
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, np.sqrt(2.0 / 27), size=(hidden, 1, 3, 3, 3))
    w2 = rng.normal(0.0, np.sqrt(1.0 / (27 * hidden)), size=(1, hidden, 3, 3, 3))
    return {
        "conv1.w": w1.astype(np.float32).astype(np.float64), "conv1.b": np.zeros(hidden),
        "conv2.w": w2.astype(np.float32).astype(np.float64), "conv2.b": np.zeros(1),
    }


def regularize(vol, mode="filter", radii=(1, 1, 1), kernel="box", params=None, scale=1.0):
    """Smooth a cost volume and turn it into logits (``-scale * cost``).

    ``radii`` are ``(x, y, plane)`` half-widths for ``mode="filter"``; with
    ``kernel="gaussian"`` they are standard deviations instead. Borders
    replicate the edge value, so constant volumes stay constant.
    ``mode="tiny-3d"`` runs a two-layer 3x3x3 convolution stack from
    ``params`` (dict or parameter-file path).
    """
    cost = vol.cost if isinstance(vol, CostVolume) else np.asarray(vol, dtype=np.float64)
    if mode == "filter":
        rx, ry, rp = radii
        out = cost
        for axis, r in ((2, rx), (1, ry), (0, rp)):
            if r <= 0:
                continue
            if kernel == "box":
                out = ndimage.uniform_filter1d(out, size=2 * int(r) + 1, axis=axis, mode="nearest")
            elif kernel == "gaussian":
                out = ndimage.gaussian_filter1d(out, sigma=r, axis=axis, mode="nearest")
            else:
                raise ConfigError(f"unknown kernel {kernel!r}")
    elif mode == "tiny-3d":
        if params is None:
            params = init_tiny_3d()
        elif not isinstance(params, dict):
            _, params = load_tensors(params, kind="tiny-3d")
        x = cost[..., None]
        hdn = np.maximum(_nn.conv3d(x, params["conv1.w"], params["conv1.b"]), 0.0)
        out = _nn.conv3d(hdn, params["conv2.w"], params["conv2.b"])[..., 0]
    else:
        raise ConfigError(f"unknown regulariser mode {mode!r}")
    return -scale * out


def softmax(logits, axis=0):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def depth_regression(logits, planes):
    """Probability-weighted mean of plane depths."""
    depths = planes.depths if isinstance(planes, HypothesisPlanes) else np.asarray(planes)
    if logits.shape != depths.shape:
        raise ConfigError(f"logit shape {logits.shape} != plane shape {depths.shape}")
    P = softmax(logits, axis=0)
    depth = (P * depths).sum(axis=0)
    # guard the convex-hull bound against rounding
    depth = np.clip(depth, depths.min(axis=0), depths.max(axis=0))
    return DepthEstimate(depth, P, depths)


# ---------------------------------------------------------------------------
# Debug dumps

DUMP_MAGIC = "NUCV-COST 1"


def write_cost_volume(path, vol, stage=0):
    cost = vol.cost if isinstance(vol, CostVolume) else np.asarray(vol)
    D, H, W = cost.shape
    header = f"{DUMP_MAGIC}\nstage {stage}\ndims {D} {H} {W}\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(cost, dtype="<f4").tobytes())


def read_cost_volume(path):
    """Return ``(stage, cost array)``."""
    with open(path, "rb") as f:
        lines = [f.readline().decode("ascii", "replace").strip() for _ in range(3)]
        payload = f.read()
    if lines[0] != DUMP_MAGIC:
        raise ParseError("not a cost-volume dump", path, 1)
    try:
        stage = int(lines[1].split()[1])
        D, H, W = (int(v) for v in lines[2].split()[1:4])
    except (IndexError, ValueError) as exc:
        raise ParseError("malformed cost-volume header", path) from exc
    if len(payload) != 4 * D * H * W:
        raise ParseError("payload size does not match header", path)
    return stage, np.frombuffer(payload, dtype="<f4").reshape(D, H, W).astype(np.float64)
