"""Four-stage coarse-to-fine depth cascade and its multi-stage loss."""

import logging
import warnings
from dataclasses import dataclass, fields, replace

import numpy as np

from . import costvol, sampler, sampling
from .errors import ConfigError, InputShapeError, NumericError, ParseError
from .geometry import LEVEL_FACTORS, area_downsample, extract_features, to_luminance

logger = logging.getLogger(__name__)

SAMPLERS = ("heuristic", "uniform", "patchnet")


@dataclass(frozen=True)
class CascadeConfig:
    planes: tuple = (48, 16, 8, 8)
    range_scales: tuple = (0.38, 0.16, 0.04)
    loss_weights: tuple = (0.25, 0.5, 1.0, 2.0)
    feature_mode: str = "photometric"
    feature_params: str = ""
    regularizer: str = "filter"
    radii: tuple = (1, 1, 1)
    kernel: str = "box"
    reg_params: str = ""
    sampler: str = "heuristic"
    sampler_params: tuple = ()
    beta: float = 4.0
    cost_scale: float = 10.0
    aggregation: str = "variance"
    normalize_sample_cost: bool = True
    threads: int = 1

    def __post_init__(self):
        if len(self.planes) != 4:
            raise ConfigError("planes needs four entries")
        for D in self.planes:
            sampling.check_plane_count(D)
        if len(self.range_scales) != 3 or not all(0 < r <= 1 for r in self.range_scales):
            raise ConfigError("range_scales needs three entries in (0, 1]")
        if len(self.loss_weights) != 4 or any(w < 0 for w in self.loss_weights):
            raise ConfigError("loss_weights needs four non-negative entries")
        if len(self.radii) != 3 or any(r < 0 for r in self.radii):
            raise ConfigError("radii needs three non-negative entries")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"sampler must be one of {SAMPLERS}")
        if self.sampler_params and len(self.sampler_params) != 3:
            raise ConfigError("sampler_params needs one file per refinement stage")
        if self.beta < 0:
            raise ConfigError("beta must be non-negative")
        if self.cost_scale <= 0:
            raise ConfigError("cost_scale must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    @property
    def scales(self):
        """Range scale of every stage; the first stage spans the full range."""
        return (1.0, *self.range_scales)


# -- flat key = value config files ------------------------------------------

def _convert(text, default, key, path, lineno):
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(default, tuple):
            items = [t.strip() for t in text.split(",") if t.strip()]
            if key in ("planes", "radii"):
                return tuple(int(t) for t in items)
            if key == "sampler_params":
                return tuple(items)
            return tuple(float(t) for t in items)
        return type(default)(text)
    except ValueError as exc:
        raise ParseError(f"bad value for {key!r}: {text!r}", path, lineno) from exc


def parse_config(text, path=None, base=None):
    base = base or CascadeConfig()
    defaults = {f.name: getattr(base, f.name) for f in fields(CascadeConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw!r}", path, lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in defaults:
            raise ParseError(f"unknown key {key!r}", path, lineno)
        values[key] = _convert(val, defaults[key], key, path, lineno)
    return replace(base, **values)


def load_config(path, base=None):
    with open(path) as f:
        return parse_config(f.read(), path, base)


def format_config(cfg):
    lines = []
    for f in fields(CascadeConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ", ".join(str(x) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


# -- pipeline -----------------------------------------------------------------

def upsample_bilinear(grid, factor=2):
    """Pixel-centre-aligned bilinear upsampling of the last two axes."""
    *lead, h, w = grid.shape
    ys = np.clip((np.arange(h * factor) + 0.5) / factor - 0.5, 0, h - 1)
    xs = np.clip((np.arange(w * factor) + 0.5) / factor - 0.5, 0, w - 1)
    y0 = np.minimum(np.floor(ys).astype(int), max(h - 2, 0))
    x0 = np.minimum(np.floor(xs).astype(int), max(w - 2, 0))
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    g = grid
    top = g[..., y0, :][..., x0] * (1 - fx) + g[..., y0, :][..., x1] * fx
    bot = g[..., y1, :][..., x0] * (1 - fx) + g[..., y1, :][..., x1] * fx
    return top * (1 - fy) + bot * fy


def upsample_nearest(grid, factor=2):
    return grid.repeat(factor, axis=-2).repeat(factor, axis=-1)


def _load_sampler_params(cfg, stage):
    D = cfg.planes[stage]
    if cfg.sampler_params:
        params = sampler.PatchSamplerParams.load(cfg.sampler_params[stage - 1])
        if params.n_planes != D:
            raise ConfigError(f"sampler file for stage {stage + 1} is for {params.n_planes} planes")
        return params
    return sampler.PatchSamplerParams.init(D, seed=stage)


def _distribution(cfg, inp, stage):
    if cfg.sampler == "uniform":
        return sampling.uniform_distribution(inp.n_planes, inp.shape)
    if cfg.sampler == "heuristic":
        return sampler.heuristic_distribution(inp, cfg.beta)
    params = _load_sampler_params(cfg, stage)
    h, w = inp.shape
    ph, pw = -h % sampler.PATCH, -w % sampler.PATCH
    if ph == 0 and pw == 0:
        return sampler.patchnet_forward(inp, params)
    # edge-pad to whole patches, run, crop back
    pad = ((0, ph), (0, pw))
    padded = sampler.SamplerInput(
        np.pad(inp.sample_cost, ((0, 0),) + pad, mode="edge"),
        np.pad(inp.prev_depth, pad, mode="edge"),
        np.pad(inp.reference_image, pad, mode="edge"),
        inp.n_planes, inp.stage_range, inp.deviation_unit)
    return sampler.patchnet_forward(padded, params)[:, :h, :w]


def run_cascade(ref, sources, cfg=None):
    """Estimate the reference depth map at four resolutions (coarse first).

    ``ref`` and ``sources`` are full-resolution :class:`CameraView` objects
    whose images are luminance (or RGB) in ``[0, 1]``.
    """
    cfg = cfg or CascadeConfig()
    if not sources:
        raise ConfigError("at least one source view is required")
    h, w = ref.shape
    if h % 8 or w % 8:
        raise InputShapeError(f"image dimensions {h}x{w} are not divisible by 8")
    d_min, d_max = ref.depth_range
    full_range = d_max - d_min
    views = [ref, *sources]
    for v in sources:
        if tuple(v.shape) != (h, w):
            raise InputShapeError("all views must share the reference resolution")
    lums = [to_luminance(v.image) for v in views]
    pyramids = [extract_features(lum, cfg.feature_mode, cfg.feature_params or None) for lum in lums]

    estimates = []
    prev_depth = prev_cost = None
    prev_unit = 1.0
    for k, factor in enumerate(LEVEL_FACTORS):
        D = cfg.planes[k]
        stage_views = [v.scaled(factor).with_image(p[k]) for v, p in zip(views, pyramids)]
        sh, sw = h // factor, w // factor
        scale = cfg.scales[k]
        dR = sampling.stage_range(scale, d_min, d_max)
        if k == 0:
            center = np.full((sh, sw), 0.5 * (d_min + d_max))
            P = sampling.uniform_distribution(D, (sh, sw))
            planes = sampling.place_planes(center, P, dR, scale)
        else:
            up_depth = upsample_bilinear(prev_depth)
            up_cost = upsample_nearest(prev_cost)
            inp = sampler.SamplerInput(
                sample_cost=up_cost,
                prev_depth=np.clip((up_depth - d_min) / full_range, 0.0, 1.0),
                reference_image=np.clip(area_downsample(lums[0], factor), 0.0, 1.0),
                n_planes=D,
                stage_range=dR,
                deviation_unit=prev_unit,
            )
            P = _distribution(cfg, inp, k)
            planes = sampling.place_planes(up_depth, P, dR, scale)
        planes = planes.clamped(d_min, d_max)

        vol = costvol.build_cost_volume(stage_views[0], stage_views[1:], planes, level=k,
                                        aggregation=cfg.aggregation, threads=cfg.threads)
        logits = costvol.regularize(costvol.relative_cost(vol), cfg.regularizer, cfg.radii, cfg.kernel,
                                    cfg.reg_params or None, scale=cfg.cost_scale)
        est = costvol.depth_regression(logits, planes)
        est = replace(est, stage_range=dR)
        bad = ~np.isfinite(est.depth)
        if bad.any():
            raise NumericError(f"stage {k + 1} produced {int(bad.sum())} non-finite depths",
                               stage=k + 1, affected=int(bad.sum()))
        logger.debug("stage %d: %dx%dx%d, range %.4g", k + 1, sh, sw, D, dR)
        estimates.append(est)

        prev_depth = est.depth
        prev_cost = sampling.sample_cost(planes, est.depth, est.prob,
                                         normalize=cfg.normalize_sample_cost)
        prev_unit = dR if cfg.normalize_sample_cost else 1.0
    return estimates


# -- loss ---------------------------------------------------------------------

class EmptyStageWarning(UserWarning):
    pass


def smooth_l1(x):
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    out = np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)
    return out if out.ndim else float(out)


def ground_truth_pyramid(depth, valid=None):
    """Area-averaged ground truth at the four stage resolutions.

    A coarse pixel is invalid if any contributing fine pixel is invalid.
    """
    if valid is None:
        valid = np.isfinite(depth)
    filled = np.where(valid, depth, 0.0)
    depths, masks = [], []
    for f in LEVEL_FACTORS:
        depths.append(area_downsample(filled, f))
        masks.append(area_downsample(valid.astype(np.float64), f) == 1.0)
    return depths, masks


def cascade_loss(estimates, ground_truth, valid_masks, weights=(0.25, 0.5, 1.0, 2.0)):
    """Weighted sum over stages of the mean smooth-L1 depth error on valid pixels."""
    total = 0.0
    for k, (est, gt, mask, lam) in enumerate(zip(estimates, ground_truth, valid_masks, weights)):
        depth = est.depth if isinstance(est, costvol.DepthEstimate) else np.asarray(est)
        gt = np.asarray(gt, dtype=np.float64)
        mask = np.asarray(mask, dtype=bool) & np.isfinite(gt) & np.isfinite(depth)
        if not mask.any():
            warnings.warn(f"stage {k + 1} has no valid pixels", EmptyStageWarning, stacklevel=2)
            continue
        total += lam * float(np.mean(smooth_l1(depth[mask] - gt[mask])))
    return total
