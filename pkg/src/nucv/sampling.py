"""Hypothesis-plane placement from per-pixel sampling distributions.

All per-pixel vectors are stored plane-first: a distribution over ``D``
planes for an ``H x W`` grid has shape ``(D, H, W)``; a single pixel is just
shape ``(D,)``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True, eq=False)
class HypothesisPlanes:
    """Per-pixel plane depths ``(D, ...)`` for one stage.

    ``stage_range`` is the hypothesis range in depth units and ``scale`` the
    fraction of the full depth range it represents.
    """

    depths: np.ndarray
    stage_range: float
    scale: float = 1.0

    @property
    def count(self):
        return self.depths.shape[0]

    def clamped(self, d_min, d_max):
        return HypothesisPlanes(np.clip(self.depths, d_min, d_max), self.stage_range, self.scale)


def check_plane_count(D):
    if int(D) != D or D < 2 or D % 2:
        raise ConfigError(f"plane count must be an even integer >= 2, got {D}")
    return int(D)


def uniform_distribution(D, spatial_shape=()):
    D = check_plane_count(D)
    return np.full((D, *spatial_shape), 1.0 / D)


def stage_range(scale, d_min, d_max):
    if not 0 < scale <= 1:
        raise ConfigError(f"range scale must be in (0, 1], got {scale}")
    return scale * abs(d_max - d_min)


def intervals_from_distribution(P, stage_range):
    """Plane spacings ``P * stage_range``; they sum to ``stage_range`` per pixel."""
    if not stage_range > 0:
        raise ConfigError(f"hypothesis range must be positive, got {stage_range}")
    return np.asarray(P, dtype=np.float64) * stage_range


def plane_offsets(intervals):
    """Plane positions relative to the previous estimate.

    Equivalent to ``S[j] - (S[D/2-1] + S[D/2]) / 2`` with inclusive prefix
    sums ``S``, but accumulated outward from the middle pair so the pair sits
    at exactly ``-+ intervals[D/2] / 2``.
    """
    dd = np.asarray(intervals, dtype=np.float64)
    D = check_plane_count(dd.shape[0])
    m = D // 2
    half = 0.5 * dd[m]
    out = np.empty_like(dd)
    # below the centre: offset[j] = -half - sum(dd[j+1 .. m-1])
    out[m - 1] = -half
    if m > 1:
        below = np.cumsum(dd[m - 1:0:-1], axis=0)  # dd[m-1], dd[m-1]+dd[m-2], ...
        out[m - 2::-1] = -half - below
    out[m] = half
    if m + 1 < D:
        out[m + 1:] = half + np.cumsum(dd[m + 1:], axis=0)
    return out


def plane_depths(prev_depth, intervals):
    """Depths of ``D`` planes centred on ``prev_depth``; shape of ``intervals``."""
    return np.asarray(prev_depth, dtype=np.float64) + plane_offsets(intervals)


def place_planes(prev_depth, P, stage_range, scale=1.0):
    dd = intervals_from_distribution(P, stage_range)
    return HypothesisPlanes(plane_depths(prev_depth, dd), stage_range, scale)


def sample_cost(planes, depth_prev, prob_prev, normalize=True):
    """Softmax of per-plane deviations ``sqrt((L_j - L_hat)^2 * P_j)``.

    With ``normalize`` the deviation is measured in units of the stage range
    so exponents stay in ``[0, 1]``; pass ``False`` for the literal form
    (only sensible for small depth ranges).
    """
    L = planes.depths if isinstance(planes, HypothesisPlanes) else np.asarray(planes)
    diff = L - np.asarray(depth_prev)
    if normalize:
        if not isinstance(planes, HypothesisPlanes):
            raise TypeError("normalized sample cost needs HypothesisPlanes")
        diff = diff / planes.stage_range
    P = np.clip(np.asarray(prob_prev, dtype=np.float64), 0.0, None)
    z = np.sqrt(diff * diff * P)
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def entropy(P, axis=0):
    P = np.asarray(P)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(P > 0, P * np.log(P), 0.0)
    return -t.sum(axis=axis)
