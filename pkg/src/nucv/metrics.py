"""Depth-map error metrics."""

from dataclasses import asdict, dataclass

import numpy as np

from .errors import InputShapeError

THRESHOLD_MULTIPLES = (1, 2, 4)


@dataclass(frozen=True)
class DepthMetrics:
    mae: float
    rmse: float
    within_1: float
    within_2: float
    within_4: float
    count: int
    spacing: float

    def as_dict(self):
        return asdict(self)

    def format(self):
        return (f"pixels {self.count}  MAE {self.mae:.6g}  RMSE {self.rmse:.6g}  "
                f"<=1x {self.within_1:.4f}  <=2x {self.within_2:.4f}  <=4x {self.within_4:.4f}"
                f"  (spacing {self.spacing:.6g})")


def final_spacing(depth_range, range_scale=0.04, n_planes=8):
    """Uniform plane spacing of the last stage."""
    d_min, d_max = depth_range
    return range_scale * (d_max - d_min) / n_planes


def evaluate_depth(est, gt, mask=None, spacing=1.0):
    """MAE, RMSE and the fraction of pixels within 1, 2 and 4 ``spacing``.

    Pixels outside ``mask`` or with non-finite ground truth are ignored.
    An empty selection gives NaN errors and zero fractions.
    """
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if est.shape != gt.shape:
        raise InputShapeError(f"estimate {est.shape} and ground truth {gt.shape} differ")
    sel = np.isfinite(gt) & np.isfinite(est)
    if mask is not None:
        sel &= np.asarray(mask, dtype=bool)
    err = np.abs(est[sel] - gt[sel])
    n = int(err.size)
    if n == 0:
        return DepthMetrics(float("nan"), float("nan"), 0.0, 0.0, 0.0, 0, float(spacing))
    fr = [float(np.mean(err <= m * spacing)) for m in THRESHOLD_MULTIPLES]
    return DepthMetrics(float(err.mean()), float(np.sqrt(np.mean(err * err))), *fr, n, float(spacing))
