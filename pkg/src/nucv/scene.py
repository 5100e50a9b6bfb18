"""Scene directories in the MVSNet convention.

::

    scene/
      images/00000000.pgm ...   (PGM or PPM)
      cams/00000000_cam.txt ...
      pair.txt                  (optional; defaults to all other views)
      gt/00000000.pfm ...       (optional ground-truth depth)
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidCameraError, StructuralError
from .formats import (format_pairs, parse_pairs, read_camera, read_pfm, read_pnm,
                      write_camera, write_pfm, write_pnm)
from .geometry import ORTHO_TOL, CameraView, nearest_rotation

IMAGE_SUFFIXES = (".pgm", ".ppm", ".pnm")
# rotations printed with few decimals are snapped to SO(3) below this error
SNAP_TOL = 1e-5


@dataclass(eq=False)
class SceneBundle:
    views: list
    pairs: dict = field(default_factory=dict)
    ground_truth: list = None

    def __post_init__(self):
        n = len(self.views)
        if n == 0:
            raise StructuralError("scene has no views")
        shapes = {tuple(v.shape) for v in self.views}
        if len(shapes) != 1:
            raise StructuralError(f"views differ in size: {sorted(shapes)}")
        if not self.pairs:
            self.pairs = {i: [(j, 1.0) for j in range(n) if j != i] for i in range(n)}
        for ref, srcs in self.pairs.items():
            if not 0 <= ref < n or any(not 0 <= s < n for s, _ in srcs):
                raise StructuralError(f"pair entry for view {ref} references a view outside 0..{n - 1}")

    @property
    def depth_range(self):
        return self.views[0].depth_range

    def sources(self, ref, n_src=None):
        ids = [s for s, _ in self.pairs.get(ref, [])]
        if n_src is not None:
            ids = ids[:n_src]
        return [self.views[i] for i in ids]


def _camera_from_file(path, image):
    T, K, (d_min, _, _, d_max) = read_camera(path)
    if d_max is None:
        raise StructuralError(f"{path}: depth line gives no way to recover d_max")
    R = T[:3, :3]
    err = np.abs(R.T @ R - np.eye(3)).max()
    if ORTHO_TOL < err < SNAP_TOL:
        T = T.copy()
        T[:3, :3] = nearest_rotation(R)
    try:
        return CameraView(K, T, image, (d_min, d_max), name=Path(path).stem)
    except InvalidCameraError as exc:
        raise InvalidCameraError(f"{path}: {exc}") from exc


def read_scene(path):
    root = Path(path)
    if not root.is_dir():
        raise StructuralError(f"{root} is not a directory")
    images = sorted(p for p in (root / "images").glob("*") if p.suffix.lower() in IMAGE_SUFFIXES)
    cams = sorted((root / "cams").glob("*_cam.txt"))
    if not images:
        raise StructuralError(f"no images under {root / 'images'}")
    if len(images) != len(cams):
        raise StructuralError(f"{len(images)} images but {len(cams)} camera files")
    for img, cam in zip(images, cams):
        if cam.name[:-len("_cam.txt")] != img.stem:
            raise StructuralError(f"image {img.name} has no matching camera (found {cam.name})")
    views = [_camera_from_file(c, read_pnm(i)) for i, c in zip(images, cams)]
    pairs = {}
    pair_file = root / "pair.txt"
    if pair_file.exists():
        pairs = parse_pairs(pair_file.read_text(), len(views), pair_file)
    gt = None
    gt_files = sorted((root / "gt").glob("*.pfm"))
    if len(gt_files) == len(views):
        gt = [read_pfm(p).astype(np.float64) for p in gt_files]
    return SceneBundle(views, pairs, gt)


def write_scene(bundle, path, n_planes=48):
    root = Path(path)
    for sub in ("images", "cams"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for i, v in enumerate(bundle.views):
        write_pnm(root / "images" / f"{i:08d}.pgm", v.image, maxval=65535)
        d_min, d_max = v.depth_range
        write_camera(root / "cams" / f"{i:08d}_cam.txt", v.extrinsics, v.intrinsics,
                     d_min, d_max, n_planes)
    (root / "pair.txt").write_text(format_pairs(bundle.pairs))
    if bundle.ground_truth is not None:
        (root / "gt").mkdir(exist_ok=True)
        for i, g in enumerate(bundle.ground_truth):
            write_pfm(root / "gt" / f"{i:08d}.pfm", np.where(np.isfinite(g), g, 0.0))
    return root
