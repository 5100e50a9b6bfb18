"""Command-line entry point: ``nucv sweep | synth | eval | selftest``.

Exit codes: 0 success, 1 other failure, 2 bad configuration, 3 parse
error, 4 structural/shape/camera error, 5 numeric failure.
"""

import argparse
import logging
import sys
import time
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import costvol, selftest
from .cascade import CascadeConfig, _convert, format_config, load_config, run_cascade
from .errors import NucvError, StructuralError
from .formats import read_pfm, write_pfm
from .fusion import FusionConfig, fuse
from .metrics import evaluate_depth, final_spacing
from .scene import read_scene, write_scene
from .synthetic import KINDS, SyntheticScene, generate_synthetic

logger = logging.getLogger("nucv")


def _add_config_flags(p):
    for f in fields(CascadeConfig):
        p.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, default=None,
                       metavar="VALUE", help=f"override {f.name}")


def _config_from_args(args):
    cfg = load_config(args.config) if args.config else CascadeConfig()
    defaults = CascadeConfig()
    over = {}
    for f in fields(CascadeConfig):
        text = getattr(args, "cfg_" + f.name)
        if text is not None:
            over[f.name] = _convert(text, getattr(defaults, f.name), f.name, "<command line>", None)
    return replace(cfg, **over)


def _ref_ids(text, n):
    if text == "all":
        return list(range(n))
    try:
        ids = [int(t) for t in text.split(",")]
    except ValueError:
        raise StructuralError(f"--refs expects 'all' or comma-separated ids, got {text!r}")
    bad = [i for i in ids if not 0 <= i < n]
    if bad:
        raise StructuralError(f"reference ids {bad} outside 0..{n - 1}")
    return ids


def cmd_sweep(args):
    cfg = _config_from_args(args)
    bundle = read_scene(args.scene)
    out = Path(args.out)
    (out / "depth").mkdir(parents=True, exist_ok=True)
    (out / "confidence").mkdir(exist_ok=True)
    (out / "run.cfg").write_text(format_config(cfg))
    refs = _ref_ids(args.refs, len(bundle.views))
    n_src = max(args.views - 1, 1)
    finals = {}
    for i in refs:
        t = time.perf_counter()
        ests = run_cascade(bundle.views[i], bundle.sources(i, n_src), cfg)
        final = ests[-1]
        finals[i] = final
        name = f"{i:08d}"
        write_pfm(out / "depth" / f"{name}.pfm", final.depth)
        write_pfm(out / "confidence" / f"{name}.pfm", final.neighborhood_confidence())
        if args.dump_cost:
            (out / "cost").mkdir(exist_ok=True)
            for k, e in enumerate(ests):
                costvol.write_cost_volume(out / "cost" / f"{name}_stage{k + 1}.bin", -np.log(e.prob + 1e-300), k + 1)
        msg = f"view {i}: {time.perf_counter() - t:.2f}s"
        if bundle.ground_truth is not None:
            m = evaluate_depth(final.depth, bundle.ground_truth[i],
                               spacing=final_spacing(bundle.views[i].depth_range, cfg.range_scales[-1], cfg.planes[-1]))
            msg += "  " + m.format()
        print(msg)
    if args.no_fuse:
        return 0
    if len(finals) < 2:
        print("fusion skipped: needs depth maps for at least two views")
        return 0
    ids = sorted(finals)
    fcfg = FusionConfig(args.tau_c, args.tau_p, args.tau_d, args.min_views)
    pairs = {ids.index(r): [(ids.index(s), sc) for s, sc in bundle.pairs.get(r, []) if s in finals]
             for r in ids}
    cloud = fuse([finals[i] for i in ids], [bundle.views[i] for i in ids], fcfg, pairs)
    cloud.write(out / "cloud.ply")
    print(f"fused {len(cloud)} points -> {out / 'cloud.ply'}")
    return 0


def cmd_synth(args):
    scene = SyntheticScene(kind=args.kind, texture=args.texture, ring_radius=args.ring_radius,
                           ring_angle=args.ring_angle, seed=args.seed)
    bundle = generate_synthetic(scene, args.views, (args.height, args.width))
    write_scene(bundle, args.out)
    print(f"wrote {len(bundle.views)} views ({args.height}x{args.width}) to {args.out}")
    return 0


def _pfm_list(path):
    p = Path(path)
    if p.is_dir():
        files = sorted(p.glob("*.pfm"))
        if not files:
            raise StructuralError(f"no .pfm files in {p}")
        return {f.stem: f for f in files}
    return {p.stem: p}


def cmd_eval(args):
    est = _pfm_list(args.estimate)
    gt = _pfm_list(args.ground_truth)
    if len(est) == 1 and len(gt) == 1:
        gt = {next(iter(est)): next(iter(gt.values()))}
    spacing = args.spacing
    if spacing is None:
        spacing = final_spacing((args.d_min, args.d_max)) if args.d_max is not None else 1.0
    missing = [k for k in est if k not in gt]
    if missing:
        raise StructuralError(f"no ground truth for {missing}")
    for key in sorted(est):
        g = read_pfm(gt[key]).astype(np.float64)
        mask = g > 0  # scene dumps store invalid truth as 0
        m = evaluate_depth(read_pfm(est[key]).astype(np.float64), g, mask, spacing)
        print(f"{key}: {m.format()}")
    return 0


def cmd_selftest(args):
    return 0 if selftest.run(args.seed) else 1


def build_parser():
    p = argparse.ArgumentParser(prog="nucv", description="Plane-sweep multi-view stereo with non-uniform hypothesis planes.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", help="estimate depth maps for a scene and fuse them")
    s.add_argument("scene")
    s.add_argument("-o", "--out", required=True)
    s.add_argument("--config", help="key = value config file")
    s.add_argument("--views", type=int, default=5, help="input images per reference, reference included")
    s.add_argument("--refs", default="all", help="'all' or comma-separated view ids")
    s.add_argument("--no-fuse", action="store_true")
    s.add_argument("--dump-cost", action="store_true", help="write per-stage negative log-probability volumes")
    s.add_argument("--tau-c", type=float, default=FusionConfig.tau_c)
    s.add_argument("--tau-p", type=float, default=FusionConfig.tau_p)
    s.add_argument("--tau-d", type=float, default=FusionConfig.tau_d)
    s.add_argument("--min-views", type=int, default=FusionConfig.min_views)
    _add_config_flags(s)
    s.set_defaults(func=cmd_sweep)

    g = sub.add_parser("synth", help="render a synthetic benchmark scene")
    g.add_argument("out")
    g.add_argument("--kind", choices=KINDS, default="sphere")
    g.add_argument("--texture", choices=("noise", "checker"), default="noise")
    g.add_argument("--views", type=int, default=5)
    g.add_argument("--height", type=int, default=64)
    g.add_argument("--width", type=int, default=80)
    g.add_argument("--ring-radius", type=float, default=SyntheticScene.ring_radius)
    g.add_argument("--ring-angle", type=float, default=SyntheticScene.ring_angle)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_synth)

    e = sub.add_parser("eval", help="depth metrics against ground truth (.pfm files or directories)")
    e.add_argument("estimate")
    e.add_argument("ground_truth")
    e.add_argument("--spacing", type=float, help="threshold unit; defaults to the final plane spacing")
    e.add_argument("--d-min", type=float, default=0.0)
    e.add_argument("--d-max", type=float)
    e.set_defaults(func=cmd_eval)

    t = sub.add_parser("selftest", help="run quick oracle checks")
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_selftest)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NucvError as exc:
        print(f"nucv: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"nucv: error: {exc}", file=sys.stderr)
        return StructuralError.exit_code
    except OSError as exc:
        print(f"nucv: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
