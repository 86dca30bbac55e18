"""Command-line pipeline: simulate, fbp, reconstruct, gridsearch, metrics, phantom.

Configuration comes from an optional JSON file (--config) merged over
defaults, with command-line flags winning over both.  Every command is
deterministic: identical config and seed produce byte-identical outputs.
Exit codes: 0 success, 2 configuration error, 3 data/format error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from . import metrics as metrics_mod
from . import parammap, physics, solvers, testdata
from .operators import Geometry, desk_scale_geometry, forward_project
from .parammap import FormatError


class ConfigError(Exception):
    """Invalid or inconsistent run configuration."""


DEFAULTS = {
    "size": 128,
    "n_angles": None,
    "domain_width": 0.26,
    "detector_bins": None,
    "n0": 4096.0,
    "mu": 81.35858,
    "min_counts": 1.0,
    "iters": 400,
    "relax": 1.0,
    "log_every": 0,
    "filter": "ramlak",
    "lambda": None,
    "pmap": None,
    "edge_adaptive": False,
    "lam_max": 30.0,
    "beta": 100.0,
    "smooth_sigma": 1.0,
    "seed": 0,
    "out": "out",
    "phantom": "shepp-logan",
    "n_ellipses": 6,
    "input": None,
    "sinogram": None,
    "ground_truth": None,
    "grid_min": 1.0,
    "grid_max": 1000.0,
    "grid_points": 15,
    "pairs": None,
}


def load_config(path):
    try:
        with open(path) as f:
            cfg = json.load(f)
    except FileNotFoundError:
        raise ConfigError("config file not found: %s" % path)
    except json.JSONDecodeError as e:
        raise ConfigError("config is not valid JSON: %s" % e)
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError("unknown config keys: %s" % ", ".join(sorted(unknown)))
    return cfg


def resolve_config(args):
    """Merge defaults, config file, and explicit flags (flags win)."""
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(load_config(args.config))
    overrides = {
        "out": args.out,
        "seed": args.seed,
        "lambda": getattr(args, "lam", None),
        "pmap": getattr(args, "pmap", None),
        "edge_adaptive": getattr(args, "edge_adaptive", None),
        "iters": getattr(args, "iters", None),
        "filter": getattr(args, "filter", None),
        "input": getattr(args, "input", None),
        "sinogram": getattr(args, "sinogram", None),
        "ground_truth": getattr(args, "ground_truth", None),
        "phantom": getattr(args, "phantom", None),
        "size": getattr(args, "size", None),
    }
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


def build_geometry(cfg):
    try:
        size = int(cfg["size"])
        geom = desk_scale_geometry(
            size, n_angles=cfg["n_angles"], domain_width=float(cfg["domain_width"])
        )
        if cfg["detector_bins"] is not None:
            geom = Geometry(
                height=geom.height,
                width=geom.width,
                angles=geom.angles,
                n_bins=int(cfg["detector_bins"]),
                pixel_spacing=geom.pixel_spacing,
                detector_spacing=geom.detector_spacing,
            )
        return geom
    except (ValueError, TypeError) as e:
        raise ConfigError("bad geometry: %s" % e)


def build_physics(cfg):
    try:
        return physics.PhysicsParams(
            n0=float(cfg["n0"]), mu=float(cfg["mu"]), min_counts=float(cfg["min_counts"])
        )
    except (ValueError, TypeError) as e:
        raise ConfigError("bad physics parameters: %s" % e)


def _require_file(path, what):
    if path is None:
        raise ConfigError("missing %s path" % what)
    if not Path(path).is_file():
        raise ConfigError("%s file not found: %s" % (what, path))
    return path


def write_png(array, path, window=None):
    """8-bit grayscale preview with a fixed intensity window (default [0,1])."""
    array = np.asarray(array, dtype=np.float64)
    if window is None:
        window = (0.0, 1.0)
    lo, hi = window
    scaled = (array - lo) / (hi - lo) if hi > lo else np.zeros_like(array)
    data = np.round(np.clip(scaled, 0.0, 1.0) * 255.0).astype(np.uint8)
    PILImage.fromarray(data, mode="L").save(str(path), format="PNG")


def _write_json(obj, path):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _load_phantom(cfg, geom):
    if cfg["input"]:
        img = parammap.read_image(_require_file(cfg["input"], "input image"))
        if img.shape != geom.image_shape:
            raise FormatError("input image shape %s does not match geometry" % (img.shape,))
        return img
    name = cfg["phantom"]
    if name == "shepp-logan":
        return testdata.shepp_logan(geom.height)
    if name == "random":
        return testdata.random_ellipses(geom.height, int(cfg["n_ellipses"]), int(cfg["seed"]))
    raise ConfigError("unknown phantom %r (use shepp-logan, random, or --input)" % name)


def _lambda_source(cfg):
    sources = [cfg["lambda"] is not None, cfg["pmap"] is not None, bool(cfg["edge_adaptive"])]
    if sum(sources) > 1:
        raise ConfigError("choose one of --lambda, --pmap, --edge-adaptive")
    if cfg["lambda"] is not None:
        return ("scalar", float(cfg["lambda"]))
    if cfg["pmap"] is not None:
        return ("pmap", cfg["pmap"])
    if cfg["edge_adaptive"]:
        return ("edge", None)
    raise ConfigError("no lambda source: set --lambda, --pmap, or --edge-adaptive")


def cmd_simulate(cfg):
    geom = build_geometry(cfg)
    params = build_physics(cfg)
    seed = int(cfg["seed"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)

    image = _load_phantom(cfg, geom)
    clean = forward_project(image, geom)
    noisy = physics.simulate_lowdose(clean, params, seed)

    parammap.write_image(image, out / "phantom.imgf")
    parammap.write_sinogram(clean, out / "sino_clean.sngm")
    parammap.write_sinogram(noisy, out / "sino_noisy.sngm")
    write_png(image, out / "phantom.png")
    vmax = float(max(clean.max(), noisy.max(), 1e-12))
    write_png(clean, out / "sino_clean.png", window=(0.0, vmax))
    write_png(noisy, out / "sino_noisy.png", window=(0.0, vmax))
    with open(out / "geometry.json", "w") as f:
        f.write(geom.to_json() + "\n")

    summary = {
        "seed": seed,
        "n0": params.n0,
        "mu": params.mu,
        "min_counts": params.min_counts,
        "size": geom.height,
        "n_angles": geom.n_angles,
        "n_bins": geom.n_bins,
        "noise_std": float(np.std(noisy - clean)),
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_fbp(cfg):
    geom = build_geometry(cfg)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    z = parammap.read_sinogram(_require_file(cfg["sinogram"], "sinogram"))
    if z.shape != geom.sinogram_shape:
        raise FormatError("sinogram shape %s does not match geometry %s" % (z.shape, geom.sinogram_shape))
    rec = solvers.fbp_reconstruct(z, geom, cfg["filter"])
    parammap.write_image(rec, out / "fbp.imgf")
    write_png(rec, out / "fbp.png")
    if cfg["ground_truth"]:
        truth = parammap.read_image(_require_file(cfg["ground_truth"], "ground truth"))
        _write_json(metrics_mod.evaluate(rec, truth).to_json_dict(), out / "metrics.json")
    print("fbp: wrote %s" % (out / "fbp.imgf"))
    return 0


def cmd_reconstruct(cfg):
    geom = build_geometry(cfg)
    params = build_physics(cfg)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)

    z = parammap.read_sinogram(_require_file(cfg["sinogram"], "sinogram"))
    if z.shape != geom.sinogram_shape:
        raise FormatError("sinogram shape %s does not match geometry %s" % (z.shape, geom.sinogram_shape))
    truth = None
    if cfg["ground_truth"]:
        truth = parammap.read_image(_require_file(cfg["ground_truth"], "ground truth"))
        if truth.shape != geom.image_shape:
            raise FormatError("ground truth shape %s does not match geometry" % (truth.shape,))

    fbp_img = solvers.fbp_reconstruct(z, geom, cfg["filter"])
    parammap.write_image(fbp_img, out / "fbp.imgf")
    write_png(fbp_img, out / "fbp.png")

    kind, value = _lambda_source(cfg)
    if kind == "scalar":
        lam = parammap.scalar_map(value, geom.height, geom.width)
    elif kind == "pmap":
        lam = parammap.read_pmap(_require_file(value, "weight map"))
        if lam.shape[1:] != geom.image_shape:
            raise FormatError("weight map shape %s does not match geometry" % (lam.shape,))
    else:
        ref = truth if truth is not None else np.clip(fbp_img, 0.0, 1.0)
        lam = parammap.edge_adaptive_map(
            ref, float(cfg["lam_max"]), float(cfg["beta"]), float(cfg["smooth_sigma"])
        )

    T = int(cfg["iters"])
    if T == 0:
        recon = fbp_img
        report = solvers.SolveReport(iterations=0, primal_change=0.0)
    else:
        x0 = np.maximum(fbp_img, 0.0)
        steps = solvers.StepSizes.for_lipschitz(
            physics.lipschitz_bound(geom, params), relax=float(cfg["relax"])
        )
        recon, report = solvers.pd3o_run(
            x0, z, lam, geom, params, steps, T, log_every=int(cfg["log_every"])
        )

    parammap.write_image(recon, out / "recon.imgf")
    write_png(recon, out / "recon.png")
    _write_json(report.to_json_dict(), out / "solve_report.json")
    if truth is not None:
        _write_json(
            {
                "fbp": metrics_mod.evaluate(fbp_img, truth).to_json_dict(),
                "recon": metrics_mod.evaluate(recon, truth).to_json_dict(),
            },
            out / "metrics.json",
        )
    print("reconstruct: %d iterations, wrote %s" % (report.iterations, out / "recon.imgf"))
    return 0


def cmd_gridsearch(cfg):
    geom = build_geometry(cfg)
    params = build_physics(cfg)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)

    if not cfg["pairs"]:
        raise ConfigError("gridsearch needs config key 'pairs': [[sinogram, ground_truth], ...]")
    pairs = []
    for entry in cfg["pairs"]:
        if not (isinstance(entry, (list, tuple)) and len(entry) == 2):
            raise ConfigError("each pair must be [sinogram_path, ground_truth_path]")
        z = parammap.read_sinogram(_require_file(entry[0], "sinogram"))
        truth = parammap.read_image(_require_file(entry[1], "ground truth"))
        if z.shape != geom.sinogram_shape or truth.shape != geom.image_shape:
            raise FormatError("pair %r does not match geometry" % (entry,))
        pairs.append((z, truth))

    grid = np.geomspace(float(cfg["grid_min"]), float(cfg["grid_max"]), int(cfg["grid_points"]))
    best, scores = parammap.grid_search_lambda(pairs, grid, geom, params, int(cfg["iters"]))

    with open(out / "scores.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["lambda", "mean_psnr", "mean_ssim"])
        for row in scores:
            writer.writerow(["%.10g" % row["lam"], "%.10g" % row["mean_psnr"], "%.10g" % row["mean_ssim"]])
    _write_json({"best_lambda": best}, out / "best_lambda.json")
    print("gridsearch: best lambda %.6g" % best)
    return 0


def cmd_metrics(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    img = parammap.read_image(_require_file(cfg["input"], "input image"))
    truth = parammap.read_image(_require_file(cfg["ground_truth"], "ground truth"))
    report = metrics_mod.evaluate(img, truth)
    _write_json(report.to_json_dict(), out / "metrics.json")
    print(json.dumps(report.to_json_dict(), sort_keys=True))
    return 0


def cmd_phantom(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    geom = build_geometry(cfg)
    image = _load_phantom(cfg, geom)
    parammap.write_image(image, out / "phantom.imgf")
    write_png(image, out / "phantom.png")
    print("phantom: wrote %s" % (out / "phantom.imgf"))
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "fbp": cmd_fbp,
    "reconstruct": cmd_reconstruct,
    "gridsearch": cmd_gridsearch,
    "metrics": cmd_metrics,
    "phantom": cmd_phantom,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="ldct", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--iters", type=int, default=None)
        p.add_argument("--filter", choices=["ramlak", "hann"], default=None)
        p.add_argument("--size", type=int, default=None)
        p.add_argument("--phantom", default=None, help="shepp-logan or random")
        p.add_argument("--input", default=None, help="input image file (IMGF)")
        p.add_argument("--sinogram", default=None, help="sinogram file (SNGM)")
        p.add_argument("--ground-truth", dest="ground_truth", default=None)
        lam_group = p.add_mutually_exclusive_group()
        lam_group.add_argument("--lambda", dest="lam", type=float, default=None)
        lam_group.add_argument("--pmap", default=None, help="weight map file (PMAP)")
        lam_group.add_argument(
            "--edge-adaptive", dest="edge_adaptive", action="store_const", const=True, default=None
        )
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return _COMMANDS[args.command](cfg)
    except ConfigError as e:
        print("config error: %s" % e, file=sys.stderr)
        return 2
    except FormatError as e:
        print("data error: %s" % e, file=sys.stderr)
        return 3
    except FileNotFoundError as e:
        print("config error: %s" % e, file=sys.stderr)
        return 2
    except FloatingPointError as e:
        print("numerical failure: %s" % e, file=sys.stderr)
        return 4
    except ValueError as e:
        print("config error: %s" % e, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
