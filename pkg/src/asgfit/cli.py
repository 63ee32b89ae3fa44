"""Command-line surface for fitting, reconstruction, and comparison images.

Subcommands
    fit           fit an HDRI sequence to temporally consistent mixtures
    reconstruct   evaluate a fitted frame back to a panorama file
    metrics       per-frame error/energy report against ground truth
    render-balls  row of spheres of varying roughness lit by params or an HDRI
    stack-rows    one panorama row per frame, stacked along time

Every command writes a ``<output stem>.manifest.json`` recording the
exact configuration, input hashes, outputs, wall-clock time, and (for
fits) final per-frame losses.  Exit codes: 0 success, 2 usage, 3 input
parse failure, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import glob
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np
from PIL import Image

from . import asg, hdr_io, losses, optimizer, sh
from .geometry import SampleGrid, normalize, reseed_tangent
from .hdr_io import EnvMap
from .losses import LossWeights
from .optimizer import FitConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_NUMERIC = 4

GGX_STRATA = 16  # per axis; 256 specular samples per pixel


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# Rendering helpers (shared by render-balls and stack-rows)

def tone_map(linear: np.ndarray, exposure: float = 1.0) -> np.ndarray:
    """Exposure-scaled, clipped, sRGB-encoded uint8 image."""
    x = np.clip(np.asarray(linear, dtype=float) * exposure, 0.0, 1.0)
    srgb = np.where(x <= 0.0031308,
                    12.92 * x,
                    1.055 * np.power(x, 1.0 / 2.4) - 0.055)
    return np.rint(srgb * 255.0).astype(np.uint8)


def _ggx_half_vectors(normals: np.ndarray, roughness: float, u1: float, u2: float):
    # One stratified sample for every pixel at once: spherical GGX NDF
    # angles around each normal, tangent frames from the deterministic
    # reseed rule.
    alpha = roughness * roughness
    cos_t = 1.0 / np.sqrt(1.0 + alpha * alpha * u1 / (1.0 - u1))
    sin_t = np.sqrt(np.clip(1.0 - cos_t * cos_t, 0.0, None))
    phi = 2.0 * np.pi * u2
    t1 = normalize(reseed_tangent(normals))
    t2 = np.cross(normals, t1)
    return (sin_t * np.cos(phi)) * t1 + (sin_t * np.sin(phi)) * t2 + cos_t * normals


def render_ball(env: EnvMap, irradiance_coeffs: np.ndarray, roughness: float,
                size: int, rng: np.random.Generator,
                view=(1.0, 0.0, 0.0)) -> np.ndarray:
    """Orthographic sphere seen from +X, screen x toward +Y and screen
    y toward +Z, shaded as

        out = roughness * E(n) + (1 - roughness) * mean_s env(reflect(v, h_s))

    where E is the SH irradiance and the h_s are stratified GGX half
    vectors (alpha = roughness^2).  roughness -> 0 approaches a mirror,
    roughness = 1 is the pure irradiance ball.  Background stays black.
    """
    px = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    a, b = np.meshgrid(px, -px)                        # screen x -> +Y, y -> +Z
    inside = a * a + b * b <= 1.0
    out = np.zeros((size, size, 3))
    nx = np.sqrt(np.clip(1.0 - a * a - b * b, 0.0, None))
    n = np.stack([nx, a, b], axis=-1)[inside]
    shaded = roughness * (sh.sh_basis(n) @ irradiance_coeffs)
    if roughness < 1.0:
        v = np.asarray(view, dtype=float)
        spec = np.zeros_like(shaded)
        jitter = rng.random((GGX_STRATA, GGX_STRATA, 2))
        for i in range(GGX_STRATA):
            for j in range(GGX_STRATA):
                u1 = (i + jitter[i, j, 0]) / GGX_STRATA
                u2 = (j + jitter[i, j, 1]) / GGX_STRATA
                h = _ggx_half_vectors(n, roughness, u1, u2)
                d = 2.0 * (h @ v)[:, None] * h - v
                spec += env.sample(normalize(d))
        shaded = shaded + (1.0 - roughness) * spec / GGX_STRATA ** 2
    out[inside] = shaded
    return out


def render_ball_row(env: EnvMap, grid: SampleGrid, roughness_values,
                    size: int, seed: int) -> np.ndarray:
    """Linear-radiance strip of one ball per roughness value."""
    coeffs = sh.lambertian_convolve(sh.project(env.pixels, grid))
    rng = np.random.default_rng(seed)
    balls = [render_ball(env, coeffs, r, size, rng) for r in roughness_values]
    return np.concatenate(balls, axis=1)


# ---------------------------------------------------------------------------
# Shared plumbing

def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _manifest_path(out_path: str) -> str:
    return os.path.splitext(out_path)[0] + ".manifest.json"


def _write_manifest(out_path: str, command: str, config: dict, inputs,
                    outputs, started: float, frames=None) -> str:
    path = _manifest_path(out_path)
    doc = {
        "command": command,
        "config": config,
        "inputs": [{"path": p, "sha256": _sha256(p)} for p in inputs],
        "outputs": list(outputs),
        "wall_clock_seconds": time.time() - started,
    }
    if frames is not None:
        doc["frames"] = frames
    hdr_io.atomic_write_bytes(path, json.dumps(doc, indent=1).encode())
    return path


def _breakdown_dict(b: losses.LossBreakdown) -> dict:
    return {"reconstruction": b.reconstruction, "diffuse": b.diffuse,
            "temporal": b.temporal, "total": b.total}


def _expand_inputs(pattern: str) -> list[str]:
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise CliError(f"no inputs match {pattern!r}")
    return paths


def _load_frames(paths, grid_height: int):
    grid = SampleGrid.make(grid_height)
    frames = []
    for p in paths:
        env = hdr_io.resample(hdr_io.load_env(p), grid_height)
        frames.append(env.pixels)
    return grid, frames


def _write_loss_csv(path: str, history) -> None:
    lines = ["epoch,total,recon,diffuse,temporal"]
    lines += [f"{i},{b.total!r},{b.reconstruction!r},{b.diffuse!r},{b.temporal!r}"
              for i, b in enumerate(history)]
    hdr_io.atomic_write_bytes(path, ("\n".join(lines) + "\n").encode())


def _save_png(path: str, rgb8: np.ndarray) -> None:
    Image.fromarray(rgb8, mode="RGB").save(path, format="PNG")


def _reconstruct_frame(mixture: asg.RealizedMixture, width: int) -> EnvMap:
    if width < 2 or width % 2:
        raise CliError(f"output width must be even and >= 2, got {width}")
    grid = SampleGrid.make(width // 2)
    pixels = asg.evaluate(mixture, grid.dirs_flat).reshape(grid.height, grid.width, 3)
    return EnvMap(pixels)


def _env_for_rendering(args_input: str, frame: int):
    """render-balls input: either a params file (the requested frame is
    reconstructed, and its seed becomes the default) or a panorama file
    (resampled to 2:1 when needed)."""
    if args_input.endswith(".json"):
        mixtures, cfg = hdr_io.load_params(args_input)
        if not 0 <= frame < len(mixtures):
            raise CliError(f"frame {frame} out of range for {len(mixtures)} frame(s)")
        return _reconstruct_frame(mixtures[frame], 2 * cfg.grid_height), cfg.seed
    env = hdr_io.load_env(args_input)
    if env.width != 2 * env.height:
        env = hdr_io.resample(env, 256)
    return env, 0


# ---------------------------------------------------------------------------
# Subcommands

def cmd_fit(args) -> int:
    paths = _expand_inputs(args.input)
    cfg = FitConfig(
        num_asgs=args.num_asgs,
        grid_height=args.grid_height,
        epochs_first=args.epochs_first,
        epochs_rest=args.epochs_rest,
        weights=LossWeights(alpha=1.0,
                            beta=0.0 if args.no_diffuse else 1.0,
                            gamma=args.gamma),
        isotropic=args.isotropic,
        recon_loss=args.loss,
        seed=args.seed,
        deterministic=args.deterministic,
    )
    started = time.time()
    grid, frames = _load_frames(paths, cfg.grid_height)
    stem = os.path.splitext(args.out)[0]
    csv_paths = []
    final_losses = []

    def progress(t, params, history):
        csv_path = f"{stem}.losses.frame{t:03d}.csv"
        _write_loss_csv(csv_path, history)
        csv_paths.append(csv_path)
        final_losses.append({"frame": t, "final_loss": _breakdown_dict(history[-1])})
        print(f"frame {t}: final total loss {history[-1].total:.6g}",
              file=sys.stderr)

    try:
        results, _ = optimizer.fit_sequence(frames, cfg, progress=progress)
    except optimizer.SequenceFitError as exc:
        if exc.results:
            hdr_io.save_params(args.out, exc.results, cfg)
        _write_manifest(args.out, "fit", hdr_io.config_to_dict(cfg), paths,
                        ([args.out] if exc.results else []) + csv_paths, started,
                        frames=final_losses)
        print(f"error: {exc} ({exc.__cause__})", file=sys.stderr)
        return EXIT_NUMERIC
    hdr_io.save_params(args.out, results, cfg)
    _write_manifest(args.out, "fit", hdr_io.config_to_dict(cfg), paths,
                    [args.out] + csv_paths, started, frames=final_losses)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    started = time.time()
    mixtures, cfg = hdr_io.load_params(args.params)
    if not 0 <= args.frame < len(mixtures):
        raise CliError(f"frame {args.frame} out of range for "
                       f"{len(mixtures)} frame(s)")
    width = args.width if args.width is not None else 2 * cfg.grid_height
    env = _reconstruct_frame(mixtures[args.frame], width)
    hdr_io.save_env(args.out, env)
    _write_manifest(args.out, "reconstruct", hdr_io.config_to_dict(cfg),
                    [args.params], [args.out], started)
    return EXIT_OK


def cmd_metrics(args) -> int:
    started = time.time()
    mixtures, cfg = hdr_io.load_params(args.params)
    paths = _expand_inputs(args.input)
    if len(paths) != len(mixtures):
        raise CliError(f"{len(paths)} input frame(s) but params file holds "
                       f"{len(mixtures)}")
    grid, frames = _load_frames(paths, cfg.grid_height)
    records = []
    for t, (mixture, gt) in enumerate(zip(mixtures, frames)):
        pred = asg.evaluate(mixture, grid.dirs_flat).reshape(gt.shape)
        w_l1, _ = losses.reconstruction_loss(pred, gt, grid, "l1")
        w_l2, _ = losses.reconstruction_loss(pred, gt, grid, "l2")
        d_l1, _ = losses.diffuse_loss(pred, sh.irradiance(gt, grid), grid)
        gt_energy = float(np.sum(grid.weights[..., None] * gt))
        pred_energy = float(np.sum(grid.weights[..., None] * pred))
        records.append({
            "frame": t,
            "weighted_l1": w_l1,
            "weighted_l2": w_l2,
            "diffuse_l1": d_l1,
            "energy_ratio": pred_energy / gt_energy if gt_energy > 0 else None,
        })
    report = {"frames": records,
              "jitter": optimizer.jitter_metric(mixtures)}
    hdr_io.atomic_write_bytes(args.report, json.dumps(report, indent=1).encode())
    _write_manifest(args.report, "metrics", hdr_io.config_to_dict(cfg),
                    [args.params] + paths, [args.report], started)
    return EXIT_OK


def _parse_roughness(text: str) -> list[float]:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise CliError(f"invalid roughness list {text!r}") from None
    if not values or any(not 0.0 < r <= 1.0 for r in values):
        raise CliError(f"roughness values must lie in (0, 1], got {text!r}")
    return values


def cmd_render_balls(args) -> int:
    started = time.time()
    roughness = _parse_roughness(args.roughness)
    env, default_seed = _env_for_rendering(args.input, args.frame)
    grid = SampleGrid.make(env.height)
    seed = default_seed if args.seed is None else args.seed
    strip = render_ball_row(env, grid, roughness, args.size, seed)
    _save_png(args.out, tone_map(strip, args.exposure))
    _write_manifest(args.out, "render-balls",
                    {"roughness": roughness, "size": args.size,
                     "exposure": args.exposure, "seed": seed,
                     "frame": args.frame},
                    [args.input], [args.out], started)
    return EXIT_OK


def cmd_stack_rows(args) -> int:
    started = time.time()
    if args.input.endswith(".json"):
        mixtures, cfg = hdr_io.load_params(args.input)
        width = args.width if args.width is not None else 2 * cfg.grid_height
        images = [_reconstruct_frame(m, width).pixels for m in mixtures]
    else:
        paths = _expand_inputs(args.input)
        images = [hdr_io.load_env(p).pixels for p in paths]
        if len({im.shape for im in images}) != 1:
            raise CliError("input frames differ in resolution")
    height = images[0].shape[0]
    if not 0 <= args.row < height:
        raise CliError(f"row {args.row} out of range for height {height}")
    stack = np.stack([im[args.row] for im in images])
    _save_png(args.out, tone_map(stack, args.exposure))
    _write_manifest(args.out, "stack-rows",
                    {"row": args.row, "exposure": args.exposure},
                    [args.input] if args.input.endswith(".json") else paths,
                    [args.out], started)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser and entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asgfit",
        description="Compress HDRI sequences into temporally consistent "
                    "anisotropic spherical Gaussian mixtures.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit an HDRI sequence")
    p.add_argument("--input", required=True,
                   help="glob of .hdr/.pfm frames; sorted order is time order")
    p.add_argument("--num-asgs", type=int, required=True)
    p.add_argument("--out", required=True, help="output params .json path")
    p.add_argument("--isotropic", action="store_true",
                   help="tie lambda := mu per lobe")
    p.add_argument("--grid-height", type=int, default=256)
    p.add_argument("--epochs-first", type=int, default=24000)
    p.add_argument("--epochs-rest", type=int, default=6000)
    p.add_argument("--gamma", type=float, default=0.5,
                   help="temporal loss weight; 0 disables it")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--loss", choices=("l1", "l2"), default="l1",
                   help="reconstruction loss variant")
    p.add_argument("--no-diffuse", action="store_true",
                   help="drop the diffuse (irradiance) loss term")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("reconstruct", help="evaluate fitted params to a panorama")
    p.add_argument("params", help="fitted params .json")
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--out", required=True, help="output .hdr/.pfm path")
    p.add_argument("--width", type=int, default=None,
                   help="output width (even; default twice the fit grid height)")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("metrics", help="error report of params vs ground truth")
    p.add_argument("params", help="fitted params .json")
    p.add_argument("--input", required=True, help="glob of ground-truth frames")
    p.add_argument("--report", required=True, help="output report .json")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("render-balls",
                       help="row of roughness-varying balls lit by the input")
    p.add_argument("input", help="params .json or panorama file")
    p.add_argument("--roughness", required=True,
                   help="comma-separated values in (0, 1]")
    p.add_argument("--out", required=True, help="output .png")
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--size", type=int, default=128, help="ball diameter in pixels")
    p.add_argument("--exposure", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None,
                   help="sampling seed (default: the params file seed, else 0)")
    p.set_defaults(func=cmd_render_balls)

    p = sub.add_parser("stack-rows",
                       help="stack one row per frame along the time axis")
    p.add_argument("--input", required=True, help="frame glob or params .json")
    p.add_argument("--row", type=int, required=True)
    p.add_argument("--out", required=True, help="output .png")
    p.add_argument("--width", type=int, default=None,
                   help="reconstruction width when input is a params file")
    p.add_argument("--exposure", type=float, default=1.0)
    p.set_defaults(func=cmd_stack_rows)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except hdr_io.HdrParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except optimizer.NonFiniteGradientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    sys.exit(main())
