"""Command-line entry point: ``motlines detect|eval-vector|eval-instance|synth|overlay``.

Exit codes: 0 success, 2 input/output error, 3 configuration or usage
error, 4 evaluation-domain error (no targets, raster size mismatch).
"""
from __future__ import annotations

import argparse
import colorsys
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, image_io, postprocess
from .config import Config, ConfigError, load_config, parse_overrides
from .engine import detect
from .evaluation import EvaluationError, instance_report, vector_report
from .image_io import GrayImage, ImageFormatError, LabelMasks, SynthSpec, SynthSpecError
from .trackers import TrackerKind

log = logging.getLogger("motlines")

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_EVAL = 0, 2, 3, 4
IMAGE_SUFFIXES = (".pgm", ".pnm", ".png")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for I/O here
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _config(args) -> Config:
    overrides = parse_overrides(args.set or [])
    if getattr(args, "tracker", None):
        try:
            overrides["tracker"] = TrackerKind.parse(args.tracker)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return load_config(args.config, overrides)


def _read_json(path: Path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ImageFormatError(f"{path}: malformed JSON ({exc})") from exc


def _write_json(path: Path, data):
    path.write_text(json.dumps(data, indent=2) + "\n")


def _load_segments(path: Path) -> list[dict]:
    data = _read_json(path)
    if not isinstance(data, list):
        raise ImageFormatError(f"{path}: expected a JSON array of segments")
    for k, rec in enumerate(data):
        if not isinstance(rec, dict) or not {"x0", "y0", "x1", "y1"} <= rec.keys():
            raise ImageFormatError(f"{path}: entry {k} lacks x0, y0, x1, y1")
        try:
            [float(rec[c]) for c in ("x0", "y0", "x1", "y1")]
        except (TypeError, ValueError):
            raise ImageFormatError(f"{path}: entry {k} has non-numeric coordinates") from None
    return data


def _emit(report: dict, out: str | None):
    text = json.dumps(report, indent=2)
    print(text)
    if out:
        Path(out).write_text(text + "\n")


# --------------------------------------------------------------------------
# detect
# --------------------------------------------------------------------------

def _detect_one(image_path: Path, out_dir: Path, cfg: Config) -> dict:
    img = image_io.load_gray(image_path)
    t0 = time.perf_counter()
    if cfg.top_hat_radius > 0:
        img = image_io.black_top_hat(img, cfg.top_hat_radius)
    result = detect(img, cfg.engine)
    wall_ms = (time.perf_counter() - t0) * 1000.0

    out_dir.mkdir(parents=True, exist_ok=True)
    records = postprocess.segment_records(result.objects)
    _write_json(out_dir / "segments.json", records)
    meta = [{"id": r["id"], "axis": o.axis.value,
             "x0": r["x0"], "y0": r["y0"], "x1": r["x1"], "y1": r["y1"]}
            for r, o in zip(records, result.objects)]
    image_io.save_masks(result.masks, out_dir / "masks", meta)
    manifest = {
        "input": str(image_path),
        "width": img.width,
        "height": img.height,
        "parameters": cfg.as_dict(),
        "object_count": len(result.objects),
        "raw_counts": result.raw_counts,
        "wall_time_ms": wall_ms,
    }
    _write_json(out_dir / "run.json", manifest)
    log.info("%s: %d objects in %.0f ms", image_path, len(result.objects), wall_ms)
    return manifest


def cmd_detect(args) -> int:
    cfg = _config(args)
    src = Path(args.input)
    out = Path(args.out)
    if src.is_dir():
        images = sorted(p for p in src.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not images:
            raise FileNotFoundError(f"no .pgm/.png images in {src}")
        for p in images:
            _detect_one(p, out / p.stem, cfg)
    else:
        _detect_one(src, out, cfg)
    return EXIT_OK


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

def _segment_pairs(pred: Path, gt: Path) -> list[tuple[str, list, list]]:
    """Single file pair, or every name found in both directories.

    In a directory, ``<name>.json`` and ``<name>/segments.json`` both count
    as the segments of image ``<name>``.
    """
    if pred.is_file() and gt.is_file():
        return [(pred.stem, _load_segments(pred), _load_segments(gt))]
    if not (pred.is_dir() and gt.is_dir()):
        raise FileNotFoundError("prediction and ground truth must both be files or both directories")

    def collect(d: Path) -> dict[str, Path]:
        found = {p.stem: p for p in d.glob("*.json")}
        found.update({p.parent.name: p for p in d.glob("*/segments.json")})
        return found

    p_files, g_files = collect(pred), collect(gt)
    names = sorted(set(p_files) & set(g_files))
    if not names:
        raise FileNotFoundError(f"no common segment files in {pred} and {gt}")
    return [(n, _load_segments(p_files[n]), _load_segments(g_files[n])) for n in names]


def cmd_eval_vector(args) -> int:
    cfg = _config(args)
    pairs = _segment_pairs(Path(args.pred), Path(args.gt))
    try:
        report = vector_report(pairs, cfg.vector_match)
    except ValueError as exc:
        raise EvaluationError(str(exc)) from exc
    if len(pairs) == 1:
        report = {**{k: v for k, v in report["images"][0].items() if k != "image"}, **report}
    _emit(report, args.out)
    return EXIT_OK


def _mask_dirs(pred: Path, gt: Path) -> list[tuple[str, Path, Path]]:
    if (pred / "index.json").is_file() and (gt / "index.json").is_file():
        return [(pred.name, pred, gt)]

    def collect(d: Path) -> dict[str, Path]:
        found = {p.parent.name: p.parent for p in d.glob("*/index.json")}
        found.update({p.parent.parent.name: p.parent for p in d.glob("*/masks/index.json")})
        return found

    p_dirs, g_dirs = collect(pred), collect(gt)
    names = sorted(set(p_dirs) & set(g_dirs))
    if not names:
        raise FileNotFoundError(f"no mask index.json found in both {pred} and {gt}")
    return [(n, p_dirs[n], g_dirs[n]) for n in names]


def cmd_eval_instance(args) -> int:
    pairs = []
    for name, p, g in _mask_dirs(Path(args.pred), Path(args.gt)):
        pairs.append((name, image_io.load_masks(p)[0], image_io.load_masks(g)[0]))
    report = instance_report(pairs)
    if len(pairs) == 1:
        report = {**{k: v for k, v in report["images"][0].items() if k != "image"}, **report}
    _emit(report, args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# synth
# --------------------------------------------------------------------------

def cmd_synth(args) -> int:
    raw = _read_json(Path(args.spec))
    if not isinstance(raw, dict):
        raise SynthSpecError("synthetic spec must be a JSON object")
    spec = SynthSpec.from_dict(raw)
    img, masks, segments = image_io.render_synthetic(spec, np.random.default_rng(args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    image_io.save_gray(img, out / "image.pgm")
    records = [{"id": k, "x0": s[0], "y0": s[1], "x1": s[2], "y1": s[3]}
               for k, s in enumerate(segments)]
    _write_json(out / "segments.json", records)
    image_io.save_masks(masks, out / "masks", records)
    return EXIT_OK


# --------------------------------------------------------------------------
# overlay
# --------------------------------------------------------------------------

GOLDEN = 0.618033988749895


def id_color(oid: int) -> np.ndarray:
    """Deterministic saturated colour; hues follow the golden-ratio sequence."""
    h = (oid * GOLDEN) % 1.0
    return np.array(colorsys.hsv_to_rgb(h, 0.9, 1.0)) * 255.0


def render_overlay(img: GrayImage, layers: list[tuple[int, np.ndarray]], alpha: float = 0.6) -> np.ndarray:
    """RGB uint8 image: gray input with each (id, flat pixel indices) layer tinted."""
    rgb = np.repeat(img.pixels.reshape(-1, 1).astype(np.float64), 3, axis=1)
    base = rgb.copy()
    for oid, idx in layers:
        rgb[idx] = (1 - alpha) * base[idx] + alpha * id_color(oid)
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8).reshape(img.height, img.width, 3)


def _segment_layers(records: list[dict], w: int, h: int) -> list[tuple[int, np.ndarray]]:
    layers = []
    for k, r in enumerate(records):
        x0, y0, x1, y1 = (float(r[c]) for c in ("x0", "y0", "x1", "y1"))
        th = max(float(r.get("mean_thickness", 1.0)), 1.0)
        seg = image_io.SynthSegment(x0, y0, x1, y1, thickness=th)
        layers.append((int(r.get("id", k)), image_io.rasterize_segment(seg, w, h)))
    return layers


def cmd_overlay(args) -> int:
    from PIL import Image

    img = image_io.load_gray(args.image)
    src = Path(args.objects)
    if src.is_dir():
        masks, entries = image_io.load_masks(src)
        if (masks.width, masks.height) != (img.width, img.height):
            raise ImageFormatError(f"masks are {masks.width}x{masks.height}, image is {img.width}x{img.height}")
        layers = [(int(e.get("id", k)), m) for k, (e, m) in enumerate(zip(entries, masks.masks))]
    else:
        layers = _segment_layers(_load_segments(src), img.width, img.height)
    Image.fromarray(render_overlay(img, layers), mode="RGB").save(args.out, format="PNG")
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="motlines", description="Linear object detection by multiple object tracking.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def config_opts(p):
        p.add_argument("--config", help="INI-style key = value file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    p = sub.add_parser("detect", help="detect linear objects in an image (or a directory of images)")
    p.add_argument("input")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tracker", help="one of: " + ", ".join(k.value for k in TrackerKind))
    config_opts(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval-vector", help="score predicted segments against ground truth")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--out", help="also write the report to this file")
    config_opts(p)
    p.set_defaults(func=cmd_eval_vector)

    p = sub.add_parser("eval-instance", help="panoptic quality and pixel F-score of mask directories")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--out", help="also write the report to this file")
    p.set_defaults(func=cmd_eval_instance)

    p = sub.add_parser("synth", help="render a synthetic image with ground truth")
    p.add_argument("spec")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("overlay", help="tint detected objects over the input image")
    p.add_argument("image")
    p.add_argument("objects", help="segments.json or a masks directory")
    p.add_argument("--out", required=True, help="output PNG")
    p.set_defaults(func=cmd_overlay)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SynthSpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EvaluationError as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except (OSError, ImageFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
