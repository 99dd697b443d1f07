"""Grayscale rasters, label masks and synthetic fixtures.

Images are held as ``uint8`` numpy arrays of shape ``(height, width)``;
0 is black and 255 is white. Label masks store each object as a sorted
array of flat pixel indices (``y * width + x``) so that a pixel can belong
to several objects.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

PathLike = str | os.PathLike


class ImageFormatError(ValueError):
    """Raised when an image file cannot be decoded as 8-bit grayscale."""


class SynthSpecError(ValueError):
    """Raised for an invalid synthetic image description."""


@dataclass(frozen=True, eq=False)
class GrayImage:
    pixels: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-D raster, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def from_data(cls, width: int, height: int, data: Sequence[int]) -> "GrayImage":
        arr = np.asarray(data, dtype=np.uint8)
        if arr.size != width * height:
            raise ValueError(f"data length {arr.size} != {width}x{height}")
        return cls(arr.reshape(height, width))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def data(self) -> np.ndarray:
        """Row-major flat view of the raster."""
        return self.pixels.reshape(-1)

    def column(self, x: int) -> np.ndarray:
        return self.pixels[:, x]

    def row(self, y: int) -> np.ndarray:
        return self.pixels[y, :]

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    def __hash__(self):
        return hash((self.pixels.shape, self.pixels.tobytes()))


@dataclass(eq=False)
class LabelMasks:
    """Per-object pixel sets over a ``width`` x ``height`` raster."""

    width: int
    height: int
    masks: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        size = self.width * self.height
        clean = []
        for k, m in enumerate(self.masks):
            m = np.unique(np.asarray(m, dtype=np.int64))
            if m.size == 0:
                raise ValueError(f"mask {k} is empty")
            if m[0] < 0 or m[-1] >= size:
                raise ValueError(f"mask {k} has pixels outside {self.width}x{self.height}")
            clean.append(m)
        self.masks = clean

    @classmethod
    def from_pixel_sets(cls, width, height, sets) -> "LabelMasks":
        masks = []
        for s in sets:
            xy = np.array(sorted(s), dtype=np.int64).reshape(-1, 2)
            if ((xy[:, 0] < 0) | (xy[:, 0] >= width) | (xy[:, 1] < 0) | (xy[:, 1] >= height)).any():
                raise ValueError("pixel outside raster")
            masks.append(xy[:, 1] * width + xy[:, 0])
        return cls(width, height, masks)

    def __len__(self):
        return len(self.masks)

    def pixel_set(self, k: int) -> set[tuple[int, int]]:
        ys, xs = np.divmod(self.masks[k], self.width)
        return set(zip(xs.tolist(), ys.tolist()))

    def to_bool(self, k: int) -> np.ndarray:
        out = np.zeros(self.width * self.height, dtype=bool)
        out[self.masks[k]] = True
        return out.reshape(self.height, self.width)

    def foreground(self) -> np.ndarray:
        out = np.zeros(self.width * self.height, dtype=bool)
        for m in self.masks:
            out[m] = True
        return out.reshape(self.height, self.width)

    def __eq__(self, other):
        if not isinstance(other, LabelMasks):
            return NotImplemented
        return (
            (self.width, self.height) == (other.width, other.height)
            and len(self.masks) == len(other.masks)
            and all(np.array_equal(a, b) for a, b in zip(self.masks, other.masks))
        )


@dataclass(frozen=True)
class SynthSegment:
    x0: float
    y0: float
    x1: float
    y1: float
    thickness: float = 1.0
    luminance: int = 0
    dash_on: float = 0.0
    dash_off: float = 0.0


@dataclass(frozen=True)
class SynthSpec:
    width: int
    height: int
    segments: tuple[SynthSegment, ...] = ()
    noise_sigma: float = 0.0
    background: int = 255

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        try:
            segs = tuple(SynthSegment(**s) for s in d.get("segments", []))
            return cls(
                width=int(d["width"]),
                height=int(d["height"]),
                segments=segs,
                noise_sigma=float(d.get("noise_sigma", 0.0)),
                background=int(d.get("background", 255)),
            )
        except (KeyError, TypeError) as exc:
            raise SynthSpecError(f"malformed synthetic spec: {exc}") from exc

    def validate(self):
        if self.width < 1 or self.height < 1:
            raise SynthSpecError("width and height must be >= 1")
        if not 0 <= self.background <= 255:
            raise SynthSpecError("background must lie in 0..255")
        if self.noise_sigma < 0:
            raise SynthSpecError("noise_sigma must be >= 0")
        for k, s in enumerate(self.segments):
            for x, y in ((s.x0, s.y0), (s.x1, s.y1)):
                if not (0 <= x <= self.width - 1 and 0 <= y <= self.height - 1):
                    raise SynthSpecError(f"segment {k} endpoint ({x}, {y}) outside raster")
            if s.thickness < 1:
                raise SynthSpecError(f"segment {k} thickness must be >= 1")
            if not 0 <= s.luminance <= 255:
                raise SynthSpecError(f"segment {k} luminance must lie in 0..255")
            if s.dash_on < 0 or s.dash_off < 0:
                raise SynthSpecError(f"segment {k} dash lengths must be >= 0")
            if s.dash_off > 0 and s.dash_on <= 0:
                raise SynthSpecError(f"segment {k} dashed without dash_on")


# --------------------------------------------------------------------------
# PGM / PNG
# --------------------------------------------------------------------------

def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    return buf[start:pos], pos


def decode_pgm(buf: bytes) -> GrayImage:
    magic, pos = _read_token(buf, 0)
    if magic != b"P5":
        raise ImageFormatError(f"unsupported magic number {magic!r}; only binary P5 is read")
    fields = {}
    for name in ("width", "height", "maxval"):
        tok, pos = _read_token(buf, pos)
        try:
            fields[name] = int(tok)
        except ValueError:
            raise ImageFormatError(f"bad {name} field {tok!r}") from None
    w, h, maxval = fields["width"], fields["height"], fields["maxval"]
    if w < 1:
        raise ImageFormatError(f"bad width field {w}")
    if h < 1:
        raise ImageFormatError(f"bad height field {h}")
    if not 0 < maxval <= 255:
        raise ImageFormatError(f"unsupported maxval {maxval}; only 8-bit samples (maxval <= 255)")
    pos += 1  # single whitespace byte after maxval
    payload = buf[pos:pos + w * h]
    if len(payload) != w * h:
        raise ImageFormatError(f"truncated raster: expected {w * h} bytes, got {len(payload)}")
    return GrayImage(np.frombuffer(payload, dtype=np.uint8).reshape(h, w))


def encode_pgm(img: GrayImage) -> bytes:
    return f"P5\n{img.width} {img.height}\n255\n".encode("ascii") + img.pixels.tobytes()


def load_gray(path: PathLike) -> GrayImage:
    """Read a P5 PGM or an 8-bit grayscale PNG without rescaling."""
    path = Path(path)
    buf = path.read_bytes()
    if buf[:2] == b"P5" or path.suffix.lower() in (".pgm", ".pnm"):
        return decode_pgm(buf)
    if buf[:8] == b"\x89PNG\r\n\x1a\n":
        from PIL import Image

        with Image.open(path) as im:
            if im.mode != "L":
                raise ImageFormatError(f"unsupported PNG mode {im.mode!r}; expected 8-bit grayscale 'L'")
            return GrayImage(np.asarray(im, dtype=np.uint8))
    raise ImageFormatError(f"unrecognised magic number {buf[:2]!r} in {path}")


def save_gray(img: GrayImage, path: PathLike):
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image

        Image.fromarray(np.asarray(img.pixels), mode="L").save(path)
    else:
        path.write_bytes(encode_pgm(img))


def transpose(img: GrayImage) -> GrayImage:
    return GrayImage(img.pixels.T)


# --------------------------------------------------------------------------
# Pre-processing
# --------------------------------------------------------------------------

def black_top_hat(img: GrayImage, radius: int) -> GrayImage:
    """Remove uneven background: ``255 - (closing(img) - img)``.

    The closing uses a flat square of side ``2 * radius + 1``. The input is
    edge-replicated by ``2 * radius`` once, so the intermediate dilation is
    computed from image values everywhere the erosion reads it and a smooth
    illumination ramp is not lifted near the borders. Dark strokes thinner
    than the square stay dark; the background becomes uniformly white.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    size = 2 * radius + 1
    pad = 2 * radius
    src = img.pixels.astype(np.int16)
    ext = np.pad(src, pad, mode="edge")
    closed = ndimage.grey_closing(ext, size=(size, size), mode="nearest")[pad:-pad, pad:-pad]
    hat = np.clip(closed - src, 0, 255)
    return GrayImage((255 - hat).astype(np.uint8))


# --------------------------------------------------------------------------
# Synthetic fixtures
# --------------------------------------------------------------------------

def rasterize_segment(seg: SynthSegment, width: int, height: int) -> np.ndarray:
    """Flat indices of the pixels covered by a thick, optionally dashed segment.

    A pixel centre belongs to the segment when its projection on the centre
    line falls within the segment extent and its signed perpendicular
    distance lies in ``[-thickness/2, thickness/2)``.
    """
    p0 = np.array([seg.x0, seg.y0], dtype=float)
    p1 = np.array([seg.x1, seg.y1], dtype=float)
    d = p1 - p0
    length = float(np.hypot(*d))
    half = seg.thickness / 2.0
    if length == 0:
        u, n = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    else:
        u = d / length
        n = np.array([-u[1], u[0]])
    pad = half + 1
    x_lo = max(int(np.floor(min(seg.x0, seg.x1) - pad)), 0)
    x_hi = min(int(np.ceil(max(seg.x0, seg.x1) + pad)), width - 1)
    y_lo = max(int(np.floor(min(seg.y0, seg.y1) - pad)), 0)
    y_hi = min(int(np.ceil(max(seg.y0, seg.y1) + pad)), height - 1)
    ys, xs = np.mgrid[y_lo:y_hi + 1, x_lo:x_hi + 1]
    rx = xs - p0[0]
    ry = ys - p0[1]
    along = rx * u[0] + ry * u[1]
    across = rx * n[0] + ry * n[1]
    eps = 1e-9
    inside = (along >= -eps) & (along <= length + eps)
    inside &= (across >= -half - eps) & (across < half - eps)
    if seg.dash_off > 0:
        period = seg.dash_on + seg.dash_off
        inside &= np.mod(np.maximum(along, 0.0) + eps, period) < seg.dash_on
    return np.sort((ys[inside] * width + xs[inside]).astype(np.int64))


def render_synthetic(spec: SynthSpec, rng: np.random.Generator | int | None = None):
    """Draw ``spec`` and return ``(image, masks, segments)``.

    ``segments`` are the ground-truth centre lines as ``(x0, y0, x1, y1)``
    tuples, aligned with ``masks``. Where segments overlap the darker
    luminance wins.
    """
    spec.validate()
    w, h = spec.width, spec.height
    canvas = np.full(w * h, spec.background, dtype=np.float64)
    masks, segments = [], []
    for seg in spec.segments:
        idx = rasterize_segment(seg, w, h)
        if idx.size == 0:
            raise SynthSpecError(f"segment {seg} covers no pixel")
        canvas[idx] = np.minimum(canvas[idx], seg.luminance)
        masks.append(idx)
        segments.append((float(seg.x0), float(seg.y0), float(seg.x1), float(seg.y1)))
    if spec.noise_sigma > 0:
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        canvas += rng.normal(0.0, spec.noise_sigma, size=canvas.shape)
    pixels = np.clip(np.rint(canvas), 0, 255).astype(np.uint8).reshape(h, w)
    return GrayImage(pixels), LabelMasks(w, h, masks), segments


# --------------------------------------------------------------------------
# Mask directories
# --------------------------------------------------------------------------

def save_masks(masks: LabelMasks, directory: PathLike, objects: Sequence[dict] | None = None):
    """Write ``obj_<k>.pgm`` files (255 = member) plus ``index.json``.

    ``objects`` optionally carries per-mask metadata (id, axis, endpoints)
    merged into the index entries.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, m in enumerate(masks.masks):
        meta = dict(objects[k]) if objects is not None else {}
        oid = int(meta.pop("id", k))
        fname = f"obj_{oid}.pgm"
        raster = np.zeros(masks.width * masks.height, dtype=np.uint8)
        raster[m] = 255
        save_gray(GrayImage(raster.reshape(masks.height, masks.width)), directory / fname)
        entries.append({"id": oid, "file": fname, **meta})
    index = {"width": masks.width, "height": masks.height, "objects": entries}
    (directory / "index.json").write_text(json.dumps(index, indent=2) + "\n")


def load_masks(directory: PathLike) -> tuple[LabelMasks, list[dict]]:
    directory = Path(directory)
    index = json.loads((directory / "index.json").read_text())
    w, h = int(index["width"]), int(index["height"])
    out = []
    for entry in index["objects"]:
        img = load_gray(directory / entry["file"])
        if (img.width, img.height) != (w, h):
            raise ImageFormatError(f"{entry['file']} is {img.width}x{img.height}, index says {w}x{h}")
        out.append(np.flatnonzero(img.data))
    return LabelMasks(w, h, out), list(index["objects"])
