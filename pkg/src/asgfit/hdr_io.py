"""Panorama file I/O and grid resampling.

Covers the two on-disk image formats (Radiance RGBE ``.hdr`` with both
scanline encodings, and PFM as the lossless float interchange), the
JSON file holding fitted sequences, and the energy-preserving
resampling used to bring arbitrary inputs onto the fit grid.  Byte
layouts and conventions are documented in docs/format.md.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass

import numpy as np

from . import asg
from .geometry import direction_to_pixel, solid_angle
from .losses import LossWeights
from .optimizer import FitConfig

PARAMS_FORMAT = "asgfit-params/1"

# Widths outside this range cannot carry the 2,2,hi,lo scanline header;
# the writer falls back to flat quads there.
RLE_MIN_WIDTH = 8
RLE_MAX_WIDTH = 32767
_MIN_RUN = 4

_RESOLUTION_RE = re.compile(rb"^-Y (\d+) \+X (\d+)$")


class HdrParseError(ValueError):
    """Malformed image file; the message names the byte offset at which
    parsing stopped when one is known."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass
class EnvMap:
    """An equirectangular radiance panorama: (H, W, 3) float64 linear
    values, finite and >= 0 once validated at load."""

    pixels: np.ndarray
    source: str = ""

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def sample(self, dirs: np.ndarray) -> np.ndarray:
        """Bilinear radiance lookup at unit directions, (..., 3) in and
        out.  Wraps in azimuth, clamps at the poles."""
        px, py = direction_to_pixel(dirs, self.width, self.height)
        return _bilinear_lookup(self.pixels, px, py)


def _validate_pixels(pixels: np.ndarray, source: str) -> None:
    bad = ~np.isfinite(pixels) | (pixels < 0.0)
    if bad.any():
        y, x, ch = np.argwhere(bad)[0]
        raise HdrParseError(f"non-finite or negative radiance at pixel "
                            f"x={x} y={y} channel={ch} in {source or 'input'}")


# ---------------------------------------------------------------------------
# RGBE pixel codec

def rgbe_decode(rgbe: np.ndarray) -> np.ndarray:
    """Shared-exponent quads (..., 4) uint8 -> linear RGB floats.

    Zero exponent means a black pixel; otherwise each channel is
    mantissa * 2^(e - 136), the reference decode rule without the +0.5
    mantissa center offset.
    """
    rgbe = np.asarray(rgbe, dtype=np.uint8)
    e = rgbe[..., 3].astype(np.int32)
    scale = np.where(e == 0, 0.0, np.ldexp(1.0, e - 136))
    return rgbe[..., :3].astype(float) * scale[..., None]


def rgbe_encode(rgb: np.ndarray) -> np.ndarray:
    """Linear RGB (..., 3), values >= 0 -> shared-exponent quads.

    The exponent comes from frexp of the dominant channel and mantissas
    are rounded to nearest, so the dominant channel's relative error is
    at most 1/256.  Rounding can push a mantissa to 256; the exponent is
    bumped once in that case.  Values too small for the smallest
    exponent become black; values beyond the largest saturate at
    mantissa 255.
    """
    rgb = np.asarray(rgb, dtype=float)
    flat = rgb.reshape(-1, 3)
    v = flat.max(axis=-1)
    _, e = np.frexp(v)
    mant = np.rint(flat * np.ldexp(1.0, 8 - e)[:, None])
    e = np.where(mant.max(axis=-1) >= 256.0, e + 1, e)
    e = np.minimum(e, 127)
    mant = np.clip(np.rint(flat * np.ldexp(1.0, 8 - e)[:, None]), 0.0, 255.0)
    out = np.empty((flat.shape[0], 4), dtype=np.uint8)
    out[:, :3] = mant
    out[:, 3] = (e + 128).astype(np.uint8)
    out[(v <= 0.0) | (e < -127)] = 0
    return out.reshape(rgb.shape[:-1] + (4,))


# ---------------------------------------------------------------------------
# Radiance .hdr container

def _read_header_line(data: bytes, pos: int) -> tuple[bytes, int]:
    end = data.find(b"\n", pos)
    if end < 0:
        raise HdrParseError("truncated header", pos)
    return data[pos:end], end + 1


def read_hdr(data: bytes) -> EnvMap:
    """Decode a Radiance RGBE file.

    Accepts any ``#?`` program signature, requires the 32-bit_rle_rgbe
    format declaration and the standard ``-Y h +X w`` orientation, and
    handles new-style (component RLE), old-style (repeat markers), and
    flat scanlines.  Other header variables (EXPOSURE, GAMMA, ...) are
    ignored as metadata.
    """
    if not data.startswith(b"#?"):
        raise HdrParseError("missing #? signature", 0)
    _, pos = _read_header_line(data, 0)
    format_seen = False
    while True:
        line, pos = _read_header_line(data, pos)
        if line == b"":
            break
        if line.startswith(b"#"):
            continue
        if b"=" in line:
            var, _, val = line.partition(b"=")
            if var.strip() == b"FORMAT":
                if val.strip() != b"32-bit_rle_rgbe":
                    raise HdrParseError(f"unsupported format {val!r}", pos)
                format_seen = True
    if not format_seen:
        raise HdrParseError("missing FORMAT declaration", pos)
    line, pos = _read_header_line(data, pos)
    match = _RESOLUTION_RE.match(line)
    if match is None:
        raise HdrParseError(f"unsupported resolution line {line!r}", pos)
    height, width = int(match.group(1)), int(match.group(2))
    if height < 1 or width < 1:
        raise HdrParseError("degenerate resolution", pos)

    rows = np.empty((height, width, 4), dtype=np.uint8)
    for y in range(height):
        rows[y], pos = _read_scanline(data, pos, width)
    return EnvMap(rgbe_decode(rows))


def _read_scanline(data: bytes, pos: int, width: int):
    if pos + 4 > len(data):
        raise HdrParseError("truncated scanline", pos)
    head = data[pos:pos + 4]
    new_style = (RLE_MIN_WIDTH <= width <= RLE_MAX_WIDTH
                 and head[0] == 2 and head[1] == 2 and (head[2] & 0x80) == 0)
    if not new_style:
        return _read_scanline_old(data, pos, width)
    if (head[2] << 8) | head[3] != width:
        raise HdrParseError(f"scanline header width {(head[2] << 8) | head[3]} "
                            f"does not match image width {width}", pos)
    pos += 4
    comps = np.empty((4, width), dtype=np.uint8)
    for ci in range(4):
        x = 0
        while x < width:
            if pos >= len(data):
                raise HdrParseError("truncated scanline", pos)
            code = data[pos]
            pos += 1
            if code > 128:                       # run packet
                run = code - 128
                if x + run > width or pos >= len(data):
                    raise HdrParseError("run overflows scanline", pos - 1)
                comps[ci, x:x + run] = data[pos]
                pos += 1
                x += run
            elif code > 0:                       # literal packet
                if x + code > width or pos + code > len(data):
                    raise HdrParseError("literal overflows scanline", pos - 1)
                comps[ci, x:x + code] = np.frombuffer(data, np.uint8, code, pos)
                pos += code
                x += code
            else:
                raise HdrParseError("zero-length packet", pos - 1)
    return comps.T, pos


def _read_scanline_old(data: bytes, pos: int, width: int):
    out = np.empty((width, 4), dtype=np.uint8)
    x = 0
    rshift = 0
    while x < width:
        if pos + 4 > len(data):
            raise HdrParseError("truncated scanline", pos)
        quad = data[pos:pos + 4]
        if quad[0] == 1 and quad[1] == 1 and quad[2] == 1:
            if x == 0:
                raise HdrParseError("repeat marker with no previous pixel", pos)
            count = quad[3] << rshift
            if x + count > width:
                raise HdrParseError("repeat run crosses scanline end", pos)
            out[x:x + count] = out[x - 1]
            x += count
            rshift += 8
        else:
            out[x] = np.frombuffer(quad, np.uint8)
            x += 1
            rshift = 0
        pos += 4
    return out, pos


def _rle_encode_component(comp: np.ndarray) -> bytes:
    out = bytearray()
    boundaries = np.flatnonzero(np.diff(comp)) + 1
    starts = np.concatenate([[0], boundaries])
    lengths = np.diff(np.concatenate([starts, [comp.size]]))
    lit_start = None

    def flush_literals(end):
        nonlocal lit_start
        if lit_start is None:
            return
        for i in range(lit_start, end, 128):
            n = min(128, end - i)
            out.append(n)
            out.extend(comp[i:i + n].tobytes())
        lit_start = None

    for s, n in zip(starts, lengths):
        if n >= _MIN_RUN:
            flush_literals(s)
            val = int(comp[s])
            while n > 0:
                chunk = min(127, n)
                out.append(128 + chunk)
                out.append(val)
                n -= chunk
        elif lit_start is None:
            lit_start = s
    flush_literals(comp.size)
    return bytes(out)


def write_hdr(env: EnvMap) -> bytes:
    """Encode to Radiance RGBE bytes, new-style RLE scanlines.

    Widths outside the RLE-encodable range fall back to flat quads,
    which the old-style reader path consumes.  Re-encoding a decoded
    canonical file reproduces it byte for byte: encoded dominant
    mantissas always land in [128, 255], which frexp maps back to the
    same exponent.
    """
    pixels = env.pixels
    height, width = pixels.shape[:2]
    out = bytearray(b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n")
    out.extend(f"-Y {height} +X {width}\n".encode())
    rgbe = rgbe_encode(pixels)
    if RLE_MIN_WIDTH <= width <= RLE_MAX_WIDTH:
        for y in range(height):
            out.extend(bytes([2, 2, width >> 8, width & 0xFF]))
            for ci in range(4):
                out.extend(_rle_encode_component(rgbe[y, :, ci]))
    else:
        out.extend(rgbe.tobytes())
    return bytes(out)


# ---------------------------------------------------------------------------
# PFM

def read_pfm(data: bytes) -> EnvMap:
    """Decode a PFM image; grayscale ``Pf`` maps broadcast to RGB.

    The sign of the scale line encodes endianness (negative = little);
    its magnitude multiplies the samples.  Rows are stored bottom-up.
    """
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise HdrParseError("truncated PFM header", pos)
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte separates header from samples
    magic = tokens[0]
    if magic not in (b"PF", b"Pf"):
        raise HdrParseError(f"not a PFM file (magic {magic!r})", 0)
    channels = 3 if magic == b"PF" else 1
    try:
        width, height = int(tokens[1]), int(tokens[2])
        scale = float(tokens[3])
    except ValueError as exc:
        raise HdrParseError(f"bad PFM header field: {exc}", pos) from None
    if width < 1 or height < 1 or scale == 0.0:
        raise HdrParseError("degenerate PFM header", pos)
    count = width * height * channels
    dtype = np.dtype("<f4" if scale < 0.0 else ">f4")
    if pos + count * 4 > len(data):
        raise HdrParseError("truncated PFM samples", len(data))
    samples = np.frombuffer(data, dtype, count, pos).astype(float)
    img = samples.reshape(height, width, channels)[::-1] * abs(scale)
    if channels == 1:
        img = np.repeat(img, 3, axis=2)
    return EnvMap(np.ascontiguousarray(img))


def write_pfm(env: EnvMap) -> bytes:
    """Encode as little-endian color PFM (scale -1.0), rows bottom-up."""
    height, width = env.pixels.shape[:2]
    header = f"PF\n{width} {height}\n-1.0\n".encode()
    return header + env.pixels[::-1].astype("<f4").tobytes()


# ---------------------------------------------------------------------------
# Loading, saving, resampling

def load_env(path: str) -> EnvMap:
    """Read a panorama by extension (.hdr/.pic or .pfm) and validate it."""
    ext = os.path.splitext(path)[1].lower()
    with open(path, "rb") as f:
        data = f.read()
    if ext in (".hdr", ".pic"):
        env = read_hdr(data)
    elif ext == ".pfm":
        env = read_pfm(data)
    else:
        raise HdrParseError(f"unsupported image format {ext!r} for {path}")
    _validate_pixels(env.pixels, path)
    env.source = path
    return env


def save_env(path: str, env: EnvMap) -> None:
    ext = os.path.splitext(path)[1].lower()
    if ext in (".hdr", ".pic"):
        data = write_hdr(env)
    elif ext == ".pfm":
        data = write_pfm(env)
    else:
        raise ValueError(f"unsupported image format {ext!r} for {path}")
    atomic_write_bytes(path, data)


def atomic_write_bytes(path: str, data: bytes) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def _bilinear_lookup(img: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    height, width = img.shape[:2]
    x0 = np.floor(px).astype(int)
    y0 = np.floor(py).astype(int)
    fx = (px - x0)[..., None]
    fy = (py - y0)[..., None]
    x1 = (x0 + 1) % width
    x0 %= width
    y1 = np.clip(y0 + 1, 0, height - 1)
    y0 = np.clip(y0, 0, height - 1)
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def _overlap_matrix(edges_t: np.ndarray, edges_s: np.ndarray) -> np.ndarray:
    lo = np.maximum(edges_t[:-1, None], edges_s[None, :-1])
    hi = np.minimum(edges_t[1:, None], edges_s[None, 1:])
    return np.clip(hi - lo, 0.0, None)


def resample(env: EnvMap, height: int, width: int | None = None) -> EnvMap:
    """Bring a panorama onto a target grid (default 2:1 aspect).

    Downsampling integrates source-pixel flux over target pixels
    (energy Σ w·I is conserved exactly up to round-off); upsampling is
    bilinear in angle space with azimuth wrap.  Identical dims return a
    copy.
    """
    if width is None:
        width = 2 * height
    src = env.pixels
    src_h, src_w = src.shape[:2]
    if src_h < 4 or src_w < 8:
        raise ValueError(f"source too small to resample ({src_h}x{src_w})")
    if (src_h, src_w) == (height, width):
        return EnvMap(src.copy(), env.source)
    if height <= src_h and width <= src_w:
        # Solid angle factorizes as dphi * d(-cos theta); integrate flux
        # over the overlap of source and target cells in each factor.
        a_y = _overlap_matrix(-np.cos(np.pi * np.arange(height + 1) / height),
                              -np.cos(np.pi * np.arange(src_h + 1) / src_h))
        a_x = _overlap_matrix(2.0 * np.pi * np.arange(width + 1) / width,
                              2.0 * np.pi * np.arange(src_w + 1) / src_w)
        flux = np.tensordot(np.tensordot(a_y, src, axes=(1, 0)),
                            a_x, axes=(1, 1))          # (Ht, 3, Wt)
        area = solid_angle(np.arange(height), width, height)
        out = flux.transpose(0, 2, 1) / area[:, None, None]
    else:
        pxx, pyy = np.meshgrid(np.arange(width), np.arange(height))
        sx = (pxx + 0.5) * src_w / width - 0.5
        sy = (pyy + 0.5) * src_h / height - 0.5
        out = _bilinear_lookup(src, sx, sy)
    return EnvMap(np.ascontiguousarray(out), env.source)


# ---------------------------------------------------------------------------
# Fitted-parameter JSON files

def config_to_dict(cfg: FitConfig) -> dict:
    d = {f: getattr(cfg, f) for f in ("num_asgs", "grid_height", "epochs_first",
                                      "epochs_rest", "learning_rate", "adam_beta1",
                                      "adam_beta2", "adam_eps", "isotropic",
                                      "recon_loss", "seed", "deterministic")}
    d["weights"] = {"alpha": cfg.weights.alpha, "beta": cfg.weights.beta,
                    "gamma": cfg.weights.gamma}
    return d


def config_from_dict(d: dict) -> FitConfig:
    d = dict(d)
    weights = LossWeights(**d.pop("weights"))
    return FitConfig(weights=weights, **d)


def save_params(path: str, mixtures, cfg: FitConfig) -> None:
    """Write fitted frames as JSON, atomically.

    Stores realized values (mu, lambda, unit u and n, RGB c), never the
    raw log/seed encoding, so files mean the same thing to any
    implementation.  float64 round-trips exactly through repr.
    """
    frames = []
    for params in mixtures:
        r = params if isinstance(params, asg.RealizedMixture) else asg.realize(params)
        frames.append({"lobes": [
            {"mu": float(r.mu[i]), "lambda": float(r.lam[i]),
             "u": [float(x) for x in r.u[i]], "n": [float(x) for x in r.n[i]],
             "c": [float(x) for x in r.c[i]]}
            for i in range(r.count)]})
    doc = {"format": PARAMS_FORMAT, "config": config_to_dict(cfg), "frames": frames}
    atomic_write_bytes(path, json.dumps(doc, indent=1).encode())


def load_params(path: str):
    """Read a params file back as (realized mixtures, FitConfig)."""
    with open(path, "rb") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise HdrParseError(f"invalid params JSON in {path}: {exc}") from None
    if doc.get("format") != PARAMS_FORMAT:
        raise HdrParseError(f"unsupported params format {doc.get('format')!r} "
                            f"in {path}")
    try:
        cfg = config_from_dict(doc["config"])
        mixtures = []
        for frame in doc["frames"]:
            lobes = frame["lobes"]
            mixtures.append(asg.realized_from_values(
                mu=[lb["mu"] for lb in lobes],
                lam=[lb["lambda"] for lb in lobes],
                u=[lb["u"] for lb in lobes],
                n=[lb["n"] for lb in lobes],
                c=[lb["c"] for lb in lobes]))
    except (KeyError, TypeError, ValueError) as exc:
        raise HdrParseError(f"malformed params file {path}: {exc}") from None
    if not mixtures:
        raise HdrParseError(f"params file {path} holds no frames")
    counts = {m.count for m in mixtures}
    if len(counts) != 1:
        raise HdrParseError(f"lobe counts differ across frames in {path}: "
                            f"{sorted(counts)}")
    return mixtures, cfg
