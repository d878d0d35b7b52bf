"""Synthetic word-image generator and on-disk dataset format.

A sample is a grayscale strip containing one random alphanumeric string
drawn with the built-in 5x7 font, scaled by an integer factor, placed at
a random offset with at least one pixel of clean border, with random
foreground/background contrast (either polarity) and optional additive
Gaussian noise.  The exact glyph support mask and per-character column
boxes are kept alongside the image, so segmentation quality can be
scored against ground truth.

On disk a dataset is:

    index.tsv            one line per sample: relpath<TAB>label<TAB>boxes
    meta.txt             ``key = value`` lines (geometry, charset, count)
    images/NNNNNN.pgm    binary 8-bit PGM (P5)
    masks/NNNNNN.pgm     glyph support mask, same format (optional)

Boxes serialize as ``x0,x1;x0,x1;...`` with half-open [x0, x1) column
intervals, one per character, left to right.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, FormatError, ParseError, ShapeError
from .font5x7 import GLYPH_H, GLYPH_W, glyph_bitmap
from .tensor import rng

CHARSET = "0123456789abcdefghijklmnopqrstuvwxyz"


@dataclass
class GenConfig:
    height: int = 16
    width: int = 64
    count: int = 100
    seed: int = 0
    min_len: int = 1
    max_len: int = 7
    noise_sigma: float = 0.05
    min_contrast: float = 0.4
    invert_prob: float = 0.5
    charset: str = CHARSET

    def validate(self) -> None:
        if self.min_len < 1 or self.max_len < self.min_len:
            raise ConfigError(f"bad length range [{self.min_len}, {self.max_len}]")
        if self.height < GLYPH_H + 2:
            raise ConfigError(f"height {self.height} cannot fit a {GLYPH_H}-row glyph plus margins")
        need = 6 * self.max_len - 1
        if self.width - 2 < need:
            raise ConfigError(
                f"width {self.width} cannot fit {self.max_len} glyphs (needs {need + 2} columns)")
        if not (0.0 < self.min_contrast <= 1.0):
            raise ConfigError(f"min_contrast {self.min_contrast} outside (0, 1]")
        if self.noise_sigma < 0:
            raise ConfigError(f"negative noise_sigma {self.noise_sigma}")
        if not (0.0 <= self.invert_prob <= 1.0):
            raise ConfigError(f"invert_prob {self.invert_prob} outside [0, 1]")
        if self.count < 1:
            raise ConfigError(f"count {self.count} must be positive")
        if len(set(self.charset)) != len(self.charset) or not self.charset:
            raise ConfigError("charset must be non-empty without duplicates")


@dataclass
class Sample:
    image: np.ndarray                       # (H, W) float64 in [0, 1]
    label: str
    char_boxes: list = field(default_factory=list)   # [(x0, x1)), ...] half-open
    glyph_mask: np.ndarray | None = None    # (H, W) float64 {0, 1}, pre-noise


def render_sample(gen: np.random.Generator, cfg: GenConfig) -> Sample:
    """Draw one labeled strip. Randomness comes only from ``gen``.

    Draw order is fixed (length, chars, contrast, background level,
    polarity, x offset, y offset, noise field) so a seeded generator
    reproduces the sample bit for bit.
    """
    h, w = cfg.height, cfg.width
    length = int(gen.integers(cfg.min_len, cfg.max_len + 1))
    label = "".join(cfg.charset[int(i)] for i in gen.integers(0, len(cfg.charset), size=length))

    # largest integer scale that fits with a 1-px clean border all around
    scale = max(1, min((h - 2) // GLYPH_H, (w - 2) // (6 * length - 1)))
    total_w = scale * (6 * length - 1)
    glyph_h = scale * GLYPH_H

    contrast = float(gen.uniform(cfg.min_contrast, 1.0))
    bg = float(gen.uniform(0.0, 1.0 - contrast))
    fg = bg + contrast
    if gen.uniform() < cfg.invert_prob:     # draw always happens: stream stays aligned
        bg, fg = fg, bg
    x0 = int(gen.integers(1, w - total_w))      # [1, w-1-total_w]
    y0 = int(gen.integers(1, h - glyph_h))

    mask = np.zeros((h, w))
    boxes = []
    for i, ch in enumerate(label):
        cx = x0 + i * 6 * scale
        bm = glyph_bitmap(ch)
        big = np.repeat(np.repeat(bm, scale, axis=0), scale, axis=1)
        mask[y0:y0 + glyph_h, cx:cx + GLYPH_W * scale] = big
        boxes.append((cx, cx + GLYPH_W * scale))

    image = np.full((h, w), bg)
    image[mask > 0] = fg
    if cfg.noise_sigma > 0:
        image = image + gen.normal(0.0, cfg.noise_sigma, size=(h, w))
        image = np.clip(image, 0.0, 1.0)
    return Sample(image=image, label=label, char_boxes=boxes, glyph_mask=mask)


def generate(cfg: GenConfig) -> list:
    """Render cfg.count samples, each pure under (cfg.seed, index)."""
    cfg.validate()
    return [render_sample(rng([cfg.seed, i]), cfg) for i in range(cfg.count)]


# ----------------------------------------------------------------- image IO


def write_image(path: str, arr: np.ndarray) -> None:
    """Write a [0, 1] float array as a binary 8-bit PGM (P5)."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"write_image wants a 2-D array, got shape {a.shape}")
    if a.min() < 0.0 or a.max() > 1.0:
        raise ContractError(
            f"write_image values outside [0, 1]: min {a.min():.6g}, max {a.max():.6g}")
    q = np.rint(a * 255.0).astype(np.uint8)
    header = f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(q.tobytes())


def read_image(path: str) -> np.ndarray:
    """Read a binary 8-bit PGM back to floats in [0, 1]."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:2] != b"P5":
        raise FormatError(f"{path}: offset 0: expected magic 'P5'")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos:pos + 1] == b"#":   # comment line
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        tok = blob[start:pos]
        if not tok.isdigit():
            raise FormatError(f"{path}: offset {start}: bad header token {tok!r}")
        fields.append(int(tok))
    w, h, maxval = fields
    if maxval != 255:
        raise FormatError(f"{path}: offset {pos}: unsupported maxval {maxval}")
    pos += 1    # single whitespace byte after maxval
    need = w * h
    raster = blob[pos:pos + need]
    if len(raster) != need:
        raise FormatError(
            f"{path}: offset {pos}: raster truncated, need {need} bytes, have {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).astype(np.float64) / 255.0


# --------------------------------------------------------------- dataset IO


def _format_boxes(boxes) -> str:
    return ";".join(f"{int(x0)},{int(x1)}" for x0, x1 in boxes)


def _parse_boxes(text: str, where: str):
    boxes = []
    for part in text.split(";"):
        bits = part.split(",")
        if len(bits) != 2 or not all(b.lstrip("-").isdigit() for b in bits):
            raise ParseError(f"{where}: bad box {part!r}")
        x0, x1 = int(bits[0]), int(bits[1])
        if x1 <= x0:
            raise ParseError(f"{where}: empty box {part!r}")
        boxes.append((x0, x1))
    return boxes


def write_dataset(samples: list, out_dir: str, meta_extra: dict | None = None) -> None:
    """Persist samples under ``out_dir`` (created if needed)."""
    if not samples:
        raise ConfigError("write_dataset: empty sample list")
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    has_masks = any(s.glyph_mask is not None for s in samples)
    if has_masks:
        os.makedirs(os.path.join(out_dir, "masks"), exist_ok=True)
    h, w = samples[0].image.shape
    lines = []
    for i, s in enumerate(samples):
        if s.image.shape != (h, w):
            raise ConfigError(f"sample {i} shape {s.image.shape} differs from {(h, w)}")
        rel = f"images/{i:06d}.pgm"
        write_image(os.path.join(out_dir, rel), s.image)
        if s.glyph_mask is not None:
            write_image(os.path.join(out_dir, f"masks/{i:06d}.pgm"), s.glyph_mask)
        lines.append(f"{rel}\t{s.label}\t{_format_boxes(s.char_boxes)}\n")
    with open(os.path.join(out_dir, "index.tsv"), "w", encoding="utf-8") as f:
        f.writelines(lines)
    meta = {"height": h, "width": w, "count": len(samples), "charset": CHARSET}
    if meta_extra:
        meta.update(meta_extra)
    with open(os.path.join(out_dir, "meta.txt"), "w", encoding="utf-8") as f:
        for k, v in meta.items():
            f.write(f"{k} = {v}\n")


def read_meta(path: str) -> dict:
    """Parse ``key = value`` lines; blank lines and # comments allowed."""
    meta = {}
    with open(path, "r", encoding="utf-8") as f:
        for ln, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"{path} line {ln}: expected 'key = value'")
            k, _, v = line.partition("=")
            meta[k.strip()] = v.strip()
    return meta


def read_dataset(dir_path: str) -> list:
    """Load a dataset directory back into Sample objects.

    Glyph masks are loaded when a masks/ file exists for the entry.
    """
    index_path = os.path.join(dir_path, "index.tsv")
    if not os.path.exists(index_path):
        raise ParseError(f"{index_path} line 0: manifest missing")
    meta = read_meta(os.path.join(dir_path, "meta.txt"))
    try:
        h, w = int(meta["height"]), int(meta["width"])
    except (KeyError, ValueError):
        raise ParseError(f"{dir_path}/meta.txt line 0: height/width missing or bad") from None
    charset = meta.get("charset", CHARSET)
    samples = []
    with open(index_path, "r", encoding="utf-8") as f:
        for ln, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(
                    f"{index_path} line {ln}: expected 3 tab-separated fields, got {len(parts)}")
            rel, label, boxes_text = parts
            if not label or any(c not in charset for c in label):
                raise ParseError(f"{index_path} line {ln}: label {label!r} outside charset")
            boxes = _parse_boxes(boxes_text, f"{index_path} line {ln}")
            if len(boxes) != len(label):
                raise ParseError(
                    f"{index_path} line {ln}: {len(boxes)} boxes for {len(label)} characters")
            img_path = os.path.join(dir_path, rel)
            try:
                img = read_image(img_path)
            except OSError:
                raise ParseError(f"{index_path} line {ln}: missing image {img_path}") from None
            if img.shape != (h, w):
                raise ParseError(
                    f"{index_path} line {ln}: image shape {img.shape} does not match meta {(h, w)}")
            mask_path = os.path.join(dir_path, "masks", os.path.basename(rel))
            mask = read_image(mask_path) if os.path.exists(mask_path) else None
            if mask is not None:
                mask = (mask > 0.5).astype(np.float64)
            samples.append(Sample(image=img, label=label, char_boxes=boxes, glyph_mask=mask))
    if not samples:
        raise ParseError(f"{index_path} line 0: manifest has no entries")
    return samples
