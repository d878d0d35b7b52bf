"""Binary checkpoint format.

Layout (all little-endian):

    bytes 0..3   magic "SIGA"
    byte  4      format version, 0x01
    bytes 5..8   u32 entry count
    entry        u16 name length, name utf-8,
                 u8 rank, rank x u32 dims,
                 float32 raw data (product of dims values)

Parameters are stored as float32; loading promotes back to float64, so
save -> load -> save is byte-identical.  A reserved entry
``meta.geometry`` carries the model geometry and structure switches so
evaluation can reject mismatched datasets.
"""

from __future__ import annotations

import struct

import numpy as np

from .config import TrainConfig
from .errors import FormatError
from .tensor import Tensor

MAGIC = b"SIGA"
VERSION = 1
META_KEY = "meta.geometry"
_META_FIELDS = ("height", "width", "channels", "c0", "c1", "c2", "embed",
                "t_steps", "m_chars", "vocab", "enable_js", "enable_acfm")


def _meta_vector(cfg: TrainConfig, vocab: int) -> np.ndarray:
    vals = [cfg.height, cfg.width, cfg.channels, cfg.c0, cfg.c1, cfg.c2,
            cfg.embed, cfg.t_steps, cfg.m_chars, vocab,
            int(cfg.enable_js), int(cfg.enable_acfm)]
    return np.asarray(vals, dtype=np.float64)


def _pack_entry(name: str, arr: np.ndarray) -> bytes:
    nb = name.encode("utf-8")
    head = struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim)
    dims = b"".join(struct.pack("<I", d) for d in arr.shape)
    return head + dims + arr.astype("<f4").tobytes()


def save_checkpoint(path: str, params: dict, cfg: TrainConfig, vocab: int) -> None:
    entries = [(META_KEY, _meta_vector(cfg, vocab))]
    entries += [(name, t.data) for name, t in params.items()]
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<B", VERSION))
        f.write(struct.pack("<I", len(entries)))
        for name, arr in entries:
            f.write(_pack_entry(name, arr))


def load_checkpoint(path: str):
    """Read a checkpoint; returns (params, meta dict).

    Params come back as float64 tensors with gradient buffers.  Raises
    FormatError with a byte offset for any structural problem.
    """
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: offset 0: bad magic {blob[:4]!r}")
    if len(blob) < 9:
        raise FormatError(f"{path}: offset {len(blob)}: header truncated")
    if blob[4] != VERSION:
        raise FormatError(f"{path}: offset 4: unsupported version {blob[4]}")
    (count,) = struct.unpack_from("<I", blob, 5)
    pos = 9
    params: dict = {}
    meta: dict | None = None
    for _ in range(count):
        if pos + 2 > len(blob):
            raise FormatError(f"{path}: offset {pos}: entry header truncated")
        (nlen,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        if pos + nlen + 1 > len(blob):
            raise FormatError(f"{path}: offset {pos}: name truncated")
        name = blob[pos:pos + nlen].decode("utf-8")
        pos += nlen
        rank = blob[pos]
        pos += 1
        if pos + 4 * rank > len(blob):
            raise FormatError(f"{path}: offset {pos}: dims truncated")
        dims = struct.unpack_from(f"<{rank}I", blob, pos) if rank else ()
        pos += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        if pos + 4 * n > len(blob):
            raise FormatError(f"{path}: offset {pos}: data truncated for {name!r}")
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=pos).reshape(dims)
        pos += 4 * n
        if name == META_KEY:
            meta_vals = arr.astype(np.float64)
            if meta_vals.shape != (len(_META_FIELDS),):
                raise FormatError(f"{path}: offset {pos}: bad geometry entry shape {arr.shape}")
            meta = {k: (bool(v) if k.startswith("enable_") else int(v))
                    for k, v in zip(_META_FIELDS, meta_vals)}
        else:
            params[name] = Tensor(arr.astype(np.float64), requires_grad=True)
    if pos != len(blob):
        raise FormatError(f"{path}: offset {pos}: {len(blob) - pos} trailing bytes")
    if meta is None:
        raise FormatError(f"{path}: offset {pos}: geometry entry missing")
    return params, meta


def config_from_meta(meta: dict) -> TrainConfig:
    cfg = TrainConfig()
    for key in ("height", "width", "channels", "c0", "c1", "c2", "embed",
                "t_steps", "m_chars", "enable_js", "enable_acfm"):
        setattr(cfg, key, meta[key])
    return cfg
