"""File formats shared by every stage.

Float images
    Portable float map (PFM). Header is three ASCII lines::

        PF            (3 channels) or Pf (1 channel)
        <width> <height>
        -1.0          (negative scale = little-endian)

    followed by ``height`` rows of little-endian float32 samples, stored
    bottom row first as in the original PFM definition.

Config
    Plain text, one ``key = value`` per line, ``#`` starts a comment.  Values
    are parsed as JSON when possible (numbers, booleans, lists, quoted
    strings) and fall back to the raw string.

Checkpoint
    Binary container::

        magic   8 bytes  b"DLCKPT\\x00\\x00"
        version uint32
        cfg_len uint32, config echo as UTF-8 JSON
        count   uint32
        count * (name_len uint32, name utf-8, ndim uint32,
                 ndim * uint32 shape, float32 little-endian data)

JSON lines
    Manifests and training logs are append-only, one JSON object per line
    with sorted keys.
"""
from __future__ import annotations

import hashlib
import json
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"DLCKPT\x00\x00"
CHECKPOINT_VERSION = 1


class FormatError(ValueError):
    """Raised when a file does not follow its documented layout."""


# -- PFM -----------------------------------------------------------------------

def write_pfm(path, image):
    image = np.asarray(image, dtype=np.float32)
    if image.ndim == 2:
        magic, channels = b"Pf", 1
    elif image.ndim == 3 and image.shape[2] == 3:
        magic, channels = b"PF", 3
    elif image.ndim == 3 and image.shape[2] == 1:
        magic, channels = b"Pf", 1
        image = image[..., 0]
    else:
        raise FormatError(f"PFM supports 1 or 3 channels, got shape {image.shape}")
    h, w = image.shape[:2]
    data = np.ascontiguousarray(image[::-1]).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(magic + b"\n")
        fh.write(f"{w} {h}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(data.tobytes())
    return Path(path)


def read_pfm(path):
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic not in (b"PF", b"Pf"):
            raise FormatError(f"{path}: bad PFM magic {magic!r}")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise FormatError(f"{path}: bad PFM size line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(fh.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        channels = 3 if magic == b"PF" else 1
        buf = fh.read()
    count = w * h * channels
    if len(buf) < 4 * count:
        raise FormatError(f"{path}: truncated PFM payload")
    data = np.frombuffer(buf[: 4 * count], dtype=dtype).astype(np.float32)
    shape = (h, w, 3) if channels == 3 else (h, w)
    return np.ascontiguousarray(data.reshape(shape)[::-1])


# -- previews ------------------------------------------------------------------

def linear_to_srgb(x):
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1 / 2.4) - 0.055)


def write_preview(path, image):
    """8-bit sRGB PNG preview of a linear image (reports only, lossy)."""
    from PIL import Image

    img = np.asarray(image)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    u8 = np.round(linear_to_srgb(img) * 255.0).astype(np.uint8)
    Image.fromarray(u8).save(path)
    return Path(path)


# -- key/value config ----------------------------------------------------------

def parse_value(text):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def read_config(path):
    out = OrderedDict()
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise FormatError(f"{path}:{lineno}: empty key")
        out[key] = parse_value(value)
    return out


def write_config(path, cfg):
    lines = [f"{k} = {json.dumps(v)}" for k, v in cfg.items()]
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


# -- JSON lines ----------------------------------------------------------------

def append_jsonl(path, record):
    with open(path, "a") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def write_jsonl(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


# -- checkpoints ---------------------------------------------------------------

def save_checkpoint(path, config, params):
    """``params`` maps names to arrays; names are written in sorted order."""
    cfg = json.dumps(config, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(cfg)))
        fh.write(cfg)
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            arr = np.ascontiguousarray(np.asarray(params[name], dtype="<f4"))
            bname = name.encode()
            fh.write(struct.pack("<I", len(bname)))
            fh.write(bname)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())
    return Path(path)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint")
    pos = 8
    version, cfg_len = struct.unpack_from("<II", blob, pos)
    pos += 8
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    config = json.loads(blob[pos: pos + cfg_len].decode())
    pos += cfg_len
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    params = OrderedDict()
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos: pos + nlen].decode()
        pos += nlen
        (ndim,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        params[name] = np.frombuffer(blob, dtype="<f4", count=n, offset=pos).reshape(shape).copy()
        pos += 4 * n
    return config, params


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def tree_digests(root):
    """sha256 of every file below ``root``, keyed by relative posix path."""
    root = Path(root)
    return {p.relative_to(root).as_posix(): file_digest(p)
            for p in sorted(root.rglob("*")) if p.is_file()}
