"""Config dataclass helpers and named random substreams."""
from __future__ import annotations

import dataclasses
import zlib

import numpy as np


class ConfigError(ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


def from_dict(cls, values, strict=True):
    """Build dataclass ``cls`` from a mapping, rejecting unknown keys."""
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = [k for k in values if k not in names]
    if unknown and strict:
        raise ConfigError(f"unknown config key '{unknown[0]}'", key=unknown[0])
    kwargs = {k: v for k, v in values.items() if k in names}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def to_dict(cfg):
    return dataclasses.asdict(cfg)


def substream_seed(seed, *names):
    """Deterministic 63-bit seed for the named substream of ``seed``."""
    key = [int(seed) & 0xFFFFFFFF]
    for name in names:
        if isinstance(name, (int, np.integer)):
            key.append(int(name) & 0xFFFFFFFF)
        else:
            key.append(zlib.crc32(str(name).encode()))
    hi, lo = (int(v) for v in np.random.SeedSequence(key).generate_state(2, dtype=np.uint32))
    return ((hi << 32) | lo) & ((1 << 63) - 1)


def substream(seed, *names):
    return np.random.default_rng(substream_seed(seed, *names))
