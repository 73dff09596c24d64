"""Base delighting network: patch tokenizer, ViT encoder with per-source
conditioning tokens, and a convolutional decoder."""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

SOURCES = ("olat", "rendered")


@dataclass
class ModelConfig:
    image_size: int = 512
    patch: int = 16
    dim: int = 192
    depth: int = 6
    heads: int = 3
    mlp_ratio: float = 4.0
    n_tokens: int = 4
    min_decoder_channels: int = 16
    head_bias: float = 0.5
    token_init_std: float = 0.02
    zero_head: bool = False

    def __post_init__(self):
        if self.image_size % self.patch:
            raise ValueError(f"image size {self.image_size} not divisible by patch {self.patch}")
        if self.patch & (self.patch - 1):
            raise ValueError("patch size must be a power of two")
        if self.dim % self.heads:
            raise ValueError("dim must be divisible by heads")
        if self.n_tokens < 0:
            raise ValueError("n_tokens must be >= 0")

    @property
    def grid(self):
        return self.image_size // self.patch

    @property
    def n_patches(self):
        return self.grid ** 2


class Tokenizer(nn.Module):
    """Linear projection of non-overlapping P x P patches plus positional embedding."""

    def __init__(self, cfg):
        super().__init__()
        self.patch = cfg.patch
        self.proj = nn.Conv2d(3, cfg.dim, cfg.patch, stride=cfg.patch)
        self.pos = nn.Parameter(torch.randn(1, cfg.n_patches, cfg.dim) * 0.02)

    def forward(self, image, mask):
        """image (B, 3, H, W), mask (B, 1, H, W) -> tokens (B, N, C)."""
        h, w = image.shape[-2:]
        if h % self.patch or w % self.patch:
            raise ValueError(f"input {h}x{w} not divisible by patch size {self.patch}")
        x = self.proj(image * mask).flatten(2).transpose(1, 2)
        if x.shape[1] != self.pos.shape[1]:
            raise ValueError(f"expected {self.pos.shape[1]} patches, got {x.shape[1]}")
        return x + self.pos


class Block(nn.Module):
    def __init__(self, dim, heads, mlp_ratio):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x):
        h = self.norm1(x)
        x = x + self.attn(h, h, h, need_weights=False)[0]
        return x + self.mlp(self.norm2(x))


class Encoder(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        self.blocks = nn.ModuleList(Block(cfg.dim, cfg.heads, cfg.mlp_ratio) for _ in range(cfg.depth))
        self.norm = nn.LayerNorm(cfg.dim)

    def forward(self, x):
        for blk in self.blocks:
            x = blk(x)
        return self.norm(x)


class Decoder(nn.Module):
    """Unpatchified feature grid -> image, one 2x upsampling stage per octave of P."""

    def __init__(self, cfg):
        super().__init__()
        self.grid = cfg.grid
        stages = int(math.log2(cfg.patch))
        layers = []
        ch = cfg.dim
        for _ in range(stages):
            out = max(ch // 2, cfg.min_decoder_channels)
            layers += [nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False),
                       nn.Conv2d(ch, out, 3, padding=1), nn.GELU()]
            ch = out
        self.body = nn.Sequential(*layers)
        self.head = nn.Conv2d(ch, 3, 1)
        nn.init.constant_(self.head.bias, cfg.head_bias)
        if cfg.zero_head:
            nn.init.zeros_(self.head.weight)

    def unpatchify(self, tokens):
        b, n, c = tokens.shape
        if n != self.grid ** 2:
            raise ValueError(f"decoder expects {self.grid ** 2} tokens, got {n}")
        return tokens.transpose(1, 2).reshape(b, c, self.grid, self.grid)

    def forward(self, tokens):
        return torch.clamp(self.head(self.body(self.unpatchify(tokens))), min=0.0)


class DelightNet(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        self.tokenizer = Tokenizer(cfg)
        self.encoder = Encoder(cfg)
        self.decoder = Decoder(cfg)
        if cfg.n_tokens > 0:
            self.tokens = nn.ParameterDict({
                s: nn.Parameter(torch.randn(cfg.n_tokens, cfg.dim) * cfg.token_init_std) for s in SOURCES
            })
        else:
            self.tokens = None

    @property
    def n_tokens(self):
        return self.cfg.n_tokens

    def source_tokens(self, sources, batch):
        if self.tokens is None:
            return None
        if isinstance(sources, str):
            sources = [sources] * batch
        for s in sources:
            if s not in SOURCES:
                raise ValueError(f"unknown source tag {s!r}")
        bank = torch.stack([self.tokens[s] for s in SOURCES])
        idx = torch.tensor([SOURCES.index(s) for s in sources])
        return bank[idx]

    def tokenize(self, image, mask):
        return self.tokenizer(image, mask)

    def encode(self, tokens, sources):
        """Run the encoder on [image tokens | source tokens]; returns N + K tokens."""
        if isinstance(sources, str) and sources not in SOURCES:
            raise ValueError(f"unknown source tag {sources!r}")
        extra = self.source_tokens(sources, tokens.shape[0])
        if extra is not None:
            tokens = torch.cat([tokens, extra], dim=1)
        return self.encoder(tokens)

    def decode(self, encoded):
        """Drop the trailing source tokens and decode the N image tokens."""
        n = self.cfg.n_patches
        if encoded.shape[1] == n + self.n_tokens:
            encoded = encoded[:, :n]
        return self.decoder(encoded)

    def forward(self, image, mask, sources="rendered"):
        if mask.dim() == 3:
            mask = mask[:, None]
        return self.decode(self.encode(self.tokenize(image, mask), sources))

    def param_groups(self):
        enc = list(self.tokenizer.parameters()) + list(self.encoder.parameters())
        if self.tokens is not None:
            enc += list(self.tokens.parameters())
        return enc, list(self.decoder.parameters())

    def token_param_count(self):
        return 0 if self.tokens is None else sum(p.numel() for p in self.tokens.parameters())


def count_params(module):
    return sum(p.numel() for p in module.parameters())


def to_tensor(images):
    """(B, H, W, C) or (H, W, C) numpy -> (B, C, H, W) float32 tensor."""
    t = torch.as_tensor(images, dtype=torch.float32)
    if t.dim() == 3:
        t = t[None]
    return t.permute(0, 3, 1, 2).contiguous()


def to_image(tensor):
    """(B, C, H, W) tensor -> (B, H, W, C) numpy float64."""
    return tensor.detach().permute(0, 2, 3, 1).double().numpy()


def resize(x, size):
    if x.shape[-1] == size and x.shape[-2] == size:
        return x
    return F.interpolate(x, size=(size, size), mode="bilinear", align_corners=False)
