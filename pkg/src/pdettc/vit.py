"""Patch-token vision transformer for image-to-image and scalar heads.

The encoder splits the (circularly padded) input into non-overlapping
odd-sized patches, adds a learned positional table, and runs a stack of
pre-norm residual blocks.  The image head projects tokens back to pixel
patches (next-snapshot prediction); the scalar head mean-pools tokens to
a single score (reward model).
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .nn import (Block, Dropout, NonFiniteActivation, Param, ParamStore,
                 PatchDecode, PatchEmbed, Affine, trunc_normal)
from .rng import RngStream

MODE_TRAIN = "train"
MODE_STOCHASTIC = "stochastic_infer"
MODE_DETERMINISTIC = "deterministic_infer"
_MODES = (MODE_TRAIN, MODE_STOCHASTIC, MODE_DETERMINISTIC)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of one transformer; identical family for FM and PRM."""

    height: int = 64
    width: int = 64
    patch_size: int = 5
    in_channels: int = 5
    out_channels: int = 4
    embed_dim: int = 64
    depth: int = 4
    n_heads: int = 4
    mlp_ratio: float = 4.0
    dropout_p: float = 0.1
    head: str = "image"            # "image" | "scalar"

    def __post_init__(self):
        if self.patch_size % 2 == 0:
            raise ValueError(f"patch size must be odd, got {self.patch_size}")
        if self.embed_dim % self.n_heads != 0:
            raise ValueError("embed_dim must be divisible by n_heads")
        if self.head not in ("image", "scalar"):
            raise ValueError(f"unknown head {self.head!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


class VisionTransformer:
    def __init__(self, cfg: ModelConfig, init_rng: RngStream):
        self.cfg = cfg
        c = cfg
        self.embed = PatchEmbed(c.height, c.width, c.patch_size, c.in_channels,
                                c.embed_dim, init_rng)
        self.pos = Param(trunc_normal(init_rng, (self.embed.n_tokens, c.embed_dim)))
        self.pos_drop = Dropout(c.dropout_p)
        self.blocks = [Block(c.embed_dim, c.n_heads, c.mlp_ratio, c.dropout_p, init_rng)
                       for _ in range(c.depth)]
        if c.head == "image":
            self.decode = PatchDecode(self.embed, c.out_channels, c.embed_dim, init_rng)
            self.score = None
        else:
            self.decode = None
            self.score = Affine(c.embed_dim, 1, init_rng, name="score")
        self._n_tok = None

    @property
    def n_tokens(self) -> int:
        return self.embed.n_tokens

    def named_params(self):
        yield from self.embed.named_params("embed")
        yield "pos", self.pos
        for i, blk in enumerate(self.blocks):
            yield from blk.named_params(f"blocks.{i}")
        if self.decode is not None:
            yield from self.decode.named_params("decode")
        if self.score is not None:
            yield from self.score.named_params("score")

    def param_store(self) -> ParamStore:
        return ParamStore(self.named_params())

    def _run(self, x: np.ndarray, active: bool, rng: RngStream | None,
             probe: list | None = None) -> np.ndarray:
        z = self.embed.forward(x) + self.pos.value
        z = self.pos_drop.forward(z, active, rng)
        if probe is not None:
            probe.append(("embed+pos", z))
        for i, blk in enumerate(self.blocks):
            z = blk.forward(z, active, rng)
            if probe is not None:
                probe.append((f"blocks.{i}", z))
        if self.decode is not None:
            y = self.decode.forward(z)
        else:
            self._n_tok = z.shape[1]
            pooled = z.mean(axis=1)
            y = self.score.forward(pooled)[:, 0]
        if probe is not None:
            probe.append(("head", y))
        return y

    def forward(self, x: np.ndarray, mode: str, rng: RngStream | None = None) -> np.ndarray:
        """Run the model on a batch (B, C, H, W).

        ``rng`` is required when dropout is active (train or stochastic
        inference with dropout_p > 0).
        """
        if mode not in _MODES:
            raise ValueError(f"unknown mode {mode!r}")
        active = mode in (MODE_TRAIN, MODE_STOCHASTIC) and self.cfg.dropout_p > 0.0
        if active and rng is None:
            raise ValueError("dropout active but no rng stream given")
        rng0 = rng.clone() if (active and rng is not None) else None
        y = self._run(x, active, rng)
        if not np.all(np.isfinite(y)):
            name = self._locate_nonfinite(x, active, rng0)
            raise NonFiniteActivation(f"non-finite output from layer '{name}'")
        return y

    def _locate_nonfinite(self, x, active, rng0) -> str:
        probe: list = []
        self._run(x, active, rng0, probe=probe)
        for name, z in probe:
            if not np.all(np.isfinite(z)):
                return name
        return "head"

    def backward(self, dy: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; returns gradient w.r.t. input."""
        if self.decode is not None:
            dz = self.decode.backward(dy)
        else:
            dpooled = self.score.backward(dy[:, None])
            dz = np.broadcast_to(dpooled[:, None, :] / self._n_tok,
                                 (dy.shape[0], self._n_tok, dpooled.shape[-1])).copy()
        for blk in reversed(self.blocks):
            dz = blk.backward(dz)
        dz = self.pos_drop.backward(dz)
        self.pos.grad += dz.sum(axis=0)
        return self.embed.backward(dz)
