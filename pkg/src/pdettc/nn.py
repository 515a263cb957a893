"""Differentiable layer kernel used by the surrogate and reward models.

Tensors are plain float64 ndarrays.  The model topology is a fixed layer
graph: every layer caches what its backward pass needs during
``forward`` and releases gradients in reverse order through
``backward``.  There is no general-purpose taping; the graph is the
object tree.

Dropout is the only stochastic layer.  It draws its masks from an
:class:`~pdettc.rng.RngStream`, so a forward pass is reproducible from
(seed, stream, counter) alone.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from .rng import RngStream

LN_EPS = 1e-5
_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


class NonFiniteGradient(RuntimeError):
    """A parameter gradient contains NaN/Inf; optimizer step aborted."""


class NonFiniteActivation(RuntimeError):
    """A layer produced a non-finite output."""


class Param:
    """Learnable tensor with its gradient buffer and AdamW moments."""

    __slots__ = ("value", "grad", "m", "v")

    def __init__(self, value: np.ndarray):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.m = None
        self.v = None


class ParamStore:
    """Named parameter registry shared by the model and the optimizer."""

    def __init__(self, named_params):
        self.params: dict[str, Param] = dict(named_params)
        self.step_count = 0

    def __getitem__(self, name: str) -> Param:
        return self.params[name]

    def names(self) -> list[str]:
        return list(self.params.keys())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad.fill(0.0)

    def n_params(self) -> int:
        return sum(p.value.size for p in self.params.values())

    def values_copy(self) -> dict[str, np.ndarray]:
        return {k: p.value.copy() for k, p in self.params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            p.value[...] = values[k]


def trunc_normal(rng: RngStream, shape, std: float = 0.02) -> np.ndarray:
    """Normal init clipped at two standard deviations."""
    return np.clip(rng.normal(size=shape, scale=std), -2.0 * std, 2.0 * std)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax_backward(y: np.ndarray, dy: np.ndarray, axis: int = -1) -> np.ndarray:
    return y * (dy - np.sum(dy * y, axis=axis, keepdims=True))


class Affine:
    """y = x @ W + b over the last axis."""

    def __init__(self, d_in: int, d_out: int, rng: RngStream, name: str = "affine"):
        self.name = name
        self.w = Param(trunc_normal(rng, (d_in, d_out)))
        self.b = Param(np.zeros(d_out))
        self._x2d = None
        self._lead = None

    def named_params(self, prefix: str):
        yield f"{prefix}.w", self.w
        yield f"{prefix}.b", self.b

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.w.value.shape[0]:
            raise ValueError(
                f"{self.name}: input dim {x.shape[-1]} != {self.w.value.shape[0]}"
            )
        self._lead = x.shape[:-1]
        self._x2d = x.reshape(-1, x.shape[-1])
        y = self._x2d @ self.w.value + self.b.value
        return y.reshape(*self._lead, -1)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dy2d = dy.reshape(-1, dy.shape[-1])
        self.w.grad += self._x2d.T @ dy2d
        self.b.grad += dy2d.sum(axis=0)
        dx = dy2d @ self.w.value.T
        return dx.reshape(*self._lead, -1)


class LayerNorm:
    """Normalization over the last axis with learned scale/shift."""

    def __init__(self, dim: int):
        self.g = Param(np.ones(dim))
        self.b = Param(np.zeros(dim))
        self._xhat = None
        self._inv = None

    def named_params(self, prefix: str):
        yield f"{prefix}.g", self.g
        yield f"{prefix}.b", self.b

    def forward(self, x: np.ndarray) -> np.ndarray:
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = np.mean(xc * xc, axis=-1, keepdims=True)
        self._inv = 1.0 / np.sqrt(var + LN_EPS)
        self._xhat = xc * self._inv
        return self.g.value * self._xhat + self.b.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        axes = tuple(range(dy.ndim - 1))
        self.g.grad += (dy * self._xhat).sum(axis=axes)
        self.b.grad += dy.sum(axis=axes)
        dxhat = dy * self.g.value
        mean_dxhat = dxhat.mean(axis=-1, keepdims=True)
        mean_dxhat_xhat = (dxhat * self._xhat).mean(axis=-1, keepdims=True)
        return self._inv * (dxhat - mean_dxhat - self._xhat * mean_dxhat_xhat)


class Gelu:
    def __init__(self):
        self._x = None

    def named_params(self, prefix: str):
        return iter(())

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._x
        cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
        return dy * (cdf + x * pdf)


class Dropout:
    """Inverted dropout; kept entries scaled by 1/(1-p)."""

    def __init__(self, p: float):
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout p must be in [0, 1), got {p}")
        self.p = p
        self._scale = None

    def named_params(self, prefix: str):
        return iter(())

    def forward(self, x: np.ndarray, active: bool, rng: RngStream | None) -> np.ndarray:
        if not active or self.p == 0.0:
            self._scale = None
            return x
        mask = rng.uniform(size=x.shape) >= self.p
        self._scale = mask / (1.0 - self.p)
        return x * self._scale

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._scale is None:
            return dy
        return dy * self._scale


class MultiHeadSelfAttention:
    """Softmax attention over tokens (batch, n_tokens, dim)."""

    def __init__(self, dim: int, n_heads: int, dropout_p: float, rng: RngStream):
        if dim % n_heads != 0:
            raise ValueError(f"embed dim {dim} not divisible by {n_heads} heads")
        self.dim = dim
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.scale = self.head_dim ** -0.5
        self.qkv = Affine(dim, 3 * dim, rng, name="qkv")
        self.proj = Affine(dim, dim, rng, name="proj")
        self.attn_drop = Dropout(dropout_p)
        self.proj_drop = Dropout(dropout_p)
        self._cache = None

    def named_params(self, prefix: str):
        yield from self.qkv.named_params(f"{prefix}.qkv")
        yield from self.proj.named_params(f"{prefix}.proj")

    def forward(self, x: np.ndarray, active: bool, rng: RngStream | None) -> np.ndarray:
        b, n, d = x.shape
        h, dh = self.n_heads, self.head_dim
        qkv = self.qkv.forward(x).reshape(b, n, 3, h, dh)
        q, k, v = (np.ascontiguousarray(qkv[:, :, i].transpose(0, 2, 1, 3)) for i in range(3))
        scores = (q @ k.swapaxes(-1, -2)) * self.scale
        attn = softmax(scores, axis=-1)
        attn_d = self.attn_drop.forward(attn, active, rng)
        ctx = attn_d @ v                       # (b, h, n, dh)
        ctx = ctx.transpose(0, 2, 1, 3).reshape(b, n, d)
        out = self.proj.forward(ctx)
        out = self.proj_drop.forward(out, active, rng)
        self._cache = (q, k, v, attn, attn_d)
        return out

    def attention_weights(self) -> np.ndarray:
        """Row-stochastic attention of the last forward (pre-dropout)."""
        return self._cache[3]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        q, k, v, attn, attn_d = self._cache
        b, h, n, dh = q.shape
        d = h * dh
        dout = self.proj_drop.backward(dy)
        dctx = self.proj.backward(dout)
        dctx = dctx.reshape(b, n, h, dh).transpose(0, 2, 1, 3)
        dattn_d = dctx @ v.swapaxes(-1, -2)
        dv = attn_d.swapaxes(-1, -2) @ dctx
        dattn = self.attn_drop.backward(dattn_d)
        dscores = softmax_backward(attn, dattn) * self.scale
        dq = dscores @ k
        dk = dscores.swapaxes(-1, -2) @ q
        dqkv = np.empty((b, n, 3, h, dh))
        for i, g in enumerate((dq, dk, dv)):
            dqkv[:, :, i] = g.transpose(0, 2, 1, 3)
        return self.qkv.backward(dqkv.reshape(b, n, 3 * d))


class Mlp:
    """Token-wise feed-forward: affine, GELU, affine, with dropout."""

    def __init__(self, dim: int, hidden: int, dropout_p: float, rng: RngStream):
        self.fc1 = Affine(dim, hidden, rng, name="fc1")
        self.act = Gelu()
        self.drop1 = Dropout(dropout_p)
        self.fc2 = Affine(hidden, dim, rng, name="fc2")
        self.drop2 = Dropout(dropout_p)

    def named_params(self, prefix: str):
        yield from self.fc1.named_params(f"{prefix}.fc1")
        yield from self.fc2.named_params(f"{prefix}.fc2")

    def forward(self, x: np.ndarray, active: bool, rng: RngStream | None) -> np.ndarray:
        y = self.fc1.forward(x)
        y = self.act.forward(y)
        y = self.drop1.forward(y, active, rng)
        y = self.fc2.forward(y)
        return self.drop2.forward(y, active, rng)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dy = self.drop2.backward(dy)
        dy = self.fc2.backward(dy)
        dy = self.drop1.backward(dy)
        dy = self.act.backward(dy)
        return self.fc1.backward(dy)


class Block:
    """Pre-norm residual block: x + MHSA(LN(x)) + FFN(LN(x)).

    Both branches read the block input (parallel residual form), so the
    backward pass sums three paths into dx.
    """

    def __init__(self, dim: int, n_heads: int, mlp_ratio: float, dropout_p: float,
                 rng: RngStream):
        self.ln1 = LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(dim, n_heads, dropout_p, rng)
        self.ln2 = LayerNorm(dim)
        self.mlp = Mlp(dim, int(round(dim * mlp_ratio)), dropout_p, rng)

    def named_params(self, prefix: str):
        yield from self.ln1.named_params(f"{prefix}.ln1")
        yield from self.attn.named_params(f"{prefix}.attn")
        yield from self.ln2.named_params(f"{prefix}.ln2")
        yield from self.mlp.named_params(f"{prefix}.mlp")

    def forward(self, x: np.ndarray, active: bool, rng: RngStream | None) -> np.ndarray:
        a = self.attn.forward(self.ln1.forward(x), active, rng)
        m = self.mlp.forward(self.ln2.forward(x), active, rng)
        return x + a + m

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx = dy.copy()
        dx += self.ln1.backward(self.attn.backward(dy))
        dx += self.ln2.backward(self.mlp.backward(dy))
        return dx


def padded_size(n: int, patch: int) -> int:
    """Smallest multiple of ``patch`` that is >= n."""
    return n + (-n) % patch


class PatchEmbed:
    """Circularly pad to a patch multiple, split into P x P patches, embed.

    Kernel size equals stride (non-overlapping patches), so the
    convolution reduces to a reshape plus one affine map.
    """

    def __init__(self, height: int, width: int, patch: int, in_channels: int,
                 dim: int, rng: RngStream):
        self.h, self.w, self.p, self.c = height, width, patch, in_channels
        self.hp, self.wp = padded_size(height, patch), padded_size(width, patch)
        self.nh, self.nw = self.hp // patch, self.wp // patch
        self.n_tokens = self.nh * self.nw
        self.proj = Affine(in_channels * patch * patch, dim, rng, name="patch_proj")

    def named_params(self, prefix: str):
        yield from self.proj.named_params(f"{prefix}.proj")

    def patchify(self, x: np.ndarray) -> np.ndarray:
        b = x.shape[0]
        xp = np.pad(x, ((0, 0), (0, 0), (0, self.hp - self.h), (0, self.wp - self.w)),
                    mode="wrap")
        t = xp.reshape(b, self.c, self.nh, self.p, self.nw, self.p)
        t = t.transpose(0, 2, 4, 1, 3, 5)
        return t.reshape(b, self.n_tokens, self.c * self.p * self.p)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.proj.forward(self.patchify(x))

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dt = self.proj.backward(dy)
        b = dt.shape[0]
        dxp = dt.reshape(b, self.nh, self.nw, self.c, self.p, self.p)
        dxp = dxp.transpose(0, 3, 1, 4, 2, 5).reshape(b, self.c, self.hp, self.wp)
        h, w = self.h, self.w
        dx = dxp[:, :, :h, :w].copy()
        if self.hp > h:
            dx[:, :, : self.hp - h, :] += dxp[:, :, h:, :w]
        if self.wp > w:
            dx[:, :, :, : self.wp - w] += dxp[:, :, :h, w:]
        if self.hp > h and self.wp > w:
            dx[:, :, : self.hp - h, : self.wp - w] += dxp[:, :, h:, w:]
        return dx


class PatchDecode:
    """Project tokens back to pixel patches and crop off the circular pad."""

    def __init__(self, embed: PatchEmbed, out_channels: int, dim: int, rng: RngStream):
        self.e = embed
        self.c_out = out_channels
        self.proj = Affine(dim, out_channels * embed.p * embed.p, rng, name="patch_deproj")

    def named_params(self, prefix: str):
        yield from self.proj.named_params(f"{prefix}.proj")

    def forward(self, tokens: np.ndarray) -> np.ndarray:
        e = self.e
        t = self.proj.forward(tokens)
        b = t.shape[0]
        img = t.reshape(b, e.nh, e.nw, self.c_out, e.p, e.p)
        img = img.transpose(0, 3, 1, 4, 2, 5).reshape(b, self.c_out, e.hp, e.wp)
        return np.ascontiguousarray(img[:, :, : e.h, : e.w])

    def backward(self, dy: np.ndarray) -> np.ndarray:
        e = self.e
        b = dy.shape[0]
        dimg = np.zeros((b, self.c_out, e.hp, e.wp))
        dimg[:, :, : e.h, : e.w] = dy
        dt = dimg.reshape(b, self.c_out, e.nh, e.p, e.nw, e.p)
        dt = dt.transpose(0, 2, 4, 1, 3, 5).reshape(b, e.n_tokens, -1)
        return self.proj.backward(dt)


class AdamW:
    """Decoupled weight-decay Adam over a ParamStore."""

    def __init__(self, lr: float, weight_decay: float = 0.0,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps

    def step(self, store: ParamStore) -> None:
        for name, p in store.params.items():
            if not np.all(np.isfinite(p.grad)):
                raise NonFiniteGradient(f"non-finite gradient in '{name}'")
        store.step_count += 1
        t = store.step_count
        b1, b2 = self.betas
        bc1 = 1.0 - b1 ** t
        bc2 = 1.0 - b2 ** t
        for p in store.params.values():
            if p.m is None:
                p.m = np.zeros_like(p.value)
                p.v = np.zeros_like(p.value)
            g = p.grad
            p.m *= b1
            p.m += (1.0 - b1) * g
            p.v *= b2
            p.v += (1.0 - b2) * g * g
            update = (p.m / bc1) / (np.sqrt(p.v / bc2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.value
            p.value -= self.lr * update
