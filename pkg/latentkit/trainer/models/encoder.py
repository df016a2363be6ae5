"""
Encoder Layers: NumPy transformer building blocks with hand-written backward passes.

Layers hold no arrays themselves: each one names its parameters under a prefix
and reads them from the model's parameter dict. forward returns (output, cache);
backward takes the cache, adds parameter gradients into `grads` and returns the
gradient with respect to its input. All inputs are (batch, steps, features).
"""
import math
from typing import Dict, List, Tuple

import numpy as np
from scipy.special import softmax

Params = Dict[str, np.ndarray]

LAYER_NORM_EPS = 1e-5


def _sum_leading(x: np.ndarray) -> np.ndarray:
    return x.reshape(-1, x.shape[-1]).sum(axis=0)


def _matmul_grad(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """dW for y = x @ W over any leading dims."""
    return x.reshape(-1, x.shape[-1]).T @ dy.reshape(-1, dy.shape[-1])


def uniform_init(rng: np.random.Generator, fan_in: int, shape: Tuple[int, ...]) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# ===============================================================
#  Primitive layers
# ===============================================================

class Linear:
    def __init__(self, prefix: str, in_dim: int, out_dim: int,
                 weight: str = "weight", bias: str = "bias"):
        self.w = f"{prefix}.{weight}"
        self.b = f"{prefix}.{bias}"
        self.in_dim = in_dim
        self.out_dim = out_dim

    def shapes(self) -> List[Tuple[str, Tuple[int, ...]]]:
        return [(self.w, (self.in_dim, self.out_dim)), (self.b, (self.out_dim,))]

    def init(self, params: Params, rng: np.random.Generator):
        params[self.w] = uniform_init(rng, self.in_dim, (self.in_dim, self.out_dim))
        params[self.b] = np.zeros(self.out_dim)

    def forward(self, params: Params, x: np.ndarray):
        return x @ params[self.w] + params[self.b], x

    def backward(self, params: Params, dy: np.ndarray, cache, grads: Params) -> np.ndarray:
        x = cache
        grads[self.w] += _matmul_grad(x, dy)
        grads[self.b] += _sum_leading(dy)
        return dy @ params[self.w].T


class LayerNorm:
    """Normalization over the last axis with learned gain and bias."""

    def __init__(self, prefix: str, dim: int, eps: float = LAYER_NORM_EPS):
        self.g = f"{prefix}.gain"
        self.b = f"{prefix}.bias"
        self.dim = dim
        self.eps = eps

    def shapes(self):
        return [(self.g, (self.dim,)), (self.b, (self.dim,))]

    def init(self, params: Params, rng: np.random.Generator):
        params[self.g] = np.ones(self.dim)
        params[self.b] = np.zeros(self.dim)

    def forward(self, params: Params, x: np.ndarray):
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv_std
        return params[self.g] * xhat + params[self.b], (xhat, inv_std)

    def backward(self, params: Params, dy: np.ndarray, cache, grads: Params) -> np.ndarray:
        xhat, inv_std = cache
        grads[self.g] += _sum_leading(dy * xhat)
        grads[self.b] += _sum_leading(dy)
        dxhat = dy * params[self.g]
        n = self.dim
        return (inv_std / n) * (
            n * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )


class FeedForward:
    """Position-wise two-layer ReLU network."""

    def __init__(self, prefix: str, dim: int, hidden: int, out_dim: int = None):
        self.fc1 = Linear(prefix, dim, hidden, "w1", "b1")
        self.fc2 = Linear(prefix, hidden, out_dim or dim, "w2", "b2")

    def shapes(self):
        return self.fc1.shapes() + self.fc2.shapes()

    def init(self, params: Params, rng: np.random.Generator):
        self.fc1.init(params, rng)
        self.fc2.init(params, rng)

    def forward(self, params: Params, x: np.ndarray):
        z, c1 = self.fc1.forward(params, x)
        a = np.maximum(z, 0.0)
        y, c2 = self.fc2.forward(params, a)
        return y, (c1, z, c2)

    def backward(self, params: Params, dy: np.ndarray, cache, grads: Params) -> np.ndarray:
        c1, z, c2 = cache
        da = self.fc2.backward(params, dy, c2, grads)
        dz = da * (z > 0)
        return self.fc1.backward(params, dz, c1, grads)


class MultiHeadAttention:
    """Scaled dot-product self-attention over the step axis, H heads."""

    def __init__(self, prefix: str, dim: int, heads: int):
        if dim % heads != 0:
            raise ValueError(f"heads ({heads}) must divide dim ({dim})")
        self.q = Linear(prefix, dim, dim, "wq", "bq")
        self.k = Linear(prefix, dim, dim, "wk", "bk")
        self.v = Linear(prefix, dim, dim, "wv", "bv")
        self.o = Linear(prefix, dim, dim, "wo", "bo")
        self.heads = heads
        self.head_dim = dim // heads

    def shapes(self):
        return self.q.shapes() + self.k.shapes() + self.v.shapes() + self.o.shapes()

    def init(self, params: Params, rng: np.random.Generator):
        for layer in (self.q, self.k, self.v, self.o):
            layer.init(params, rng)

    def _split(self, x: np.ndarray) -> np.ndarray:
        B, T, _ = x.shape
        return x.reshape(B, T, self.heads, self.head_dim).transpose(0, 2, 1, 3)

    @staticmethod
    def _merge(x: np.ndarray) -> np.ndarray:
        B, H, T, dh = x.shape
        return x.transpose(0, 2, 1, 3).reshape(B, T, H * dh)

    def forward(self, params: Params, x: np.ndarray):
        q, cq = self.q.forward(params, x)
        k, ck = self.k.forward(params, x)
        v, cv = self.v.forward(params, x)
        qh, kh, vh = self._split(q), self._split(k), self._split(v)
        scale = 1.0 / math.sqrt(self.head_dim)
        attn = softmax(qh @ kh.transpose(0, 1, 3, 2) * scale, axis=-1)
        ctx = self._merge(attn @ vh)
        out, co = self.o.forward(params, ctx)
        return out, (cq, ck, cv, co, qh, kh, vh, attn, scale)

    def backward(self, params: Params, dy: np.ndarray, cache, grads: Params) -> np.ndarray:
        cq, ck, cv, co, qh, kh, vh, attn, scale = cache
        dctx = self._split(self.o.backward(params, dy, co, grads))
        dattn = dctx @ vh.transpose(0, 1, 3, 2)
        dvh = attn.transpose(0, 1, 3, 2) @ dctx
        dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True)) * scale
        dqh = dscores @ kh
        dkh = dscores.transpose(0, 1, 3, 2) @ qh
        dx = self.q.backward(params, self._merge(dqh), cq, grads)
        dx = dx + self.k.backward(params, self._merge(dkh), ck, grads)
        dx = dx + self.v.backward(params, self._merge(dvh), cv, grads)
        return dx


# ===============================================================
#  Encoder block + positional encoding
# ===============================================================

class EncoderBlock:
    """Pre-norm block: x + MHA(LN(x)), then x + FFN(LN(x))."""

    def __init__(self, prefix: str, dim: int, heads: int, ffn_multiplier: int):
        self.norm1 = LayerNorm(f"{prefix}.norm1", dim)
        self.attn = MultiHeadAttention(f"{prefix}.attn", dim, heads)
        self.norm2 = LayerNorm(f"{prefix}.norm2", dim)
        self.ffn = FeedForward(f"{prefix}.ffn", dim, dim * ffn_multiplier)

    def shapes(self):
        return self.norm1.shapes() + self.attn.shapes() + self.norm2.shapes() + self.ffn.shapes()

    def init(self, params: Params, rng: np.random.Generator):
        for layer in (self.norm1, self.attn, self.norm2, self.ffn):
            layer.init(params, rng)

    def forward(self, params: Params, x: np.ndarray):
        n1, c_n1 = self.norm1.forward(params, x)
        a, c_a = self.attn.forward(params, n1)
        x = x + a
        n2, c_n2 = self.norm2.forward(params, x)
        f, c_f = self.ffn.forward(params, n2)
        return x + f, (c_n1, c_a, c_n2, c_f)

    def backward(self, params: Params, dy: np.ndarray, cache, grads: Params) -> np.ndarray:
        c_n1, c_a, c_n2, c_f = cache
        dn2 = self.ffn.backward(params, dy, c_f, grads)
        dx = dy + self.norm2.backward(params, dn2, c_n2, grads)
        dn1 = self.attn.backward(params, dx, c_a, grads)
        return dx + self.norm1.backward(params, dn1, c_n1, grads)


def sinusoidal_encoding(steps: int, dim: int) -> np.ndarray:
    """(steps, dim) table: sin on even features, cos on odd, step index from 0."""
    pe = np.zeros((steps, dim))
    position = np.arange(steps)[:, None]
    div = np.exp(np.arange(0, dim, 2) * (-math.log(10000.0) / dim))
    pe[:, 0::2] = np.sin(position * div)
    pe[:, 1::2] = np.cos(position * div[: dim // 2])
    return pe
