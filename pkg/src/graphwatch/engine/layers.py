"""Graph convolution and the other layers of the scene classifier."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from .tensor import Tensor, as_tensor, exp, make, matmul, mul, square, sub, tsum

LN_EPS = 1e-5


def glorot(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class GraphBatch:
    """Disjoint union of graphs prepared for message passing.

    ``src``/``dst`` list directed messages (both directions of every edge plus
    one self-loop per node) and ``pseudo`` their pseudo-coordinates.
    ``segments`` gives the graph id of each node.
    """

    x: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    pseudo: np.ndarray
    segments: np.ndarray
    n_graphs: int

    @property
    def n_nodes(self):
        return self.x.shape[0]

    @classmethod
    def from_parts(cls, parts):
        xs, srcs, dsts, pseudos, segs = [], [], [], [], []
        offset = 0
        for gid, (x, src, dst, pseudo) in enumerate(parts):
            xs.append(x)
            srcs.append(src + offset)
            dsts.append(dst + offset)
            pseudos.append(pseudo)
            segs.append(np.full(len(x), gid, dtype=np.int64))
            offset += len(x)
        return cls(np.concatenate(xs), np.concatenate(srcs), np.concatenate(dsts),
                   np.concatenate(pseudos), np.concatenate(segs), len(parts))


def message_arrays(node_count, edges, edge_pseudo):
    """Directed message lists with self-loops; self-loops get a zero pseudo-coordinate."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    loops = np.arange(node_count, dtype=np.int64)
    src = np.concatenate([edges[:, 0], edges[:, 1], loops])
    dst = np.concatenate([edges[:, 1], edges[:, 0], loops])
    dim = edge_pseudo.shape[1]
    pseudo = np.concatenate([edge_pseudo, edge_pseudo, np.zeros((node_count, dim))])
    return src, dst, pseudo


def gaussian_weights(pseudo, mu: Tensor, log_precision: Tensor) -> Tensor:
    """w[m, k] = exp(-1/2 sum_d prec[k, d] (u[m, d] - mu[k, d])^2) with prec = exp(log_precision)."""
    u = Tensor(np.asarray(pseudo)[:, None, :])
    diff = sub(u, mu.reshape((1,) + mu.shape))
    prec = exp(log_precision).reshape((1,) + log_precision.shape)
    q = tsum(mul(prec, square(diff)), axis=2)
    return exp(mul(q, -0.5))


def gmm_propagate(h: Tensor, theta: Tensor, w: Tensor, src, dst) -> Tensor:
    """out_i = mean_k sum_{m: dst[m]=i} w[m, k] * (h[src[m]] @ theta[k])."""
    z = np.einsum("ni,kio->nko", h.data, theta.data)
    out = kernels.gmm_aggregate(z, w.data, src, dst, h.shape[0])

    def back(g):
        gz, gw = kernels.gmm_aggregate_backward(z, w.data, src, dst, g)
        gh = np.einsum("nko,kio->ni", gz, theta.data)
        gtheta = np.einsum("ni,nko->kio", h.data, gz)
        return gh, gtheta, gw

    return make(out, (h, theta, w), back, "gmm_conv")


class Module:
    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix + name + ".")


class GmmConv(Module):
    """Gaussian mixture model convolution with diagonal kernel precisions."""

    def __init__(self, in_dim, out_dim, n_kernels=4, pseudo_dim=2, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.in_dim, self.out_dim, self.n_kernels = in_dim, out_dim, n_kernels
        self.theta = Tensor(glorot(rng, in_dim, out_dim, (n_kernels, in_dim, out_dim)), requires_grad=True)
        self.mu = Tensor(rng.standard_normal((n_kernels, pseudo_dim)), requires_grad=True)
        self.log_precision = Tensor(np.zeros((n_kernels, pseudo_dim)), requires_grad=True)

    @property
    def precision(self):
        return np.exp(self.log_precision.data)

    def __call__(self, h, src, dst, pseudo):
        h = as_tensor(h)
        if h.ndim != 2 or h.shape[1] != self.in_dim:
            raise ValueError(f"expected node features (*, {self.in_dim}), got {h.shape}")
        pseudo = np.asarray(pseudo, dtype=float)
        if pseudo.shape != (len(src), self.mu.shape[1]):
            raise ValueError(f"pseudo-coordinates must be ({len(src)}, {self.mu.shape[1]}), got {pseudo.shape}")
        w = gaussian_weights(pseudo, self.mu, self.log_precision)
        return gmm_propagate(h, self.theta, w, src, dst)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps=LN_EPS) -> Tensor:
    """Normalise each row across features, then scale by ``gain`` and shift by ``bias``."""
    xd = x.data
    d = xd.shape[-1]
    centered = xd - xd.mean(axis=-1, keepdims=True)
    var = (centered**2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * gain.data + bias.data

    def back(g):
        gxhat = g * gain.data
        gx = inv_std / d * (d * gxhat - gxhat.sum(-1, keepdims=True)
                            - xhat * (gxhat * xhat).sum(-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make(out, (x, gain, bias), back, "layer_norm")


class LayerNorm(Module):
    def __init__(self, dim):
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)

    def __call__(self, x):
        return layer_norm(x, self.gain, self.bias)


class Dense(Module):
    def __init__(self, in_dim, out_dim, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.weight = Tensor(glorot(rng, in_dim, out_dim, (in_dim, out_dim)), requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True)

    def __call__(self, x):
        return matmul(x, self.weight) + self.bias


def dropout(x: Tensor, rate: float, training: bool, rng=None) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, scale survivors by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    if not training or rate == 0.0:
        return x
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, Tensor(mask))


def global_mean_pool(x: Tensor, segments=None, n_graphs=None) -> Tensor:
    """Column-wise mean of node features per graph, shape (n_graphs, d).

    Each column is summed in sorted order so the result does not depend on
    the node order at all, not even in the last bit.
    """
    if x.shape[0] == 0:
        raise ValueError("cannot pool an empty graph")
    if segments is None:
        segments = np.zeros(x.shape[0], dtype=np.int64)
        n_graphs = 1
    segments = np.asarray(segments, dtype=np.int64)
    n_graphs = int(segments.max()) + 1 if n_graphs is None else n_graphs
    counts = np.bincount(segments, minlength=n_graphs).astype(float)
    if (counts == 0).any():
        raise ValueError("every graph needs at least one node")
    out = np.empty((n_graphs, x.shape[1]))
    order = np.argsort(segments, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(counts).astype(np.int64)])
    xs = x.data[order]
    for gid in range(n_graphs):
        block = np.sort(xs[bounds[gid]:bounds[gid + 1]], axis=0)
        out[gid] = block.sum(axis=0) / counts[gid]

    def back(g):
        return ((g / counts[:, None])[segments],)

    return make(out, (x,), back, "global_mean_pool")
