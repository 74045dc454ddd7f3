"""Scene classifier: three GMM convolution blocks, mean-pool readout, two dense layers."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .layers import (
    Dense,
    GmmConv,
    GraphBatch,
    LayerNorm,
    Module,
    dropout,
    global_mean_pool,
    message_arrays,
)
from .tensor import Tensor, log_softmax, relu


@dataclass(frozen=True)
class ModelConfig:
    in_dim: int = 2
    hidden: int = 10
    n_layers: int = 3
    n_kernels: int = 4
    pseudo_dim: int = 2
    dense_hidden: int = 10
    n_classes: int = 4
    dropout: float = 0.25


class GcnModel(Module):
    """conv -> ReLU -> dropout -> layer norm (x3), mean pool, dense -> ReLU, dense -> log-softmax.

    ``pseudo_mean``/``pseudo_std`` standardise the raw edge attributes
    (travel time, blocking level) before they are used as pseudo-coordinates.
    """

    def __init__(self, config: ModelConfig = ModelConfig(), seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        dims = [config.in_dim] + [config.hidden] * config.n_layers
        self.convs = [
            GmmConv(dims[i], dims[i + 1], config.n_kernels, config.pseudo_dim, rng)
            for i in range(config.n_layers)
        ]
        self.norms = [LayerNorm(config.hidden) for _ in range(config.n_layers)]
        self.dense1 = Dense(config.hidden, config.dense_hidden, rng)
        self.dense2 = Dense(config.dense_hidden, config.n_classes, rng)
        self.pseudo_mean = np.zeros(config.pseudo_dim)
        self.pseudo_std = np.ones(config.pseudo_dim)

    def named_parameters(self, prefix=""):
        for i, (conv, norm) in enumerate(zip(self.convs, self.norms), start=1):
            yield from conv.named_parameters(f"{prefix}conv{i}.")
            yield from norm.named_parameters(f"{prefix}norm{i}.")
        yield from self.dense1.named_parameters(f"{prefix}dense1.")
        yield from self.dense2.named_parameters(f"{prefix}dense2.")

    def parameters(self):
        return dict(self.named_parameters())

    def zero_grad(self):
        for p in self.parameters().values():
            p.grad = None

    def fit_standardizer(self, graphs):
        """Per-feature z-score statistics of edge attributes over ``graphs``."""
        attrs = np.concatenate([g.edge_attrs for g in graphs])
        self.pseudo_mean = attrs.mean(axis=0)
        std = attrs.std(axis=0)
        self.pseudo_std = np.where(std > 0, std, 1.0)

    def graph_parts(self, g):
        pseudo = (g.edge_attrs - self.pseudo_mean) / self.pseudo_std
        src, dst, u = message_arrays(g.node_count, g.edges, pseudo)
        return g.node_attrs.astype(float), src, dst, u

    def batch(self, graphs) -> GraphBatch:
        return GraphBatch.from_parts([self.graph_parts(g) for g in graphs])

    def forward(self, batch: GraphBatch, training: bool = False, rng=None) -> Tensor:
        """Class log-probabilities, one row per graph in ``batch``."""
        if training and rng is None and self.config.dropout > 0:
            raise ValueError("training mode needs an rng for dropout")
        h = Tensor(batch.x)
        for i, (conv, norm) in enumerate(zip(self.convs, self.norms), start=1):
            h = _guard(f"conv{i}", lambda: conv(h, batch.src, batch.dst, batch.pseudo))
            h = relu(h)
            h = dropout(h, self.config.dropout, training, rng)
            h = _guard(f"norm{i}", lambda: norm(h))
        hg = _guard("pool", lambda: global_mean_pool(h, batch.segments, batch.n_graphs))
        hg = relu(_guard("dense1", lambda: self.dense1(hg)))
        return _guard("dense2", lambda: log_softmax(self.dense2(hg)))

    __call__ = forward

    def predict_proba(self, graphs, batch_size=512):
        out = []
        for i in range(0, len(graphs), batch_size):
            out.append(np.exp(self.forward(self.batch(graphs[i:i + batch_size])).data))
        return np.concatenate(out) if out else np.zeros((0, self.config.n_classes))

    def predict(self, graphs, batch_size=512):
        # argmax picks the lowest class index on ties
        return np.argmax(self.predict_proba(graphs, batch_size), axis=1)

    def state(self):
        return {
            "config": asdict(self.config),
            "params": {k: v.data for k, v in self.parameters().items()},
            "buffers": {"pseudo_mean": self.pseudo_mean, "pseudo_std": self.pseudo_std},
        }

    def load_state(self, params, buffers):
        mine = self.parameters()
        if set(params) != set(mine):
            raise ValueError(f"parameter names differ: {sorted(set(params) ^ set(mine))}")
        for k, v in params.items():
            v = np.asarray(v, dtype=float)
            if v.shape != mine[k].shape:
                raise ValueError(f"{k}: shape {v.shape} != {mine[k].shape}")
            mine[k].data = v.copy()
        self.pseudo_mean = np.asarray(buffers["pseudo_mean"], dtype=float)
        self.pseudo_std = np.asarray(buffers["pseudo_std"], dtype=float)


def _guard(layer, fn):
    try:
        return fn()
    except FloatingPointError as exc:
        raise FloatingPointError(f"{layer}: {exc}") from exc
