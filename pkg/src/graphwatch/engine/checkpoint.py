"""JSON checkpoint container for model weights and training state.

Floats are written with ``repr`` precision, so a save/load round trip is
bit-exact and identical states serialise to identical bytes.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import GcnModel, ModelConfig
from .optim import Adam

SCHEMA = "graphwatch.checkpoint"
VERSION = 1


def _pack(a):
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "values": a.ravel().tolist()}


def _unpack(d):
    return np.array(d["values"], dtype=np.float64).reshape(d["shape"])


def _pack_tree(tree):
    return {k: _pack(v) for k, v in tree.items()}


def _unpack_tree(tree):
    return {k: _unpack(v) for k, v in tree.items()}


def checkpoint_dict(model: GcnModel, optimizer: Adam | None = None, epoch: int = 0,
                    rng_state=None, metrics=None):
    state = model.state()
    out = {
        "schema": SCHEMA,
        "version": VERSION,
        "epoch": int(epoch),
        "model": {
            "config": state["config"],
            "layers": list(state["params"]),
            "params": _pack_tree(state["params"]),
            "buffers": _pack_tree(state["buffers"]),
        },
        "optimizer": None,
        "rng_state": rng_state,
        "metrics": metrics or {},
    }
    if optimizer is not None:
        opt = optimizer.state_dict()
        out["optimizer"] = {
            "t": opt["t"], "lr": opt["lr"], "beta1": opt["beta1"], "beta2": opt["beta2"], "eps": opt["eps"],
            "m": _pack_tree(opt["m"]), "v": _pack_tree(opt["v"]),
        }
    return out


def dumps(ckpt) -> str:
    return json.dumps(ckpt, indent=1, sort_keys=False) + "\n"


def save_checkpoint(path, model, optimizer=None, epoch=0, rng_state=None, metrics=None):
    Path(path).write_text(dumps(checkpoint_dict(model, optimizer, epoch, rng_state, metrics)))


def load_checkpoint(path_or_dict):
    """Return ``(model, optimizer_state_or_None, meta)`` where meta holds epoch, rng_state and metrics."""
    d = path_or_dict if isinstance(path_or_dict, dict) else json.loads(Path(path_or_dict).read_text())
    if d.get("schema") != SCHEMA or d.get("version") != VERSION:
        raise ValueError(f"not a version-{VERSION} {SCHEMA} file")
    cfg = ModelConfig(**d["model"]["config"])
    model = GcnModel(cfg)
    model.load_state(_unpack_tree(d["model"]["params"]), _unpack_tree(d["model"]["buffers"]))
    opt = d.get("optimizer")
    if opt is not None:
        opt = dict(opt, m=_unpack_tree(opt["m"]), v=_unpack_tree(opt["v"]))
    meta = {"epoch": d["epoch"], "rng_state": d.get("rng_state"), "metrics": d.get("metrics", {})}
    return model, opt, meta
