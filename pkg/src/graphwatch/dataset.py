"""Line-delimited JSON files for scenes and calibration days."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .graph import AttributedGraph
from .sim import ScenarioSample

SCENE_VERSION = 1
DAY_VERSION = 1


class DatasetFormatError(ValueError):
    pass


def sample_to_record(s: ScenarioSample) -> dict:
    g = s.graph
    return {
        "version": SCENE_VERSION,
        "day": int(s.day),
        "label": int(s.label),
        "node_attrs": g.node_attrs.tolist(),
        "edges": [[int(u), int(v), float(t), int(b)] for (u, v), (t, b) in zip(g.edges, g.edge_attrs)],
        "response_times": [float(t) for t in s.response_times],
        "scene_times": [float(t) for t in s.scene_times],
    }


def record_to_sample(rec: dict) -> ScenarioSample:
    if rec.get("version") != SCENE_VERSION:
        raise DatasetFormatError(f"unsupported scene record version {rec.get('version')!r}")
    x = np.array(rec["node_attrs"], dtype=np.int64)
    e = rec["edges"]
    edges = np.array([[u, v] for u, v, _, _ in e], dtype=np.int64).reshape(-1, 2)
    attrs = np.array([[t, b] for _, _, t, b in e], dtype=float).reshape(-1, 2)
    g = AttributedGraph(len(x), edges, x, attrs)
    return ScenarioSample(g, int(rec["label"]), np.array(rec["response_times"], dtype=float), int(rec["day"]),
                          np.array(rec["scene_times"], dtype=float))


def _read_lines(path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: {exc.msg}") from None


def write_samples(path, samples):
    with open(path, "w") as fh:
        for s in samples:
            fh.write(json.dumps(sample_to_record(s)) + "\n")


def read_samples(path):
    out = []
    for lineno, rec in _read_lines(path):
        try:
            out.append(record_to_sample(rec))
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(f"{path}:{lineno}: {exc}") from None
    return out


def write_days(path, days):
    """One record per calibration day: day index, regime and response times."""
    with open(path, "w") as fh:
        for d in days:
            fh.write(json.dumps({
                "version": DAY_VERSION,
                "day": int(d.schedule.day),
                "regime": int(d.schedule.regime),
                "response_times": [float(t) for t in d.response_times],
            }) + "\n")


def read_days(path):
    """Return a list of response-time arrays, one per day."""
    out = []
    for lineno, rec in _read_lines(path):
        if rec.get("version") != DAY_VERSION:
            raise DatasetFormatError(f"{path}:{lineno}: unsupported day record version {rec.get('version')!r}")
        try:
            rt = np.array(rec["response_times"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(f"{path}:{lineno}: {exc}") from None
        if rt.ndim != 1 or rt.size == 0:
            raise DatasetFormatError(f"{path}:{lineno}: response_times must be a non-empty list")
        out.append(rt)
    return out


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
