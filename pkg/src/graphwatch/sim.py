"""Seedable simulation of daily ambulance responses on the road graph.

Four regimes are generated: stable (0), manpower shortage (1), construction
works (2) and traffic jams (3). A day consists of accident *episodes*; every
episode is served from freshly released stations and captured as one scene.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from . import kernels
from .graph import AttributedGraph, Topology

log = logging.getLogger(__name__)

STABLE, SHORTAGE, CONSTRUCTION, TRAFFIC_JAM = 0, 1, 2, 3
LABELS = (STABLE, SHORTAGE, CONSTRUCTION, TRAFFIC_JAM)
LABEL_NAMES = {0: "stable", 1: "manpower shortage", 2: "construction works", 3: "traffic jams"}

RESPONSE_LIMIT = 12.0

# Independent RNG streams; the id is mixed into every day's seed sequence.
STREAMS = {"calibration": 1, "train": 2, "validation": 3, "phase2": 4, "montecarlo": 5, "pilot": 6}


def day_rng(master_seed: int, stream: str | int, day: int) -> np.random.Generator:
    """Generator for one day, derived from (master seed, stream, day index)."""
    sid = STREAMS[stream] if isinstance(stream, str) else int(stream)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(master_seed), sid, int(day)])))


@dataclass(frozen=True)
class TravelTimeModel:
    """Lognormal travel time per edge class, with optional per-edge shifts of mu."""

    mu: Mapping[int, float] = field(default_factory=lambda: {1: 0.1, 2: 0.7, 3: 1.1, 5: 1.6})
    sigma: Mapping[int, float] = field(default_factory=lambda: {1: 0.05, 2: 0.05, 3: 0.05, 5: 0.05})
    edge_shift: Optional[tuple] = None

    def __post_init__(self):
        if set(self.mu) != set(self.sigma):
            raise ValueError("mu and sigma must cover the same edge classes")
        if any(s <= 0 for s in self.sigma.values()):
            raise ValueError("sigma must be positive")

    def edge_params(self, topology: Topology):
        mu = np.array([self.mu[int(c)] for c in topology.edge_class], dtype=float)
        sigma = np.array([self.sigma[int(c)] for c in topology.edge_class], dtype=float)
        if self.edge_shift is not None:
            mu = mu + np.asarray(self.edge_shift, dtype=float)
        return mu, sigma

    def edge_means(self, topology: Topology):
        """Closed-form lognormal mean exp(mu + sigma^2 / 2) for every edge."""
        mu, sigma = self.edge_params(topology)
        return np.exp(mu + sigma**2 / 2)

    def with_shift(self, shift):
        return replace(self, edge_shift=tuple(float(s) for s in shift))


IN_CONTROL = TravelTimeModel()


@dataclass(frozen=True)
class ShiftTable:
    """Magnitudes of the out-of-control perturbations.

    ``construction`` maps blocking level to the additive mu shift, ``jam`` is
    the shift on jammed roads, ``fraction`` the range of the share of edges
    perturbed per day and ``scale`` an optional range from which a per-day
    multiplier of all shifts is drawn.
    """

    construction: Mapping[int, float] = field(default_factory=lambda: {2: 0.4, 3: 0.8})
    jam: float = 0.6
    fraction: tuple = (0.2, 0.5)
    scale: tuple = (1.0, 1.0)
    blocking_p1: float = 0.25  # P(level 1) on unperturbed roads
    pair_p: float = 0.1  # P(two simultaneous accidents) in non-shortage episodes
    shortage_sizes: tuple = (3, 4, 5)

    def to_dict(self):
        return {
            "construction": {str(k): v for k, v in self.construction.items()},
            "jam": self.jam,
            "fraction": list(self.fraction),
            "scale": list(self.scale),
            "blocking_p1": self.blocking_p1,
            "pair_p": self.pair_p,
            "shortage_sizes": list(self.shortage_sizes),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "construction" in d:
            d["construction"] = {int(k): float(v) for k, v in d["construction"].items()}
        for key in ("fraction", "scale", "shortage_sizes"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


DEFAULT_SHIFTS = ShiftTable()
# Validation scenes: same table with every shift scaled by U(0.75, 1.25) per day.
VALIDATION_SHIFTS = ShiftTable(scale=(0.75, 1.25))


@dataclass(frozen=True)
class DaySchedule:
    day: int
    regime: int
    accident_count: int

    def __post_init__(self):
        if self.regime not in LABELS:
            raise ValueError(f"unknown regime {self.regime}")
        if self.accident_count < 1:
            raise ValueError("accident_count must be at least 1")


@dataclass(frozen=True, eq=False)
class ScenarioSample:
    """One captured scene with its condition label and the day's response times.

    ``scene_times`` holds the response times of the accidents in this scene
    (defaults to all of ``response_times``); the stable-label override looks
    at those only.
    """

    graph: AttributedGraph
    label: int
    response_times: np.ndarray
    day: int = 0
    scene_times: Optional[np.ndarray] = None

    def __post_init__(self):
        rt = np.asarray(self.response_times, dtype=float)
        if rt.size == 0:
            raise ValueError("response_times must be non-empty")
        if not (rt > 0).all():
            raise ValueError("response times must be positive")
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label}")
        st = rt if self.scene_times is None else np.asarray(self.scene_times, dtype=float)
        if st.size == 0 or not (st > 0).all():
            raise ValueError("scene_times must be non-empty and positive")
        object.__setattr__(self, "response_times", rt)
        object.__setattr__(self, "scene_times", st)


@dataclass(frozen=True, eq=False)
class DayResult:
    schedule: DaySchedule
    label: int
    response_times: np.ndarray
    scenes: list
    episode_sizes: list


def sample_edge_times(topology: Topology, model: TravelTimeModel, rng: np.random.Generator):
    """Draw every edge's travel time from its (possibly shifted) class lognormal."""
    mu, sigma = model.edge_params(topology)
    return rng.lognormal(mu, sigma)


def sample_blocking(topology: Topology, rng, p1=DEFAULT_SHIFTS.blocking_p1):
    """In-control blocking levels: 1 with probability ``p1``, else 0."""
    return (rng.random(topology.edge_count) < p1).astype(float)


def apply_shortage(topology: Topology, model: TravelTimeModel, overflow_patient=None):
    """Response time for a patient left without a free station.

    Mean edge travel time, times two for the average number of roads and
    times two for the detour via the station.
    """
    return float(np.mean(model.edge_means(topology)) * 2 * 2)


def _perturb_count(topology, rng, shifts):
    lo, hi = shifts.fraction
    return int(round(rng.uniform(lo, hi) * topology.edge_count))


def apply_construction(topology: Topology, model: TravelTimeModel, rng, shifts: ShiftTable = DEFAULT_SHIFTS):
    """Raise blocking to 2 or 3 on a random group of roads drawn from one or
    more travel-time classes and slow those roads down accordingly.

    Returns ``(perturbed_model, blocking)``.
    """
    n = _perturb_count(topology, rng, shifts)
    blocking = sample_blocking(topology, rng, shifts.blocking_p1)
    shift = np.zeros(topology.edge_count)
    if n == 0:
        return model, blocking
    classes = np.unique(topology.edge_class)
    candidates = np.array([], dtype=np.int64)
    for c in rng.permutation(classes):
        candidates = np.concatenate([candidates, np.flatnonzero(topology.edge_class == c)])
        if len(candidates) >= n:
            break
    chosen = rng.choice(np.sort(candidates), size=min(n, len(candidates)), replace=False)
    levels = rng.integers(2, 4, size=len(chosen))
    scale = rng.uniform(*shifts.scale)
    blocking[chosen] = levels
    shift[chosen] = [shifts.construction[int(lv)] * scale for lv in levels]
    base = np.zeros(topology.edge_count) if model.edge_shift is None else np.asarray(model.edge_shift)
    return model.with_shift(base + shift), blocking


def apply_traffic_jam(topology: Topology, model: TravelTimeModel, rng, shifts: ShiftTable = DEFAULT_SHIFTS):
    """Slow down a random subset of roads while keeping blocking at 0/1.

    Returns ``(perturbed_model, blocking)``.
    """
    n = _perturb_count(topology, rng, shifts)
    blocking = sample_blocking(topology, rng, shifts.blocking_p1)
    if n == 0:
        return model, blocking
    chosen = rng.choice(topology.edge_count, size=n, replace=False)
    scale = rng.uniform(*shifts.scale)
    shift = np.zeros(topology.edge_count)
    shift[chosen] = shifts.jam * scale
    base = np.zeros(topology.edge_count) if model.edge_shift is None else np.asarray(model.edge_shift)
    return model.with_shift(base + shift), blocking


def label_zero_override(sample: ScenarioSample) -> ScenarioSample:
    """Relabel a construction/jam scene as stable when every patient in it was
    reached within the response limit."""
    if sample.label in (CONSTRUCTION, TRAFFIC_JAM) and np.all(sample.scene_times <= RESPONSE_LIMIT):
        return replace(sample, label=STABLE)
    return sample


def _override_label(regime, times):
    if regime in (CONSTRUCTION, TRAFFIC_JAM) and np.all(times <= RESPONSE_LIMIT):
        return STABLE
    return regime


def _episode_sizes(total, regime, rng, shifts):
    """Split the day's accidents into simultaneous-accident episodes."""
    if regime == SHORTAGE:
        draws = rng.choice(np.asarray(shifts.shortage_sizes), size=total)
    else:
        draws = np.where(rng.random(total) < shifts.pair_p, 2, 1)
    ends = np.cumsum(draws)
    k = int(np.searchsorted(ends, total))  # first episode reaching the total
    sizes = draws[: k + 1].copy()
    sizes[-1] -= ends[k] - total
    if regime == SHORTAGE and len(sizes) > 1 and sizes[-1] < min(shifts.shortage_sizes):
        sizes[-2] += sizes[-1]
        sizes = sizes[:-1]
    return sizes


def _patient_picks(sizes, n_patients, rng):
    """Per-accident draws on [0, P - j) for a partial Fisher-Yates shuffle."""
    if sizes.max() > n_patients:
        raise ValueError(f"episode of {sizes.max()} accidents exceeds {n_patients} patient vertices")
    pos = np.arange(int(sizes.sum())) - np.repeat(np.cumsum(sizes) - sizes, sizes)
    return rng.integers(0, n_patients - pos)


def station_distances(g: AttributedGraph):
    """Shortest travel time from every station to every vertex, one row per station."""
    return np.stack([g.sssp(int(s))[0] for s in g.stations])


def simulate_day(
    topology: Topology,
    model: TravelTimeModel,
    schedule: DaySchedule,
    rng: np.random.Generator,
    shifts: ShiftTable = DEFAULT_SHIFTS,
    capture: bool = True,
) -> DayResult:
    """Simulate one day of accidents under ``schedule.regime``.

    Each episode picks its patients uniformly without replacement; every
    patient is served by the nearest free station, and once both stations
    are busy the shortage travel time is recorded. With ``capture`` the
    network is snapshotted once per episode after all dispatches.
    """
    regime = schedule.regime
    if regime == CONSTRUCTION:
        day_model, blocking = apply_construction(topology, model, rng, shifts)
    elif regime == TRAFFIC_JAM:
        day_model, blocking = apply_traffic_jam(topology, model, rng, shifts)
    else:
        day_model, blocking = model, sample_blocking(topology, rng, shifts.blocking_p1)
    times = sample_edge_times(topology, day_model, rng)
    g = topology.graph(times, blocking)
    dist = station_distances(g)  # (stations, nodes)
    stations = np.asarray(topology.ambulance_nodes)
    patients = topology.patients
    shortage_time = apply_shortage(topology, day_model)

    sizes = _episode_sizes(schedule.accident_count, regime, rng, shifts)
    picks = _patient_picks(sizes, len(patients), rng)
    served = kernels.serve_episodes(dist, patients, sizes, picks, shortage_time, regime == SHORTAGE)
    if served is None:
        raise RuntimeError(f"day {schedule.day}: no free ambulance in regime {regime}")
    responses, nodes, rows = served
    label = _override_label(regime, responses)
    scenes = []
    if capture:
        base = topology.base_node_attrs()
        bounds = np.cumsum(sizes)
        for lo, hi in zip(bounds - sizes, bounds):
            x = base.copy()
            x[nodes[lo:hi], 1] = 1
            r = rows[lo:hi]
            x[stations[r[r >= 0]], 1] = 1
            own = responses[lo:hi]
            scenes.append(ScenarioSample(g.with_attrs(node_attrs=x), _override_label(regime, own), responses,
                                         schedule.day, own))
    return DayResult(schedule, label, responses, scenes, sizes.tolist())


def random_schedule(day: int, regime: int, rng: np.random.Generator, low: int = 10, high: int = 100):
    return DaySchedule(day, regime, int(rng.integers(low, high + 1)))


def simulate_days(topology, model, regimes: Sequence[int], master_seed: int, stream: str,
                  shifts: ShiftTable = DEFAULT_SHIFTS, capture: bool = True, first_day: int = 0):
    """Simulate consecutive days, each from its own substream."""
    out = []
    for i, regime in enumerate(regimes):
        day = first_day + i
        rng = day_rng(master_seed, stream, day)
        out.append(simulate_day(topology, model, random_schedule(day, regime, rng), rng, shifts, capture))
    return out


def make_training_set(topology, model, per_class: int, master_seed: int, stream: str = "train",
                      shifts: ShiftTable = DEFAULT_SHIFTS, max_days: int = 1_000_000):
    """Class-balanced scenes: one random scene per simulated day until every
    label holds ``per_class`` samples. Regimes cycle 0,1,2,3 over days, so
    overridden construction/jam days may fill the stable class."""
    counts = [0] * len(LABELS)
    samples = []
    day = 0
    while min(counts) < per_class:
        if day >= max_days:
            raise RuntimeError(f"could not balance classes after {max_days} days: {counts}")
        regime = LABELS[day % len(LABELS)]
        rng = day_rng(master_seed, stream, day)
        res = simulate_day(topology, model, random_schedule(day, regime, rng), rng, shifts)
        scene = res.scenes[int(rng.integers(len(res.scenes)))]
        if counts[scene.label] < per_class:
            samples.append(scene)
            counts[scene.label] += 1
        day += 1
    return samples
