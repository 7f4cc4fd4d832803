"""Micro-trip and Markov-chain baseline generators.

MTB stitches verbatim micro-trips (segments between stops) drawn from mean
speed clusters, separated by fleet-average idle. MCB samples a state chain
from the full conditional transition rows, frames it with idle at both ends,
and keeps the candidate whose state-occupancy histogram best matches the
fleet's.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .analysis import IDLE_SPEED, fleet_reference, fragment_cost, kinematic_fragments
from .piesmc import (KIND_CHAIN, KIND_IDLE, DriveCycle, IdleModel,
                     _idle_runs, build_idle_model)
from .statespace import (BinningScheme, Sagstm, bin_sample, build_sagstm,
                         encode_state, state_kinematics, states_of_series)
from .validation import require

MTB_CLUSTERS = 4


@dataclass
class MicroTrip:
    """A verbatim trip slice between two stops."""

    trip_id: str
    start: int
    end: int
    v: np.ndarray
    a: np.ndarray
    g: np.ndarray
    mean_speed: float = field(init=False)

    def __post_init__(self):
        self.mean_speed = float(self.v.mean())

    @property
    def duration(self):
        return float(len(self.v))


def segment_microtrips(trips, idle_threshold=IDLE_SPEED):
    """Split each trip at its maximal idle runs; the idle itself is excluded."""
    require(len(trips) > 0, "need at least one trip")
    micro = []
    for trip in trips:
        idle = trip.v <= idle_threshold
        boundaries = _idle_runs(idle)
        cursor = 0
        pieces = []
        for start, last in boundaries:
            if start > cursor:
                pieces.append((cursor, start))
            cursor = last + 1
        if cursor < len(trip):
            pieces.append((cursor, len(trip)))
        for start, stop in pieces:
            micro.append(MicroTrip(
                trip_id=trip.trip_id, start=start, end=stop,
                v=trip.v[start:stop].copy(),
                a=trip.a[start:stop].copy(),
                g=trip.g_f[start:stop].copy(),
            ))
    return micro


def _speed_clusters(microtrips, n_clusters):
    """Quantile groups by micro-trip mean speed; empty groups are dropped."""
    speeds = np.array([mt.mean_speed for mt in microtrips])
    qs = np.quantile(speeds, np.linspace(0, 1, n_clusters + 1)[1:-1])
    labels = np.digitize(speeds, qs)
    clusters = []
    for c in range(n_clusters):
        members = [mt for mt, lab in zip(microtrips, labels) if lab == c]
        if members:
            clusters.append({
                "members": members,
                "mean_speed": float(np.mean([m.mean_speed for m in members])),
                "mean_duration": float(np.mean([m.duration for m in members])),
            })
    return clusters


def mtb_generate(microtrips, fleet_ref, idle, t_target, rng,
                 n_clusters=MTB_CLUSTERS):
    """Assemble a cycle from randomly drawn micro-trips.

    Each draw comes from the cluster whose mean speed would pull the running
    cycle average closest to the fleet's moving mean speed; a fleet-average
    idle block precedes every micro-trip. Joins are left unsmoothed on
    purpose, so grade and acceleration may jump between segments.
    """
    require(len(microtrips) > 0, "need at least one micro-trip")
    require(t_target >= 0, "t_target must be non-negative")
    clusters = _speed_clusters(microtrips, n_clusters)
    target = fleet_ref.v_bar_ei
    idle_len = idle.idle_samples

    v_parts, a_parts, g_parts, kinds = [], [], [], []
    picks = []
    duration = 0
    moving_sum = 0.0     # running average tracks moving samples only,
    moving_n = 0         # matching the moving-speed target
    prev_grade = None
    while duration < t_target:
        def score(c):
            d = c["mean_duration"]
            if moving_n == 0:
                return abs(c["mean_speed"] - target)
            return abs((moving_sum + c["mean_speed"] * d) / (moving_n + d) - target)

        best = min(range(len(clusters)), key=lambda ci: (score(clusters[ci]), ci))
        members = clusters[best]["members"]
        mt = members[int(rng.integers(len(members)))]

        if idle_len > 0:
            lead_grade = mt.g[0] if prev_grade is None else prev_grade
            v_parts.append(np.zeros(idle_len))
            a_parts.append(np.zeros(idle_len))
            g_parts.append(np.full(idle_len, lead_grade))
            kinds.append(np.full(idle_len, KIND_IDLE, dtype=np.uint8))
            duration += idle_len
        v_parts.append(mt.v)
        a_parts.append(mt.a)
        g_parts.append(mt.g)
        kinds.append(np.full(len(mt.v), KIND_CHAIN, dtype=np.uint8))
        duration += len(mt.v)
        moving_sum += float(mt.v.sum())
        moving_n += len(mt.v)
        prev_grade = mt.g[-1]
        picks.append({"trip_id": mt.trip_id, "cluster": best,
                      "duration": mt.duration})

    v = np.concatenate(v_parts) if v_parts else np.empty(0)
    cycle = DriveCycle(
        t=np.arange(duration, dtype=float),
        v=v,
        a=np.concatenate(a_parts) if a_parts else np.empty(0),
        g=np.concatenate(g_parts) if g_parts else np.empty(0),
        method="mtb",
        kinds=np.concatenate(kinds) if kinds else np.empty(0, dtype=np.uint8),
        meta={"picks": picks, "n_microtrips": len(picks)},
    )
    if len(cycle):
        frags = kinematic_fragments(cycle.v, cycle.a)
        cycle.cost_e = fragment_cost(frags, fleet_ref).e_total
    return cycle


@dataclass(frozen=True)
class Sagfd:
    """Normalized state-occupancy histogram over a binning scheme."""

    n_states: int
    mass: dict

    def total(self):
        return float(sum(self.mass.values()))


def sagfd(cycles_or_trips, scheme):
    """Occupancy frequency of binned states; accepts one item or a list."""
    items = cycles_or_trips if isinstance(cycles_or_trips, (list, tuple)) \
        else [cycles_or_trips]
    require(len(items) > 0, "empty input")
    counts = {}
    total = 0
    for item in items:
        grade = item.g_f if hasattr(item, "g_f") else item.g
        states = states_of_series(item.v, item.a, grade, scheme)
        states = np.atleast_1d(states)
        for s, c in zip(*np.unique(states, return_counts=True)):
            counts[int(s)] = counts.get(int(s), 0) + int(c)
        total += len(states)
    require(total > 0, "no samples to histogram")
    return Sagfd(n_states=scheme.n_states,
                 mass={s: c / total for s, c in counts.items()})


def _sagfd_of_states(states, n_states):
    mass = {}
    inv = 1.0 / len(states)
    for s in states:
        mass[s] = mass.get(s, 0.0) + inv
    return Sagfd(n_states=n_states, mass=mass)


def sagfd_error(gen, ref):
    """Sum of squared per-bin frequency differences."""
    if gen.n_states != ref.n_states:
        raise ValueError("distributions use different binning schemes")
    err = 0.0
    for s in gen.mass.keys() | ref.mass.keys():
        err += (gen.mass.get(s, 0.0) - ref.mass.get(s, 0.0)) ** 2
    return err


def mcb_generate(m, idle, scheme, t_target, n_candidates, rng, ref_sagfd,
                 max_restarts=1000):
    """Monte-Carlo chain sampling with occupancy-error candidate selection.

    Each candidate starts at the all-zero idle state and draws successors
    from the full conditional probability row of the current state. Idle is
    only added as constant-grade segments at the two ends; the interior gets
    none. The candidate with the smallest occupancy error wins.
    """
    require(n_candidates >= 1, "n_candidates must be >= 1")
    idle_len = idle.idle_samples
    interior = max(0, int(round(t_target)) - 2 * idle_len)
    n = m.n_states

    start = encode_state(*bin_sample(0.0, 0.0, 0.0, scheme), scheme)
    if m.row_support(start) == 0:
        # The canonical idle state was never left in the data; fall back to
        # the best-supported zero-speed state.
        support = m.support_counts()
        zero_speed = support[: scheme.n_accel * scheme.n_grade]
        require(zero_speed.max() > 0, "no zero-speed state has successors")
        start = int(np.argmax(zero_speed)) + 1

    best = None
    restarts = 0
    candidates = []
    for cand in range(n_candidates):
        states = None
        while states is None:
            states = [start]
            s = start
            while len(states) < interior:
                row = m.dense_row(s)
                if row.sum() == 0.0:
                    restarts += 1
                    require(restarts <= max_restarts,
                            "too many dead-end restarts; matrix too sparse")
                    states = None
                    break
                s = int(rng.choice(n, p=row)) + 1
                states.append(s)
        err = sagfd_error(_sagfd_of_states(states, n), ref_sagfd) \
            if interior > 0 else 0.0
        candidates.append({"candidate": cand, "sagfd_error": err})
        if best is None or err < best[0]:
            best = (err, states)

    err, states = best
    kin = np.array([state_kinematics(s, scheme) for s in states]) \
        if states else np.empty((0, 3))
    v_core = kin[:, 0] if len(kin) else np.empty(0)
    a_core = kin[:, 1] if len(kin) else np.empty(0)
    g_core = kin[:, 2] if len(kin) else np.empty(0)
    g_lead = g_core[0] if len(g_core) else 0.0
    g_tail = g_core[-1] if len(g_core) else 0.0

    v = np.concatenate([np.zeros(idle_len), v_core, np.zeros(idle_len)])
    a = np.concatenate([np.zeros(idle_len), a_core, np.zeros(idle_len)])
    g = np.concatenate([np.full(idle_len, g_lead), g_core,
                        np.full(idle_len, g_tail)])
    kinds = np.concatenate([
        np.full(idle_len, KIND_IDLE, dtype=np.uint8),
        np.full(len(v_core), KIND_CHAIN, dtype=np.uint8),
        np.full(idle_len, KIND_IDLE, dtype=np.uint8),
    ])
    state_seq = np.concatenate([
        np.full(idle_len, states[0] if states else 1, dtype=np.int64),
        np.asarray(states, dtype=np.int64),
        np.full(idle_len, states[-1] if states else 1, dtype=np.int64),
    ])
    cycle = DriveCycle(
        t=np.arange(len(v), dtype=float), v=v, a=a, g=g, method="mcb",
        states=state_seq, kinds=kinds,
        meta={"candidates": candidates, "sagfd_error": err,
              "restarts": restarts},
    )
    return cycle


class MtbGenerator(BaseEstimator):
    """Micro-trip baseline with the fit/generate estimator surface."""

    def __init__(self, t_target=2160.0, n_clusters=MTB_CLUSTERS,
                 idle_threshold=IDLE_SPEED, random_state=0):
        self.t_target = t_target
        self.n_clusters = n_clusters
        self.idle_threshold = idle_threshold
        self.random_state = random_state

    def fit(self, trips, y=None):
        require(len(trips) > 0, "need at least one trip")
        scheme = BinningScheme.default()
        self.microtrips_ = segment_microtrips(trips, self.idle_threshold)
        self.idle_ = build_idle_model(trips, scheme, self.idle_threshold)
        self.reference_, self.reference_std_ = fleet_reference(trips)
        return self

    def generate(self, random_state=None):
        if not hasattr(self, "microtrips_"):
            raise ValueError("generator is not fitted; call fit(trips) first")
        seed = self.random_state if random_state is None else random_state
        rng = np.random.default_rng(seed)
        t0 = time.perf_counter()
        cycle = mtb_generate(self.microtrips_, self.reference_, self.idle_,
                             self.t_target, rng, self.n_clusters)
        self.report_ = {
            "method": "mtb",
            "cost_e": cycle.cost_e,
            "n_microtrips": cycle.meta["n_microtrips"],
            "runtime_s": time.perf_counter() - t0,
        }
        return cycle


class McbGenerator(BaseEstimator):
    """Markov-chain baseline with the fit/generate estimator surface."""

    def __init__(self, scheme=None, t_target=2160.0, n_candidates=50,
                 random_state=0):
        self.scheme = scheme
        self.t_target = t_target
        self.n_candidates = n_candidates
        self.random_state = random_state

    def fit(self, trips, y=None):
        require(len(trips) > 0, "need at least one trip")
        self.scheme_ = self.scheme if self.scheme is not None else BinningScheme.default()
        self.sagstm_ = build_sagstm(trips, self.scheme_)
        self.idle_ = build_idle_model(trips, self.scheme_)
        self.ref_sagfd_ = sagfd(list(trips), self.scheme_)
        self.reference_, self.reference_std_ = fleet_reference(trips)
        return self

    def generate(self, random_state=None):
        if not hasattr(self, "sagstm_"):
            raise ValueError("generator is not fitted; call fit(trips) first")
        seed = self.random_state if random_state is None else random_state
        rng = np.random.default_rng(seed)
        t0 = time.perf_counter()
        cycle = mcb_generate(self.sagstm_, self.idle_, self.scheme_,
                             self.t_target, self.n_candidates, rng,
                             self.ref_sagfd_)
        if len(cycle):
            frags = kinematic_fragments(cycle.v, cycle.a)
            cycle.cost_e = fragment_cost(frags, self.reference_).e_total
        self.report_ = {
            "method": "mcb",
            "cost_e": cycle.cost_e,
            "sagfd_error": cycle.meta["sagfd_error"],
            "candidates": cycle.meta["candidates"],
            "restarts": cycle.meta["restarts"],
            "runtime_s": time.perf_counter() - t0,
        }
        return cycle
