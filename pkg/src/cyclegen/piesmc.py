"""Expected-SARSA + Monte-Carlo drive-cycle agent.

The agent walks the sparse transition matrix, choosing the next state among
the feasible successors with an adaptive epsilon-greedy policy. Per-step
learning (Expected SARSA over a softmax transition reward plus a count-based
exploration bonus) is combined with end-of-episode Monte-Carlo updates driven
by how well the finished cycle reproduces the fleet's kinematic fragments.
Idle periods are inserted explicitly from fleet idle statistics.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .analysis import (IDLE_SPEED, fleet_reference, fragment_cost,
                       kinematic_fragments)
from .statespace import (BinningScheme, Sagstm, bin_sample, build_sagstm,
                         decode_state, encode_state, state_kinematics)
from .validation import require

# Per-sample provenance in generated cycles.
KIND_CHAIN = 0      # reached through an observed transition
KIND_IDLE = 1       # inserted idle sample
KIND_RECOVERY = 2   # entered by a dead-end recovery jump


@dataclass
class AgentConfig:
    """Hyperparameters of the learning loop; defaults are desk-scale pragmatic."""

    gamma_es: float = 0.9
    gamma_mc: float = 0.99
    alpha_es: float = 0.1
    alpha_mc: float = 0.05
    tau: float = 10.0
    beta: float = 0.1
    lambda_ext: float = 1.0
    lambda_int: float = 1.0
    varsigma: float = 100.0
    eps0: float = 1.0
    eps_min: float = 0.05
    decay: float = 0.995
    w_es0: float = 0.9
    w_es_min: float = 0.3
    t_target: float = 2160.0
    n_candidates: int = 50
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        require(0 < self.gamma_es <= 1, "gamma_es must be in (0, 1]")
        require(0 < self.gamma_mc <= 1, "gamma_mc must be in (0, 1]")
        require(0 < self.alpha_es <= 1, "alpha_es must be in (0, 1]")
        require(0 < self.alpha_mc <= 1, "alpha_mc must be in (0, 1]")
        require(self.tau > 0, "tau must be positive")
        require(self.beta >= 0, "beta must be non-negative")
        require(self.lambda_ext >= 0 and self.lambda_int >= 0,
                "reward weights must be non-negative")
        require(self.varsigma > 0, "varsigma must be positive")
        require(0 <= self.eps_min <= self.eps0 <= 1,
                "need 0 <= eps_min <= eps0 <= 1")
        require(0 < self.decay < 1, "decay must be in (0, 1)")
        require(0 <= self.w_es_min <= self.w_es0 <= 1,
                "need 0 <= w_es_min <= w_es0 <= 1")
        require(self.t_target >= 0, "t_target must be non-negative")
        require(self.n_candidates >= 1, "n_candidates must be >= 1")

    def as_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class Trajectory:
    """Ordered (state, action, step) triples of one episode."""

    steps: list = field(default_factory=list)

    def append(self, s, a, q):
        self.steps.append((s, a, q))

    def __len__(self):
        return len(self.steps)

    @property
    def final_step(self):
        return self.steps[-1][2] if self.steps else 0


@dataclass
class IdleModel:
    """Fleet idle statistics used to place explicit idle segments."""

    mean_idle_duration: float
    mean_idle_gap: float
    initial_states: list

    @property
    def idle_samples(self):
        return int(round(self.mean_idle_duration))


@dataclass
class DriveCycle:
    """A generated 1 Hz cycle with per-sample provenance."""

    t: np.ndarray
    v: np.ndarray
    a: np.ndarray
    g: np.ndarray
    method: str
    cost_e: float | None = None
    states: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    kinds: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.uint8))
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def duration(self):
        return float(len(self.t))


def write_cycle_csv(cycle, path):
    """Export as ``t,v,a,g``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("t,v,a,g\n")
        for k in range(len(cycle)):
            fh.write(f"{cycle.t[k]:.0f},{cycle.v[k]:.6f},"
                     f"{cycle.a[k]:.6f},{cycle.g[k]:.6f}\n")


def read_cycle_csv(path, method="unknown"):
    data = np.genfromtxt(path, delimiter=",", names=True)
    names = data.dtype.names
    if names is None or tuple(names) != ("t", "v", "a", "g"):
        raise ValueError(f"{Path(path).name}: expected header t,v,a,g")
    data = np.atleast_1d(data)
    return DriveCycle(
        t=np.asarray(data["t"], float), v=np.asarray(data["v"], float),
        a=np.asarray(data["a"], float), g=np.asarray(data["g"], float),
        method=method,
    )


class AgentTables:
    """Sparse state-action tables keyed to the feasible transition web.

    Values are stored only for visited pairs. Unstored lookups fall back to
    the seeding convention: Q_ES defaults to the transition probability,
    Q_MC to zero, and the combined table to their current weighting.
    """

    def __init__(self, sagstm=None, w_es=1.0):
        self._sagstm = sagstm
        self.w_es = w_es
        self._q_es = {}
        self._q_mc = {}
        self._q_comb = {}
        self._visits = {}

    def _seed(self, s, a):
        if self._sagstm is None:
            return 0.0
        return self._sagstm.row_fast(s)[2].get(a, 0.0)

    def q_es(self, s, a):
        v = self._q_es.get((s, a))
        return self._seed(s, a) if v is None else v

    def q_mc(self, s, a):
        return self._q_mc.get((s, a), 0.0)

    def q_combined(self, s, a):
        v = self._q_comb.get((s, a))
        if v is None:
            return self.w_es * self.q_es(s, a) + (1.0 - self.w_es) * self.q_mc(s, a)
        return v

    def set_q_es(self, s, a, value):
        self._q_es[(s, a)] = value

    def set_q_mc(self, s, a, value):
        self._q_mc[(s, a)] = value

    def visit(self, s, a):
        """Increment and return the visit count of (s, a)."""
        key = (s, a)
        count = self._visits.get(key, 0) + 1
        self._visits[key] = count
        return count

    def visits(self, s, a):
        return self._visits.get((s, a), 0)

    def stored_pairs(self):
        return set(self._q_es) | set(self._q_mc)

    def visit_counts(self):
        return dict(self._visits)


def _softmax(values, tau):
    peak = max(values)
    exps = [math.exp(tau * (x - peak)) for x in values]
    total = sum(exps)
    return [e / total for e in exps]


def extrinsic_reward(m, s, a, tau):
    """Softmax of the transition probabilities over the feasible successors."""
    targets, probs, _ = m.row_fast(s)
    if a not in targets:
        raise ValueError(f"action {a} is not feasible from state {s}")
    soft = _softmax(probs, tau)
    return soft[targets.index(a)]


def intrinsic_reward(visits, beta):
    """Count-based exploration bonus; the visit must be logged first."""
    if visits < 1:
        raise ValueError("visit count must be incremented before the reward")
    return beta / math.sqrt(visits)


def total_reward(r_ext, r_int, lambda_ext, lambda_int):
    return lambda_ext * r_ext + lambda_int * r_int


def _greedy_index(tables, s, feasible):
    best_idx, best_val = 0, -math.inf
    for idx, a in enumerate(feasible):
        val = tables.q_combined(s, a)
        if val > best_val:
            best_idx, best_val = idx, val
    return best_idx


def expected_state_value(tables, s_prime, feasible, eps):
    """Policy-expected value of the next state, restricted to feasible actions.

    The policy is epsilon-greedy over the combined table; values come from
    the Expected-SARSA table. An empty feasible set is terminal and worth 0.
    """
    k = len(feasible)
    if k == 0:
        return 0.0
    greedy = _greedy_index(tables, s_prime, feasible)
    base = eps / k
    value = 0.0
    for idx, a in enumerate(feasible):
        pi = base + (1.0 - eps if idx == greedy else 0.0)
        value += pi * tables.q_es(s_prime, a)
    return value


def expected_sarsa_update(tables, s, a, reward, expected_next, config):
    """One TD(0) step toward reward + discounted expected next-state value."""
    old = tables.q_es(s, a)
    new = old + config.alpha_es * (reward + config.gamma_es * expected_next - old)
    tables.set_q_es(s, a, new)
    return new


def mc_reward(cost_e, varsigma):
    """Episode reward, large when the fragment cost is small."""
    require(cost_e >= 0, "cost must be non-negative")
    return varsigma / (1.0 + cost_e)


def mc_return(final_step, q, gamma_mc, r_mc):
    """Discounted episode reward as seen from step ``q``."""
    require(0 <= q <= final_step, "step must lie within the episode")
    return (gamma_mc ** (final_step - q)) * r_mc


def mc_update(tables, trajectory, r_mc, config):
    """Every-visit Monte-Carlo update over a finished episode's trajectory."""
    if not trajectory.steps:
        return
    final = trajectory.final_step
    for s, a, q in trajectory.steps:
        g = mc_return(final, q, config.gamma_mc, r_mc)
        old = tables.q_mc(s, a)
        tables.set_q_mc(s, a, old + config.alpha_mc * (g - old))


def combine_q(tables, w_es):
    """Refresh the combined table for every stored pair with weight ``w_es``."""
    require(0 <= w_es <= 1, "w_es must be in [0, 1]")
    tables.w_es = w_es
    for key in tables.stored_pairs():
        s, a = key
        tables._q_comb[key] = (w_es * tables.q_es(s, a)
                               + (1.0 - w_es) * tables.q_mc(s, a))


def select_action(tables, s, feasible, eps, rng):
    """Epsilon-greedy over the combined table; ties break to the lowest state."""
    k = len(feasible)
    require(k > 0, f"state {s} has no feasible actions")
    if eps > 0 and rng.random() < eps:
        return feasible[int(rng.integers(k))]
    return feasible[_greedy_index(tables, s, feasible)]


def _idle_runs(mask):
    runs = []
    start = None
    for i, flag in enumerate(mask):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(mask) - 1))
    return runs


def build_idle_model(trips, scheme, idle_threshold=IDLE_SPEED):
    """Mean idle duration, mean time between idles, and trip start states."""
    require(len(trips) > 0, "need at least one trip")
    durations, gaps, initial = [], [], []
    for trip in trips:
        runs = _idle_runs(trip.v <= idle_threshold)
        for start, last in runs:
            durations.append(float(last - start + 1))
        if len(runs) == 1 and runs[0] == (0, len(trip) - 1):
            gaps.append(float(len(trip)))  # trip never moves
        else:
            for (_, prev_last), (next_start, _) in zip(runs, runs[1:]):
                gaps.append(float(next_start - prev_last))
        initial.append(encode_state(
            *bin_sample(trip.v[0], trip.a[0], trip.g_f[0], scheme), scheme))
    mean_dur = float(np.mean(durations)) if durations else 0.0
    if gaps:
        mean_gap = float(np.mean(gaps))
    else:
        # No within-trip idle spacing observed; fall back to trip length.
        mean_gap = float(np.mean([len(tr) for tr in trips]))
    return IdleModel(mean_idle_duration=mean_dur, mean_idle_gap=mean_gap,
                     initial_states=initial)


def _recovery_candidates(m, scheme):
    """Zero-speed-bin states with outgoing transitions, by (grade, accel) bin."""
    support = m.support_counts()
    candidates = []
    for s in np.nonzero(support)[0] + 1:
        i, j, k = decode_state(int(s), scheme)
        if i == 1:
            candidates.append((int(s), j, k))
    return candidates


def _recover_from_dead_end(candidates, m, s, scheme):
    if not candidates:
        support = m.support_counts()
        alive = np.nonzero(support)[0]
        if len(alive) == 0:
            raise ValueError("transition matrix has no outgoing transitions")
        return int(alive[0] + 1)
    _, j0, k0 = decode_state(s, scheme)
    return min(candidates, key=lambda c: (abs(c[2] - k0), abs(c[1] - j0), c[0]))[0]


def run_episode(m, tables, idle, scheme, config, rng, eps=None):
    """Generate one cycle while learning online; returns (cycle, trajectory).

    The walk starts from a uniformly drawn trip-start state. Each arrival
    appends that state's bin-centre kinematics. Whenever the current state
    sits in the zero-speed bin and at least the fleet's mean idle gap has
    passed since the last idle, an idle segment of the fleet's mean duration
    (v=0, a=0, grade held) is appended. Dead-end states trigger a logged jump
    to the nearest zero-speed state that has successors. The episode ends
    once the cycle reaches the target duration.
    """
    eps = config.eps0 if eps is None else eps
    idle_len = idle.idle_samples
    gap = idle.mean_idle_gap
    require(len(idle.initial_states) > 0, "idle model has no initial states")

    v_out, a_out, g_out = [], [], []
    states_out, kinds_out = [], []
    trajectory = Trajectory()
    recoveries = []
    idle_segments = []
    kin_cache = {}
    recovery_pool = None

    s = int(idle.initial_states[int(rng.integers(len(idle.initial_states)))])
    q = 0
    duration = 0
    elapsed_since_idle = gap  # trips begin at a stop: first idle check may fire
    arrival_kind = KIND_CHAIN
    t_target = config.t_target

    while duration < t_target:
        kin = kin_cache.get(s)
        if kin is None:
            kin = state_kinematics(s, scheme)
            kin_cache[s] = kin
        v_out.append(kin[0])
        a_out.append(kin[1])
        g_out.append(kin[2])
        states_out.append(s)
        kinds_out.append(arrival_kind)
        arrival_kind = KIND_CHAIN
        duration += 1
        elapsed_since_idle += 1

        in_zero_speed_bin = s <= scheme.n_accel * scheme.n_grade
        if (in_zero_speed_bin and idle_len > 0
                and elapsed_since_idle >= gap and duration < t_target):
            v_out.extend([0.0] * idle_len)
            a_out.extend([0.0] * idle_len)
            g_out.extend([kin[2]] * idle_len)
            states_out.extend([s] * idle_len)
            kinds_out.extend([KIND_IDLE] * idle_len)
            idle_segments.append({"start": duration, "length": idle_len})
            duration += idle_len
            # Timer runs from idle onset so a natural stop spacing equal to
            # the fleet gap still triggers; only rapid re-stops are skipped.
            elapsed_since_idle = idle_len

        if duration >= t_target:
            break

        feasible, probs, _ = m.row_fast(s)
        if not feasible:
            if recovery_pool is None:
                recovery_pool = _recovery_candidates(m, scheme)
            target = _recover_from_dead_end(recovery_pool, m, s, scheme)
            recoveries.append({"step": q, "from": s, "to": target})
            s = target
            arrival_kind = KIND_RECOVERY
            continue

        # Stop dwell is represented by inserted idle segments, so the agent
        # moves on from a stop state rather than looping in place.
        selectable = feasible
        if in_zero_speed_bin and len(feasible) > 1 and s in feasible:
            selectable = tuple(x for x in feasible if x != s)
        a = select_action(tables, s, selectable, eps, rng)
        count = tables.visit(s, a)
        soft = _softmax(probs, config.tau)
        r_ext = soft[feasible.index(a)]
        r_int = intrinsic_reward(count, config.beta)
        reward = total_reward(r_ext, r_int, config.lambda_ext, config.lambda_int)
        trajectory.append(s, a, q)

        next_feasible = m.row_fast(a)[0]
        expected_next = expected_state_value(tables, a, next_feasible, eps)
        expected_sarsa_update(tables, s, a, reward, expected_next, config)

        s = a
        q += 1

    cycle = DriveCycle(
        t=np.arange(duration, dtype=float),
        v=np.asarray(v_out), a=np.asarray(a_out), g=np.asarray(g_out),
        method="piesmc",
        states=np.asarray(states_out, dtype=np.int64),
        kinds=np.asarray(kinds_out, dtype=np.uint8),
        meta={"recoveries": recoveries, "idle_segments": idle_segments,
              "eps": eps},
    )
    return cycle, trajectory


def train_and_generate(m, trips, scheme, config, idle=None, reference=None,
                       rng=None):
    """Full training loop: run candidates, learn, return the best cycle.

    Learning persists across candidates. After each episode the fragment cost
    against the fleet reference feeds the Monte-Carlo update, the combined
    table refreshes, and the exploration rate and table weighting decay. The
    returned report carries one row per episode.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if idle is None:
        idle = build_idle_model(trips, scheme)
    if reference is None:
        reference, _ = fleet_reference(trips)

    tables = AgentTables(m, w_es=config.w_es0)
    eps = config.eps0
    w_es = config.w_es0
    best_cycle = None
    episodes = []
    for episode in range(config.n_candidates):
        t0 = time.perf_counter()
        cycle, trajectory = run_episode(m, tables, idle, scheme, config, rng,
                                        eps=eps)
        frags = kinematic_fragments(cycle.v, cycle.a) if len(cycle) else None
        cost = fragment_cost(frags, reference).e_total if frags else 0.0
        cycle.cost_e = cost
        reward = mc_reward(cost, config.varsigma)
        mc_update(tables, trajectory, reward, config)
        combine_q(tables, w_es)
        episodes.append({
            "episode": episode,
            "cost_e": cost,
            "reward_mc": reward,
            "duration_s": cycle.duration,
            "eps": eps,
            "w_es": w_es,
            "recoveries": len(cycle.meta["recoveries"]),
            "runtime_s": time.perf_counter() - t0,
        })
        eps = max(config.eps_min, eps * config.decay)
        w_es = max(config.w_es_min, w_es * config.decay)
        if best_cycle is None or cost < best_cycle.cost_e:
            best_cycle = cycle

    report = {
        "method": "piesmc",
        "episodes": episodes,
        "best_episode": int(np.argmin([e["cost_e"] for e in episodes])),
        "best_cost_e": best_cycle.cost_e,
        "recovery_events": int(sum(e["recoveries"] for e in episodes)),
    }
    return best_cycle, report


def audit_feasibility(cycle, m):
    """Count consecutive chain samples that are not observed transitions.

    Inserted idle samples and recovery entries are excluded: idle does not
    move the state, and recoveries are logged jumps by construction.
    """
    states, kinds = cycle.states, cycle.kinds
    if len(states) != len(cycle):
        raise ValueError("cycle carries no per-sample state provenance")
    violations = 0
    checked = 0
    prev = None
    for s, kind in zip(states, kinds):
        s = int(s)
        if kind == KIND_IDLE:
            continue  # state unchanged while idling
        if prev is not None and kind == KIND_CHAIN and prev != s:
            checked += 1
            if m.prob(prev, s) == 0.0:
                violations += 1
        prev = s
    return {"checked": checked, "violations": violations}


class PiesmcGenerator(BaseEstimator):
    """Drive-cycle generator with the scikit-learn estimator surface.

    ``fit`` learns the transition matrix, idle statistics and fragment
    reference from a fleet of cleaned trips; ``generate`` then synthesizes a
    representative cycle, stashing the per-episode report on ``report_``.
    """

    def __init__(self, scheme=None, gamma_es=0.9, gamma_mc=0.99, alpha_es=0.1,
                 alpha_mc=0.05, tau=10.0, beta=0.1, lambda_ext=1.0,
                 lambda_int=1.0, varsigma=100.0, eps0=1.0, eps_min=0.05,
                 decay=0.995, w_es0=0.9, w_es_min=0.3, t_target=2160.0,
                 n_candidates=50, random_state=0):
        self.scheme = scheme
        self.gamma_es = gamma_es
        self.gamma_mc = gamma_mc
        self.alpha_es = alpha_es
        self.alpha_mc = alpha_mc
        self.tau = tau
        self.beta = beta
        self.lambda_ext = lambda_ext
        self.lambda_int = lambda_int
        self.varsigma = varsigma
        self.eps0 = eps0
        self.eps_min = eps_min
        self.decay = decay
        self.w_es0 = w_es0
        self.w_es_min = w_es_min
        self.t_target = t_target
        self.n_candidates = n_candidates
        self.random_state = random_state

    def _config(self):
        return AgentConfig(
            gamma_es=self.gamma_es, gamma_mc=self.gamma_mc,
            alpha_es=self.alpha_es, alpha_mc=self.alpha_mc, tau=self.tau,
            beta=self.beta, lambda_ext=self.lambda_ext,
            lambda_int=self.lambda_int, varsigma=self.varsigma,
            eps0=self.eps0, eps_min=self.eps_min, decay=self.decay,
            w_es0=self.w_es0, w_es_min=self.w_es_min, t_target=self.t_target,
            n_candidates=self.n_candidates, seed=self.random_state,
        )

    def fit(self, trips, y=None):
        require(len(trips) > 0, "need at least one trip")
        self.scheme_ = self.scheme if self.scheme is not None else BinningScheme.default()
        self.sagstm_ = build_sagstm(trips, self.scheme_)
        self.idle_ = build_idle_model(trips, self.scheme_)
        self.reference_, self.reference_std_ = fleet_reference(trips)
        return self

    def generate(self, random_state=None):
        if not hasattr(self, "sagstm_"):
            raise ValueError("generator is not fitted; call fit(trips) first")
        config = self._config()
        if random_state is not None:
            config.seed = random_state
        cycle, report = train_and_generate(
            self.sagstm_, None, self.scheme_, config,
            idle=self.idle_, reference=self.reference_,
        )
        self.report_ = report
        return cycle
