"""Joint speed/acceleration/grade state space and its sparse transition matrix.

States are 1-based integers enumerating the Cartesian product of speed,
acceleration and grade bins. The transition matrix (SAGSTM) stores, for each
observed state, the empirical probabilities of every successor seen in the
fleet; unseen transitions stay structurally zero, which is what makes the
matrix sparse and the feasible-action sets small.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .validation import require

SCHEMA_VERSION = "1"

DEFAULT_SPEED_WIDTH = 0.5    # m/s
DEFAULT_ACCEL_WIDTH = 0.2    # m/s^2
DEFAULT_GRADE_WIDTH = 0.3    # percent
DEFAULT_SPEED_RANGE = (0.0, 30.0)
DEFAULT_ACCEL_RANGE = (-4.0, 4.0)
DEFAULT_GRADE_RANGE = (-6.0, 6.0)


def _edges(lo, hi, width):
    n = int(round((hi - lo) / width))
    require(n >= 1, f"range ({lo}, {hi}) narrower than bin width {width}")
    return lo + width * np.arange(n + 1)


def _check_edges(edges, name):
    edges = np.asarray(edges, dtype=float)
    require(edges.ndim == 1 and edges.size >= 2, f"{name} needs >= 2 edges")
    require(bool(np.all(np.diff(edges) > 0)), f"{name} must be strictly increasing")
    return edges


@dataclass(frozen=True, eq=False)
class BinningScheme:
    """Bin edges for the three state dimensions."""

    speed_edges: np.ndarray
    accel_edges: np.ndarray
    grade_edges: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "speed_edges", _check_edges(self.speed_edges, "speed_edges"))
        object.__setattr__(self, "accel_edges", _check_edges(self.accel_edges, "accel_edges"))
        object.__setattr__(self, "grade_edges", _check_edges(self.grade_edges, "grade_edges"))

    @classmethod
    def from_widths(
        cls,
        speed_width=DEFAULT_SPEED_WIDTH,
        accel_width=DEFAULT_ACCEL_WIDTH,
        grade_width=DEFAULT_GRADE_WIDTH,
        speed_range=DEFAULT_SPEED_RANGE,
        accel_range=DEFAULT_ACCEL_RANGE,
        grade_range=DEFAULT_GRADE_RANGE,
    ):
        return cls(
            speed_edges=_edges(*speed_range, speed_width),
            accel_edges=_edges(*accel_range, accel_width),
            grade_edges=_edges(*grade_range, grade_width),
        )

    @classmethod
    def default(cls):
        return cls.from_widths()

    @property
    def n_speed(self):
        return len(self.speed_edges) - 1

    @property
    def n_accel(self):
        return len(self.accel_edges) - 1

    @property
    def n_grade(self):
        return len(self.grade_edges) - 1

    @property
    def n_states(self):
        return self.n_speed * self.n_accel * self.n_grade

    def __eq__(self, other):
        if not isinstance(other, BinningScheme):
            return NotImplemented
        return (
            np.array_equal(self.speed_edges, other.speed_edges)
            and np.array_equal(self.accel_edges, other.accel_edges)
            and np.array_equal(self.grade_edges, other.grade_edges)
        )

    def as_dict(self):
        return {
            "speed_edges": self.speed_edges.tolist(),
            "accel_edges": self.accel_edges.tolist(),
            "grade_edges": self.grade_edges.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            speed_edges=np.asarray(d["speed_edges"], dtype=float),
            accel_edges=np.asarray(d["accel_edges"], dtype=float),
            grade_edges=np.asarray(d["grade_edges"], dtype=float),
        )


def encode_state(i, j, k, scheme):
    """Map 1-based bin indices (i, j, k) to the 1-based state index."""
    i = np.asarray(i)
    j = np.asarray(j)
    k = np.asarray(k)
    na, ng = scheme.n_accel, scheme.n_grade
    if (np.any(i < 1) or np.any(i > scheme.n_speed)
            or np.any(j < 1) or np.any(j > na)
            or np.any(k < 1) or np.any(k > ng)):
        raise ValueError("bin index out of range for scheme")
    n = (i - 1) * (na * ng) + (j - 1) * ng + k
    return int(n) if n.ndim == 0 else n.astype(np.int64)


def decode_state(n, scheme):
    """Inverse of :func:`encode_state`."""
    n = np.asarray(n)
    if np.any(n < 1) or np.any(n > scheme.n_states):
        raise ValueError(f"state index out of range [1, {scheme.n_states}]")
    na, ng = scheme.n_accel, scheme.n_grade
    z = n - 1
    i = z // (na * ng) + 1
    j = (z // ng) % na + 1
    k = z % ng + 1
    if n.ndim == 0:
        return int(i), int(j), int(k)
    return i.astype(np.int64), j.astype(np.int64), k.astype(np.int64)


def _bin_index(x, edges):
    # Half-open [e_m, e_{m+1}); out-of-range values clamp to the end bins.
    idx = np.searchsorted(edges, x, side="right")
    return np.clip(idx, 1, len(edges) - 1)


def bin_sample(v, a, g, scheme):
    """Bin a (speed, accel, grade) sample; scalar in, scalar indices out."""
    i = _bin_index(np.asarray(v, dtype=float), scheme.speed_edges)
    j = _bin_index(np.asarray(a, dtype=float), scheme.accel_edges)
    k = _bin_index(np.asarray(g, dtype=float), scheme.grade_edges)
    if i.ndim == 0:
        return int(i), int(j), int(k)
    return i.astype(np.int64), j.astype(np.int64), k.astype(np.int64)


def state_kinematics(n, scheme):
    """Bin-centre (speed, accel, grade) values of a state."""
    i, j, k = decode_state(n, scheme)
    se, ae, ge = scheme.speed_edges, scheme.accel_edges, scheme.grade_edges
    v = 0.5 * (se[i - 1] + se[i])
    a = 0.5 * (ae[j - 1] + ae[j])
    g = 0.5 * (ge[k - 1] + ge[k])
    if np.ndim(n) == 0:
        return float(v), float(a), float(g)
    return v, a, g


def states_of_series(v, a, g, scheme):
    """Vectorized state indices for aligned kinematic series."""
    i, j, k = bin_sample(np.asarray(v, dtype=float), np.asarray(a, dtype=float),
                         np.asarray(g, dtype=float), scheme)
    return encode_state(i, j, k, scheme)


class Sagstm:
    """Sparse row-stochastic transition matrix over the joint state space.

    Rows with no observed outgoing transition stay empty. The public API is
    1-based like the state indices; storage is a 0-based scipy CSR matrix.
    """

    def __init__(self, matrix, scheme):
        matrix = sparse.csr_matrix(matrix)
        require(matrix.shape[0] == matrix.shape[1] == scheme.n_states,
                "matrix shape must be n_states x n_states")
        matrix.sort_indices()
        self._m = matrix
        self.scheme = scheme
        self._row_cache = {}

    @property
    def n_states(self):
        return self._m.shape[0]

    @property
    def n_nonzero(self):
        return self._m.nnz

    def row(self, s):
        """(targets, probs) as ndarrays; targets sorted ascending, 1-based."""
        lo, hi = self._m.indptr[s - 1], self._m.indptr[s]
        return self._m.indices[lo:hi] + 1, self._m.data[lo:hi]

    def row_fast(self, s):
        """Cached python-native row view: (targets tuple, probs tuple, prob dict)."""
        cached = self._row_cache.get(s)
        if cached is None:
            targets, probs = self.row(s)
            tt = tuple(int(x) for x in targets)
            pp = tuple(float(x) for x in probs)
            cached = (tt, pp, dict(zip(tt, pp)))
            self._row_cache[s] = cached
        return cached

    def prob(self, s, a):
        return self.row_fast(s)[2].get(a, 0.0)

    def feasible_actions(self, s):
        """Successor states with nonzero probability, sorted ascending."""
        return self.row(s)[0]

    def row_support(self, s):
        return int(self._m.indptr[s] - self._m.indptr[s - 1])

    def support_counts(self):
        return np.diff(self._m.indptr)

    def dense_row(self, s):
        """Full-length probability row (mostly zeros)."""
        return self._m.getrow(s - 1).toarray().ravel()

    def as_dict(self):
        rows = []
        indptr, indices, data = self._m.indptr, self._m.indices, self._m.data
        for r in range(self.n_states):
            lo, hi = indptr[r], indptr[r + 1]
            if hi > lo:
                rows.append({
                    "from": r + 1,
                    "to": (indices[lo:hi] + 1).tolist(),
                    "p": data[lo:hi].tolist(),
                })
        return {
            "schema_version": SCHEMA_VERSION,
            "scheme": self.scheme.as_dict(),
            "n_states": self.n_states,
            "rows": rows,
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.as_dict()))

    @classmethod
    def from_dict(cls, d):
        scheme = BinningScheme.from_dict(d["scheme"])
        n = int(d["n_states"])
        require(n == scheme.n_states, "scheme/n_states mismatch in document")
        rows_idx, cols_idx, vals = [], [], []
        for row in d["rows"]:
            src = int(row["from"]) - 1
            for tgt, p in zip(row["to"], row["p"]):
                rows_idx.append(src)
                cols_idx.append(int(tgt) - 1)
                vals.append(float(p))
        m = sparse.csr_matrix((vals, (rows_idx, cols_idx)), shape=(n, n))
        return cls(m, scheme)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_sagstm(trips, scheme):
    """Count consecutive-sample transitions over a fleet and row-normalize.

    Transitions never cross trip boundaries; a state only ever seen last in
    a trip keeps an empty row.
    """
    require(len(trips) > 0, "need at least one trip")
    n = scheme.n_states
    src_parts, dst_parts = [], []
    for trip in trips:
        states = states_of_series(trip.v, trip.a, trip.g_f, scheme)
        if states.ndim == 0 or len(states) < 2:
            continue
        src_parts.append(states[:-1])
        dst_parts.append(states[1:])
    if not src_parts:
        raise ValueError("fleet contains no transitions (trips too short)")
    src = np.concatenate(src_parts) - 1
    dst = np.concatenate(dst_parts) - 1
    counts = sparse.coo_matrix(
        (np.ones(len(src)), (src, dst)), shape=(n, n)
    ).tocsr()
    counts.sum_duplicates()
    row_totals = np.asarray(counts.sum(axis=1)).ravel()
    scale = np.repeat(
        np.where(row_totals > 0, row_totals, 1.0), np.diff(counts.indptr)
    )
    probs = counts.copy()
    probs.data = counts.data / scale
    return Sagstm(probs, scheme)


def feasible_actions(m, s):
    """Successors of ``s`` observed in the data (nonzero matrix entries)."""
    return m.feasible_actions(s)
