"""Synthetic fleet generators.

Two flavours: bin-structured stop-and-go trips whose values sit on bin
centres (for exercising the generators against a controlled transition
structure), and raw 30 Hz GPS logs with noise and dropouts (for exercising
the cleaning pipeline end to end).
"""

from __future__ import annotations

import math

import numpy as np

from .preprocess import TripRecord
from .statespace import BinningScheme

ORACLE_SPEED_RANGE = (0.0, 24.0)
ORACLE_ACCEL_RANGE = (-2.25, 2.25)
ORACLE_GRADE_RANGE = (-2.7, 2.7)


def oracle_scheme():
    """12 speed x 9 accel x 9 grade bins used by the synthetic stop-go fleet."""
    return BinningScheme.from_widths(
        speed_width=2.0, accel_width=0.5, grade_width=0.6,
        speed_range=ORACLE_SPEED_RANGE, accel_range=ORACLE_ACCEL_RANGE,
        grade_range=ORACLE_GRADE_RANGE,
    )


def _grade_walk(rng, n, scheme, step_prob=0.1):
    """Slow random walk over grade-bin centres; one bin per move."""
    edges = scheme.grade_edges
    centers = 0.5 * (edges[:-1] + edges[1:])
    k = len(centers) // 2  # start flat
    out = np.empty(n)
    for i in range(n):
        out[i] = centers[k]
        if rng.random() < step_prob:
            k = min(max(k + (1 if rng.random() < 0.5 else -1), 0),
                    len(centers) - 1)
    return out


# Ground-truth driving process: a Markov mode chain with geometric dwells
# over two traffic regimes. Urban trips idle at long lights, ramp one speed
# bin per second to a plateau in the low band, hold it, then either climb to
# a higher plateau or descend to a full stop. Highway trips enter the high
# band after their initial stop and switch plateaus within it without ever
# stopping, so each contributes a single long no-stop segment.
URBAN_BINS = (5, 8)      # inclusive plateau speed-bin band
HIGHWAY_BINS = (9, 12)
PLATEAU_DWELL = 28.0     # s, mean plateau duration
IDLE_DWELL = 50.0        # s, mean idle duration (long lights, congestion)
P_STOP_ON_EXIT = 0.6     # urban plateau exits that descend to a stop
HIGHWAY_SHARE = 0.35     # fraction of highway trips in a fleet


def make_stop_go_trip(rng, trip_len=1200, scheme=None, kind="urban",
                      plateau_dwell=PLATEAU_DWELL, idle_dwell=IDLE_DWELL,
                      p_stop=P_STOP_ON_EXIT):
    """One trip sampled from the ground-truth mode chain.

    Moving speed samples sit exactly on bin centres so the induced state
    chain is clean; idle samples are true zeros. Grade follows a slow
    bin-centre walk that freezes while the vehicle is stopped.
    """
    scheme = scheme or oracle_scheme()
    centers = 0.5 * (scheme.speed_edges[:-1] + scheme.speed_edges[1:])
    lo, hi = URBAN_BINS if kind == "urban" else HIGHWAY_BINS
    hi = min(hi, scheme.n_speed)

    v = []
    moving = []

    def ramp(frm, to):
        step = 1 if to > frm else -1
        for b in range(frm + step, to + step, step):
            v.append(centers[b - 1] if b >= 1 else 0.0)
            moving.append(b >= 1)

    def dwell_at(b, mean):
        hold = int(rng.geometric(1.0 / mean))
        v.extend([centers[b - 1]] * hold)
        moving.extend([True] * hold)

    while len(v) < trip_len:
        stop = int(rng.geometric(1.0 / idle_dwell))
        v.extend([0.0] * stop)
        moving.extend([False] * stop)
        bin_now = 0
        if kind == "urban":
            while len(v) < trip_len:
                # Plateau switches only climb; descents run to a full stop.
                target = int(rng.integers(max(lo, bin_now + 1), hi + 1))
                ramp(bin_now, target)
                bin_now = target
                dwell_at(bin_now, plateau_dwell)
                if bin_now >= hi or rng.random() < p_stop:
                    ramp(bin_now, 0)
                    break
        else:
            # One long segment switching plateaus inside the high band.
            while len(v) < trip_len:
                target = int(rng.integers(lo, hi + 1))
                if target == bin_now:
                    continue
                ramp(bin_now, target)
                bin_now = target
                dwell_at(bin_now, plateau_dwell)
    v = np.asarray(v[:trip_len])
    moving = np.asarray(moving[:trip_len])

    g = _grade_walk(rng, trip_len, scheme)
    g[~moving] = np.nan  # hold grade through stops
    last = g[moving][0] if moving.any() else 0.0
    for i in range(trip_len):
        if math.isnan(g[i]):
            g[i] = last
        else:
            last = g[i]

    a = np.gradient(v, 1.0, edge_order=1)
    return v, a, g


def make_markov_fleet(n_trips=100, trip_len=1200, seed=0, scheme=None,
                      highway_share=HIGHWAY_SHARE, **trip_kwargs):
    """A two-regime fleet of mode-chain trips with planted idle statistics."""
    scheme = scheme or oracle_scheme()
    rng = np.random.default_rng(seed)
    trips = []
    for idx in range(n_trips):
        kind = "highway" if rng.random() < highway_share else "urban"
        v, a, g = make_stop_go_trip(rng, trip_len, scheme, kind=kind,
                                    **trip_kwargs)
        trips.append(TripRecord(
            trip_id=f"synth{idx:03d}",
            t=np.arange(trip_len, dtype=float),
            v=v, a=a, g_f=g,
        ))
    return trips


def make_raw_trip(rng, duration_s=600, rate=30, altitude_noise_m=1.0,
                  speed_dropout_prob=0.002, base_lat=53.5, base_lon=-113.5):
    """A raw 30 Hz GPS log of a drive north along a meridian.

    Speed varies smoothly with full stops; altitude follows a sinusoid plus
    ramps so the grade profile is known; configurable white noise corrupts
    the altitude channel and occasional short dropouts blank the speed.
    Returns a dict of columns plus the noise-free altitude for reference.
    """
    n = int(duration_s * rate)
    t = np.arange(n) / rate

    # Smooth speed: lifted sinusoid with stops where it would dip below zero.
    v = 12.0 + 10.0 * np.sin(2 * math.pi * t / 180.0 + rng.uniform(0, 2 * math.pi))
    v = np.clip(v, 0.0, 28.0)

    # Integrate distance northward; latitude from arc length.
    dist = np.concatenate([[0.0], np.cumsum(v[:-1] / rate)])
    lat = base_lat + np.degrees(dist / 6_371_000.0)
    lon = np.full(n, base_lon)

    alt_true = (8.0 * np.sin(2 * math.pi * dist / 2500.0)
                + 0.01 * dist
                + 3.0 * np.sin(2 * math.pi * dist / 900.0))
    alt = alt_true + rng.normal(0.0, altitude_noise_m, n)

    speed = v.copy()
    drops = rng.random(n) < speed_dropout_prob
    speed[drops] = np.nan

    return {"t": t, "speed": speed, "lat": lat, "lon": lon, "alt": alt,
            "alt_true": alt_true, "v_true": v}


def write_raw_fleet(out_dir, n_trips=5, duration_s=600, seed=0, rate=30,
                    **kwargs):
    """Write a folder of raw trip CSVs; returns the created paths."""
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for idx in range(n_trips):
        cols = make_raw_trip(rng, duration_s=duration_s, rate=rate, **kwargs)
        path = out_dir / f"trip_{idx:03d}.csv"
        with path.open("w", newline="") as fh:
            fh.write("t,speed,lat,lon,alt\n")
            for k in range(len(cols["t"])):
                s = "" if math.isnan(cols["speed"][k]) else f"{cols['speed'][k]:.4f}"
                fh.write(f"{cols['t'][k]:.6f},{s},{cols['lat'][k]:.8f},"
                         f"{cols['lon'][k]:.8f},{cols['alt'][k]:.4f}\n")
        paths.append(path)
    return paths
