"""Trip ingestion and cleaning.

Raw trip logs (timestamp, speed, GPS fix, altitude) are repaired, road grade
is estimated from consecutive GPS fixes and smoothed, and everything is
resampled to aligned 1 Hz speed / acceleration / grade series.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.signal import savgol_coeffs

from .validation import as_float_array, check_same_length, check_window, require

EARTH_RADIUS_M = 6_371_000.0
SPEED_BOUNDS = (0.0, 28.0)  # m/s, plausible road-vehicle envelope
MAX_GAP_S = 2.0             # longest speed dropout repaired by interpolation
SG_WINDOW = 25
SG_ORDER = 3
GRADE_BOUND_PCT = 6.0
MIN_MOVE_DIST_M = 0.5       # below this the vehicle is treated as stationary
MAX_IMPLIED_SPEED = 60.0    # m/s, GPS fixes implying more are dropped as outliers
MIN_SEGMENT_S = 10          # segments shorter than this are discarded

RAW_COLUMNS = ("t", "speed", "lat", "lon", "alt")
TRIP_COLUMNS = ("t", "v", "a", "g_f")


@dataclass
class TripRecord:
    """One cleaned trip: aligned 1 Hz speed, acceleration and filtered grade."""

    trip_id: str
    t: np.ndarray
    v: np.ndarray
    a: np.ndarray
    g_f: np.ndarray

    def __post_init__(self):
        check_same_length(self.t, self.v, self.a, self.g_f,
                          names=["t", "v", "a", "g_f"])

    def __len__(self):
        return len(self.t)

    @property
    def duration(self):
        """Trip length in seconds at 1 Hz sampling."""
        return float(len(self.t))


@dataclass(frozen=True)
class GradeErrorReport:
    mae: float
    mse: float
    rmse: float

    def as_dict(self):
        return {"mae": self.mae, "mse": self.mse, "rmse": self.rmse}


def _invalid_runs(mask):
    """Half-open (start, stop) ranges of consecutive True entries."""
    runs = []
    start = None
    for i, bad in enumerate(mask):
        if bad and start is None:
            start = i
        elif not bad and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(mask)))
    return runs


def clean_speed(v, v_bounds=SPEED_BOUNDS, max_gap=MAX_GAP_S, dt=1.0):
    """Repair missing and out-of-range speed samples.

    Invalid runs no longer than ``max_gap`` seconds are linearly interpolated
    between their valid neighbours (at the series edges, measured values are
    clipped to the bounds and true gaps take the nearest valid value). Longer
    runs cannot be repaired and split the trip.

    Returns ``(cleaned, segments)`` where ``cleaned`` keeps NaN inside
    unrepairable runs and ``segments`` lists the half-open index ranges of
    the surviving pieces.
    """
    v = as_float_array(v, "speed", min_len=1)
    lo, hi = float(v_bounds[0]), float(v_bounds[1])
    require(0.0 <= lo < hi, f"invalid speed bounds {v_bounds}")
    require(dt > 0, "sample interval must be positive")

    invalid = ~np.isfinite(v) | (v < lo) | (v > hi)
    if invalid.all():
        raise ValueError("speed series contains no valid samples")

    max_run = max(1, int(round(max_gap / dt)))
    out = v.copy()
    long_runs = []
    for start, stop in _invalid_runs(invalid):
        n = stop - start
        if n > max_run:
            out[start:stop] = np.nan
            long_runs.append((start, stop))
            continue
        left, right = start - 1, stop
        if left >= 0 and right < len(v) and not invalid[left] and not invalid[right]:
            out[start:stop] = np.interp(
                np.arange(start, stop), [left, right], [out[left], out[right]]
            )
        else:
            # Edge run: no anchor on one side.
            anchor = out[right] if right < len(v) and not invalid[right] else out[left]
            chunk = v[start:stop]
            out[start:stop] = np.where(
                np.isfinite(chunk), np.clip(chunk, lo, hi), anchor
            )

    segments = []
    cursor = 0
    for start, stop in long_runs:
        if start > cursor:
            segments.append((cursor, start))
        cursor = stop
    if cursor < len(v):
        segments.append((cursor, len(v)))
    return out, segments


def central_diff_accel(v, dt=1.0):
    """Acceleration from speed: central differences inside, one-sided at the ends."""
    v = as_float_array(v, "speed", min_len=3)
    require(dt > 0, "sample interval must be positive")
    return np.gradient(v, dt, edge_order=1)


def haversine_distance(lat1, lon1, lat2, lon2, radius=EARTH_RADIUS_M):
    """Great-circle distance in metres between two (or two arrays of) fixes."""
    require(radius > 0, "radius must be positive")
    p1, l1, p2, l2 = (np.radians(np.asarray(x, dtype=float))
                      for x in (lat1, lon1, lat2, lon2))
    h = np.sin((p2 - p1) / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin((l2 - l1) / 2) ** 2
    d = radius * 2.0 * np.arctan2(np.sqrt(h), np.sqrt(1.0 - h))
    return float(d) if np.isscalar(lat1) and d.ndim == 0 else d


def raw_grade(delta_alt, dist, min_dist=MIN_MOVE_DIST_M):
    """Percent grade from altitude change over travelled distance.

    Where ``dist`` does not exceed ``min_dist`` the vehicle is effectively
    stationary and grade is undefined; those entries come back NaN so the
    caller can hold the previous value.
    """
    da = np.asarray(delta_alt, dtype=float)
    d = np.asarray(dist, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(d > min_dist, 100.0 * da / np.where(d > 0, d, 1.0), np.nan)
    if np.isscalar(delta_alt) and g.ndim == 0:
        return float(g)
    return g


def forward_fill(x, initial=0.0):
    """Replace NaN entries with the most recent finite value."""
    x = as_float_array(x).copy()
    last = initial
    for i in range(len(x)):
        if np.isfinite(x[i]):
            last = x[i]
        else:
            x[i] = last
    return x


@lru_cache(maxsize=32)
def _sg_taps(window, order):
    # Least-squares centre-point taps, solved once per (window, order).
    return tuple(savgol_coeffs(window, order))


def savitzky_golay(x, window=SG_WINDOW, order=SG_ORDER):
    """Centre-point polynomial smoothing with mirror-padded edges.

    Each output sample is the centre value of a degree-``order`` least-squares
    fit over the sliding window; mirroring the ends keeps the output the same
    length as the input.
    """
    x = as_float_array(x, "series")
    check_window(window, order, len(x))
    half = window // 2
    padded = np.pad(x, half, mode="reflect")
    taps = np.asarray(_sg_taps(window, order))
    return np.convolve(padded, taps, mode="valid")


def resample_1hz(x, rate=30):
    """Block means over ``rate`` input samples; a trailing partial block is dropped."""
    x = as_float_array(x)
    rate = int(rate)
    require(rate >= 1, "rate must be a positive integer")
    n = x.size // rate
    if n == 0:
        return np.empty(0)
    return x[: n * rate].reshape(n, rate).mean(axis=1)


def grade_error_metrics(calc, ref):
    """MAE / MSE / RMSE of a computed grade series against a reference."""
    calc = as_float_array(calc, "calc", min_len=1)
    ref = as_float_array(ref, "ref", min_len=1)
    check_same_length(calc, ref, names=["calc", "ref"])
    err = calc - ref
    mse = float(np.mean(err**2))
    return GradeErrorReport(mae=float(np.mean(np.abs(err))), mse=mse,
                            rmse=math.sqrt(mse))


def drop_gps_outliers(t, lat, lon, max_speed=MAX_IMPLIED_SPEED):
    """Mask keeping fixes whose implied horizontal speed stays plausible.

    Walks the trace keeping the last accepted fix as the anchor, so a single
    bad point does not poison its successors.
    """
    t = as_float_array(t, "t")
    keep = np.ones(len(t), dtype=bool)
    last = 0
    for i in range(1, len(t)):
        if not (np.isfinite(lat[i]) and np.isfinite(lon[i])):
            continue
        if not (np.isfinite(lat[last]) and np.isfinite(lon[last])):
            last = i
            continue
        d = haversine_distance(lat[last], lon[last], lat[i], lon[i])
        dt = t[i] - t[last]
        if dt > 0 and d / dt > max_speed:
            keep[i] = False
        else:
            last = i
    return keep


def _fill_series_nans(t, x, name):
    x = np.asarray(x, dtype=float)
    good = np.isfinite(x)
    if not good.any():
        raise ValueError(f"{name} column contains no valid samples")
    if good.all():
        return x
    return np.interp(t, t[good], x[good])


def process_raw_trip(
    trip_id,
    t,
    speed,
    lat,
    lon,
    alt,
    *,
    v_bounds=SPEED_BOUNDS,
    max_gap=MAX_GAP_S,
    sg_window=SG_WINDOW,
    sg_order=SG_ORDER,
    grade_bound=GRADE_BOUND_PCT,
    min_move_dist=MIN_MOVE_DIST_M,
    max_implied_speed=MAX_IMPLIED_SPEED,
    min_segment_s=MIN_SEGMENT_S,
):
    """Turn one raw trip log into cleaned 1 Hz TripRecords.

    The log is validated, GPS outliers are dropped, speed is repaired, the
    trip is split at unrepairable gaps, each segment is resampled to 1 Hz and
    grade is derived per consecutive second then smoothed. A list is returned
    because gap splits may yield several records.
    """
    t = as_float_array(t, "t", min_len=2)
    speed = np.asarray(speed, dtype=float)
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    alt = np.asarray(alt, dtype=float)
    check_same_length(t, speed, lat, lon, alt,
                      names=["t", "speed", "lat", "lon", "alt"])
    if not np.all(np.diff(t) > 0):
        raise ValueError(f"trip {trip_id}: timestamps must be strictly increasing")
    finite_lat = lat[np.isfinite(lat)]
    finite_lon = lon[np.isfinite(lon)]
    if finite_lat.size and (finite_lat.min() < -90 or finite_lat.max() > 90):
        raise ValueError(f"trip {trip_id}: latitude out of [-90, 90]")
    if finite_lon.size and (finite_lon.min() < -180 or finite_lon.max() > 180):
        raise ValueError(f"trip {trip_id}: longitude out of [-180, 180]")

    keep = drop_gps_outliers(t, lat, lon, max_implied_speed)
    t, speed, lat, lon, alt = t[keep], speed[keep], lat[keep], lon[keep], alt[keep]

    dt = float(np.median(np.diff(t)))
    rate = max(1, int(round(1.0 / dt)))

    lat = _fill_series_nans(t, lat, "lat")
    lon = _fill_series_nans(t, lon, "lon")
    alt = _fill_series_nans(t, alt, "alt")

    v_clean, segments = clean_speed(speed, v_bounds, max_gap, dt=dt)

    records = []
    for seg_idx, (start, stop) in enumerate(segments):
        if (stop - start) < min_segment_s * rate:
            continue
        v_seg = v_clean[start:stop]
        lat_seg, lon_seg, alt_seg = lat[start:stop], lon[start:stop], alt[start:stop]
        if rate > 1:
            v1 = resample_1hz(v_seg, rate)
            lat1 = resample_1hz(lat_seg, rate)
            lon1 = resample_1hz(lon_seg, rate)
            alt1 = resample_1hz(alt_seg, rate)
        else:
            v1, lat1, lon1, alt1 = v_seg, lat_seg, lon_seg, alt_seg
        n = len(v1)
        if n < max(3, min_segment_s):
            continue

        dist = haversine_distance(lat1[:-1], lon1[:-1], lat1[1:], lon1[1:])
        g_pair = raw_grade(np.diff(alt1), dist, min_move_dist)
        g_pair = forward_fill(g_pair, initial=0.0)
        # Pairwise grade sits on the leading sample; repeat the last value to
        # keep the series aligned with speed.
        g_raw_full = np.append(g_pair, g_pair[-1])

        window = sg_window if n >= sg_window else max(3, (n - 1) | 1)
        order = min(sg_order, window - 1)
        g_f = savitzky_golay(g_raw_full, window, order) if window >= 3 else g_raw_full
        g_f = np.clip(g_f, -grade_bound, grade_bound)

        a = central_diff_accel(v1, 1.0)
        suffix = f".{seg_idx}" if len(segments) > 1 else ""
        records.append(TripRecord(
            trip_id=f"{trip_id}{suffix}",
            t=np.arange(n, dtype=float),
            v=np.clip(v1, 0.0, None),
            a=a,
            g_f=g_f,
        ))
    return records


def read_raw_trip_csv(path):
    """Read a raw trip log with header ``t,speed,lat,lon,alt``; blanks become NaN."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != list(RAW_COLUMNS):
            raise ValueError(
                f"{path.name}: expected header {','.join(RAW_COLUMNS)}"
            )
        rows = [[float(cell) if cell.strip() else math.nan for cell in row]
                for row in reader if row]
    if not rows:
        raise ValueError(f"{path.name}: no samples")
    data = np.asarray(rows, dtype=float)
    return {name: data[:, i] for i, name in enumerate(RAW_COLUMNS)}


def write_trip_csv(record, path):
    """Write a cleaned trip as ``t,v,a,g_f``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(",".join(TRIP_COLUMNS) + "\n")
        for k in range(len(record)):
            fh.write(f"{record.t[k]:.0f},{record.v[k]:.6f},"
                     f"{record.a[k]:.6f},{record.g_f[k]:.6f}\n")


def read_trip_csv(path):
    """Read a cleaned trip CSV written by :func:`write_trip_csv`."""
    path = Path(path)
    data = np.genfromtxt(path, delimiter=",", names=True)
    names = data.dtype.names
    if names is None or tuple(names) != TRIP_COLUMNS:
        raise ValueError(f"{path.name}: expected header {','.join(TRIP_COLUMNS)}")
    data = np.atleast_1d(data)
    return TripRecord(
        trip_id=path.stem,
        t=np.asarray(data["t"], dtype=float),
        v=np.asarray(data["v"], dtype=float),
        a=np.asarray(data["a"], dtype=float),
        g_f=np.asarray(data["g_f"], dtype=float),
    )
