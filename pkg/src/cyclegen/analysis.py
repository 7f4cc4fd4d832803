"""Evaluation mathematics for generated cycles and fleet references.

Covers the eight kinematic fragments and their cost, vehicle specific power,
distribution statistics with accuracy levels, and a complex-Morlet continuous
wavelet transform for frequency content of grade profiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .validation import as_float_array, check_same_length, require

IDLE_SPEED = 0.025    # m/s: at or below counts as idling
CRUISE_SPEED = 5.0    # m/s: cruising requires more than this
ACCEL_BAND = 0.15     # m/s^2: |a| below this is neither accel nor decel phase

FRAGMENT_FIELDS = ("v_bar_ei", "v_bar", "a_bar_p", "a_bar_n",
                   "t_i", "t_c", "t_ap", "t_an")

# Light-duty vehicle specific power coefficients (rolling, climb, drag terms).
VSP_ROLLING = 0.132       # kW/ton per m/s
VSP_ACCEL = 1.1           # mass factor on acceleration
VSP_GRAVITY = 9.81        # m/s^2
VSP_DRAG = 0.000302       # kW/ton per (m/s)^3

DEFAULT_OMEGA0 = 6.0
DEFAULT_N_SCALES = 64
DEFAULT_FREQ_RANGE = (0.002, 0.5)   # Hz at 1 Hz sampling


@dataclass(frozen=True)
class KinematicFragments:
    """The eight summary statistics of a cycle's speed/acceleration series."""

    v_bar_ei: float
    v_bar: float
    a_bar_p: float
    a_bar_n: float
    t_i: float
    t_c: float
    t_ap: float
    t_an: float
    undefined: tuple = ()

    def as_dict(self):
        d = {name: getattr(self, name) for name in FRAGMENT_FIELDS}
        d["undefined"] = list(self.undefined)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{name: float(d[name]) for name in FRAGMENT_FIELDS},
                   undefined=tuple(d.get("undefined", ())))

    def values(self):
        return np.array([getattr(self, name) for name in FRAGMENT_FIELDS])


@dataclass(frozen=True)
class FragmentCost:
    """Per-fragment errors and their sum."""

    eps: np.ndarray
    e_total: float

    def as_dict(self):
        return {
            "eps": {name: float(e) for name, e in zip(FRAGMENT_FIELDS, self.eps)},
            "e_total": self.e_total,
        }


def kinematic_fragments(v, a):
    """Compute the eight fragments from aligned 1 Hz speed and acceleration.

    Fragments whose selector picks no samples are reported as 0 and listed
    in ``undefined`` rather than silently skipped.
    """
    v = as_float_array(v, "speed", min_len=1)
    a = as_float_array(a, "accel", min_len=1)
    check_same_length(v, a, names=["speed", "accel"])
    n = len(v)
    undefined = []

    def masked_mean(series, mask, name):
        if not mask.any():
            undefined.append(name)
            return 0.0
        return float(series[mask].mean())

    moving = v > IDLE_SPEED
    frag = KinematicFragments(
        v_bar_ei=masked_mean(v, moving, "v_bar_ei"),
        v_bar=float(v.mean()),
        a_bar_p=masked_mean(a, a >= ACCEL_BAND, "a_bar_p"),
        a_bar_n=masked_mean(a, a <= -ACCEL_BAND, "a_bar_n"),
        t_i=100.0 * float(np.count_nonzero(~moving)) / n,
        t_c=100.0 * float(np.count_nonzero(
            (v > CRUISE_SPEED) & (np.abs(a) <= ACCEL_BAND))) / n,
        t_ap=100.0 * float(np.count_nonzero(a > 0)) / n,
        t_an=100.0 * float(np.count_nonzero(a < 0)) / n,
        undefined=tuple(undefined),
    )
    return frag


def fleet_reference(trips):
    """Per-trip fragment means and stds, the fleet-level comparison target."""
    require(len(trips) > 0, "need at least one trip")
    per_trip = [kinematic_fragments(tr.v, tr.a) for tr in trips]
    table = np.array([f.values() for f in per_trip])
    defined = np.array([[name not in f.undefined for name in FRAGMENT_FIELDS]
                        for f in per_trip])
    means, stds = [], []
    undefined = []
    for col, name in enumerate(FRAGMENT_FIELDS):
        ok = defined[:, col]
        if not ok.any():
            undefined.append(name)
            means.append(0.0)
            stds.append(0.0)
            continue
        vals = table[ok, col]
        means.append(float(vals.mean()))
        stds.append(float(vals.std()))
    mean_frag = KinematicFragments(*means, undefined=tuple(undefined))
    std_frag = KinematicFragments(*stds)
    return mean_frag, std_frag


def fragment_cost(gen, ref, rel_floor=1e-6):
    """Sum of normalized squared fragment errors.

    Errors are squared relative deviations; fragments whose reference sits
    at (numerical) zero, or that are undefined on the generated side, fall
    back to squared absolute deviations.
    """
    eps = np.empty(len(FRAGMENT_FIELDS))
    for idx, name in enumerate(FRAGMENT_FIELDS):
        g = getattr(gen, name)
        r = getattr(ref, name)
        if abs(r) > rel_floor and name not in gen.undefined:
            eps[idx] = ((g - r) / r) ** 2
        else:
            eps[idx] = (g - r) ** 2
    return FragmentCost(eps=eps, e_total=float(eps.sum()))


def vsp(v, a, grade):
    """Vehicle specific power in kW/ton for speed, acceleration and % grade."""
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    grade = np.asarray(grade, dtype=float)
    slope = np.sin(np.arctan(grade / 100.0))
    out = v * (VSP_ACCEL * a + VSP_GRAVITY * slope + VSP_ROLLING) + VSP_DRAG * v**3
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DistStats:
    min: float
    max: float
    mean: float
    std: float

    def as_dict(self):
        return {"min": self.min, "max": self.max, "mean": self.mean, "std": self.std}


def distribution_stats(x):
    """(min, max, mean, population std) of a series."""
    x = as_float_array(x, "series", min_len=1)
    return DistStats(min=float(x.min()), max=float(x.max()),
                     mean=float(x.mean()), std=float(x.std()))


def accuracy_level(gen_value, ref_mean, ref_std):
    """Deviation class 1..4 in units of the reference standard deviation."""
    require(ref_std >= 0, "ref_std must be non-negative")
    dev = abs(gen_value - ref_mean)
    if ref_std == 0:
        return 1 if dev == 0 else 4
    for level in (1, 2, 3):
        if dev <= level * ref_std:
            return level
    return 4


@dataclass(frozen=True)
class Scalogram:
    """Magnitudes of a continuous wavelet transform, scales x times."""

    scales: np.ndarray
    times: np.ndarray
    magnitudes: np.ndarray
    omega0: float = DEFAULT_OMEGA0

    @property
    def frequencies(self):
        """Pseudo-frequency of each scale for the Morlet mother wavelet."""
        return self.omega0 / (2.0 * math.pi * self.scales)


def morlet_scales(n=DEFAULT_N_SCALES, freq_range=DEFAULT_FREQ_RANGE,
                  omega0=DEFAULT_OMEGA0):
    """Log-spaced scales covering a frequency band, ascending in scale."""
    f_lo, f_hi = freq_range
    require(0 < f_lo < f_hi, "need 0 < f_lo < f_hi")
    return np.geomspace(omega0 / (2 * math.pi * f_hi),
                        omega0 / (2 * math.pi * f_lo), n)


def _morlet_kernel(scale, omega0):
    # Support out to 5 standard deviations of the Gaussian envelope.
    half = int(math.ceil(5.0 * scale))
    u = np.arange(-half, half + 1) / scale
    return np.exp(1j * omega0 * u) * np.exp(-0.5 * u * u) / math.sqrt(scale)


def cwt(signal, scales=None, omega0=DEFAULT_OMEGA0, method="fft"):
    """Complex-Morlet continuous wavelet transform magnitudes.

    ``method`` selects zero-padded convolution by FFT (default) or the direct
    sum; both produce the same coefficients and the direct path doubles as a
    slow reference.
    """
    x = as_float_array(signal, "signal", min_len=4)
    scales = morlet_scales(omega0=omega0) if scales is None else \
        as_float_array(scales, "scales", min_len=1)
    require(bool(np.all(scales > 0)), "scales must be positive")
    require(method in ("fft", "direct"), f"unknown method {method!r}")
    mags = np.empty((len(scales), len(x)))
    for row, s in enumerate(scales):
        kernel = _morlet_kernel(s, omega0)
        if method == "fft":
            w = fftconvolve(x, kernel, mode="same")
        else:
            w = np.convolve(x, kernel, mode="same")
        mags[row] = np.abs(w)
    return Scalogram(scales=scales, times=np.arange(len(x), dtype=float),
                     magnitudes=mags, omega0=omega0)


def wavelet_hf_fraction(scalogram, f_split):
    """Share of scalogram energy at frequencies above ``f_split``."""
    require(f_split > 0, "f_split must be positive")
    energy = scalogram.magnitudes**2
    total = float(energy.sum())
    if total == 0.0:
        return 0.0
    hf = scalogram.frequencies > f_split
    return float(energy[hf].sum()) / total
