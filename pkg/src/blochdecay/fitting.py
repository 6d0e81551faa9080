"""Plateau extraction and exponential fits of stepped survival curves.

The survival probability of the driven lattice is flat between zone-edge
crossings; the plateau centers sit at t = n T_B.  Fitting ln P against t
over a late window gives the asymptotic rate gamma and the intercept
z = exp(ln P extrapolated to t = 0), the wave-function renormalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bands import LatticeParams
from .dynamics import HoustonState, band_survival
from .stepmodel import SurvivalSeries

DEFAULT_WINDOW_START = 6
DEFAULT_WINDOW_END = 14


class TraceTooShortError(ValueError):
    """Trace does not cover enough Bloch cycles for plateau extraction."""


@dataclass(frozen=True, eq=False)
class PlateauSeries:
    """Survival values at the plateau centers t = n t_bloch."""

    values: np.ndarray
    t_bloch: float
    source: str  # "full-solver" or "effective-model"

    def __len__(self) -> int:
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return self.t_bloch * np.arange(len(self.values))

    @property
    def is_monotone(self) -> bool:
        """Nonincreasing plateaus; interference can break this locally."""
        return bool(np.all(np.diff(self.values) <= 0))


@dataclass(frozen=True)
class ExpFit:
    """Least-squares line in (t, ln P): z = e^intercept, gamma = -slope."""

    z: float
    gamma: float
    window: tuple[int, int]
    residual: float

    def to_json_dict(self) -> dict:
        return {"z": self.z, "gamma": self.gamma,
                "window": list(self.window), "residual": self.residual}


def default_window(n_plateaus: int) -> tuple[int, int]:
    """Cycles 6 through min(14, last); late enough to be asymptotic."""
    return (DEFAULT_WINDOW_START, min(DEFAULT_WINDOW_END, n_plateaus - 1))


def extract_plateaus(trace, params: LatticeParams | None = None) -> PlateauSeries:
    """Plateau values from a solver trace (or pass-through for step series).

    For a list of solver snapshots, picks the sample nearest each
    t = n T_B and projects onto the instantaneous lowest band; requires
    at least 3 cycles of coverage with 64 samples per cycle.  A
    SurvivalSeries is already plateau data and converts directly.
    """
    if isinstance(trace, SurvivalSeries):
        return PlateauSeries(values=trace.probabilities.copy(),
                             t_bloch=trace.t_bloch, source="effective-model")
    if params is None:
        raise ValueError("params required to extract plateaus from a solver trace")
    states: list[HoustonState] = list(trace)
    if len(states) < 2:
        raise TraceTooShortError("trace has fewer than 2 samples")
    t_bloch = params.bloch_period
    times = np.array([st.time for st in states])
    t_max = float(times[-1])
    n_cycles = t_max / t_bloch
    if n_cycles < 3 - 1e-9:
        raise TraceTooShortError(
            f"trace covers {n_cycles:.2f} Bloch cycles, need >= 3")
    if (len(states) - 1) / n_cycles < 63.999:
        raise TraceTooShortError(
            f"trace has {(len(states) - 1) / n_cycles:.1f} samples per cycle, need >= 64")
    n_plateaus = int(math.floor(t_max / t_bloch + 1e-9)) + 1
    values = np.empty(n_plateaus)
    for n in range(n_plateaus):
        i = int(np.argmin(np.abs(times - n * t_bloch)))
        values[n] = band_survival(states[i], params)
    return PlateauSeries(values=values, t_bloch=t_bloch, source="full-solver")


def fit_exponential(series: PlateauSeries, window: tuple[int, int]) -> ExpFit:
    """Fit P_n ~ z exp(-gamma t) in log space over plateaus window[0]..window[1]."""
    lo, hi = int(window[0]), int(window[1])
    if lo < 0 or hi >= len(series) or hi < lo:
        raise ValueError(f"window {window} outside series of length {len(series)}")
    if hi - lo + 1 < 2:
        raise ValueError("at least 2 plateaus required for a fit")
    p = series.values[lo:hi + 1]
    if np.any(p <= 0):
        raise ValueError("plateau values must be positive for a log-space fit")
    t = series.times[lo:hi + 1]
    logp = np.log(p)
    slope, intercept = np.polyfit(t, logp, 1)
    residual = float(np.max(np.abs(logp - (intercept + slope * t))))
    return ExpFit(z=float(np.exp(intercept)), gamma=float(-slope),
                  window=(lo, hi), residual=residual)


def compare_models(full: PlateauSeries, eff: PlateauSeries,
                   window: tuple[int, int] | None = None) -> tuple[np.ndarray, float]:
    """Per-plateau relative deviations |P_full - P_eff| / P_eff.

    Returns (deviations, max over the given window); the normalization
    makes the comparison asymmetric under swapping the inputs by exactly
    the ratio of the two series.
    """
    if len(full) != len(eff):
        raise ValueError(f"length mismatch: {len(full)} vs {len(eff)}")
    with np.errstate(divide="ignore", invalid="ignore"):
        devs = np.abs(full.values - eff.values) / eff.values
    if window is None:
        lo, hi = 0, len(devs) - 1
    else:
        lo, hi = int(window[0]), int(window[1])
        if lo < 0 or hi >= len(devs) or hi < lo:
            raise ValueError(f"window {window} outside series of length {len(devs)}")
    return devs, float(np.max(devs[lo:hi + 1]))
