"""Deterministic rate, intensity and recovery inputs.

Every short rate, hazard rate and volatility in the engine is a
piecewise-constant curve in year fractions. A curve's pillars are pairs
``(t_i, level_i)``; the level ``level_i`` applies on ``[t_i, t_{i+1})`` and
the last level extrapolates flat. Integrals over such curves are exact,
which makes every cash-account ratio ``B_{t1} / B_{t2}`` exact as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError, OrderingError

__all__ = [
    "Curve",
    "RateEnvironment",
    "TimeGrid",
    "discount_factor",
    "effective_rate_tilde",
]


@dataclass(frozen=True, eq=False)
class Curve:
    """Piecewise-constant curve with exact integration."""

    times: np.ndarray
    levels: np.ndarray
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        levels = np.asarray(self.levels, dtype=float).reshape(-1)
        if times.size == 0 or times.size != levels.size:
            raise InputError("curve needs matching, non-empty pillar times and levels")
        if times[0] != 0.0:
            raise InputError(f"curve pillars must start at t=0, got {times[0]}")
        if np.any(np.diff(times) <= 0):
            raise InputError("curve pillar times must be strictly increasing")
        if not np.all(np.isfinite(times)) or not np.all(np.isfinite(levels)):
            raise InputError("curve pillars must be finite")
        cum = np.concatenate([[0.0], np.cumsum(levels[:-1] * np.diff(times))])
        for name, arr in (("times", times), ("levels", levels), ("_cum", cum)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def flat(cls, level: float) -> "Curve":
        return cls(np.array([0.0]), np.array([float(level)]))

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]] | float) -> "Curve":
        """Build from ``[[t, level], ...]``; a bare number means a flat curve."""
        if np.isscalar(pairs):
            return cls.flat(float(pairs))
        arr = np.asarray(list(pairs), dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise InputError("curve pillars must be [time, level] pairs")
        return cls(arr[:, 0], arr[:, 1])

    def to_pairs(self) -> list[list[float]]:
        return [[float(t), float(v)] for t, v in zip(self.times, self.levels)]

    def _index(self, t):
        return np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, None)

    def __call__(self, t):
        """Level in force at ``t`` (scalar or array)."""
        out = self.levels[self._index(t)]
        return float(out) if np.ndim(out) == 0 else out

    def cumulative(self, t):
        """Exact ``int_0^t level(s) ds``."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise InputError("curve integrals are defined for t >= 0 only")
        i = self._index(t)
        out = self._cum[i] + self.levels[i] * (t - self.times[i])
        return float(out) if out.ndim == 0 else out

    def integral(self, t1, t2):
        """Exact ``int_{t1}^{t2} level(s) ds``."""
        if np.any(np.asarray(t1) > np.asarray(t2)):
            raise OrderingError(f"integral bounds out of order: t1={t1} > t2={t2}")
        return self.cumulative(t2) - self.cumulative(t1)

    def inverse_cumulative(self, y):
        """Smallest ``t`` with ``cumulative(t) >= y``; ``inf`` if never reached.

        Only meaningful for non-negative curves (hazard rates).
        """
        y = np.asarray(y, dtype=float)
        i = np.clip(np.searchsorted(self._cum, y, side="right") - 1, 0, None)
        lvl = self.levels[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = self.times[i] + (y - self._cum[i]) / lvl
        t = np.where(lvl > 0, t, np.where(y <= self._cum[i], self.times[i], np.inf))
        return float(t) if t.ndim == 0 else t

    def merged_times(self, *others: "Curve") -> np.ndarray:
        return np.unique(np.concatenate([self.times, *(o.times for o in others)]))

    def __add__(self, other: "Curve") -> "Curve":
        if isinstance(other, (int, float)):
            other = Curve.flat(other)
        ts = self.merged_times(other)
        return Curve(ts, self(ts) + other(ts))

    __radd__ = __add__

    def __neg__(self) -> "Curve":
        return Curve(self.times, -self.levels)

    def __sub__(self, other: "Curve") -> "Curve":
        if isinstance(other, (int, float)):
            other = Curve.flat(other)
        return self + (-other)

    def squared(self) -> "Curve":
        return Curve(self.times, self.levels**2)

    def min(self) -> float:
        return float(self.levels.min())

    def max(self) -> float:
        return float(self.levels.max())

    def is_flat(self) -> bool:
        return bool(np.all(self.levels == self.levels[0]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Curve):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(self.levels, other.levels)

    def __hash__(self):
        return hash((self.times.tobytes(), self.levels.tobytes()))


def discount_factor(curve: Curve, t1, t2):
    """``exp(-int_{t1}^{t2} curve(s) ds)``, i.e. ``B_{t1} / B_{t2}``."""
    return np.exp(-curve.integral(t1, t2))


@dataclass(frozen=True)
class TimeGrid:
    """Simulation dates ``0 = t_0 < ... < t_N = T`` in year fractions."""

    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        if times.size < 2 or times[0] != 0.0:
            raise InputError("time grid needs t_0 = 0 and at least one step")
        if np.any(np.diff(times) <= 0):
            raise InputError("time grid must be strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, horizon: float, n_steps: int) -> "TimeGrid":
        if horizon <= 0 or n_steps < 1:
            raise InputError(f"need horizon > 0 and n_steps >= 1, got {horizon}, {n_steps}")
        return cls(np.linspace(0.0, float(horizon), int(n_steps) + 1))

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.times[1:] + self.times[:-1])

    def index_of(self, t: float) -> int:
        """Index of the grid time nearest to ``t``."""
        return int(np.argmin(np.abs(self.times - t)))

    def trapezoid_weights(self) -> np.ndarray:
        dt = self.dt
        w = np.zeros(self.times.size)
        w[:-1] += 0.5 * dt
        w[1:] += 0.5 * dt
        return w

    def __eq__(self, other) -> bool:
        return isinstance(other, TimeGrid) and np.array_equal(self.times, other.times)

    def __hash__(self):
        return hash(self.times.tobytes())


@dataclass(frozen=True)
class RateEnvironment:
    """Every deterministic rate, hazard and recovery the engine consumes.

    ``r`` is the xVA desk reference rate. Funding, collateral and
    initial-margin accounts have lending (``*l``) and borrowing (``*b``)
    rates; ``lambdaB``/``lambdaC`` are the risk-neutral default intensities
    of the bank and the counterparty.
    """

    r: Curve
    rfl: Curve
    rfb: Curve
    rcl: Curve
    rcb: Curve
    ril: Curve
    rib: Curve
    rrepo: Curve
    lambdaB: Curve
    lambdaC: Curve
    RB: float
    RC: float

    def __post_init__(self):
        ts = self.rfl.merged_times(self.rfb)
        if np.any(self.rfl(ts) > self.rfb(ts)):
            raise InputError("funding lending rate must not exceed the borrowing rate")
        for name in ("lambdaB", "lambdaC"):
            if getattr(self, name).min() < 0:
                raise InputError(f"{name} must be non-negative")
        for name in ("RB", "RC"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise InputError(f"recovery {name} must lie in (0, 1), got {value}")

    @classmethod
    def flat(cls, r: float = 0.0, *, rfl=None, rfb=None, rcl=None, rcb=None,
             ril=None, rib: float = 0.0, rrepo=None, lambdaB: float = 0.0,
             lambdaC: float = 0.0, RB: float = 0.4, RC: float = 0.4) -> "RateEnvironment":
        """Flat curves everywhere; unspecified rates default to ``r``."""
        def c(x, default):
            return Curve.flat(default if x is None else x)

        return cls(
            r=Curve.flat(r), rfl=c(rfl, r), rfb=c(rfb, r), rcl=c(rcl, r), rcb=c(rcb, r),
            ril=c(ril, r), rib=Curve.flat(rib), rrepo=c(rrepo, r),
            lambdaB=Curve.flat(lambdaB), lambdaC=Curve.flat(lambdaC), RB=RB, RC=RC,
        )

    def with_overrides(self, **curves) -> "RateEnvironment":
        return replace(self, **{k: v for k, v in curves.items() if v is not None})

    @property
    def rf(self) -> Curve:
        """Mid funding rate ``(rfl + rfb) / 2``."""
        ts = self.rfl.merged_times(self.rfb)
        return Curve(ts, 0.5 * (self.rfl(ts) + self.rfb(ts)))


def effective_rate_tilde(env: RateEnvironment) -> Curve:
    """Survival-adjusted discount rate ``r + lambdaB + lambdaC``."""
    ts = env.r.merged_times(env.lambdaB, env.lambdaC)
    return Curve(ts, env.r(ts) + env.lambdaB(ts) + env.lambdaC(ts))
