"""Claims, clean values, front-office values and the discounting adjustment.

Value surfaces hold left limits: the column at grid time ``t_k`` includes a
cashflow paid at ``t_k``. At a claim's final payment date the clean value
column therefore equals the payoff, and it is zero afterwards.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

import numpy as np

from .errors import InputError
from .market_sim import AssetSpec, PathSet
from .regression import RegressionSpec, conditional_expectation
from .term_structures import Curve, RateEnvironment, TimeGrid

logger = logging.getLogger(__name__)

__all__ = [
    "Forward",
    "EuropeanOption",
    "LinearFlow",
    "CashflowSchedule",
    "Claim",
    "ValueSurface",
    "clean_value_forward_closed_form",
    "front_office_value_forward",
    "clean_value_surface",
    "front_office_surface",
    "discva_surface",
]


@dataclass(frozen=True)
class Forward:
    direction: str
    strike: float
    maturity: float

    def __post_init__(self):
        if self.direction not in ("long", "short"):
            raise InputError(f"forward direction must be 'long' or 'short', got {self.direction!r}")

    @property
    def sign(self) -> float:
        return 1.0 if self.direction == "long" else -1.0

    def flows(self):
        return [(self.maturity, lambda s: self.sign * (s - self.strike))]


@dataclass(frozen=True)
class EuropeanOption:
    kind: str
    strike: float
    maturity: float

    def __post_init__(self):
        if self.kind not in ("call", "put"):
            raise InputError(f"option kind must be 'call' or 'put', got {self.kind!r}")

    def flows(self):
        if self.kind == "call":
            return [(self.maturity, lambda s: np.maximum(s - self.strike, 0.0))]
        return [(self.maturity, lambda s: np.maximum(self.strike - s, 0.0))]


@dataclass(frozen=True)
class LinearFlow:
    """Amount ``fixed + spot * S_t`` paid at ``time``."""

    time: float
    fixed: float = 0.0
    spot: float = 0.0

    def __call__(self, s):
        return self.fixed + self.spot * s


@dataclass(frozen=True)
class CashflowSchedule:
    """Arbitrary dated amounts; each entry is ``(time, amount_fn)``."""

    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(
            (e.time, e) if isinstance(e, LinearFlow) else (float(e[0]), e[1]) for e in self.entries
        ))

    @property
    def maturity(self) -> float:
        return max((t for t, _ in self.entries), default=0.0)

    def flows(self):
        return list(self.entries)


Payoff = Union[Forward, EuropeanOption, CashflowSchedule]


@dataclass(frozen=True)
class Claim:
    """A cashflow stream on one asset.

    ``csa_rate`` is the rate the front office discounts this claim at; when
    omitted it coincides with the reference rate ``r``.
    """

    id: str
    payoff: Payoff
    notional: float = 1.0
    csa_rate: Curve | None = None
    asset: str = "S"

    def __post_init__(self):
        if not np.isfinite(self.notional):
            raise InputError(f"claim {self.id}: notional must be finite")

    @property
    def maturity(self) -> float:
        return float(self.payoff.maturity)

    def front_office_rate(self, env: RateEnvironment) -> Curve:
        return env.r if self.csa_rate is None else self.csa_rate


@dataclass(frozen=True, eq=False)
class ValueSurface:
    """Per-path, per-grid-time values of one process."""

    grid: TimeGrid
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != self.grid.times.size:
            raise InputError(
                f"surface {self.label!r}: shape {self.values.shape} does not match grid"
            )

    @classmethod
    def zeros(cls, grid: TimeGrid, n_paths: int, label: str = "") -> "ValueSurface":
        return cls(grid, np.zeros((n_paths, grid.times.size)), label)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def _check(self, other: "ValueSurface"):
        if other.grid != self.grid or other.values.shape != self.values.shape:
            raise InputError(f"surfaces {self.label!r} and {other.label!r} are not aligned")

    def __add__(self, other: "ValueSurface") -> "ValueSurface":
        self._check(other)
        return ValueSurface(self.grid, self.values + other.values, self.label)

    def __sub__(self, other: "ValueSurface") -> "ValueSurface":
        self._check(other)
        return ValueSurface(self.grid, self.values - other.values, self.label)

    def __neg__(self) -> "ValueSurface":
        return ValueSurface(self.grid, -self.values, self.label)

    def relabel(self, label: str) -> "ValueSurface":
        return ValueSurface(self.grid, self.values, label)

    def time0(self) -> float:
        return float(self.values[:, 0].mean())

    def to_csv(self, destination) -> Path:
        destination = Path(destination)
        with destination.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"{t:.10g}" for t in self.grid.times])
            writer.writerows([[f"{v:.12g}" for v in row] for row in self.values])
        return destination


def sum_surfaces(surfaces, grid: TimeGrid, n_paths: int, label: str = "") -> ValueSurface:
    out = np.zeros((n_paths, grid.times.size))
    for s in surfaces:
        out += s.values
    return ValueSurface(grid, out, label)


def _forward_value(claim: Claim, asset: AssetSpec, rate: Curve, t, s):
    """``notional * sign * (s e^{-int (kappa + rate - repo)} - K e^{-int rate})``."""
    fwd = claim.payoff
    t = np.asarray(t, dtype=float)
    alive = t <= fwd.maturity
    tt = np.minimum(t, fwd.maturity)
    disc = np.exp(-rate.integral(tt, fwd.maturity))
    carry = np.exp(asset.growth.integral(tt, fwd.maturity))
    value = claim.notional * fwd.sign * (s * carry - fwd.strike) * disc
    return np.where(alive, value, 0.0)


def _require_forward(claim: Claim):
    if not isinstance(claim.payoff, Forward):
        raise TypeError(f"claim {claim.id} is not a forward")


def clean_value_forward_closed_form(claim: Claim, env: RateEnvironment, asset: AssetSpec,
                                    t: float, s_t):
    """Forward value discounted at the reference rate ``r``."""
    _require_forward(claim)
    return _forward_value(claim, asset, env.r, t, s_t)


def front_office_value_forward(claim: Claim, env: RateEnvironment, asset: AssetSpec,
                               t: float, s_t):
    """Forward value discounted at the claim's CSA rate."""
    _require_forward(claim)
    return _forward_value(claim, asset, claim.front_office_rate(env), t, s_t)


def _cashflows_on_grid(claim: Claim, paths: PathSet) -> dict[int, np.ndarray]:
    grid = paths.grid
    out: dict[int, np.ndarray] = {}
    for time, amount in claim.payoff.flows():
        if time > grid.horizon + 1e-12 or time <= 0:
            raise InputError(f"claim {claim.id}: cashflow at t={time} outside (0, {grid.horizon}]")
        k = max(grid.index_of(time), 1)
        if abs(grid.times[k] - time) > 1e-9:
            logger.warning("claim %s: cashflow at t=%g snapped to grid time %g",
                           claim.id, time, grid.times[k])
        flow = claim.notional * np.asarray(amount(paths.values[:, k]), dtype=float)
        out[k] = out.get(k, 0.0) + np.broadcast_to(flow, (paths.n_paths,))
    return out


def clean_value_surface(claim: Claim, env: RateEnvironment, paths: PathSet,
                        rate: Curve | None = None, reg: RegressionSpec = RegressionSpec(),
                        *, label: str = "vhat") -> ValueSurface:
    """Clean value of ``claim`` discounted at ``rate`` (default: ``env.r``).

    Forwards are filled from the closed form. Other payoffs use backward
    induction: the pathwise discounted sum of later cashflows is regressed on
    the spot at every slice.
    """
    rate = env.r if rate is None else rate
    grid = paths.grid
    if isinstance(claim.payoff, Forward):
        if claim.maturity > grid.horizon + 1e-12:
            raise InputError(f"claim {claim.id}: maturity beyond horizon {grid.horizon}")
        values = _forward_value(claim, paths.asset, rate, grid.times[None, :], paths.values)
        return ValueSurface(grid, np.ascontiguousarray(values), label)

    flows = _cashflows_on_grid(claim, paths)
    n, n_cols = paths.n_paths, grid.times.size
    values = np.zeros((n, n_cols))
    if not flows:
        return ValueSurface(grid, values, label)
    step_df = np.exp(-rate.integral(grid.times[:-1], grid.times[1:]))
    last = max(flows)
    future = np.zeros(n)
    values[:, last] = flows[last]
    for k in range(last - 1, -1, -1):
        future = step_df[k] * (flows.get(k + 1, 0.0) + future)
        values[:, k] = flows.get(k, 0.0) + conditional_expectation(paths.values[:, k], future, reg)
    return ValueSurface(grid, values, label)


def front_office_surface(claim: Claim, env: RateEnvironment, paths: PathSet,
                         reg: RegressionSpec = RegressionSpec()) -> ValueSurface:
    return clean_value_surface(claim, env, paths, claim.front_office_rate(env), reg, label="phat")


def discva_surface(claim: Claim, env: RateEnvironment, paths: PathSet,
                   reg: RegressionSpec = RegressionSpec(),
                   vhat: ValueSurface | None = None) -> ValueSurface:
    """Discounting adjustment reconciling ``r`` and CSA-rate discounting.

    ``DiscVA_t = E[int_t^T (r - rhat)(u) vhat_u e^{-int_t^u rhat} du | F_t]``
    accumulated backwards along each path with the trapezoidal rule and
    regressed at every slice.
    """
    grid = paths.grid
    rhat = claim.front_office_rate(env)
    if rhat == env.r:
        return ValueSurface.zeros(grid, paths.n_paths, "discva")
    if vhat is None:
        vhat = clean_value_surface(claim, env, paths, reg=reg)
    t = grid.times
    dt = grid.dt
    spread = (env.r - rhat).integral(t[:-1], t[1:]) / dt
    step_df = np.exp(-rhat.integral(t[:-1], t[1:]))
    flows = {} if isinstance(claim.payoff, Forward) else _cashflows_on_grid(claim, paths)

    v = vhat.values
    n = paths.n_paths
    values = np.zeros_like(v)
    acc = np.zeros(n)
    for k in range(grid.n_steps - 1, -1, -1):
        right_of_k = v[:, k] - flows.get(k, 0.0)
        acc = step_df[k] * acc + 0.5 * dt[k] * spread[k] * (right_of_k + step_df[k] * v[:, k + 1])
        values[:, k] = conditional_expectation(paths.values[:, k], acc, reg)
    return ValueSurface(grid, values, "discva")
