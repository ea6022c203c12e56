"""Credit support annex: variation margin, initial margin and close-out."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .claims import ValueSurface
from .errors import InputError
from .market_sim import PathSet
from .regression import RegressionSpec, conditional_expectation

logger = logging.getLogger(__name__)

__all__ = [
    "CollateralSpec",
    "InitialMarginSpec",
    "CloseOutInputs",
    "collateral_surface",
    "initial_margin_surfaces",
    "conditional_var_quantile",
    "close_out",
    "theta_exposures",
    "positive_part",
    "negative_part",
]

DEFAULT_MARGIN_PERIOD = 10.0 / 252.0


def positive_part(x):
    return np.maximum(x, 0.0)


def negative_part(x):
    """``x^- = max(-x, 0)``."""
    return np.maximum(-x, 0.0)


@dataclass(frozen=True)
class CollateralSpec:
    """Variation margin rule ``C = f(V)``; every rule is 1-Lipschitz."""

    kind: str = "none"
    alpha: float = 1.0
    threshold: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "perfect", "fraction", "threshold"):
            raise InputError(f"unknown collateral kind {self.kind!r}")
        if self.kind == "fraction" and not 0.0 <= self.alpha <= 1.0:
            raise InputError(f"collateral fraction must be in [0, 1], got {self.alpha}")
        if self.kind == "threshold" and self.threshold < 0:
            raise InputError(f"collateral threshold must be >= 0, got {self.threshold}")

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "none":
            return np.zeros_like(v)
        if self.kind == "perfect":
            return v.copy()
        if self.kind == "fraction":
            return self.alpha * v
        return np.sign(v) * np.maximum(np.abs(v) - self.threshold, 0.0)


@dataclass(frozen=True)
class InitialMarginSpec:
    """Initial margin rule, applied symmetrically to posted and received IM.

    ``var_quantile`` sizes both margins as the conditional ``alpha``-quantile
    of the absolute change in net value over ``margin_period`` years.
    """

    kind: str = "none"
    amount: float = 0.0
    alpha: float = 0.99
    margin_period: float = DEFAULT_MARGIN_PERIOD

    def __post_init__(self):
        if self.kind not in ("none", "constant", "var_quantile"):
            raise InputError(f"unknown initial margin kind {self.kind!r}")
        if self.kind == "constant" and self.amount < 0:
            raise InputError(f"constant initial margin must be >= 0, got {self.amount}")
        if self.kind == "var_quantile":
            if not 0.0 < self.alpha < 1.0:
                raise InputError(f"IM quantile level must be in (0, 1), got {self.alpha}")
            if self.margin_period <= 0:
                raise InputError("margin period must be positive")

    @property
    def depends_on_xva(self) -> bool:
        return self.kind == "var_quantile"


def collateral_surface(spec: CollateralSpec, vhat: ValueSurface) -> ValueSurface:
    return ValueSurface(vhat.grid, spec(vhat.values), "collateral")


def conditional_var_quantile(increment: np.ndarray, regressor: np.ndarray, alpha: float,
                             reg: RegressionSpec) -> np.ndarray:
    """Per-path ``alpha``-quantile of ``|increment|`` given the regressor.

    Location-free scale model: the conditional RMS ``s(x)`` of the increment
    is regressed on the basis, and the lower order statistic of
    ``|increment| / s`` (index ``floor((n - 1) * alpha)``) is rescaled path
    by path. With an uninformative regressor this is exactly the
    sorted-sample quantile of ``|increment|``.
    """
    d = np.abs(increment)
    n = d.size
    rank = int(np.floor((n - 1) * alpha))
    sq = conditional_expectation(regressor, d * d, reg)
    scale = np.sqrt(np.maximum(sq, 0.0))
    if np.ptp(scale) <= 1e-12 * max(scale.max(), 1e-300):
        return np.full(n, np.partition(d, rank)[rank])
    floor = 1e-12 * scale.max()
    safe = np.maximum(scale, floor)
    ratio = np.partition(d / safe, rank)[rank]
    return np.where(scale > floor, ratio * scale, 0.0)


def initial_margin_surfaces(spec: InitialMarginSpec, net: ValueSurface, paths: PathSet,
                            reg: RegressionSpec = RegressionSpec()
                            ) -> tuple[ValueSurface, ValueSurface]:
    """Posted (``I^TC``) and received (``I^FC``) initial margin surfaces.

    ``net`` is the net value ``vhat - xva`` whose changes over the margin
    period drive the margin. Both margins are equal under this engine's
    symmetric rule.
    """
    grid = net.grid
    if spec.kind == "none":
        z = ValueSurface.zeros(grid, net.n_paths, "im")
        return z.relabel("itc"), z.relabel("ifc")
    if spec.kind == "constant":
        vals = np.full(net.values.shape, float(spec.amount))
        return ValueSurface(grid, vals, "itc"), ValueSurface(grid, vals.copy(), "ifc")

    t = grid.times
    im = np.zeros(net.values.shape)
    truncated = False
    for k in range(grid.n_steps):
        target = t[k] + spec.margin_period
        if target > t[-1] + 1e-12:
            truncated = True
            target = t[-1]
        j = int(np.searchsorted(t, target - 1e-12, side="left"))
        j = min(max(j, k + 1), grid.n_steps)
        inc = net.values[:, j] - net.values[:, k]
        im[:, k] = conditional_var_quantile(inc, paths.values[:, k], spec.alpha, reg)
    if truncated:
        logger.warning("margin period %.4g extends past the horizon; truncated at T=%g",
                       spec.margin_period, t[-1])
    return ValueSurface(grid, im, "itc"), ValueSurface(grid, im.copy(), "ifc")


@dataclass(frozen=True)
class CloseOutInputs:
    """State at the first default, left limits for the margins."""

    value: float
    collateral: float = 0.0
    im_posted: float = 0.0
    im_received: float = 0.0
    first: str | None = None
    RB: float = 0.4
    RC: float = 0.4

    def __post_init__(self):
        if self.first not in (None, "B", "C"):
            raise InputError(f"first defaulter must be None, 'B' or 'C', got {self.first!r}")
        for name in ("value", "collateral", "im_posted", "im_received"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InputError(f"close-out input {name} is not finite")


def close_out(inputs: CloseOutInputs):
    """Settlement value at the first default, from the bank's perspective."""
    v, c = inputs.value, inputs.collateral
    out = v
    if inputs.first == "C":
        out = v + (1 - inputs.RC) * negative_part(v - c + inputs.im_received)
    elif inputs.first == "B":
        out = v - (1 - inputs.RB) * positive_part(v - c - inputs.im_posted)
    return out if np.ndim(out) else float(out)


def theta_exposures(vhat: ValueSurface, collateral: ValueSurface, itc: ValueSurface,
                    ifc: ValueSurface, RB: float, RC: float
                    ) -> tuple[ValueSurface, ValueSurface]:
    """Loss-given-default exposures ``(theta_B, theta_C)``.

    ``theta_C = (1 - RC)(V - C + I^FC)^-`` and
    ``theta_B = (1 - RB)(V - C - I^TC)^+``.
    """
    residual = vhat.values - collateral.values
    theta_c = (1 - RC) * negative_part(residual + ifc.values)
    theta_b = (1 - RB) * positive_part(residual - itc.values)
    return ValueSurface(vhat.grid, theta_b, "theta_b"), ValueSurface(vhat.grid, theta_c, "theta_c")
