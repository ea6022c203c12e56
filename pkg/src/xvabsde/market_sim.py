"""Risk-factor paths under the pricing measure and default-time sampling."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import streams
from .errors import InputError, SimulationError
from .term_structures import Curve, RateEnvironment, TimeGrid

logger = logging.getLogger(__name__)

__all__ = [
    "AssetSpec",
    "PathSet",
    "DefaultSample",
    "simulate_paths",
    "simulate_market",
    "survival_weights",
    "sample_default_times",
    "dump_paths_csv",
]

DEFAULT_BLOCK = 16384


@dataclass(frozen=True)
class AssetSpec:
    """Lognormal asset ``dS = S((repo - kappa) dt + sigma dW)``."""

    s0: float
    sigma: Curve
    kappa: Curve = field(default_factory=lambda: Curve.flat(0.0))
    repo: Curve = field(default_factory=lambda: Curve.flat(0.0))
    id: str = "S"

    def __post_init__(self):
        if not (np.isfinite(self.s0) and self.s0 > 0):
            raise InputError(f"asset {self.id}: s0 must be positive, got {self.s0}")
        if self.sigma.min() < 0:
            raise InputError(f"asset {self.id}: sigma must be non-negative")

    @property
    def growth(self) -> Curve:
        """Risk-neutral drift ``repo - kappa``."""
        return self.repo - self.kappa


@dataclass(frozen=True, eq=False)
class PathSet:
    """Simulated asset levels, one row per path, one column per grid time."""

    grid: TimeGrid
    values: np.ndarray
    seed: int
    asset: AssetSpec

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]


def _step_coefficients(asset: AssetSpec, grid: TimeGrid):
    t = grid.times
    var = asset.sigma.squared().integral(t[:-1], t[1:])
    drift = asset.growth.integral(t[:-1], t[1:]) - 0.5 * var
    return drift, np.sqrt(var)


def _simulate_block(asset, drift, vol, seed, stream, p0, p1):
    n_steps = drift.size
    z = streams.normals(seed, stream, p0 * n_steps, (p1 - p0) * n_steps)
    z = z.reshape(p1 - p0, n_steps)
    log_s = np.empty((p1 - p0, n_steps + 1))
    log_s[:, 0] = 0.0
    np.cumsum(drift + vol * z, axis=1, out=log_s[:, 1:])
    with np.errstate(over="ignore", invalid="ignore"):
        out = asset.s0 * np.exp(log_s)
    out[:, 0] = asset.s0
    bad = ~(np.isfinite(out) & (out > 0))
    if bad.any():
        p, k = np.argwhere(bad)[0]
        raise SimulationError(
            f"asset {asset.id}: non-finite or non-positive level at path {p0 + p}, step {k}"
        )
    return out


def simulate_paths(
    asset: AssetSpec,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    *,
    stream_index: int = 0,
    workers: int = 1,
    block_size: int = DEFAULT_BLOCK,
) -> PathSet:
    """Exact lognormal stepping with counter-addressed normals.

    The normal for path ``p`` and step ``k`` is draw ``p * N + k`` of the
    asset's stream, so the result does not depend on ``workers`` or
    ``block_size``.
    """
    if n_paths < 1:
        raise InputError(f"n_paths must be >= 1, got {n_paths}")
    drift, vol = _step_coefficients(asset, grid)
    stream = streams.ASSET_STREAM_BASE + stream_index
    bounds = [(p, min(p + block_size, n_paths)) for p in range(0, n_paths, block_size)]
    values = np.empty((n_paths, grid.n_steps + 1))

    def fill(b):
        p0, p1 = b
        values[p0:p1] = _simulate_block(asset, drift, vol, seed, stream, p0, p1)

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, bounds))
    else:
        for b in bounds:
            fill(b)
    return PathSet(grid=grid, values=values, seed=seed, asset=asset)


def simulate_market(
    assets: Sequence[AssetSpec], grid: TimeGrid, n_paths: int, seed: int, *, workers: int = 1
) -> dict[str, PathSet]:
    """Independent paths for each asset, keyed by asset id."""
    ids = [a.id for a in assets]
    if len(set(ids)) != len(ids):
        raise InputError(f"duplicate asset ids: {ids}")
    return {
        a.id: simulate_paths(a, grid, n_paths, seed, stream_index=i, workers=workers)
        for i, a in enumerate(assets)
    }


def survival_weights(env: RateEnvironment, grid: TimeGrid) -> np.ndarray:
    """``exp(-int_0^t (lambdaB + lambdaC))`` at each grid time."""
    hazard = env.lambdaB + env.lambdaC
    return np.exp(-hazard.cumulative(grid.times))


NO_DEFAULT, BANK_FIRST, COUNTERPARTY_FIRST = 0, 1, 2


@dataclass(frozen=True, eq=False)
class DefaultSample:
    """Per-path default times; ``inf`` means no default before ``horizon``."""

    tauB: np.ndarray
    tauC: np.ndarray
    horizon: float

    @property
    def tau(self) -> np.ndarray:
        return np.minimum(np.minimum(self.tauB, self.tauC), self.horizon)

    @property
    def first(self) -> np.ndarray:
        """``BANK_FIRST``, ``COUNTERPARTY_FIRST`` or ``NO_DEFAULT`` per path."""
        out = np.full(self.tauB.shape, NO_DEFAULT, dtype=np.int8)
        hit = np.minimum(self.tauB, self.tauC) <= self.horizon
        out[hit & (self.tauB < self.tauC)] = BANK_FIRST
        out[hit & (self.tauC < self.tauB)] = COUNTERPARTY_FIRST
        return out


def sample_default_times(
    env: RateEnvironment, n_paths: int, seed: int, horizon: float
) -> DefaultSample:
    """Inverse-transform sampling ``tau = inf{t : int_0^t lambda >= E}``.

    The exponential thresholds come from streams disjoint from every asset
    driver. Times beyond ``horizon`` are reported as ``inf``.
    """
    out = {}
    for name, stream in (("tauB", streams.DEFAULT_STREAM_B), ("tauC", streams.DEFAULT_STREAM_C)):
        e = streams.exponentials(seed, stream, 0, n_paths)
        tau = np.asarray(getattr(env, "lambda" + name[-1]).inverse_cumulative(e), dtype=float)
        out[name] = np.where(tau <= horizon, tau, np.inf)
    return DefaultSample(horizon=float(horizon), **out)


def dump_paths_csv(paths: PathSet, destination) -> Path:
    """One row per path, one column per grid time."""
    destination = Path(destination)
    try:
        with destination.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"{t:.10g}" for t in paths.grid.times])
            for row in paths.values:
                writer.writerow([f"{v:.12g}" for v in row])
    except OSError as exc:
        raise OSError(f"cannot write path dump to {destination}: {exc}") from exc
    return destination
