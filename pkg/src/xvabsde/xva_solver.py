"""Pre-default xVA BSDE solver.

The pre-default adjustment solves, on the reference filtration,

    -dX_t = [g(t, X_t) - r~_t X_t] dt - Z dW,    X_T = 0,

with ``r~ = r + lambdaB + lambdaC`` and

    g = funding + colva + mva - lambdaC theta_C + lambdaB theta_B,

where the funding term depends on ``X`` through ``V = vhat - X`` (and the
initial margin may depend on it too). The solver runs a Picard loop over
whole surfaces: given the previous iterate, ``g`` is evaluated on every
path, the deflated integral is accumulated backwards with the trapezoidal
rule and regressed slice by slice.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .claims import ValueSurface
from .csa import InitialMarginSpec, initial_margin_surfaces, negative_part, positive_part
from .errors import ConfigError, NumericalError
from .market_sim import (BANK_FIRST, COUNTERPARTY_FIRST, PathSet, sample_default_times)
from .regression import RegressionSpec, conditional_expectation
from .term_structures import RateEnvironment, effective_rate_tilde

logger = logging.getLogger(__name__)

__all__ = [
    "SolverConfig",
    "MarginLeg",
    "NettingState",
    "XvaReport",
    "full_driver",
    "predefault_driver",
    "solve_predefault_xva",
    "decompose_xva",
    "consistency_adjusted_report",
    "g_level_estimate",
    "validate_g_level",
]

COMPONENTS = ("cva", "dva", "fva", "colva", "mva")


@dataclass(frozen=True)
class SolverConfig:
    max_picard: int = 20
    picard_tol: float = 1e-8
    regression: RegressionSpec = field(default_factory=RegressionSpec)

    def __post_init__(self):
        if self.max_picard < 1:
            raise ConfigError(f"max_picard must be >= 1, got {self.max_picard}")
        if not self.picard_tol > 0:
            raise ConfigError(f"picard_tol must be positive, got {self.picard_tol}")


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------


def funding_integrand(t, v, collateral, itc, env: RateEnvironment):
    """``(rfl - r)(V - C - I^TC)^+ - (rfb - r)(V - C - I^TC)^-``."""
    r = env.r(t)
    u = v - collateral - itc
    return (env.rfl(t) - r) * positive_part(u) - (env.rfb(t) - r) * negative_part(u)


def colva_integrand(t, collateral, env: RateEnvironment):
    r = env.r(t)
    return (env.rcl(t) - r) * positive_part(collateral) - (env.rcb(t) - r) * negative_part(collateral)


def mva_integrand(t, itc, ifc, env: RateEnvironment):
    return (env.ril(t) - env.r(t)) * itc - env.rib(t) * ifc


def full_driver(t, v, collateral, itc, ifc, env: RateEnvironment):
    """Driver of the full portfolio BSDE (spreads over ``r``, sign included)."""
    return -(funding_integrand(t, v, collateral, itc, env)
             + colva_integrand(t, collateral, env)
             + mva_integrand(t, itc, ifc, env))


def predefault_driver(t, vhat, xva, collateral, itc, ifc, theta_b, theta_c,
                      env: RateEnvironment):
    r_tilde = env.r(t) + env.lambdaC(t) + env.lambdaB(t)
    return (-full_driver(t, vhat - xva, collateral, itc, ifc, env)
            - r_tilde * xva - env.lambdaC(t) * theta_c + env.lambdaB(t) * theta_b)


# ---------------------------------------------------------------------------
# Solver state
# ---------------------------------------------------------------------------


@dataclass
class MarginLeg:
    """One margin set inside a netting-set solve.

    ``env`` carries the margin set's collateral and initial-margin rates.
    ``itc``/``ifc`` are filled by the solver when the IM rule depends on the
    adjustment itself.
    """

    id: str
    vhat: ValueSurface
    collateral: ValueSurface
    env: RateEnvironment
    im_spec: InitialMarginSpec = field(default_factory=InitialMarginSpec)
    itc: ValueSurface | None = None
    ifc: ValueSurface | None = None


@dataclass
class NettingState:
    """Aggregated inputs of one netting-set solve.

    ``vhat`` drives funding (``V = vhat - X``); ``exposure`` drives the
    default losses (``vhat`` itself, or ``phat - discva`` under CSA
    discounting).
    """

    paths: Sequence[PathSet]
    vhat: ValueSurface
    exposure: ValueSurface
    legs: list[MarginLeg]

    @property
    def grid(self):
        return self.vhat.grid

    @property
    def n_paths(self) -> int:
        return self.vhat.n_paths

    def regressors(self, k: int) -> np.ndarray:
        return np.column_stack([p.values[:, k] for p in self.paths])

    def totals(self):
        coll = sum(leg.collateral.values for leg in self.legs)
        itc = sum(leg.itc.values for leg in self.legs)
        ifc = sum(leg.ifc.values for leg in self.legs)
        return coll, itc, ifc


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass
class XvaReport:
    """Time-0 breakdown with standard errors and solver diagnostics."""

    cva: float = 0.0
    dva: float = 0.0
    fva: float = 0.0
    colva: float = 0.0
    mva: float = 0.0
    discva: float = 0.0
    xva: float = 0.0
    xva_hat: float = 0.0
    clean_value: float = 0.0
    front_office_value: float = 0.0
    full_value: float = 0.0
    se: dict = field(default_factory=dict)
    picard_iterations: int = 0
    converged: bool = True
    picard_distances: list = field(default_factory=list)
    discretization_bound: float = 0.0
    warnings: list = field(default_factory=list)
    samples: dict = field(default_factory=dict, repr=False)

    FIELDS = ("cva", "dva", "fva", "colva", "mva", "discva", "xva", "xva_hat",
              "clean_value", "front_office_value", "full_value")

    @property
    def component_sum(self) -> float:
        return -self.cva + self.dva + self.fva + self.colva + self.mva

    def to_dict(self) -> dict:
        out = {k: float(getattr(self, k)) for k in self.FIELDS}
        out["se"] = {k: float(v) for k, v in sorted(self.se.items())}
        out["picard_iterations"] = int(self.picard_iterations)
        out["converged"] = bool(self.converged)
        out["picard_distances"] = [float(d) for d in self.picard_distances]
        out["discretization_bound"] = float(self.discretization_bound)
        out["warnings"] = list(self.warnings)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def csv_header(self) -> str:
        return ",".join(self.FIELDS + ("picard_iterations", "converged"))

    def csv_row(self) -> str:
        vals = [f"{getattr(self, k):.10f}" for k in self.FIELDS]
        return ",".join(vals + [str(self.picard_iterations), str(int(self.converged))])


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------


def _refresh_initial_margin(state: NettingState, xva: ValueSurface, reg: RegressionSpec,
                            force: bool = False):
    for leg in state.legs:
        if force or leg.itc is None or leg.im_spec.depends_on_xva:
            leg.itc, leg.ifc = initial_margin_surfaces(
                leg.im_spec, leg.vhat - xva, _primary_paths(state), reg)


def _primary_paths(state: NettingState) -> PathSet:
    return state.paths[0]


def _integrands(state: NettingState, env: RateEnvironment, xva: np.ndarray) -> dict:
    """Per-component integrands on every path and grid time."""
    t = state.grid.times
    coll, itc, ifc = state.totals()
    residual = state.exposure.values - coll
    out = {
        "cva": (1 - env.RC) * env.lambdaC(t) * negative_part(residual + ifc),
        "dva": (1 - env.RB) * env.lambdaB(t) * positive_part(residual - itc),
        "fva": funding_integrand(t, state.vhat.values - xva, coll, itc, env),
        "colva": sum(colva_integrand(t, leg.collateral.values, leg.env) for leg in state.legs),
        "mva": sum(mva_integrand(t, leg.itc.values, leg.ifc.values, leg.env)
                   for leg in state.legs),
    }
    return out


def _combine(parts: dict) -> np.ndarray:
    return -parts["cva"] + parts["dva"] + parts["fva"] + parts["colva"] + parts["mva"]


def _deflators(state: NettingState, env: RateEnvironment):
    t = state.grid.times
    r_tilde = effective_rate_tilde(env)
    return np.exp(-r_tilde.cumulative(t)), np.exp(-r_tilde.integral(t[:-1], t[1:]))


def _backward(state: NettingState, g: np.ndarray, step_df: np.ndarray, reg: RegressionSpec):
    """Trapezoidal backward accumulation with slice regressions."""
    grid = state.grid
    dt = grid.dt
    out = np.zeros_like(g)
    acc = np.zeros(g.shape[0])
    for k in range(grid.n_steps - 1, -1, -1):
        if not np.all(np.isfinite(g[:, k])):
            raise NumericalError(f"non-finite driver at slice {k} (t={grid.times[k]:.6g})",
                                 {"slice": k})
        acc = step_df[k] * acc + 0.5 * dt[k] * (g[:, k] + step_df[k] * g[:, k + 1])
        out[:, k] = conditional_expectation(state.regressors(k), acc, reg)
    return out, acc


def _pathwise_integral(values: np.ndarray, deflator: np.ndarray, weights: np.ndarray):
    return values @ (deflator * weights)


def _discretization_bound(g: np.ndarray, deflator: np.ndarray, times: np.ndarray) -> float:
    """Richardson estimate of the trapezoidal error at time 0."""
    if times.size < 3:
        return 0.0
    idx = np.arange(0, times.size, 2)
    if idx[-1] != times.size - 1:
        idx = np.append(idx, times.size - 1)
    fine = float(np.mean(_pathwise_integral(g, deflator, _trapezoid_weights(times))))
    coarse = float(np.mean(_pathwise_integral(g[:, idx], deflator[idx],
                                              _trapezoid_weights(times[idx]))))
    return abs(fine - coarse) / 3.0


def _trapezoid_weights(times: np.ndarray) -> np.ndarray:
    dt = np.diff(times)
    w = np.zeros(times.size)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def _se(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0


def solve_predefault_xva(state: NettingState, env: RateEnvironment,
                         cfg: SolverConfig = SolverConfig(),
                         initial: ValueSurface | None = None
                         ) -> tuple[ValueSurface, XvaReport]:
    """Picard iteration around a regression-based backward induction.

    Stops when the sup-norm change between successive surfaces drops below
    ``picard_tol`` times the clean-value scale. A run that hits
    ``max_picard`` returns the last iterate with ``converged=False``.
    """
    grid = state.grid
    reg = cfg.regression
    deflator, step_df = _deflators(state, env)
    scale = max(1.0, float(np.max(np.abs(state.vhat.values))))
    tol = cfg.picard_tol * scale

    xva = initial.values.copy() if initial is not None else np.zeros(state.vhat.values.shape)
    _refresh_initial_margin(state, ValueSurface(grid, xva), reg, force=True)
    distances: list[float] = []
    converged = False
    acc0 = None
    for it in range(1, cfg.max_picard + 1):
        if it > 1:
            _refresh_initial_margin(state, ValueSurface(grid, xva), reg)
        g = _combine(_integrands(state, env, xva))
        new, acc0 = _backward(state, g, step_df, reg)
        dist = float(np.max(np.abs(new - xva)))
        distances.append(dist)
        xva = new
        logger.debug("picard iteration %d: sup-norm change %.3e", it, dist)
        if dist <= tol:
            converged = True
            break

    surface = ValueSurface(grid, xva, "xva")
    report = decompose_xva(surface, state, env)
    report.xva = float(np.mean(acc0))
    report.se["xva"] = _se(acc0)
    report.samples["xva"] = acc0
    report.picard_iterations = it
    report.converged = converged
    report.picard_distances = distances[-2:] if not converged else distances
    report.discretization_bound = _discretization_bound(g, deflator, grid.times)
    report.xva_hat = report.xva
    report.clean_value = state.vhat.time0()
    report.front_office_value = report.clean_value
    report.full_value = report.clean_value - report.xva
    if not converged:
        msg = (f"Picard iteration did not converge in {cfg.max_picard} iterations; "
               f"last distances {distances[-2:]}")
        logger.warning(msg)
        report.warnings.append(msg)
    return surface, report


def decompose_xva(xva: ValueSurface, state: NettingState, env: RateEnvironment) -> XvaReport:
    """Time-0 components as deflated, path-averaged trapezoidal integrals."""
    deflator, _ = _deflators(state, env)
    weights = state.grid.trapezoid_weights()
    parts = _integrands(state, env, xva.values)
    report = XvaReport()
    samples = {}
    for name in COMPONENTS:
        x = _pathwise_integral(parts[name], deflator, weights)
        samples[name] = x
        setattr(report, name, float(np.mean(x)))
        report.se[name] = _se(x)
    samples["xva_components"] = _combine(samples)
    report.se["component_sum"] = _se(samples["xva_components"])
    report.samples = samples
    return report


def consistency_adjusted_report(report: XvaReport, claim_ids: Sequence[str],
                                discva: dict, phat: dict, vhat: dict) -> XvaReport:
    """Add the discounting adjustment: ``xva_hat = xva + sum DiscVA``.

    ``discva``, ``phat`` and ``vhat`` map claim ids to time-0 values.
    """
    missing = [c for c in claim_ids if c not in discva or c not in phat or c not in vhat]
    if missing:
        raise ConfigError(f"missing DiscVA / front-office value for claims {missing}")
    report.discva = float(sum(discva[c] for c in claim_ids))
    report.front_office_value = float(sum(phat[c] for c in claim_ids))
    report.clean_value = float(sum(vhat[c] for c in claim_ids))
    report.xva_hat = report.xva + report.discva
    report.full_value = report.front_office_value - report.xva_hat
    return report


# ---------------------------------------------------------------------------
# G-level cross-check
# ---------------------------------------------------------------------------


@dataclass
class GLevelComparison:
    g_estimate: float
    g_se: float
    f_estimate: float
    f_se: float
    diff_se: float
    n_defaults: int

    @property
    def z_score(self) -> float:
        if self.diff_se == 0:
            return 0.0 if self.g_estimate == self.f_estimate else np.inf
        return (self.g_estimate - self.f_estimate) / self.diff_se

    def agrees(self, n_se: float = 3.0) -> bool:
        return abs(self.g_estimate - self.f_estimate) <= n_se * self.diff_se + 1e-12 * (
            1 + abs(self.f_estimate))


def _interpolate(values: np.ndarray, rows: np.ndarray, k: np.ndarray, w: np.ndarray):
    return (1 - w) * values[rows, k - 1] + w * values[rows, k]


def g_level_estimate(state: NettingState, env: RateEnvironment, report: XvaReport,
                     seed: int) -> GLevelComparison:
    """Explicit default-time simulation of the close-out loss.

    Averages ``e^{-int_0^tau r} (exposure_tau - theta_tau)`` over paths
    whose first default precedes the horizon, and compares it with the
    reference-filtration ``-CVA + DVA`` from ``report``. Values at ``tau``
    are linearly interpolated between the bracketing grid times.
    """
    grid = state.grid
    n = state.n_paths
    sample = sample_default_times(env, n, seed, grid.horizon)
    first = sample.first
    hit = np.flatnonzero(first != 0)
    tau = sample.tau[hit]
    k = np.clip(np.searchsorted(grid.times, tau, side="left"), 1, grid.n_steps)
    w = (tau - grid.times[k - 1]) / (grid.times[k] - grid.times[k - 1])
    coll, itc, ifc = state.totals()
    expo = _interpolate(state.exposure.values, hit, k, w)
    c = _interpolate(coll, hit, k, w)
    residual = expo - c
    loss = np.zeros(hit.size)
    by_c = first[hit] == COUNTERPARTY_FIRST
    by_b = first[hit] == BANK_FIRST
    loss[by_c] = -(1 - env.RC) * negative_part(residual[by_c] + _interpolate(ifc, hit, k, w)[by_c])
    loss[by_b] = (1 - env.RB) * positive_part(residual[by_b] - _interpolate(itc, hit, k, w)[by_b])
    pathwise = np.zeros(n)
    pathwise[hit] = np.exp(-env.r.cumulative(tau)) * loss
    f_path = report.samples["dva"] - report.samples["cva"]
    return GLevelComparison(
        g_estimate=float(pathwise.mean()), g_se=_se(pathwise),
        f_estimate=float(f_path.mean()), f_se=_se(f_path),
        diff_se=_se(pathwise - f_path), n_defaults=int(hit.size),
    )


def validate_g_level(claims, env: RateEnvironment, assets, n_paths: int, seed: int,
                     cfg: SolverConfig = SolverConfig(), *, n_steps: int = 100,
                     collateral=None, initial_margin=None) -> GLevelComparison:
    """Solve a single-netting-set portfolio on the reference filtration and
    re-estimate ``-CVA + DVA`` with simulated default times.

    Intended for setups without funding spreads, where the G-level
    quantity is a plain expectation.
    """
    from .portfolio import Portfolio, MarginSet, NettingSet, build_market

    claims = list(claims)
    ms = MarginSet("ms", tuple(c.id for c in claims),
                   collateral=collateral, initial_margin=initial_margin)
    portfolio = Portfolio(claims, [ms], [NettingSet("ns", ("ms",))])
    market = build_market(portfolio, assets, env, n_paths=n_paths, n_steps=n_steps, seed=seed,
                          reg=cfg.regression)
    state = market.netting_state(portfolio, "ns", env)
    _, report = solve_predefault_xva(state, env, cfg)
    return g_level_estimate(state, env, report, seed)
