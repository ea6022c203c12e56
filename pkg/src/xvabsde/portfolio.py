"""Margin-set / netting-set hierarchy, portfolio totals and incremental charges."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .claims import (Claim, ValueSurface, clean_value_surface, discva_surface,
                     front_office_surface, sum_surfaces)
from .csa import CollateralSpec, InitialMarginSpec, collateral_surface
from .errors import AggregationError, ConfigError
from .market_sim import AssetSpec, PathSet, simulate_market
from .regression import RegressionSpec
from .term_structures import Curve, RateEnvironment, TimeGrid
from .xva_solver import (COMPONENTS, MarginLeg, NettingState, SolverConfig, XvaReport,
                         consistency_adjusted_report, solve_predefault_xva)

logger = logging.getLogger(__name__)

__all__ = [
    "MarginSet",
    "NettingSet",
    "Portfolio",
    "Placement",
    "MarketState",
    "NettingResult",
    "PortfolioReport",
    "IncrementalRecord",
    "build_market",
    "solve_netting_set",
    "solve_portfolio",
    "portfolio_value",
    "incremental_charge",
]

RATE_OVERRIDES = ("rcl", "rcb", "ril", "rib")


@dataclass(frozen=True)
class MarginSet:
    """Claims sharing one CSA, with optional collateral and IM rate overrides."""

    id: str
    claim_ids: tuple
    collateral: CollateralSpec | None = None
    initial_margin: InitialMarginSpec | None = None
    rates: Mapping[str, Curve] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "claim_ids", tuple(self.claim_ids))
        if self.collateral is None:
            object.__setattr__(self, "collateral", CollateralSpec())
        if self.initial_margin is None:
            object.__setattr__(self, "initial_margin", InitialMarginSpec())
        if len(set(self.claim_ids)) != len(self.claim_ids):
            raise ConfigError(f"margin set {self.id}: duplicate claim ids {self.claim_ids}")
        unknown = set(self.rates) - set(RATE_OVERRIDES)
        if unknown:
            raise ConfigError(f"margin set {self.id}: unknown rate overrides {sorted(unknown)}")

    def environment(self, env: RateEnvironment) -> RateEnvironment:
        return env.with_overrides(**dict(self.rates))


@dataclass(frozen=True)
class NettingSet:
    id: str
    margin_set_ids: tuple

    def __post_init__(self):
        object.__setattr__(self, "margin_set_ids", tuple(self.margin_set_ids))


@dataclass(frozen=True)
class Placement:
    """Where a candidate claim goes.

    Unknown ids create a new margin set (with the given CSA terms) and, if
    needed, a new netting set.
    """

    margin_set_id: str
    netting_set_id: str
    collateral: CollateralSpec | None = None
    initial_margin: InitialMarginSpec | None = None
    rates: Mapping[str, Curve] = field(default_factory=dict)


class Portfolio:
    """Validated hierarchy: every claim in exactly one margin set, every
    margin set in exactly one netting set."""

    def __init__(self, claims: Sequence[Claim], margin_sets: Sequence[MarginSet],
                 netting_sets: Sequence[NettingSet]):
        self.claims = {c.id: c for c in claims}
        if len(self.claims) != len(claims):
            raise ConfigError("duplicate claim ids in portfolio")
        self.margin_sets = {m.id: m for m in margin_sets}
        if len(self.margin_sets) != len(margin_sets):
            raise ConfigError("duplicate margin set ids in portfolio")
        self.netting_sets = {n.id: n for n in netting_sets}
        if len(self.netting_sets) != len(netting_sets):
            raise ConfigError("duplicate netting set ids in portfolio")
        self._validate()

    def _validate(self):
        owner: dict[str, str] = {}
        for ms in self.margin_sets.values():
            for cid in ms.claim_ids:
                if cid not in self.claims:
                    raise ConfigError(f"margin set {ms.id} references unknown claim {cid!r}")
                if cid in owner:
                    raise ConfigError(f"claim {cid!r} is in margin sets {owner[cid]} and {ms.id}")
                owner[cid] = ms.id
        orphans = sorted(set(self.claims) - set(owner))
        if orphans:
            raise ConfigError(f"claims not assigned to any margin set: {orphans}")
        ms_owner: dict[str, str] = {}
        for ns in self.netting_sets.values():
            for mid in ns.margin_set_ids:
                if mid not in self.margin_sets:
                    raise ConfigError(f"netting set {ns.id} references unknown margin set {mid!r}")
                if mid in ms_owner:
                    raise ConfigError(
                        f"margin set {mid!r} is in netting sets {ms_owner[mid]} and {ns.id}")
                ms_owner[mid] = ns.id
        orphans = sorted(set(self.margin_sets) - set(ms_owner))
        if orphans:
            raise ConfigError(f"margin sets not assigned to any netting set: {orphans}")

    def claim_ids_in(self, netting_set_id: str) -> list[str]:
        ns = self.netting_sets[netting_set_id]
        return [cid for mid in ns.margin_set_ids for cid in self.margin_sets[mid].claim_ids]

    def with_candidate(self, claim: Claim, placement: Placement) -> "Portfolio":
        if claim.id in self.claims:
            raise ConfigError(f"candidate claim id {claim.id!r} already in portfolio")
        margin_sets = dict(self.margin_sets)
        netting_sets = dict(self.netting_sets)
        mid, nid = placement.margin_set_id, placement.netting_set_id
        if mid in margin_sets:
            owner = next(n.id for n in netting_sets.values() if mid in n.margin_set_ids)
            if owner != nid:
                raise ConfigError(f"margin set {mid!r} belongs to netting set {owner!r}, not {nid!r}")
            ms = margin_sets[mid]
            margin_sets[mid] = replace(ms, claim_ids=ms.claim_ids + (claim.id,))
        else:
            margin_sets[mid] = MarginSet(mid, (claim.id,), placement.collateral,
                                         placement.initial_margin, dict(placement.rates))
            ns = netting_sets.get(nid, NettingSet(nid, ()))
            netting_sets[nid] = NettingSet(nid, ns.margin_set_ids + (mid,))
        return Portfolio(list(self.claims.values()) + [claim], list(margin_sets.values()),
                         list(netting_sets.values()))

    def standalone(self, claim: Claim, placement: Placement) -> "Portfolio":
        """The candidate alone under the CSA terms it would trade under."""
        ms = self.margin_sets.get(placement.margin_set_id)
        if ms is not None:
            coll, im, rates = ms.collateral, ms.initial_margin, ms.rates
        else:
            coll, im, rates = placement.collateral, placement.initial_margin, placement.rates
        return Portfolio([claim], [MarginSet(placement.margin_set_id, (claim.id,), coll, im,
                                             dict(rates))],
                         [NettingSet(placement.netting_set_id, (placement.margin_set_id,))])


@dataclass
class MarketState:
    """Paths and per-claim surfaces shared by every solve of one run."""

    grid: TimeGrid
    paths: dict[str, PathSet]
    n_paths: int
    reg: RegressionSpec
    csa_discounting: bool = False
    vhat: dict[str, ValueSurface] = field(default_factory=dict)
    phat: dict[str, ValueSurface] = field(default_factory=dict)
    discva: dict[str, ValueSurface] = field(default_factory=dict)

    def add_claim(self, claim: Claim, env: RateEnvironment):
        if claim.id in self.vhat:
            return
        if claim.asset not in self.paths:
            raise ConfigError(f"claim {claim.id} references unknown asset {claim.asset!r}")
        paths = self.paths[claim.asset]
        vhat = clean_value_surface(claim, env, paths, reg=self.reg)
        self.vhat[claim.id] = vhat
        if claim.front_office_rate(env) == env.r:
            self.phat[claim.id] = vhat.relabel("phat")
        else:
            self.phat[claim.id] = front_office_surface(claim, env, paths, self.reg)
        self.discva[claim.id] = discva_surface(claim, env, paths, self.reg, vhat)

    def _sum(self, store, ids, label):
        return sum_surfaces((store[c] for c in ids), self.grid, self.n_paths, label)

    def netting_state(self, portfolio: Portfolio, netting_set_id: str,
                      env: RateEnvironment) -> NettingState:
        ns = portfolio.netting_sets[netting_set_id]
        ids = portfolio.claim_ids_in(netting_set_id)
        legs = []
        for mid in ns.margin_set_ids:
            ms = portfolio.margin_sets[mid]
            v = self._sum(self.vhat, ms.claim_ids, f"vhat[{mid}]")
            legs.append(MarginLeg(mid, v, collateral_surface(ms.collateral, v),
                                  ms.environment(env), ms.initial_margin))
        vhat = self._sum(self.vhat, ids, "vhat")
        if self.csa_discounting:
            exposure = self._sum(self.phat, ids, "phat") - self._sum(self.discva, ids, "discva")
        else:
            exposure = vhat
        assets = sorted({portfolio.claims[c].asset for c in ids}) or sorted(self.paths)[:1]
        return NettingState([self.paths[a] for a in assets], vhat, exposure, legs)


def build_market(portfolio: Portfolio, assets: Sequence[AssetSpec], env: RateEnvironment, *,
                 n_paths: int, n_steps: int, seed: int, reg: RegressionSpec = RegressionSpec(),
                 horizon: float | None = None, csa_discounting: bool = False,
                 extra_claims: Sequence[Claim] = (), workers: int = 1) -> MarketState:
    """Simulate every asset once and value every claim on those paths.

    ``extra_claims`` (e.g. an incremental candidate) are valued on the same
    paths so base and full scenarios share random numbers.
    """
    claims = list(portfolio.claims.values()) + list(extra_claims)
    if horizon is None:
        horizon = max((c.maturity for c in claims), default=1.0)
    grid = TimeGrid.uniform(horizon, n_steps)
    if not assets:
        raise ConfigError("at least one asset is required")
    paths = simulate_market(assets, grid, n_paths, seed, workers=workers)
    market = MarketState(grid, paths, n_paths, reg, csa_discounting)
    for claim in claims:
        market.add_claim(claim, env)
    return market


@dataclass
class NettingResult:
    netting_set_id: str
    claim_ids: list
    surface: ValueSurface
    report: XvaReport


def solve_netting_set(portfolio: Portfolio, netting_set_id: str, market: MarketState,
                      env: RateEnvironment, cfg: SolverConfig = SolverConfig()) -> NettingResult:
    """Aggregate a netting set, solve its pre-default BSDE and add DiscVA."""
    if netting_set_id not in portfolio.netting_sets:
        raise ConfigError(f"unknown netting set {netting_set_id!r}")
    state = market.netting_state(portfolio, netting_set_id, env)
    surface, report = solve_predefault_xva(state, env, cfg)
    ids = portfolio.claim_ids_in(netting_set_id)
    report = consistency_adjusted_report(
        report, ids,
        {c: market.discva[c].time0() for c in ids},
        {c: market.phat[c].time0() for c in ids},
        {c: market.vhat[c].time0() for c in ids},
    )
    logger.info("netting set %s: xva=%.6f (%d Picard iterations)", netting_set_id,
                report.xva, report.picard_iterations)
    return NettingResult(netting_set_id, ids, surface, report)


def solve_portfolio(portfolio: Portfolio, market: MarketState, env: RateEnvironment,
                    cfg: SolverConfig = SolverConfig()) -> dict[str, NettingResult]:
    return {nid: solve_netting_set(portfolio, nid, market, env, cfg)
            for nid in sorted(portfolio.netting_sets)}


@dataclass
class PortfolioReport:
    netting_sets: dict
    totals: XvaReport


def portfolio_value(results: Mapping[str, NettingResult]) -> PortfolioReport:
    """Sum netting-set reports into portfolio totals.

    Standard errors of the totals come from the summed pathwise samples,
    which is valid because every netting set is solved on the same paths.
    """
    results = {k: results[k] for k in sorted(results)}
    totals = XvaReport()
    grids = {id(r.surface.grid): r.surface.grid for r in results.values()}
    first = next(iter(grids.values()), None)
    if any(g != first for g in grids.values()):
        raise AggregationError("netting sets were solved on different time grids")
    if len({r.surface.n_paths for r in results.values()}) > 1:
        raise AggregationError("netting sets were solved on different path counts")
    for name in XvaReport.FIELDS:
        setattr(totals, name, float(sum(getattr(r.report, name) for r in results.values())))
    samples: dict[str, np.ndarray] = {}
    for r in results.values():
        for key, x in r.report.samples.items():
            samples[key] = samples[key] + x if key in samples else x.copy()
    totals.samples = samples
    totals.se = {k: _se(x) for k, x in samples.items() if k != "xva_components"}
    if "xva_components" in samples:
        totals.se["component_sum"] = _se(samples["xva_components"])
    totals.picard_iterations = max((r.report.picard_iterations for r in results.values()),
                                   default=0)
    totals.converged = all(r.report.converged for r in results.values())
    worst = max(results.values(), key=lambda r: (r.report.picard_distances or [0.0])[-1],
                default=None)
    totals.picard_distances = list(worst.report.picard_distances) if worst else []
    totals.discretization_bound = float(sum(r.report.discretization_bound
                                            for r in results.values()))
    totals.warnings = [w for r in results.values() for w in r.report.warnings]
    return PortfolioReport({k: r.report for k, r in results.items()}, totals)


def _se(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0


@dataclass
class IncrementalRecord:
    """Incremental charge of adding one claim.

    ``delta`` and ``nl`` are keyed by ``xva`` and by component name; ``se``
    holds the matching standard errors from pathwise differences.
    """

    delta_value: float
    delta: dict
    standalone: dict
    nl: dict
    se: dict
    base: PortfolioReport
    full: PortfolioReport
    alone: PortfolioReport

    @property
    def delta_xva(self) -> float:
        return self.delta["xva"]

    def to_dict(self) -> dict:
        return {
            "delta_value": float(self.delta_value),
            "delta": {k: float(v) for k, v in sorted(self.delta.items())},
            "standalone": {k: float(v) for k, v in sorted(self.standalone.items())},
            "nl": {k: float(v) for k, v in sorted(self.nl.items())},
            "se": {k: float(v) for k, v in sorted(self.se.items())},
            "base_totals": self.base.totals.to_dict(),
            "full_totals": self.full.totals.to_dict(),
        }


def incremental_charge(portfolio: Portfolio, candidate: Claim, placement: Placement,
                       market: MarketState, env: RateEnvironment,
                       cfg: SolverConfig = SolverConfig()) -> IncrementalRecord:
    """Base, full and standalone solves on one market state.

    ``delta = XVA(full) - XVA(base)`` and ``nl = delta - XVA(standalone)``,
    for the total adjustment and for each component.
    """
    full_pf = portfolio.with_candidate(candidate, placement)
    alone_pf = portfolio.standalone(candidate, placement)
    market.add_claim(candidate, env)
    base = portfolio_value(solve_portfolio(portfolio, market, env, cfg))
    full = portfolio_value(solve_portfolio(full_pf, market, env, cfg))
    alone = portfolio_value(solve_portfolio(alone_pf, market, env, cfg))

    n = market.n_paths
    zero = np.zeros(n)
    delta, standalone, nl, se = {}, {}, {}, {}
    for key in ("xva",) + COMPONENTS:
        b = base.totals.samples.get(key, zero)
        f = full.totals.samples.get(key, zero)
        a = alone.totals.samples.get(key, zero)
        delta[key] = getattr(full.totals, key) - getattr(base.totals, key)
        standalone[key] = getattr(alone.totals, key)
        nl[key] = delta[key] - standalone[key]
        se[f"delta_{key}"] = _se(f - b)
        se[f"nl_{key}"] = _se(f - b - a)
        se[f"standalone_{key}"] = _se(a)
    delta_value = (market.phat[candidate.id].time0() - delta["xva"]
                   - market.discva[candidate.id].time0())
    return IncrementalRecord(delta_value, delta, standalone, nl, se, base, full, alone)
