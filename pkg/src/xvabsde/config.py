"""Run configuration: JSON schema, embedded presets and domain conversion.

A curve field accepts either a number (flat curve) or a list of
``[time, level]`` pillars. Unknown fields are rejected everywhere.
"""

from __future__ import annotations

import copy
import json
import logging
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .claims import CashflowSchedule, Claim, EuropeanOption, Forward, LinearFlow
from .csa import CollateralSpec, InitialMarginSpec
from .errors import ConfigError, InputError
from .market_sim import AssetSpec
from .portfolio import MarginSet, NettingSet, Placement, Portfolio
from .regression import RegressionSpec
from .term_structures import Curve, RateEnvironment
from .xva_solver import SolverConfig

logger = logging.getLogger(__name__)

__all__ = ["RunConfig", "parse_config", "load_preset", "PRESETS", "dump_config"]

CurveSpec = Union[float, list[tuple[float, float]]]
MODES = ("value", "incremental", "validate-g", "exposure")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _curve(spec: CurveSpec | None, default: Curve | None = None) -> Curve | None:
    if spec is None:
        return default
    try:
        return Curve.from_pairs(spec)
    except InputError as exc:
        raise ConfigError(str(exc)) from exc


class EnvironmentModel(_Strict):
    r: CurveSpec
    rfl: Optional[CurveSpec] = None
    rfb: Optional[CurveSpec] = None
    rcl: Optional[CurveSpec] = None
    rcb: Optional[CurveSpec] = None
    ril: Optional[CurveSpec] = None
    rib: CurveSpec = 0.0
    rrepo: Optional[CurveSpec] = None
    lambdaB: CurveSpec = 0.0
    lambdaC: CurveSpec = 0.0
    RB: float = 0.4
    RC: float = 0.4

    def build(self) -> RateEnvironment:
        r = _curve(self.r)
        return RateEnvironment(
            r=r, rfl=_curve(self.rfl, r), rfb=_curve(self.rfb, r), rcl=_curve(self.rcl, r),
            rcb=_curve(self.rcb, r), ril=_curve(self.ril, r), rib=_curve(self.rib),
            rrepo=_curve(self.rrepo, r), lambdaB=_curve(self.lambdaB),
            lambdaC=_curve(self.lambdaC), RB=self.RB, RC=self.RC,
        )


class AssetModel(_Strict):
    id: str = "S"
    s0: float
    sigma: CurveSpec
    kappa: CurveSpec = 0.0
    repo: Optional[CurveSpec] = Field(None, description="defaults to the environment repo rate")

    def build(self, env: RateEnvironment) -> AssetSpec:
        return AssetSpec(s0=self.s0, sigma=_curve(self.sigma), kappa=_curve(self.kappa),
                         repo=_curve(self.repo, env.rrepo), id=self.id)


class _ClaimBase(_Strict):
    id: str
    notional: float = 1.0
    csa_rate: Optional[CurveSpec] = None
    asset: str = "S"

    def _claim(self, payoff) -> Claim:
        return Claim(self.id, payoff, self.notional, _curve(self.csa_rate), self.asset)


class ForwardModel(_ClaimBase):
    type: Literal["forward"]
    direction: Literal["long", "short"]
    strike: float
    maturity: float = Field(gt=0)

    def build(self) -> Claim:
        return self._claim(Forward(self.direction, self.strike, self.maturity))


class OptionModel(_ClaimBase):
    type: Literal["option"]
    kind: Literal["call", "put"]
    strike: float
    maturity: float = Field(gt=0)

    def build(self) -> Claim:
        return self._claim(EuropeanOption(self.kind, self.strike, self.maturity))


class FlowModel(_Strict):
    time: float = Field(gt=0)
    fixed: float = 0.0
    spot: float = 0.0


class ScheduleModel(_ClaimBase):
    type: Literal["schedule"]
    flows: list[FlowModel] = Field(min_length=1)

    def build(self) -> Claim:
        return self._claim(CashflowSchedule(tuple(
            LinearFlow(f.time, f.fixed, f.spot) for f in self.flows)))


ClaimModel = Annotated[Union[ForwardModel, OptionModel, ScheduleModel],
                       Field(discriminator="type")]


class CollateralModel(_Strict):
    kind: Literal["none", "perfect", "fraction", "threshold"] = "none"
    alpha: float = 1.0
    threshold: float = 0.0

    def build(self) -> CollateralSpec:
        return CollateralSpec(self.kind, self.alpha, self.threshold)


class InitialMarginModel(_Strict):
    kind: Literal["none", "constant", "var_quantile"] = "none"
    amount: float = 0.0
    alpha: float = 0.99
    margin_period: float = 10.0 / 252.0

    def build(self) -> InitialMarginSpec:
        return InitialMarginSpec(self.kind, self.amount, self.alpha, self.margin_period)


class MarginRatesModel(_Strict):
    rcl: Optional[CurveSpec] = None
    rcb: Optional[CurveSpec] = None
    ril: Optional[CurveSpec] = None
    rib: Optional[CurveSpec] = None

    def build(self) -> dict:
        return {k: _curve(v) for k, v in self.model_dump().items() if v is not None}


class MarginSetModel(_Strict):
    id: str
    claims: list[str]
    collateral: CollateralModel = Field(default_factory=CollateralModel)
    initial_margin: InitialMarginModel = Field(default_factory=InitialMarginModel)
    rates: MarginRatesModel = Field(default_factory=MarginRatesModel)

    def build(self) -> MarginSet:
        return MarginSet(self.id, tuple(self.claims), self.collateral.build(),
                         self.initial_margin.build(), self.rates.build())


class NettingSetModel(_Strict):
    id: str
    margin_sets: list[str]


class CandidateModel(_Strict):
    claim: ClaimModel
    margin_set: str
    netting_set: str
    collateral: CollateralModel = Field(default_factory=CollateralModel)
    initial_margin: InitialMarginModel = Field(default_factory=InitialMarginModel)
    rates: MarginRatesModel = Field(default_factory=MarginRatesModel)

    def build(self) -> tuple[Claim, Placement]:
        return self.claim.build(), Placement(self.margin_set, self.netting_set,
                                             self.collateral.build(),
                                             self.initial_margin.build(), self.rates.build())


class SolverModel(_Strict):
    max_picard: int = Field(20, ge=1)
    picard_tol: float = Field(1e-8, gt=0)
    degree: int = Field(3, ge=0)
    fit_stride: int = Field(1, ge=1)

    def build(self) -> SolverConfig:
        return SolverConfig(self.max_picard, self.picard_tol,
                            RegressionSpec(self.degree, self.fit_stride))


class SimulationModel(_Strict):
    n_paths: int = Field(100_000, ge=1)
    n_steps: int = Field(100, ge=1)
    seed: int = Field(20240101, ge=0)
    horizon: Optional[float] = Field(None, gt=0)
    workers: int = Field(1, ge=1)


class OutputModel(_Strict):
    directory: str = "xva_out"
    quantile: float = Field(0.95, gt=0, le=1)
    deflate_exposure: bool = True
    gnuplot: bool = False


class RunConfig(_Strict):
    environment: EnvironmentModel
    assets: list[AssetModel] = Field(min_length=1)
    claims: list[ClaimModel] = Field(default_factory=list)
    margin_sets: list[MarginSetModel] = Field(default_factory=list)
    netting_sets: list[NettingSetModel] = Field(default_factory=list)
    candidate: Optional[CandidateModel] = None
    solver: SolverModel = Field(default_factory=SolverModel)
    simulation: SimulationModel = Field(default_factory=SimulationModel)
    output: OutputModel = Field(default_factory=OutputModel)
    mode: Literal["value", "incremental", "validate-g", "exposure"] = "value"
    csa_discounting: bool = False

    @model_validator(mode="after")
    def _references(self):
        claim_ids = [c.id for c in self.claims]
        if len(set(claim_ids)) != len(claim_ids):
            raise ValueError(f"duplicate claim ids {claim_ids}")
        asset_ids = {a.id for a in self.assets}
        for c in self.claims + ([self.candidate.claim] if self.candidate else []):
            if c.asset not in asset_ids:
                raise ValueError(f"claim {c.id!r} references unknown asset {c.asset!r}")
        ms_ids = {m.id for m in self.margin_sets}
        for m in self.margin_sets:
            for cid in m.claims:
                if cid not in claim_ids:
                    raise ValueError(f"margin set {m.id!r} references unknown claim {cid!r}")
        for n in self.netting_sets:
            for mid in n.margin_sets:
                if mid not in ms_ids:
                    raise ValueError(f"netting set {n.id!r} references unknown margin set {mid!r}")
        if self.mode == "incremental" and self.candidate is None:
            raise ValueError("mode 'incremental' requires a 'candidate' section")
        return self

    def build(self):
        """Domain objects: ``(env, assets, portfolio, candidate, solver config)``."""
        try:
            env = self.environment.build()
            assets = [a.build(env) for a in self.assets]
            portfolio = Portfolio([c.build() for c in self.claims],
                                  [m.build() for m in self.margin_sets],
                                  [NettingSet(n.id, tuple(n.margin_sets))
                                   for n in self.netting_sets])
            candidate = self.candidate.build() if self.candidate else None
            return env, assets, portfolio, candidate, self.solver.build()
        except InputError as exc:
            raise ConfigError(str(exc)) from exc


def _format_errors(exc: ValidationError, source: str) -> str:
    lines = [f"invalid configuration {source}:"]
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"  {loc}: {err['msg']}")
    return "\n".join(lines)


def config_from_dict(data: dict, source: str = "<dict>") -> RunConfig:
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc, source)) from exc
    logger.debug("effective configuration from %s: %s", source, dump_config(cfg))
    return cfg


def parse_config(path_or_preset) -> RunConfig:
    """Load a JSON file, or an embedded preset when given its name."""
    name = str(path_or_preset)
    if name in PRESETS:
        return load_preset(name)
    path = Path(name)
    if not path.is_file():
        raise ConfigError(f"configuration {name!r} is neither a file nor a preset "
                          f"({', '.join(sorted(PRESETS))})")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: "
                          f"{exc.msg}") from exc
    return config_from_dict(data, str(path))


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, indent=2)


def load_preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}")
    return config_from_dict(copy.deepcopy(PRESETS[name]), f"preset {name}")


_SEC4_ASSET = {"id": "S", "s0": 100.0, "sigma": 0.25}

PRESETS: dict[str, dict] = {
    # Single uncollateralized long forward, front office discounting at the
    # funding rate while the desk reference rate equals the repo rate.
    "forward_discva": {
        "environment": {"r": 0.01, "rrepo": 0.01, "rfl": 0.05, "rfb": 0.05},
        "assets": [_SEC4_ASSET],
        "claims": [{"id": "fwd1", "type": "forward", "direction": "long", "strike": 80.0,
                    "maturity": 1.0, "notional": 1000.0, "csa_rate": 0.05}],
        "margin_sets": [{"id": "ms1", "claims": ["fwd1"]}],
        "netting_sets": [{"id": "ns1", "margin_sets": ["ms1"]}],
        "mode": "value",
    },
    # CVA-only setup: long forward K=100 in the book, short forward K=90 as
    # the candidate trade in the same netting set.
    "forward_incremental_cva": {
        "environment": {"r": 0.01, "lambdaC": 0.04, "RC": 0.4},
        "assets": [_SEC4_ASSET],
        "claims": [{"id": "fwd1", "type": "forward", "direction": "long", "strike": 100.0,
                    "maturity": 1.0, "notional": 1000.0}],
        "margin_sets": [{"id": "ms1", "claims": ["fwd1"]}],
        "netting_sets": [{"id": "ns1", "margin_sets": ["ms1"]}],
        "candidate": {"claim": {"id": "fwd2", "type": "forward", "direction": "short",
                                "strike": 90.0, "maturity": 1.0, "notional": 1000.0},
                      "margin_set": "ms1", "netting_set": "ns1"},
        "mode": "incremental",
    },
}
