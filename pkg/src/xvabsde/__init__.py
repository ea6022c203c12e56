"""Monte Carlo xVA engine: pre-default BSDE solver with netting and margining."""

from .claims import Claim, EuropeanOption, Forward, ValueSurface
from .csa import CollateralSpec, InitialMarginSpec
from .errors import (AggregationError, ConfigError, InputError, NumericalError,
                     SimulationError, XvaError)
from .market_sim import AssetSpec, simulate_paths
from .portfolio import (MarginSet, NettingSet, Placement, Portfolio, build_market,
                        incremental_charge, portfolio_value, solve_netting_set)
from .term_structures import Curve, RateEnvironment, TimeGrid
from .xva_solver import SolverConfig, XvaReport, solve_predefault_xva

__version__ = "0.1.0"
