"""Shared builders for solver-level tests."""

from scipy.integrate import solve_ivp

from xvabsde.csa import CollateralSpec, InitialMarginSpec
from xvabsde.market_sim import AssetSpec
from xvabsde.portfolio import MarginSet, NettingSet, Portfolio, build_market
from xvabsde.term_structures import Curve
from xvabsde.xva_solver import predefault_driver


def single_set(claims, collateral=None, initial_margin=None, rates=None):
    ms = MarginSet("ms", tuple(c.id for c in claims), collateral or CollateralSpec(),
                   initial_margin or InitialMarginSpec(), rates or {})
    return Portfolio(list(claims), [ms], [NettingSet("ns", ("ms",))])


def market_for(portfolio, env, *, n_paths=20_000, n_steps=50, seed=1, sigma=0.25,
               csa_discounting=False, extra_claims=()):
    asset = AssetSpec(100.0, Curve.flat(sigma), repo=env.rrepo)
    return build_market(portfolio, [asset], env, n_paths=n_paths, n_steps=n_steps, seed=seed,
                        csa_discounting=csa_discounting, extra_claims=extra_claims)


def netting_state(claims, env, *, collateral=None, initial_margin=None, **kw):
    pf = single_set(claims, collateral, initial_margin)
    market = market_for(pf, env, **kw)
    return market.netting_state(pf, "ns", env)


def ode_oracle(env, vhat_fn, horizon=1.0):
    """Fine-tolerance backward integration of the deterministic pre-default ODE."""
    def rhs(t, x):
        v = vhat_fn(t)
        return -(predefault_driver(t, v, x[0], 0.0, 0.0, 0.0,
                                   (1 - env.RB) * max(v, 0.0), (1 - env.RC) * max(-v, 0.0),
                                   env))
    sol = solve_ivp(rhs, (horizon, 0.0), [0.0], rtol=1e-12, atol=1e-10, dense_output=True)
    return sol.sol
