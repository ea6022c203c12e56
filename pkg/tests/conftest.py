import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.stats import norm

from xvabsde.claims import Claim, Forward
from xvabsde.market_sim import AssetSpec
from xvabsde.term_structures import Curve, RateEnvironment

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def black_scholes(kind, s0, strike, rate, sigma, maturity, carry=None):
    """Lognormal European option price; ``carry`` is the asset growth rate."""
    carry = rate if carry is None else carry
    fwd = s0 * np.exp(carry * maturity)
    sd = sigma * np.sqrt(maturity)
    d1 = (np.log(fwd / strike) + 0.5 * sd * sd) / sd
    d2 = d1 - sd
    df = np.exp(-rate * maturity)
    if kind == "call":
        return df * (fwd * norm.cdf(d1) - strike * norm.cdf(d2))
    return df * (strike * norm.cdf(-d2) - fwd * norm.cdf(-d1))


@pytest.fixture
def sec4_asset():
    return AssetSpec(s0=100.0, sigma=Curve.flat(0.25), repo=Curve.flat(0.01))


@pytest.fixture
def cva_env():
    return RateEnvironment.flat(0.01, lambdaC=0.04, RC=0.4)


def forward(cid, direction, strike, notional=1000.0, maturity=1.0, csa_rate=None):
    return Claim(cid, Forward(direction, strike, maturity), notional,
                 None if csa_rate is None else Curve.flat(csa_rate))


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(RESULTS):
        checks = RESULTS[criterion]
        failed = [label for label, ok, _ in checks if not ok]
        status = "PASS" if not failed else "FAIL"
        tail = f" (failing: {', '.join(failed)})" if failed else ""
        terminalreporter.write_line(
            f"criterion {criterion}: {status} [{len(checks) - len(failed)}/{len(checks)} checks]"
            f"{tail}")
        for label, ok, detail in checks:
            terminalreporter.write_line(f"    {'pass' if ok else 'FAIL'}  {label}: {detail}")
