"""Cross-sectional least-squares estimator for conditional expectations."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegressionSpec:
    """Polynomial basis in the slice's spot levels.

    ``fit_stride`` > 1 fits the coefficients on every ``fit_stride``-th path
    and evaluates them on all paths.
    """

    degree: int = 3
    fit_stride: int = 1

    def __post_init__(self):
        if self.degree < 0:
            raise InputError(f"regression degree must be >= 0, got {self.degree}")
        if self.fit_stride < 1:
            raise InputError(f"fit_stride must be >= 1, got {self.fit_stride}")


def _design(x: np.ndarray, degree: int) -> np.ndarray:
    cols = [np.ones(x.shape[0])]
    for j in range(x.shape[1]):
        xj = x[:, j]
        sd = xj.std()
        if degree == 0 or not np.isfinite(sd) or sd <= 1e-12 * max(1.0, abs(xj.mean())):
            continue
        z = (xj - xj.mean()) / sd
        p = np.ones_like(z)
        for _ in range(degree):
            p = p * z
            cols.append(p)
    return np.column_stack(cols)


def conditional_expectation(x: np.ndarray, y: np.ndarray, spec: RegressionSpec) -> np.ndarray:
    """Fitted ``E[y | x]`` on every path.

    ``x`` is ``(n,)`` or ``(n, d)``; ``y`` is ``(n,)`` or ``(n, m)`` for
    several regressands sharing one basis. Regressor columns with no
    cross-sectional spread are dropped, so a constant slice reduces to the
    sample mean. A rank-deficient basis is retried at a lower degree.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y, dtype=float)
    degree = spec.degree
    while True:
        a = _design(x, degree)
        if a.shape[1] == 1:
            mean = y.mean(axis=0)
            return np.broadcast_to(mean, y.shape).copy()
        fit_rows = slice(None, None, spec.fit_stride)
        coef, _, rank, _ = np.linalg.lstsq(a[fit_rows], y[fit_rows], rcond=None)
        if rank == a.shape[1] or degree == 0:
            return a @ coef
        logger.warning("rank-deficient regression basis (rank %d of %d), degree %d -> %d",
                       rank, a.shape[1], degree, degree - 1)
        degree -= 1
