"""Exposure profiles (EPE, ENE, PFE) and their CSV representation.

CSV layout: header ``t,epe,ene,pfe,se_epe,se_ene`` followed by one row per
grid time, every number printed with ``DECIMALS`` digits after the point.
The gnuplot layout writes the same columns separated by spaces under a
``#``-prefixed header.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .claims import ValueSurface
from .errors import InputError
from .term_structures import Curve

logger = logging.getLogger(__name__)

__all__ = ["ExposureProfile", "profile", "emit_csv", "read_csv", "lower_quantile"]

DECIMALS = 10
HEADER = ("t", "epe", "ene", "pfe", "se_epe", "se_ene")


@dataclass(frozen=True, eq=False)
class ExposureProfile:
    times: np.ndarray
    epe: np.ndarray
    ene: np.ndarray
    pfe: np.ndarray
    se_epe: np.ndarray
    se_ene: np.ndarray
    se_pfe: np.ndarray
    q: float
    n_paths: int
    discounted: bool = False

    def pooled_pfe_se(self) -> float:
        """Root-mean-square of the per-slice PFE standard errors."""
        return float(np.sqrt(np.mean(self.se_pfe ** 2)))


def lower_quantile(x: np.ndarray, q: float, axis: int = 0) -> np.ndarray:
    """Order statistic ``floor((n - 1) q)`` along ``axis`` (no interpolation)."""
    n = x.shape[axis]
    rank = int(np.floor((n - 1) * q))
    return np.take(np.partition(x, rank, axis=axis), rank, axis=axis)


def profile(exposure: ValueSurface, q: float = 0.95, *,
            deflate_with: Curve | None = None) -> ExposureProfile:
    """Per-slice exposure statistics.

    With ``deflate_with`` the surface is first multiplied by
    ``exp(-int_0^t rate)``, which removes the deterministic drift of
    discounted cash amounts from the profile.

    ``se_pfe`` is half the width of the one-sigma order-statistic band
    ``rank +/- sqrt(n q (1 - q))``.
    """
    if not 0.0 < q <= 1.0:
        raise InputError(f"quantile level must be in (0, 1], got {q}")
    x = exposure.values
    n = x.shape[0]
    if n == 0 or x.size == 0:
        raise InputError("cannot profile an empty exposure surface")
    t = exposure.grid.times
    if deflate_with is not None:
        x = x * np.exp(-deflate_with.cumulative(t))
    pos = np.maximum(x, 0.0)
    neg = np.maximum(-x, 0.0)
    root_n = np.sqrt(n)
    ddof = 1 if n > 1 else 0
    rank = int(np.floor((n - 1) * q))
    band = int(np.ceil(np.sqrt(n * q * (1.0 - q))))
    lo, hi = max(rank - band, 0), min(rank + band, n - 1)
    ordered = np.partition(x, sorted({lo, rank, hi}), axis=0)
    return ExposureProfile(
        times=t.copy(),
        epe=pos.mean(axis=0),
        ene=neg.mean(axis=0),
        pfe=ordered[rank],
        se_epe=pos.std(axis=0, ddof=ddof) / root_n,
        se_ene=neg.std(axis=0, ddof=ddof) / root_n,
        se_pfe=0.5 * (ordered[hi] - ordered[lo]),
        q=float(q),
        n_paths=n,
        discounted=deflate_with is not None,
    )


def emit_csv(prof: ExposureProfile, destination, *, gnuplot: bool = False) -> Path:
    destination = Path(destination)
    cols = (prof.times, prof.epe, prof.ene, prof.pfe, prof.se_epe, prof.se_ene)
    fmt = f"{{:.{DECIMALS}f}}"
    try:
        with destination.open("w", newline="") as fh:
            if gnuplot:
                fh.write("# " + " ".join(HEADER) + "\n")
                for row in zip(*cols):
                    fh.write(" ".join(fmt.format(v) for v in row) + "\n")
            else:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(HEADER)
                for row in zip(*cols):
                    writer.writerow([fmt.format(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write exposure profile to {destination}: {exc}") from exc
    return destination


def read_csv(source) -> dict[str, np.ndarray]:
    """Columns of a file written by :func:`emit_csv` (comma layout)."""
    with Path(source).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != HEADER:
            raise InputError(f"unexpected exposure CSV header {header}")
        rows = np.array([[float(v) for v in row] for row in reader])
    return {name: rows[:, i] for i, name in enumerate(HEADER)}
