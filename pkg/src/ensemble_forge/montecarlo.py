"""Stochastic oracles: ensemble samplers, synthetic panels, and KS distances.

All randomness flows through counter-based Philox streams keyed by an
explicit (seed, stream) pair, so results are reproducible regardless of
scheduling and there is no hidden global generator.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np

from .distributions import EnsembleParams
from .marketdata import ReturnPanel

__all__ = [
    "RngSpec",
    "sample_eta",
    "sample_wishart_matrix",
    "sample_returns",
    "synthetic_panel",
    "ks_distance",
]


@dataclass(frozen=True)
class RngSpec:
    """Deterministic stream id: identical (seed, stream) -> identical draws."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed % 2**64, self.stream % 2**64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def _as_generator(rng: RngSpec | np.random.Generator) -> np.random.Generator:
    if isinstance(rng, RngSpec):
        return rng.generator()
    return rng


def sample_eta(dof: float, rng: RngSpec | np.random.Generator, size=None):
    """Chi-square draws with (possibly non-integer) ``dof``, via Gamma(dof/2, 2)."""
    if dof <= 0.0:
        raise ValueError("degrees of freedom must be positive")
    gen = _as_generator(rng)
    return gen.gamma(0.5 * dof, 2.0, size=size)


def sample_wishart_matrix(
    ep: EnsembleParams, rng: RngSpec | np.random.Generator, delta_mode: bool = False
) -> np.ndarray:
    """One K x N model matrix from the deformed ensemble.

    Draw eta ~ chi^2_{N+L}, then fill A with iid columns of covariance
    N Sigma / eta; marginally A follows the algebraic matrix density.
    ``delta_mode`` pins eta = 1 (the undeformed Gaussian ensemble in the
    N-rescaled convention).
    """

    n_int = int(round(ep.n))
    if abs(ep.n - n_int) > 1e-12 or n_int < 1:
        raise ValueError("matrix sampling requires integer N >= 1")
    gen = _as_generator(rng)
    eta = 1.0 if delta_mode else float(sample_eta(ep.n + ep.l, gen))
    coloring = ep.coloring_matrix()
    scale = np.sqrt(ep.n / eta)
    return scale * (coloring @ gen.standard_normal((ep.k, n_int)))


def sample_returns(
    ep: EnsembleParams, count: int, rng: RngSpec | np.random.Generator
) -> np.ndarray:
    """``count`` draws from the compound amplitude law, as a (count, K) array.

    Per draw: x = z / eta with z ~ chi^2_N and eta ~ chi^2_{N+L} (a beta prime
    variate), then r ~ N(0, x Sigma) through eigenbasis coloring.
    """

    if count < 1:
        raise ValueError("count must be >= 1")
    gen = _as_generator(rng)
    z = gen.gamma(0.5 * ep.n, 2.0, size=count)
    eta = gen.gamma(0.5 * (ep.n + ep.l), 2.0, size=count)
    x = z / eta
    coloring = ep.coloring_matrix()
    normals = gen.standard_normal((count, ep.k))
    return (normals @ coloring.T) * np.sqrt(x)[:, None]


def _synthetic_dates(count: int) -> tuple[str, ...]:
    start = date(2000, 1, 3)
    out = []
    current = start
    while len(out) < count:
        if current.weekday() < 5:  # trading-day look for the ISO stamps
            out.append(current.isoformat())
        current += timedelta(days=1)
    return tuple(out)


def synthetic_panel(
    ep: EnsembleParams,
    t_tot: int,
    rng: RngSpec | np.random.Generator,
    variance_block: int = 1,
) -> ReturnPanel:
    """Synthetic return panel of ``t_tot`` compound draws for end-to-end tests.

    ``variance_block`` > 1 holds the variance scale x constant over that many
    consecutive days instead of redrawing it daily; block-constant panels are
    the regime in which the aggregation estimator is consistent.
    """

    if t_tot <= ep.k:
        raise ValueError(f"need t_tot > K, got t_tot={t_tot} K={ep.k}")
    gen = _as_generator(rng)
    if variance_block < 1:
        raise ValueError("variance_block must be >= 1")
    if variance_block == 1:
        values = sample_returns(ep, t_tot, gen).T
    else:
        n_blocks = -(-t_tot // variance_block)
        z = gen.gamma(0.5 * ep.n, 2.0, size=n_blocks)
        eta = gen.gamma(0.5 * (ep.n + ep.l), 2.0, size=n_blocks)
        x = np.repeat(z / eta, variance_block)[:t_tot]
        coloring = ep.coloring_matrix()
        normals = gen.standard_normal((t_tot, ep.k))
        values = ((normals @ coloring.T) * np.sqrt(x)[:, None]).T
    tickers = tuple(f"SYN{i:03d}" for i in range(ep.k))
    return ReturnPanel(
        tickers=tickers,
        timestamps=_synthetic_dates(t_tot),
        values=values,
        horizon=1,
        demeaned=False,
    )


def ks_distance(sample, cdf) -> float:
    """Exact sup distance between the empirical CDF of ``sample`` and ``cdf``."""
    values = np.sort(np.asarray(sample, dtype=float).reshape(-1))
    if len(values) == 0:
        raise ValueError("empty sample")
    f = np.asarray(cdf(values), dtype=float)
    n = len(values)
    i = np.arange(1, n + 1)
    return float(max(np.max(np.abs(f - i / n)), np.max(np.abs(f - (i - 1) / n))))
