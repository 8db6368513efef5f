"""Rolling and total-interval covariances, eigenbasis rotation, local variances.

This is the empirical side of the pipeline: the total-interval matrix anchors
the model, the rolling sequence exhibits the non-stationarity, and the pooled
local variances of the rotated, eigenvalue-rescaled amplitudes are the draws
whose distribution the deformation fit targets.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .marketdata import TOTAL, ReturnPanel

__all__ = [
    "CovarianceMatrix",
    "CovarianceSequence",
    "EigenBasis",
    "NormalizedPanel",
    "VarianceSample",
    "TraceHistogram",
    "total_covariance",
    "rolling_covariance",
    "eigendecompose",
    "rotate_and_scale",
    "local_variances",
    "trace_distribution",
]

_SYM_RTOL = 1e-12
_PSD_RTOL = 1e-10
_EIG_FLOOR_RTOL = 1e-12


@dataclass(frozen=True)
class CovarianceMatrix:
    """Symmetric PSD K x K covariance; ``window=None`` marks the total interval."""

    matrix: np.ndarray
    window: tuple[int, int] | None = None
    n_obs: int = 0

    def __post_init__(self) -> None:
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("covariance matrix must be square")
        scale = float(np.max(np.abs(m))) or 1.0
        if float(np.max(np.abs(m - m.T))) > _SYM_RTOL * scale:
            raise ValueError("covariance matrix not symmetric within tolerance")
        eigvals = np.linalg.eigvalsh(m)
        if eigvals[0] < -_PSD_RTOL * max(eigvals[-1], 0.0):
            raise ValueError("covariance matrix not positive semi-definite")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.matrix))

    def to_tsv(self, path: str | os.PathLike, tickers: tuple[str, ...] | None = None) -> None:
        names = tickers or tuple(f"a{i}" for i in range(self.dim))
        lines = ["\t".join(names)]
        for row in self.matrix:
            lines.append("\t".join(f"{v:.9g}" for v in row))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class CovarianceSequence:
    """Time-ordered covariances from a moving window of length ``window``."""

    matrices: tuple[CovarianceMatrix, ...]
    window: int
    stride: int
    end_timestamps: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.matrices)

    def __iter__(self):
        return iter(self.matrices)


@dataclass(frozen=True)
class EigenBasis:
    """Descending eigenvalues with orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self) -> None:
        v = self.eigenvectors
        k = v.shape[0]
        if v.shape != (k, k) or self.eigenvalues.shape != (k,):
            raise ValueError("inconsistent eigenbasis shapes")
        if np.any(np.diff(self.eigenvalues) > 0.0):
            raise ValueError("eigenvalues must be sorted descending")
        ortho = float(np.max(np.abs(v.T @ v - np.eye(k))))
        if ortho > 1e-10:
            raise ValueError("eigenvectors not orthonormal within tolerance")


@dataclass(frozen=True)
class NormalizedPanel:
    """Amplitudes rotated into the eigenbasis and rescaled by sqrt(eigenvalue)."""

    tickers: tuple[str, ...]
    timestamps: tuple[str, ...]
    values: np.ndarray  # shape (K, T)
    horizon: int

    @property
    def n_assets(self) -> int:
        return self.values.shape[0]

    @property
    def n_obs(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class VarianceSample:
    """Pooled local-variance draws: the empirical variance-law sample."""

    values: np.ndarray
    agg_window: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if np.any(self.values < 0.0):
            raise ValueError("variance samples must be nonnegative")

    def __len__(self) -> int:
        return len(self.values)

    def to_tsv(self, path: str | os.PathLike) -> None:
        lines = ["variance"]
        lines.extend(f"{v:.9g}" for v in self.values)
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def to_text(self, path: str | os.PathLike) -> None:
        # bare one-column file for external plotting tools
        Path(path).write_text("\n".join(f"{v:.9g}" for v in self.values) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class TraceHistogram:
    """Histogram of per-K normalized traces of a covariance sequence."""

    bin_edges: np.ndarray
    counts: np.ndarray
    density: bool
    values: np.ndarray

    def to_tsv(self, path: str | os.PathLike) -> None:
        lines = ["bin_left\tbin_right\tcount"]
        for left, right, cnt in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
            lines.append(f"{left:.9g}\t{right:.9g}\t{cnt:.9g}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _window_covariance(values: np.ndarray) -> np.ndarray:
    # sample-average convention: divide by the window length, no Bessel correction
    centered = values - values.mean(axis=1, keepdims=True)
    return (centered @ centered.T) / values.shape[1]


def total_covariance(rp: ReturnPanel) -> CovarianceMatrix:
    """Total-interval covariance (1/T_tot) sum_t r(t) r(t)^T of a demeaned panel."""
    if not rp.demeaned or rp.demean_window != TOTAL:
        raise ValueError("total_covariance requires a panel demeaned over the total interval")
    k, t_tot = rp.values.shape
    if t_tot <= k:
        raise ValueError(
            f"covariance rank-deficient: T_tot={t_tot} must exceed K={k}"
        )
    sigma = (rp.values @ rp.values.T) / t_tot
    sigma = 0.5 * (sigma + sigma.T)
    return CovarianceMatrix(matrix=sigma, window=None, n_obs=t_tot)


def rolling_covariance(rp: ReturnPanel, window: int, stride: int = 1) -> CovarianceSequence:
    """Covariance per moving window [t-T+1, t], each with window-local means."""
    t_len = int(window)
    if t_len < 2:
        raise ValueError("rolling window must be >= 2")
    if t_len > rp.n_obs:
        raise ValueError(f"rolling window T={t_len} exceeds panel length {rp.n_obs}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    matrices = []
    stamps = []
    for end in range(t_len - 1, rp.n_obs, stride):
        chunk = rp.values[:, end - t_len + 1 : end + 1]
        matrices.append(
            CovarianceMatrix(
                matrix=_window_covariance(chunk),
                window=(end - t_len + 1, end),
                n_obs=t_len,
            )
        )
        stamps.append(rp.timestamps[end])
    return CovarianceSequence(
        matrices=tuple(matrices), window=t_len, stride=stride, end_timestamps=tuple(stamps)
    )


def eigendecompose(cm: CovarianceMatrix) -> EigenBasis:
    """Descending eigendecomposition; rejects near-singular covariances."""
    eigvals, eigvecs = np.linalg.eigh(cm.matrix)
    eigvals = eigvals[::-1]
    eigvecs = eigvecs[:, ::-1]
    if eigvals[-1] < _EIG_FLOOR_RTOL * eigvals[0]:
        raise ValueError(
            f"near-singular covariance: min eigenvalue {eigvals[-1]:.3e} below "
            f"{_EIG_FLOOR_RTOL:g} of max {eigvals[0]:.3e}"
        )
    return EigenBasis(eigenvalues=eigvals.copy(), eigenvectors=eigvecs.copy())


def rotate_and_scale(rp: ReturnPanel | NormalizedPanel, eb: EigenBasis) -> NormalizedPanel:
    """Rotate amplitudes into the eigenbasis and divide by sqrt(eigenvalues)."""
    values = rp.values
    if values.shape[0] != eb.eigenvalues.shape[0]:
        raise ValueError("panel dimension does not match eigenbasis")
    rotated = eb.eigenvectors.T @ values
    scaled = rotated / np.sqrt(eb.eigenvalues)[:, None]
    return NormalizedPanel(
        tickers=rp.tickers,
        timestamps=rp.timestamps,
        values=scaled,
        horizon=rp.horizon,
    )


def local_variances(
    panel: NormalizedPanel,
    w: int,
    overlapping: bool = False,
    recenter: bool = False,
) -> VarianceSample:
    """Pool per-ticker local variances over ``w``-day aggregation blocks.

    Blocks are non-overlapping by default; ``recenter`` subtracts the block
    mean before squaring (off by default: the panel is already demeaned
    globally). The biased 1/w estimator matches the sample-average convention
    used everywhere else.
    """

    if w < 2:
        raise ValueError("aggregation window w must be >= 2")
    k, t = panel.values.shape
    if t < w:
        raise ValueError(f"panel length {t} shorter than aggregation window {w}")
    if overlapping:
        starts = np.arange(0, t - w + 1)
        idx = starts[:, None] + np.arange(w)[None, :]
        blocks = panel.values[:, idx]  # (K, n_blocks, w)
    else:
        n_blocks = t // w
        blocks = panel.values[:, : n_blocks * w].reshape(k, n_blocks, w)
    if recenter:
        blocks = blocks - blocks.mean(axis=2, keepdims=True)
    values = np.ascontiguousarray((blocks**2).mean(axis=2).reshape(-1))
    return VarianceSample(
        values=values,
        agg_window=w,
        meta={
            "horizon": panel.horizon,
            "n_assets": k,
            "n_obs": t,
            "overlapping": overlapping,
            "recenter": recenter,
        },
    )


def trace_distribution(
    cs: CovarianceSequence,
    normalize_by: CovarianceMatrix | np.ndarray | None = None,
    bins: int | np.ndarray = 50,
    density: bool = True,
) -> TraceHistogram:
    """Histogram of s = Tr Sigma(t) / K, optionally as Tr(Sigma^{-1} Sigma(t)) / K.

    A diagnostic with limited statistical weight compared to the pooled
    variance route, but useful for inspecting the ensemble directly.
    """

    if len(cs) == 0:
        raise ValueError("empty covariance sequence")
    k = cs.matrices[0].dim
    if normalize_by is None:
        traces = np.array([np.trace(cm.matrix) for cm in cs.matrices]) / k
    else:
        sigma = normalize_by.matrix if isinstance(normalize_by, CovarianceMatrix) else np.asarray(normalize_by)
        eigvals, eigvecs = np.linalg.eigh(sigma)
        if eigvals[0] <= _EIG_FLOOR_RTOL * eigvals[-1]:
            raise ValueError("singular normalization covariance")
        inv = (eigvecs / eigvals) @ eigvecs.T
        traces = np.array([np.sum(inv * cm.matrix) for cm in cs.matrices]) / k
    counts, edges = np.histogram(traces, bins=bins, density=density)
    return TraceHistogram(bin_edges=edges, counts=counts, density=density, values=traces)
