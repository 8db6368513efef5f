"""Price-panel ingestion and demeaned return panels.

Input is a strict CSV (``date,<ticker1>,...,<tickerK>``) of continuously
traded instruments: rows with gaps, non-positive prices, or out-of-order
dates are rejected rather than imputed, since imputation silently distorts
the covariance estimates downstream.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

__all__ = [
    "TOTAL",
    "PriceTableError",
    "PriceTable",
    "ReturnPanel",
    "load_price_table",
    "parse_price_csv",
    "compute_returns",
    "demean",
    "write_panel_tsv",
    "read_panel_tsv",
]

# Sentinel for total-interval demeaning (the alternative is a sliding length T).
TOTAL = "total"


class PriceTableError(ValueError):
    """Malformed price CSV: message names the offending row and column."""


@dataclass(frozen=True)
class PriceTable:
    """K x T_raw panel of strictly positive prices on ordered trading days."""

    timestamps: tuple[str, ...]
    tickers: tuple[str, ...]
    prices: np.ndarray  # shape (K, T_raw)

    def __post_init__(self) -> None:
        k, t_raw = self.prices.shape
        if k != len(self.tickers):
            raise PriceTableError("price matrix row count does not match tickers")
        if t_raw != len(self.timestamps):
            raise PriceTableError("price matrix column count does not match timestamps")
        if k < 2:
            raise PriceTableError("need at least two tickers")
        if t_raw < 2:
            raise PriceTableError("need at least two trading days")

    @property
    def n_assets(self) -> int:
        return self.prices.shape[0]

    @property
    def n_days(self) -> int:
        return self.prices.shape[1]


@dataclass(frozen=True)
class ReturnPanel:
    """K x T_tot panel of dimensionless returns at horizon ``horizon``.

    ``demean_window`` is :data:`TOTAL` or a sliding length in trading days;
    ``demeaned`` records whether the subtraction has been applied yet.
    """

    tickers: tuple[str, ...]
    timestamps: tuple[str, ...]
    values: np.ndarray  # shape (K, T_tot)
    horizon: int
    demean_window: int | str = TOTAL
    demeaned: bool = False

    def __post_init__(self) -> None:
        if self.values.shape != (len(self.tickers), len(self.timestamps)):
            raise ValueError("return panel shape does not match tickers/timestamps")
        if self.horizon < 1:
            raise ValueError("return horizon must be >= 1")

    @property
    def n_assets(self) -> int:
        return self.values.shape[0]

    @property
    def n_obs(self) -> int:
        return self.values.shape[1]


def parse_price_csv(text: str, source: str = "<string>") -> PriceTable:
    """Parse price CSV content; see :func:`load_price_table` for the format."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise PriceTableError(f"{source}: empty file") from None
    header = [h.strip() for h in header]
    if len(header) < 3 or header[0].lower() != "date":
        raise PriceTableError(f"{source}: header must be 'date,<ticker1>,...,<tickerK>'")
    tickers = tuple(header[1:])
    if len(set(tickers)) != len(tickers):
        raise PriceTableError(f"{source}: duplicate ticker in header")

    timestamps: list[str] = []
    rows: list[list[float]] = []
    seen: set[str] = set()
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise PriceTableError(
                f"{source}: row {lineno}: expected {len(header)} cells, found {len(row)}"
            )
        stamp = row[0].strip()
        if stamp in seen:
            raise PriceTableError(f"{source}: row {lineno}: duplicate timestamp {stamp!r}")
        if timestamps and stamp <= timestamps[-1]:
            raise PriceTableError(
                f"{source}: row {lineno}: timestamps not strictly increasing at {stamp!r}"
            )
        seen.add(stamp)
        prices_row: list[float] = []
        for ticker, cell in zip(tickers, row[1:]):
            cell = cell.strip()
            if not cell:
                raise PriceTableError(f"{source}: row {lineno}, column {ticker}: missing cell")
            try:
                value = float(cell)
            except ValueError:
                raise PriceTableError(
                    f"{source}: row {lineno}, column {ticker}: malformed price {cell!r}"
                ) from None
            if not value > 0.0 or not np.isfinite(value):
                raise PriceTableError(
                    f"{source}: row {lineno}, column {ticker}: non-positive price {cell}"
                )
            prices_row.append(value)
        timestamps.append(stamp)
        rows.append(prices_row)

    if len(rows) < 2:
        raise PriceTableError(f"{source}: need at least two data rows")
    prices = np.array(rows, dtype=float).T  # (K, T_raw)
    return PriceTable(timestamps=tuple(timestamps), tickers=tickers, prices=prices)


def load_price_table(path: str | os.PathLike) -> PriceTable:
    """Load a ``date,<tickers...>`` CSV of strictly positive prices."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_price_csv(text, source=str(path))


def write_price_csv(pt: PriceTable, path: str | os.PathLike) -> None:
    lines = ["date," + ",".join(pt.tickers)]
    for j, stamp in enumerate(pt.timestamps):
        lines.append(stamp + "," + ",".join(repr(float(v)) for v in pt.prices[:, j]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def compute_returns(pt: PriceTable, dt: int, stride: int = 1) -> ReturnPanel:
    """Horizon-``dt`` returns (S(t+dt) - S(t)) / S(t), not yet demeaned.

    ``stride`` controls the sampling of start times t; the default 1 keeps
    overlapping returns for dt > 1.
    """

    if dt < 1 or dt > pt.n_days - 1:
        raise ValueError(f"return horizon dt={dt} out of range 1..{pt.n_days - 1}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    starts = np.arange(0, pt.n_days - dt, stride)
    values = (pt.prices[:, starts + dt] - pt.prices[:, starts]) / pt.prices[:, starts]
    stamps = tuple(pt.timestamps[s] for s in starts)
    return ReturnPanel(
        tickers=pt.tickers,
        timestamps=stamps,
        values=values,
        horizon=dt,
        demean_window=TOTAL,
        demeaned=False,
    )


def demean(rp: ReturnPanel, window: int | str = TOTAL) -> ReturnPanel:
    """Subtract per-row means over the total interval or a trailing window.

    With a sliding window T, the output keeps only times with a full trailing
    window [t-T+1, t], so the panel shortens by T-1 columns.
    """

    if window == TOTAL:
        values = rp.values - rp.values.mean(axis=1, keepdims=True)
        return replace(rp, values=values, demean_window=TOTAL, demeaned=True)
    t = int(window)
    if t < 1:
        raise ValueError("demeaning window must be >= 1")
    if t > rp.n_obs:
        raise ValueError(f"demeaning window T={t} exceeds panel length {rp.n_obs}")
    csum = np.cumsum(rp.values, axis=1)
    window_sums = csum[:, t - 1 :].copy()
    window_sums[:, 1:] -= csum[:, : rp.n_obs - t]
    trailing_mean = window_sums / t
    values = rp.values[:, t - 1 :] - trailing_mean
    return replace(
        rp,
        timestamps=rp.timestamps[t - 1 :],
        values=values,
        demean_window=t,
        demeaned=True,
    )


def write_panel_tsv(rp: ReturnPanel, path: str | os.PathLike) -> None:
    """Serialize a return panel as TSV with the ``date,<tickers...>`` header."""
    lines = ["date\t" + "\t".join(rp.tickers)]
    for j, stamp in enumerate(rp.timestamps):
        lines.append(stamp + "\t" + "\t".join(repr(float(v)) for v in rp.values[:, j]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_panel_tsv(path: str | os.PathLike, horizon: int = 1) -> ReturnPanel:
    """Read a TSV return panel written by :func:`write_panel_tsv`."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise PriceTableError(f"{path}: empty file")
    header = lines[0].split("\t")
    if header[0].lower() != "date" or len(header) < 2:
        raise PriceTableError(f"{path}: header must be 'date\\t<ticker>...'")
    tickers = tuple(header[1:])
    stamps: list[str] = []
    rows: list[list[float]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) != len(header):
            raise PriceTableError(f"{path}: row {lineno}: expected {len(header)} cells")
        stamps.append(cells[0])
        rows.append([float(c) for c in cells[1:]])
    values = np.array(rows, dtype=float).T
    return ReturnPanel(
        tickers=tickers,
        timestamps=tuple(stamps),
        values=values,
        horizon=horizon,
        demean_window=TOTAL,
        demeaned=False,
    )
