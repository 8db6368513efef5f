from __future__ import annotations

import numpy as np
import pytest


@pytest.fixture
def small_price_csv() -> str:
    return (
        "date,AAA,BBB,CCC\n"
        "2001-01-01,100.0,50.0,20.0\n"
        "2001-01-02,101.0,49.5,20.4\n"
        "2001-01-03,99.5,50.5,20.2\n"
        "2001-01-04,100.5,51.0,19.8\n"
        "2001-01-05,102.0,50.0,20.6\n"
    )


def make_price_csv(prices: np.ndarray, tickers: list[str] | None = None) -> str:
    """Render a (K, T) price matrix as the canonical CSV text."""
    k, t = prices.shape
    tickers = tickers or [f"T{i:03d}" for i in range(k)]
    lines = ["date," + ",".join(tickers)]
    day = np.datetime64("1992-01-01")
    for j in range(t):
        stamp = str(day + j)
        lines.append(stamp + "," + ",".join(repr(float(v)) for v in prices[:, j]))
    return "\n".join(lines) + "\n"
