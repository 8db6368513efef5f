"""Batch command-line front door: ingest, fit, eval, sample, check-positivity, trace-hist.

Each verb reads inputs, writes machine-readable artifacts (TSV/JSON) through
atomic renames, and optionally renders a matplotlib figure of the same data
next to the delimited output. Reruns with identical configuration reproduce
identical data files. ENSEMBLE_FORGE_THREADS, when set, caps the numeric
libraries' thread pools.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

_THREAD_VAR = "ENSEMBLE_FORGE_THREADS"
if os.environ.get(_THREAD_VAR):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ[_THREAD_VAR])

import numpy as np

__all__ = ["RunConfig", "run", "main"]

VERBS = ("ingest", "fit", "eval", "sample", "check-positivity", "trace-hist")


@dataclass
class RunConfig:
    """Everything one invocation needs; one verb per run."""

    verb: str
    input_path: str | None = None
    output_path: str | None = None
    plot_path: str | None = None
    dts: list[int] = field(default_factory=lambda: [1])
    window: int = 63
    agg_window: int = 5
    model: str = "beta_prime"
    n_param: float | None = None
    l_param: float | None = None
    c_param: float | None = None
    k_dim: int | None = None
    curve: str = "marginal"
    grid: str = "-8:8:400"
    seed: int = 0
    stride: int = 1
    integer_n: bool = False
    t_tot: int = 1000
    sigma_blend: float = 0.3
    normalize: str = "none"
    bins: int = 50

    def __post_init__(self) -> None:
        if self.verb not in VERBS:
            raise ValueError(f"unknown verb {self.verb!r}")


def _atomic_write(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_text(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _curve_tsv(xs, ys, x_name: str, y_name: str) -> str:
    lines = [f"{x_name}\t{y_name}"]
    lines.extend(f"{x:.9g}\t{y:.9g}" for x, y in zip(xs, ys))
    return "\n".join(lines) + "\n"


def _parse_grid(grid: str) -> np.ndarray:
    parts = grid.split(":")
    if len(parts) != 3:
        raise ValueError("grid must be start:stop:count")
    start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 2:
        raise ValueError("grid needs at least 2 points")
    return np.linspace(start, stop, count)


def _blend_sigma(k: int, rho: float) -> np.ndarray:
    return rho * np.ones((k, k)) + (1.0 - rho) * np.eye(k)


def _load_panel(path: str):
    from . import marketdata

    if path.endswith(".tsv"):
        return marketdata.read_panel_tsv(path)
    return marketdata.load_price_table(path)


def _require(config: RunConfig, *names: str) -> None:
    missing = [n for n in names if getattr(config, n) is None]
    if missing:
        raise ValueError(f"verb {config.verb!r} requires {', '.join(missing)}")


def _run_ingest(config: RunConfig) -> None:
    from . import marketdata

    _require(config, "input_path", "output_path")
    table = marketdata.load_price_table(config.input_path)
    panel = marketdata.compute_returns(table, config.dts[0], stride=config.stride)
    panel = marketdata.demean(panel)
    tmp_lines = ["date\t" + "\t".join(panel.tickers)]
    for j, stamp in enumerate(panel.timestamps):
        tmp_lines.append(stamp + "\t" + "\t".join(repr(float(v)) for v in panel.values[:, j]))
    _atomic_write(config.output_path, "\n".join(tmp_lines) + "\n")


def _run_fit(config: RunConfig) -> None:
    from . import deformation

    _require(config, "input_path", "output_path")
    source = _load_panel(config.input_path)
    reports = deformation.fit_over_horizons(
        source,
        config.dts,
        config.agg_window,
        model=config.model,
        integer_n=config.integer_n,
    )
    payload = [r.to_json_dict() for r in reports]
    _atomic_write(config.output_path, _json_text(payload if len(payload) > 1 else payload[0]))
    if config.plot_path:
        from . import plotting

        plotting.render_fit_reports(payload, config.plot_path)


def _run_eval(config: RunConfig) -> None:
    from . import distributions

    _require(config, "output_path", "n_param")
    grid = _parse_grid(config.grid)
    n = config.n_param
    if config.curve == "marginal":
        _require(config, "l_param")
        ys = distributions.marginal_pdf(grid, n, config.l_param)
        names = ("r_tilde", "density")
    elif config.curve == "radial":
        _require(config, "l_param", "k_dim")
        ep = distributions.EnsembleParams(
            k=config.k_dim, n=n, l=config.l_param, sigma=np.eye(config.k_dim)
        )
        grid = grid[grid >= 0.0]
        ys = distributions.radial_pdf(grid, ep)
        names = ("rho", "density")
    elif config.curve == "baseline":
        ys = distributions.baseline_marginal_pdf(grid, n)
        names = ("r_tilde", "density")
    else:
        raise ValueError("curve must be marginal, radial, or baseline")
    _atomic_write(config.output_path, _curve_tsv(grid, np.atleast_1d(ys), *names))
    if config.plot_path:
        from . import plotting

        plotting.render_curve(
            grid, np.atleast_1d(ys), config.plot_path,
            xlabel=names[0], ylabel=names[1],
            title=f"{config.curve} density", logy=True,
        )


def _run_sample(config: RunConfig) -> None:
    from . import distributions, marketdata, montecarlo

    _require(config, "output_path", "n_param", "l_param", "k_dim")
    ep = distributions.EnsembleParams(
        k=config.k_dim,
        n=config.n_param,
        l=config.l_param,
        sigma=_blend_sigma(config.k_dim, config.sigma_blend),
    )
    panel = montecarlo.synthetic_panel(ep, config.t_tot, montecarlo.RngSpec(seed=config.seed))
    lines = ["date\t" + "\t".join(panel.tickers)]
    for j, stamp in enumerate(panel.timestamps):
        lines.append(stamp + "\t" + "\t".join(repr(float(v)) for v in panel.values[:, j]))
    _atomic_write(config.output_path, "\n".join(lines) + "\n")


def _run_check_positivity(config: RunConfig) -> None:
    from . import deformation

    _require(config, "output_path", "n_param", "k_dim")
    if config.model == "log_logistic":
        _require(config, "c_param")
        model = deformation.LogLogistic(b=0.5 * config.n_param, c=config.c_param)
        report = deformation.permissibility_check(model, config.k_dim)
    elif config.model == "beta_prime":
        _require(config, "l_param")
        model = deformation.BetaPrime(n=config.n_param, l=config.l_param)
        report = deformation.permissibility_check(model, config.k_dim)
    else:
        raise ValueError("check-positivity supports log_logistic and beta_prime")
    _atomic_write(config.output_path, _json_text(report.to_json_dict()))
    if config.plot_path:
        from . import plotting

        plotting.render_permissibility(report.s_grid, report.u_values, report.verdict, config.plot_path)


def _run_trace_hist(config: RunConfig) -> None:
    from . import covariance, marketdata

    _require(config, "input_path", "output_path")
    source = _load_panel(config.input_path)
    if isinstance(source, marketdata.PriceTable):
        panel = marketdata.compute_returns(source, config.dts[0], stride=1)
    else:
        panel = source
    panel = marketdata.demean(panel)
    seq = covariance.rolling_covariance(panel, config.window, stride=config.stride)
    normalize_by = None
    if config.normalize == "sigma":
        normalize_by = covariance.total_covariance(panel)
    hist = covariance.trace_distribution(seq, normalize_by=normalize_by, bins=config.bins)
    lines = ["bin_left\tbin_right\tdensity"]
    for left, right, cnt in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts):
        lines.append(f"{left:.9g}\t{right:.9g}\t{cnt:.9g}")
    _atomic_write(config.output_path, "\n".join(lines) + "\n")
    if config.plot_path:
        from . import plotting

        plotting.render_trace_histogram(hist.bin_edges, hist.counts, config.plot_path)


_RUNNERS = {
    "ingest": _run_ingest,
    "fit": _run_fit,
    "eval": _run_eval,
    "sample": _run_sample,
    "check-positivity": _run_check_positivity,
    "trace-hist": _run_trace_hist,
}


def run(config: RunConfig) -> int:
    """Execute one verb; returns the process exit status."""
    try:
        _RUNNERS[config.verb](config)
    except Exception as exc:  # surface a single parseable line per contract
        print(f"error: stage={config.verb} cause={exc}", file=sys.stderr)
        return 1
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ensemble-forge",
        description="Non-stationary covariance ensembles: estimation, densities, sampling.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_common(p: argparse.ArgumentParser, *, output=True) -> None:
        if output:
            p.add_argument("--output", required=True, help="output file path")
        p.add_argument("--plot", default=None, help="also render a figure to this path")

    p_ingest = sub.add_parser("ingest", help="prices CSV -> demeaned return panel TSV")
    p_ingest.add_argument("--input", required=True)
    p_ingest.add_argument("--dt", default="1")
    p_ingest.add_argument("--stride", type=int, default=1)
    add_common(p_ingest)

    p_fit = sub.add_parser("fit", help="fit the variance law per return horizon")
    p_fit.add_argument("--input", required=True, help="prices CSV or return-panel TSV")
    p_fit.add_argument("--dt", default="1", help="comma-separated horizons, e.g. 1,5,20")
    p_fit.add_argument("--window", type=int, default=5, help="variance aggregation window")
    p_fit.add_argument("--model", choices=("beta_prime", "log_logistic"), default="beta_prime")
    p_fit.add_argument("--integer-n", action="store_true")
    add_common(p_fit)

    p_eval = sub.add_parser("eval", help="emit a closed-form density curve as TSV")
    p_eval.add_argument("--model", choices=("beta_prime",), default="beta_prime")
    p_eval.add_argument("--N", type=float, required=True)
    p_eval.add_argument("--L", type=float, default=None)
    p_eval.add_argument("--K", type=int, default=None)
    p_eval.add_argument("--curve", choices=("marginal", "radial", "baseline"), required=True)
    p_eval.add_argument("--grid", default="-8:8:400", help="start:stop:count")
    add_common(p_eval)

    p_sample = sub.add_parser("sample", help="write a synthetic return panel")
    p_sample.add_argument("--K", type=int, required=True)
    p_sample.add_argument("--N", type=float, required=True)
    p_sample.add_argument("--L", type=float, required=True)
    p_sample.add_argument("--t-tot", type=int, required=True)
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--sigma-blend", type=float, default=0.3,
                          help="Sigma = blend*ones + (1-blend)*I")
    add_common(p_sample)

    p_check = sub.add_parser("check-positivity", help="trace-density permissibility verdict")
    p_check.add_argument("--model", choices=("log_logistic", "beta_prime"), required=True)
    p_check.add_argument("--N", type=float, required=True)
    p_check.add_argument("--c", type=float, default=None)
    p_check.add_argument("--L", type=float, default=None)
    p_check.add_argument("--K", type=int, required=True)
    add_common(p_check)

    p_trace = sub.add_parser("trace-hist", help="histogram of rolling-covariance traces")
    p_trace.add_argument("--input", required=True)
    p_trace.add_argument("--dt", default="1")
    p_trace.add_argument("--T", type=int, default=63, help="rolling window length")
    p_trace.add_argument("--stride", type=int, default=1)
    p_trace.add_argument("--normalize", choices=("none", "sigma"), default="none")
    p_trace.add_argument("--bins", type=int, default=50)
    add_common(p_trace)

    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    dts = [int(v) for v in str(getattr(args, "dt", "1")).split(",")]
    return RunConfig(
        verb=args.verb,
        input_path=getattr(args, "input", None),
        output_path=getattr(args, "output", None),
        plot_path=getattr(args, "plot", None),
        dts=dts,
        window=getattr(args, "T", 63),
        agg_window=getattr(args, "window", 5),
        model=getattr(args, "model", "beta_prime"),
        n_param=getattr(args, "N", None),
        l_param=getattr(args, "L", None),
        c_param=getattr(args, "c", None),
        k_dim=getattr(args, "K", None),
        curve=getattr(args, "curve", "marginal"),
        grid=getattr(args, "grid", "-8:8:400"),
        seed=getattr(args, "seed", 0),
        stride=getattr(args, "stride", 1),
        integer_n=getattr(args, "integer_n", False),
        t_tot=getattr(args, "t_tot", 1000),
        sigma_blend=getattr(args, "sigma_blend", 0.3),
        normalize=getattr(args, "normalize", "none"),
        bins=getattr(args, "bins", 50),
    )


def _normalize_argv(argv: list[str]) -> list[str]:
    # let `--grid -8:8:400` survive argparse's option detection
    out: list[str] = []
    i = 0
    while i < len(argv):
        token = argv[i]
        if token == "--grid" and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"--grid={argv[i + 1]}")
            i += 2
            continue
        out.append(token)
        i += 1
    return out


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    args = _build_parser().parse_args(_normalize_argv(list(argv)))
    return run(_config_from_args(args))


if __name__ == "__main__":
    sys.exit(main())
