"""
title: Diagnostics
module: nectfuse.diagnostics
description:
    Posterior summaries and convergence checks over a ``DrawsMatrix``.

    R-hat is the rank-normalized split statistic (maximum of bulk and folded);
    the classic split R-hat on raw values is reported next to it. Bulk ESS
    uses FFT autocovariances truncated by Geyer's initial monotone sequence.
    Constant quantities get NaN, written out as undefined markers.
"""
import dataclasses
import logging
import typing

import numpy as np
import pandas as pd
from scipy import stats
from scipy.fft import next_fast_len

from nectfuse.config import ConfigSection
from nectfuse.datastructures import DrawsMatrix, PipelinePanel, SummaryRow, SummaryTable
from nectfuse.datastructures.draws import element_index
from nectfuse.exceptions import SchemaError

logger = logging.getLogger(__name__)

CI_PROBS = (0.025, 0.975)
MIN_DRAWS = 4


def quantile(
    x: typing.Any, p: typing.Union[float, typing.Sequence[float]], axis: int = None
) -> typing.Any:
    """Empirical quantile with linear interpolation between order statistics."""
    return np.quantile(np.asarray(x, dtype=float), p, axis=axis)


def _is_constant(chains: np.ndarray) -> bool:
    return not np.all(np.isfinite(chains)) or np.ptp(chains) == 0


def _split_chains(chains: np.ndarray) -> np.ndarray:
    half = chains.shape[1] // 2
    return np.vstack((chains[:, :half], chains[:, -half:]))


def _z_scale(values: np.ndarray) -> np.ndarray:
    rank = stats.rankdata(values, method="average").reshape(values.shape)
    return stats.norm.ppf((rank - 0.5) / values.size)


def _rhat(chains: np.ndarray) -> float:
    n_draws = chains.shape[1]
    between = n_draws * np.var(chains.mean(axis=1), ddof=1)
    within = np.mean(np.var(chains, axis=1, ddof=1))
    return float(np.sqrt(((n_draws - 1) / n_draws * within + between / n_draws) / within))


def _autocov(values: np.ndarray) -> np.ndarray:
    n = values.shape[-1]
    size = next_fast_len(2 * n)
    centered = values - values.mean(axis=-1, keepdims=True)
    spectrum = np.fft.rfft(centered, n=size, axis=-1)
    spectrum *= np.conjugate(spectrum)
    return np.fft.irfft(spectrum, n=size, axis=-1)[..., :n] / n


def _ess(chains: np.ndarray) -> float:
    n_chains, n_draws = chains.shape
    acov = _autocov(chains)
    mean_var = np.mean(acov[:, 0]) * n_draws / (n_draws - 1.0)
    var_plus = mean_var * (n_draws - 1.0) / n_draws
    if n_chains > 1:
        var_plus += np.var(chains.mean(axis=1), ddof=1)

    rho = np.zeros(n_draws)
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - np.mean(acov[:, 1])) / var_plus
    rho[0], rho[1] = rho_even, rho_odd

    # initial positive sequence
    t = 1
    while t < n_draws - 2 and rho_even + rho_odd >= 0.0:
        rho_even = 1.0 - (mean_var - np.mean(acov[:, t + 1])) / var_plus
        rho_odd = 1.0 - (mean_var - np.mean(acov[:, t + 2])) / var_plus
        rho[t + 1] = rho_even
        if rho_even + rho_odd >= 0:
            rho[t + 2] = rho_odd
        t += 2
    max_t = t

    # initial monotone sequence
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2

    tau = -1.0 + 2.0 * np.sum(rho[:max_t]) + np.sum(rho[max_t + 1 : max_t + 2])
    if np.isnan(rho).any():
        return float("nan")
    return float(n_chains * n_draws / tau)


def _check_shape(chains: np.ndarray) -> np.ndarray:
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    if chains.shape[1] < MIN_DRAWS:
        raise SchemaError(
            f"diagnostics need at least {MIN_DRAWS} draws per chain, got {chains.shape[1]}"
        )
    return chains


def split_rhat(chains: np.ndarray) -> float:
    """Rank-normalized split R-hat of a ``(chains, draws)`` array."""
    chains = _check_shape(chains)
    if _is_constant(chains):
        return float("nan")
    bulk = _rhat(_z_scale(_split_chains(chains)))
    folded = np.abs(chains - np.median(chains))
    if _is_constant(folded):
        return bulk
    return max(bulk, _rhat(_z_scale(_split_chains(folded))))


def classic_split_rhat(chains: np.ndarray) -> float:
    """Split R-hat on the raw values, sensitive to gross location differences."""
    chains = _check_shape(chains)
    if _is_constant(chains):
        return float("nan")
    return _rhat(_split_chains(chains))


def ess_bulk(chains: np.ndarray) -> float:
    chains = _check_shape(chains)
    if _is_constant(chains):
        return float("nan")
    return _ess(_z_scale(_split_chains(chains)))


def _kurtosis_mean(nu: np.ndarray) -> float:
    if np.any(nu <= 4):
        return float("nan")
    return float(np.mean(6.0 / (nu - 4.0)))


def _selected(draws: DrawsMatrix, names: typing.Sequence[str] = None) -> typing.List[str]:
    if not names:
        return list(draws.names)
    selected = []
    for name in names:
        matches = draws.block(name)
        if not matches:
            raise SchemaError(f"no quantity named `{name}` in the draws")
        selected.extend(match for match in matches if match not in selected)
    return selected


def summarize(draws: DrawsMatrix, names: typing.Sequence[str] = None) -> SummaryTable:
    """Mean, sd, 95% interval, bulk ESS and R-hat of each selected quantity.

    ``names`` entries are exact names (``phi[2]``) or block names (``phi``).
    """
    rows = []
    for name in _selected(draws, names):
        values = draws.column(name)
        if len(values) < MIN_DRAWS:
            raise SchemaError(f"summaries need at least {MIN_DRAWS} draws")
        chains = draws.by_chain(name)
        low, high = quantile(values, CI_PROBS)
        kurtosis = None
        if name.startswith("nu["):
            kurtosis = _kurtosis_mean(values)
        rows.append(
            SummaryRow(
                name=name,
                mean=float(np.mean(values)),
                sd=float(np.std(values, ddof=1)),
                ci_low=float(low),
                ci_high=float(high),
                ess=ess_bulk(chains),
                rhat=split_rhat(chains),
                rhat_split=classic_split_rhat(chains),
                kurtosis=kurtosis,
            )
        )
    return SummaryTable(tuple(rows))


def _factor_size(draws: DrawsMatrix) -> int:
    n_entries = len(draws.block("L_R"))
    size = int((np.sqrt(8 * n_entries + 1) - 1) / 2)
    if size * (size + 1) // 2 != n_entries:
        raise SchemaError(f"`L_R` block has {n_entries} entries, not a triangle")
    return size


def correlation_draws(draws: DrawsMatrix) -> np.ndarray:
    """``(draws, K, K)`` error correlation matrices ``L_R L_R'``."""
    size = _factor_size(draws)
    factors = np.zeros((draws.n_draws, size, size))
    for name in draws.block("L_R"):
        i, j = element_index(name)
        factors[:, i, j] = draws.column(name)
    return factors @ np.transpose(factors, (0, 2, 1))


def derived_quantities(draws: DrawsMatrix, panel: PipelinePanel = None) -> DrawsMatrix:
    """Append ``rho[k,l]`` (k > l), ``log_kurtosis[k]`` and subject-level effects."""
    names: typing.List[str] = []
    columns: typing.List[np.ndarray] = []

    if draws.block("L_R"):
        correlations = correlation_draws(draws)
        size = correlations.shape[1]
        for k in range(size):
            for m in range(k):
                names.append(f"rho[{k + 1},{m + 1}]")
                columns.append(correlations[:, k, m])

    for name in draws.block("nu"):
        nu = draws.column(name)
        with np.errstate(divide="ignore", invalid="ignore"):
            log_kurtosis = np.where(nu > 4, np.log(6.0 / (nu - 4.0)), np.nan)
        names.append("log_kurtosis" + name[len("nu") :])
        columns.append(log_kurtosis)

    for effect in ("0", "1"):
        z_names = draws.block(f"z{effect}")
        if not z_names or f"alpha{effect}" not in draws:
            continue
        mean = draws.column(f"alpha{effect}")
        scale = draws.column(f"lambda{effect}")
        for name in z_names:
            names.append(f"alpha{effect}_subject" + name[len(f"z{effect}") :])
            columns.append(mean + scale * draws.column(name))

    if panel is not None and draws.block("phi"):
        if len(draws.block("phi")) != panel.n_pipelines:
            raise SchemaError("draws and panel disagree on the number of pipelines")

    if not names:
        return draws
    return draws.with_columns(names, np.column_stack(columns))


def correlation_summary(
    draws: DrawsMatrix, pipeline_names: typing.Sequence[str] = None
) -> typing.Dict[str, pd.DataFrame]:
    """Lower bound, mean and upper bound of every error correlation, as K x K tables."""
    correlations = correlation_draws(draws)
    size = correlations.shape[1]
    labels = list(pipeline_names or [str(k + 1) for k in range(size)])
    if len(labels) != size:
        raise SchemaError(f"{len(labels)} pipeline names for {size} pipelines")
    low, high = quantile(correlations, CI_PROBS, axis=0)
    return {
        "low": pd.DataFrame(low, index=labels, columns=labels),
        "mean": pd.DataFrame(correlations.mean(axis=0), index=labels, columns=labels),
        "high": pd.DataFrame(high, index=labels, columns=labels),
    }


def correlation_frame(tables: typing.Mapping[str, pd.DataFrame]) -> pd.DataFrame:
    """Long layout of ``correlation_summary``: one row per pipeline pair."""
    mean = tables["mean"]
    labels = list(mean.index)
    records = []
    for k, row in enumerate(labels):
        for m, column in enumerate(labels[:k]):
            records.append(
                {
                    "pipeline": row,
                    "other": column,
                    "mean": mean.iloc[k, m],
                    "ci_low": tables["low"].iloc[k, m],
                    "ci_high": tables["high"].iloc[k, m],
                }
            )
    return pd.DataFrame.from_records(
        records, columns=["pipeline", "other", "mean", "ci_low", "ci_high"]
    )


@dataclasses.dataclass(frozen=True)
class ConvergenceThresholds(ConfigSection):
    max_rhat: float = 1.01
    min_ess: float = 500.0
    max_divergence_rate: float = 0.01


@dataclasses.dataclass(frozen=True)
class ConvergenceReport(object):
    passed: bool
    failures: typing.Tuple[str, ...]
    max_rhat: float
    min_ess: float
    divergence_rate: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "check": ["max_rhat", "min_ess", "divergence_rate", "passed"],
                "value": [
                    self.max_rhat,
                    self.min_ess,
                    self.divergence_rate,
                    self.passed,
                ],
            }
        )


def check_convergence(
    table: SummaryTable,
    draws: DrawsMatrix,
    thresholds: ConvergenceThresholds = None,
) -> ConvergenceReport:
    """Constant quantities (undefined diagnostics) are skipped."""
    thresholds = thresholds or ConvergenceThresholds()
    failures = []
    defined = [row for row in table if row.defined]
    for row in defined:
        if not row.rhat < thresholds.max_rhat:
            failures.append(f"{row.name}: rhat {row.rhat:.4f}")
        if not row.ess > thresholds.min_ess:
            failures.append(f"{row.name}: ess {row.ess:.1f}")

    divergence_rate = draws.sampler_stats.divergence_rate
    if divergence_rate >= thresholds.max_divergence_rate:
        failures.append(f"divergence rate {divergence_rate:.4f}")

    report = ConvergenceReport(
        passed=not failures,
        failures=tuple(failures),
        max_rhat=max((row.rhat for row in defined), default=float("nan")),
        min_ess=min((row.ess for row in defined), default=float("nan")),
        divergence_rate=divergence_rate,
    )
    if failures:
        logger.warning("%d convergence checks failed", len(failures))
    return report


def error_density_grid(
    draws: typing.Union[DrawsMatrix, SummaryTable],
    pipeline_names: typing.Sequence[str] = None,
    grid: typing.Sequence[float] = None,
) -> pd.DataFrame:
    """Marginal t density of each pipeline's error at the posterior mean of (phi, tau, nu)."""
    if isinstance(draws, DrawsMatrix):
        table = summarize(draws, ["phi", "tau", "nu"])
    else:
        table = draws
    means = {row.name: row.mean for row in table}
    size = len([name for name in means if name.startswith("phi[")])
    labels = list(pipeline_names or [str(k + 1) for k in range(size)])
    if len(labels) != size:
        raise SchemaError(f"{len(labels)} pipeline names for {size} pipelines")

    grid = np.linspace(-4.0, 4.0, 401) if grid is None else np.asarray(grid, float)
    frame = pd.DataFrame({"x": grid})
    for k, label in enumerate(labels):
        frame[label] = stats.t.pdf(
            grid,
            df=means[f"nu[{k + 1}]"],
            loc=means[f"phi[{k + 1}]"],
            scale=means[f"tau[{k + 1}]"],
        )
    return frame


def compare_ct_effect(
    combined: DrawsMatrix,
    naive: typing.Mapping[str, DrawsMatrix],
    name: str = "beta_ct",
) -> pd.DataFrame:
    """``beta_ct`` of the combined fit next to each single-pipeline fit."""
    fits = [("combined", combined)] + list(naive.items())
    records = []
    for label, draws in fits:
        values = draws.column(name)
        low, high = quantile(values, CI_PROBS)
        records.append(
            {
                "fit": label,
                "mean": float(np.mean(values)),
                "ci_low": float(low),
                "ci_high": float(high),
                "sd": float(np.std(values, ddof=1)),
            }
        )
    return pd.DataFrame.from_records(
        records, columns=["fit", "mean", "ci_low", "ci_high", "sd"]
    )
