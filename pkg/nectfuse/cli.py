"""
title: Command line
module: nectfuse.cli
description:
    ``nectfuse simulate | fit | summarize | diagnose | nect-sample |
    profiles | densities | compare``.

    Each command stages its files in a temporary directory and moves them
    into ``--out`` only when it succeeds, together with ``manifest.json``.
    Library errors leave through their exit code with the detail on stderr.
"""
import contextlib
import functools
import logging
import os
import shutil
import sys
import tempfile
import time
import typing

import click
import numpy as np
import pandas as pd

from nectfuse import __version__, dataio, diagnostics, posterior, synth
from nectfuse.config import Config
from nectfuse.datastructures import DrawsMatrix, strings
from nectfuse.distributions import nect_sample
from nectfuse.exceptions import ConvergenceFailure, NectfuseError
from nectfuse.manifest import RunManifest
from nectfuse.sampler import SamplerConfig

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)

_input_file = click.Path(exists=True, dir_okay=False)
_out_dir = click.Path(file_okay=False)


class Stage(object):
    def __init__(self, directory: str) -> None:
        self.directory = directory
        self.names: typing.List[str] = []

    def path(self, name: str) -> str:
        if name not in self.names:
            self.names.append(name)
        return os.path.join(self.directory, name)


@contextlib.contextmanager
def staged_outputs(out: str, manifest: RunManifest) -> typing.Iterator[Stage]:
    started = time.perf_counter()
    with tempfile.TemporaryDirectory(prefix="nectfuse-") as directory:
        stage = Stage(directory)
        yield stage

        manifest.add_outputs(directory, stage.names)
        manifest.wall_time = round(time.perf_counter() - started, 3)
        manifest.write(os.path.join(directory, MANIFEST))
        os.makedirs(out, exist_ok=True)
        for name in stage.names + [MANIFEST]:
            shutil.move(os.path.join(directory, name), os.path.join(out, name))
    logger.info("wrote %d files to %s", len(stage.names) + 1, out)


def handle_errors(func: typing.Callable) -> typing.Callable:
    @functools.wraps(func)
    def wrapper(*args: typing.Any, **kwargs: typing.Any) -> typing.Any:
        try:
            return func(*args, **kwargs)
        except NectfuseError as exc:
            click.echo(f"error: {exc.detail}", err=True)
            sys.exit(exc.exit_code)

    return wrapper


def _manifest(
    command: str,
    config: typing.Dict[str, typing.Any],
    inputs: typing.Sequence[typing.Optional[str]] = (),
    seed: int = None,
) -> RunManifest:
    params = click.get_current_context().params
    manifest = RunManifest(
        command=command, arguments=dict(params), config=config, seed=seed
    )
    for path in inputs:
        manifest.add_input(path)
    return manifest


def _schema(path: typing.Optional[str]) -> dataio.PanelSchema:
    if path is None:
        return dataio.PanelSchema()
    return dataio.load_schema(path)


def _labels(pipelines: typing.Optional[str]) -> typing.Optional[typing.List[str]]:
    return list(strings(pipelines)) if pipelines else None


def _names(values: typing.Sequence[str]) -> typing.List[str]:
    names: typing.List[str] = []
    for value in values:
        names.extend(strings(value))
    return names


@click.group()
@click.option("-v", "--verbose", count=True, help="-v for progress, -vv for debug")
@click.version_option(__version__, prog_name="nectfuse")
def main(verbose: int) -> None:
    """Fuse noisy pipeline measurements with a longitudinal outcome."""
    logging.basicConfig(
        level=LOG_LEVELS[min(verbose, len(LOG_LEVELS) - 1)], format=LOG_FORMAT
    )


@main.command()
@click.option("--truth-config", type=_input_file, help="key=value ground truth")
@click.option("--schema", type=_input_file, help="column names of the written panel")
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--out", required=True, type=_out_dir)
@handle_errors
def simulate(
    truth_config: typing.Optional[str],
    schema: typing.Optional[str],
    seed: int,
    out: str,
) -> None:
    """Generate a synthetic panel and the truth behind it."""
    truth = synth.TruthConfig.from_config(Config(truth_config))
    panel_schema = _schema(schema)
    panel, latents = synth.generate(truth, seed=seed)

    manifest = _manifest(
        "simulate",
        {"truth": truth.as_dict(), "schema": panel_schema.as_dict()},
        inputs=[truth_config, schema],
        seed=seed,
    )
    with staged_outputs(out, manifest) as stage:
        dataio.write_panel(panel, stage.path("panel.csv"), panel_schema)
        synth.write_truth(latents, stage.path("truth.csv"))
    click.echo(f"{panel.n_rows} visits of {panel.n_subjects} subjects -> {out}")


@main.command()
@click.option("--panel", "panel_file", required=True, type=_input_file)
@click.option("--schema", type=_input_file)
@click.option("--model-config", type=_input_file)
@click.option("--sampler-config", type=_input_file)
@click.option(
    "--naive-pipeline",
    help="fit the clinical model alone on this pipeline (name or 1-based index)",
)
@click.option("--keep-latents", is_flag=True, help="also write the mixing latents")
@click.option("--seed", type=int)
@click.option("--chains", type=int)
@click.option("--warmup", type=int)
@click.option("--iters", type=int)
@click.option("--thin", type=int)
@click.option("--target-accept", type=float)
@click.option("--max-tree-depth", type=int)
@click.option("--workers", type=int, help="chains run in parallel")
@click.option("--out", required=True, type=_out_dir)
@handle_errors
def fit(
    panel_file: str,
    schema: typing.Optional[str],
    model_config: typing.Optional[str],
    sampler_config: typing.Optional[str],
    naive_pipeline: typing.Optional[str],
    keep_latents: bool,
    seed: typing.Optional[int],
    chains: typing.Optional[int],
    warmup: typing.Optional[int],
    iters: typing.Optional[int],
    thin: typing.Optional[int],
    target_accept: typing.Optional[float],
    max_tree_depth: typing.Optional[int],
    workers: typing.Optional[int],
    out: str,
) -> None:
    """Sample the posterior of a panel."""
    panel = dataio.load_panel(panel_file, _schema(schema))
    model_cfg = posterior.ModelConfig.from_config(Config(model_config))
    flags = {
        "seed": seed,
        "n_chains": chains,
        "n_warmup": warmup,
        "n_iterations": iters,
        "thin": thin,
        "target_accept": target_accept,
        "max_tree_depth": max_tree_depth,
        "max_workers": workers,
    }
    sampler_cfg = SamplerConfig.from_config(
        Config(sampler_config),
        **{key: value for key, value in flags.items() if value is not None},
    )

    if naive_pipeline is not None:
        pipeline: typing.Union[int, str] = naive_pipeline
        if naive_pipeline.isdigit():
            pipeline = int(naive_pipeline)
        draws = posterior.fit_naive_single_pipeline(
            panel, pipeline, model_cfg, sampler_cfg
        )
    else:
        draws = posterior.fit(panel, model_cfg, sampler_cfg, keep_latents)

    manifest = _manifest(
        "fit",
        {"model": model_cfg.as_dict(), "sampler": sampler_cfg.as_dict()},
        inputs=[panel_file, schema, model_config, sampler_config],
        seed=sampler_cfg.seed,
    )
    with staged_outputs(out, manifest) as stage:
        draws.to_csv(stage.path("draws.csv"))

    if sampler_cfg.n_retained >= diagnostics.MIN_DRAWS:
        table = diagnostics.summarize(draws)
        report = diagnostics.check_convergence(table, draws)
        click.echo(
            f"max rhat {report.max_rhat:.4f}, min ess {report.min_ess:.1f}, "
            f"divergence rate {report.divergence_rate:.4f}"
        )
    click.echo(f"{draws.n_draws} draws of {len(draws.names)} quantities -> {out}")


@main.command()
@click.option("--draws", "draws_file", required=True, type=_input_file)
@click.option(
    "--names", multiple=True, help="quantities or blocks to keep, e.g. phi,tau"
)
@click.option("--pipelines", help="comma separated pipeline labels")
@click.option("--panel", "panel_file", type=_input_file)
@click.option("--schema", type=_input_file)
@click.option("--out", required=True, type=_out_dir)
@handle_errors
def summarize(
    draws_file: str,
    names: typing.Sequence[str],
    pipelines: typing.Optional[str],
    panel_file: typing.Optional[str],
    schema: typing.Optional[str],
    out: str,
) -> None:
    """Posterior means, 95% intervals and diagnostics."""
    panel = None
    if panel_file is not None:
        panel = dataio.load_panel(panel_file, _schema(schema))
    labels = _labels(pipelines)
    if labels is None and panel is not None:
        labels = list(panel.pipeline_names)

    draws = diagnostics.derived_quantities(DrawsMatrix.from_csv(draws_file), panel)
    table = diagnostics.summarize(draws, _names(names))
    element_labels = {str(k + 1): label for k, label in enumerate(labels or [])}

    manifest = _manifest(
        "summarize", {}, inputs=[draws_file, panel_file, schema]
    )
    with staged_outputs(out, manifest) as stage:
        table.to_csv(stage.path("summary.csv"), element_labels)
        if draws.block("L_R"):
            tables = diagnostics.correlation_summary(draws, labels)
            diagnostics.correlation_frame(tables).to_csv(
                stage.path("correlations.csv"), index=False
            )
    click.echo(f"{len(table)} quantities -> {out}")


@main.command()
@click.option("--draws", "draws_file", required=True, type=_input_file)
@click.option("--names", multiple=True)
@click.option("--thresholds", type=_input_file, help="key=value thresholds")
@click.option("--max-rhat", type=float)
@click.option("--min-ess", type=float)
@click.option("--max-divergence-rate", type=float)
@click.option("--out", type=_out_dir)
@handle_errors
def diagnose(
    draws_file: str,
    names: typing.Sequence[str],
    thresholds: typing.Optional[str],
    max_rhat: typing.Optional[float],
    min_ess: typing.Optional[float],
    max_divergence_rate: typing.Optional[float],
    out: typing.Optional[str],
) -> None:
    """Check R-hat, ESS and divergences; exit 9 when a check fails."""
    flags = {
        "max_rhat": max_rhat,
        "min_ess": min_ess,
        "max_divergence_rate": max_divergence_rate,
    }
    limits = diagnostics.ConvergenceThresholds.from_config(
        Config(thresholds),
        **{key: value for key, value in flags.items() if value is not None},
    )
    draws = DrawsMatrix.from_csv(draws_file)
    table = diagnostics.summarize(draws, _names(names))
    report = diagnostics.check_convergence(table, draws, limits)

    if out is not None:
        manifest = _manifest(
            "diagnose", {"thresholds": limits.as_dict()}, inputs=[draws_file, thresholds]
        )
        with staged_outputs(out, manifest) as stage:
            report.to_frame().to_csv(stage.path("diagnostics.csv"), index=False)

    click.echo(f"max rhat {report.max_rhat:.4f}")
    click.echo(f"min ess {report.min_ess:.1f}")
    click.echo(f"divergence rate {report.divergence_rate:.4f}")
    for failure in report.failures:
        click.echo(f"failed {failure}")
    if not report.passed:
        raise ConvergenceFailure(
            f"{len(report.failures)} convergence checks failed", report.failures
        )
    click.echo("passed")


@main.command("nect-sample")
@click.option(
    "--params", "params_file", type=_input_file,
    help="key=value pipelines, phi, tau, nu and corr",
)
@click.option("--n", "n_draws", type=click.IntRange(min=1), default=10000, show_default=True)
@click.option("--pair", help="two pipeline names, e.g. FSLong,ANTsSST")
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--out", required=True, type=_out_dir)
@handle_errors
def nect_sample_command(
    params_file: typing.Optional[str],
    n_draws: int,
    pair: typing.Optional[str],
    seed: int,
    out: str,
) -> None:
    """Draw measurement errors from the error model, optionally for a pipeline pair."""
    truth = synth.TruthConfig.from_config(Config(params_file))
    params = truth.nect_params
    labels = list(truth.pipelines)
    if pair:
        chosen = list(strings(pair))
        unknown = [name for name in chosen if name not in labels]
        if len(chosen) != 2 or unknown:
            raise click.BadParameter(
                f"expected two of {', '.join(labels)}", param_hint="--pair"
            )
        params = params.subset([labels.index(name) for name in chosen])
        labels = chosen

    y, latents = nect_sample(params, np.random.default_rng(seed), size=n_draws)
    frame = pd.DataFrame(y, columns=labels)
    for position, label in enumerate(labels):
        frame[f"q_{label}"] = latents.q[:, position]

    manifest = _manifest(
        "nect-sample", {"params": truth.as_dict()}, inputs=[params_file], seed=seed
    )
    with staged_outputs(out, manifest) as stage:
        frame.to_csv(stage.path("nect_sample.csv"), index=False)
    click.echo(f"{n_draws} draws of {', '.join(labels)} -> {out}")


@main.command()
@click.option("--panel", "panel_file", required=True, type=_input_file)
@click.option("--schema", type=_input_file)
@click.option("--draws", "draws_file", type=_input_file)
@click.option("--out", required=True, type=_out_dir)
@handle_errors
def profiles(
    panel_file: str,
    schema: typing.Optional[str],
    draws_file: typing.Optional[str],
    out: str,
) -> None:
    """Per-visit thickness profiles, raw and posterior."""
    panel = dataio.load_panel(panel_file, _schema(schema))
    manifest = _manifest("profiles", {}, inputs=[panel_file, schema, draws_file])
    with staged_outputs(out, manifest) as stage:
        dataio.empirical_profile(panel).to_csv(stage.path("profile_raw.csv"), index=False)
        if draws_file is not None:
            draws = DrawsMatrix.from_csv(draws_file)
            posterior.posterior_ct_profile(draws, panel).to_csv(
                stage.path("profile_posterior.csv"), index=False
            )
    click.echo(f"{panel.n_rows} visits -> {out}")


@main.command()
@click.option("--draws", "draws_file", required=True, type=_input_file)
@click.option("--pipelines", help="comma separated pipeline labels")
@click.option("--grid-min", type=float, default=-4.0, show_default=True)
@click.option("--grid-max", type=float, default=4.0, show_default=True)
@click.option("--grid-points", type=click.IntRange(min=2), default=401, show_default=True)
@click.option("--out", required=True, type=_out_dir)
@handle_errors
def densities(
    draws_file: str,
    pipelines: typing.Optional[str],
    grid_min: float,
    grid_max: float,
    grid_points: int,
    out: str,
) -> None:
    """Error densities of each pipeline at the posterior means."""
    if not grid_min < grid_max:
        raise click.BadParameter("must be below --grid-max", param_hint="--grid-min")
    draws = DrawsMatrix.from_csv(draws_file)
    grid = np.linspace(grid_min, grid_max, grid_points)
    frame = diagnostics.error_density_grid(draws, _labels(pipelines), grid)

    manifest = _manifest("densities", {}, inputs=[draws_file])
    with staged_outputs(out, manifest) as stage:
        frame.to_csv(stage.path("error_densities.csv"), index=False)
    click.echo(f"{grid_points} grid points -> {out}")


def _labelled(entry: str) -> typing.Tuple[str, str]:
    label, sep, path = entry.partition("=")
    if not sep:
        path = entry
        label = os.path.splitext(os.path.basename(entry))[0]
    if not os.path.isfile(path):
        raise click.BadParameter(f"`{path}` is not a file", param_hint="--naive")
    return label, path


@main.command()
@click.option("--combined", required=True, type=_input_file)
@click.option(
    "--naive", multiple=True, required=True,
    help="LABEL=draws.csv of a single-pipeline fit; repeatable",
)
@click.option("--out", required=True, type=_out_dir)
@handle_errors
def compare(combined: str, naive: typing.Sequence[str], out: str) -> None:
    """Thickness effect of the combined fit next to single-pipeline fits."""
    naive_files = dict(_labelled(entry) for entry in naive)
    frame = diagnostics.compare_ct_effect(
        DrawsMatrix.from_csv(combined),
        {label: DrawsMatrix.from_csv(path) for label, path in naive_files.items()},
    )
    manifest = _manifest(
        "compare", {}, inputs=[combined] + list(naive_files.values())
    )
    with staged_outputs(out, manifest) as stage:
        frame.to_csv(stage.path("ct_effect.csv"), index=False)
    click.echo(f"{len(frame)} fits -> {out}")
