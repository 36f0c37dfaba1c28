"""
title: Posterior
module: nectfuse.posterior
description:
    Joint log posterior of the fusion model on the unconstrained scale.

    Measurement part: each visit row of pipeline values is the latent
    thickness plus pipeline offsets plus NECT error, written conditionally on
    explicit chi-square mixing latents. Clinical part: mmse regressed on the
    fixed effects, the latent thickness and non-centered subject intercepts
    and slopes.
"""
import dataclasses
import functools
import logging
import typing

import autograd
import autograd.numpy as np
import numpy as onp
import pandas as pd
from autograd.tracer import getval

from nectfuse import dataio, sampler
from nectfuse.config import ConfigSection
from nectfuse.datastructures import DrawsMatrix, PipelinePanel
from nectfuse.distributions import (
    LOG_2,
    chisq_kernel,
    lkj_chol_logpdf,
    mvn_chol_kernel,
    normal_logpdf,
)
from nectfuse.exceptions import ConfigError, SchemaError, TransformError
from nectfuse.transforms import BlockSpec, TransformSpec
from nectfuse.types import Array

logger = logging.getLogger(__name__)

BETA_NAMES = ("mci", "ad", "age", "male", "ct", "mci_t", "ad_t")
# coefficients of the design matrix columns, in column order
FIXED_EFFECTS = ("mci", "ad", "age", "male", "mci_t", "ad_t")

DENSITY_PARTS = ("priors", "lkj", "mixing", "observations", "outcome")


@dataclasses.dataclass(frozen=True)
class ModelConfig(ConfigSection):
    phi_sd: float = 3.0
    tau_sd: float = 1.0
    nu_mean: float = 30.0
    lkj_eta: float = 2.0
    ct_mean: float = 7.0
    ct_sd: float = 2.0
    alpha0_mean: float = 15.0
    alpha0_sd: float = 15.0
    alpha1_mean: float = 0.0
    alpha1_sd: float = 5.0
    lambda_sd: float = 10.0
    beta_sd: float = 10.0
    sigma_sd: float = 1.0
    outcome: bool = True

    def __post_init__(self) -> None:
        for key in (
            "phi_sd",
            "tau_sd",
            "nu_mean",
            "lkj_eta",
            "ct_sd",
            "alpha0_sd",
            "alpha1_sd",
            "lambda_sd",
            "beta_sd",
            "sigma_sd",
        ):
            if not getattr(self, key) > 0:
                raise ConfigError(f"`{key}` must be > 0", key=key)


def clinical_blocks(n_subjects: int) -> typing.List[BlockSpec]:
    blocks = [
        BlockSpec("z0", "identity", (n_subjects,)),
        BlockSpec("z1", "identity", (n_subjects,)),
        BlockSpec("alpha0", "identity"),
        BlockSpec("alpha1", "identity"),
        BlockSpec("lambda0", "positive"),
        BlockSpec("lambda1", "positive"),
    ]
    blocks.extend(BlockSpec(f"beta_{name}", "identity") for name in BETA_NAMES)
    blocks.append(BlockSpec("sigma", "positive"))
    return blocks


def build_transform_spec(
    n_rows: int, n_subjects: int, n_pipelines: int, include_latents: bool = True
) -> TransformSpec:
    blocks = [BlockSpec("ct", "positive-vector", (n_rows,))]
    blocks.extend(clinical_blocks(n_subjects))
    blocks.extend(
        [
            BlockSpec("phi", "identity", (n_pipelines,)),
            BlockSpec("tau", "positive-vector", (n_pipelines,)),
            BlockSpec("nu", "positive-vector", (n_pipelines,)),
            BlockSpec("L_R", "corr-cholesky", (n_pipelines, n_pipelines)),
        ]
    )
    if include_latents:
        blocks.append(BlockSpec("chisq", "positive-vector", (n_rows, n_pipelines)))
    return TransformSpec(blocks)


@dataclasses.dataclass(frozen=True)
class ParamView(object):
    """Named constrained values; measurement blocks are ``None`` in the clinical-only model."""

    z0: typing.Any
    z1: typing.Any
    alpha0: typing.Any
    alpha1: typing.Any
    lambda0: typing.Any
    lambda1: typing.Any
    beta: typing.Mapping[str, typing.Any]
    sigma: typing.Any
    ct: typing.Any = None
    phi: typing.Any = None
    tau: typing.Any = None
    nu: typing.Any = None
    L_R: typing.Any = None
    chisq: typing.Any = None

    @classmethod
    def from_theta(cls, theta: typing.Mapping[str, typing.Any]) -> "ParamView":
        values = {
            field.name: theta.get(field.name)
            for field in dataclasses.fields(cls)
            if field.name != "beta"
        }
        beta = {name: theta[f"beta_{name}"] for name in BETA_NAMES}
        return cls(beta=beta, **values)

    def to_theta(self) -> typing.Dict[str, typing.Any]:
        theta = {
            field.name: getattr(self, field.name)
            for field in dataclasses.fields(self)
            if field.name != "beta" and getattr(self, field.name) is not None
        }
        theta.update({f"beta_{name}": value for name, value in self.beta.items()})
        return theta

    @property
    def alpha0_subject(self) -> typing.Any:
        return self.alpha0 + self.lambda0 * self.z0

    @property
    def alpha1_subject(self) -> typing.Any:
        return self.alpha1 + self.lambda1 * self.z1

    @staticmethod
    def count_explicit(n_rows: int, n_subjects: int, n_pipelines: int) -> int:
        return build_transform_spec(
            n_rows, n_subjects, n_pipelines, include_latents=False
        ).size

    @staticmethod
    def count_latent(n_rows: int, n_pipelines: int) -> int:
        return n_rows * n_pipelines


@dataclasses.dataclass(frozen=True)
class PosteriorData(object):
    ect: Array
    design: Array
    subject_codes: Array
    years: Array
    mmse: Array
    n_subjects: int

    @classmethod
    def from_panel(cls, panel: PipelinePanel) -> "PosteriorData":
        return cls(
            ect=onp.asarray(dataio.pipeline_matrix(panel), dtype=float),
            design=dataio.design_matrix(panel),
            subject_codes=onp.asarray(dataio.subject_codes(panel)),
            years=onp.asarray(panel.years, dtype=float),
            mmse=onp.asarray(panel.mmse, dtype=float),
            n_subjects=panel.n_subjects,
        )

    @property
    def n_rows(self) -> int:
        return self.ect.shape[0]

    @property
    def n_pipelines(self) -> int:
        return self.ect.shape[1]


def _halfnormal(x: typing.Any, scale: float) -> typing.Any:
    return LOG_2 + normal_logpdf(x, 0.0, scale)


def clinical_prior(view: ParamView, cfg: ModelConfig) -> typing.Any:
    total = np.sum(normal_logpdf(view.z0, 0.0, 1.0))
    total = total + np.sum(normal_logpdf(view.z1, 0.0, 1.0))
    total = total + normal_logpdf(view.alpha0, cfg.alpha0_mean, cfg.alpha0_sd)
    total = total + normal_logpdf(view.alpha1, cfg.alpha1_mean, cfg.alpha1_sd)
    total = total + _halfnormal(view.lambda0, cfg.lambda_sd)
    total = total + _halfnormal(view.lambda1, cfg.lambda_sd)
    for name in BETA_NAMES:
        total = total + normal_logpdf(view.beta[name], 0.0, cfg.beta_sd)
    return total + _halfnormal(view.sigma, cfg.sigma_sd)


def outcome_logpdf(
    view: ParamView, data: PosteriorData, covariate: typing.Any
) -> typing.Any:
    """mmse given the fixed effects, ``beta_ct * covariate`` and the subject effects."""
    coefficients = np.stack([view.beta[name] for name in FIXED_EFFECTS])
    codes = data.subject_codes
    prediction = (
        np.dot(data.design, coefficients)
        + view.beta["ct"] * covariate
        + view.alpha0_subject[codes]
        + view.alpha1_subject[codes] * data.years
    )
    return np.sum(normal_logpdf(data.mmse, prediction, view.sigma))


def log_density(
    view: ParamView,
    data: PosteriorData,
    cfg: ModelConfig,
    parts: bool = False,
) -> typing.Any:
    """Log joint density on the constrained scale, without any Jacobian."""
    priors = (
        clinical_prior(view, cfg)
        + np.sum(normal_logpdf(view.ct, cfg.ct_mean, cfg.ct_sd))
        + np.sum(normal_logpdf(view.phi, 0.0, cfg.phi_sd))
        + np.sum(_halfnormal(view.tau, cfg.tau_sd))
        + np.sum(-np.log(cfg.nu_mean) - view.nu / cfg.nu_mean)
    )
    lkj = lkj_chol_logpdf(view.L_R, cfg.lkj_eta, validate=False)
    mixing = np.sum(chisq_kernel(view.chisq, view.nu))

    q = view.chisq / view.nu
    scale = view.tau / np.sqrt(q)
    location = np.reshape(view.ct, (-1, 1)) + view.phi
    observations = np.sum(mvn_chol_kernel(data.ect, location, scale, view.L_R))

    outcome = outcome_logpdf(view, data, view.ct) if cfg.outcome else 0.0

    if parts:
        return dict(zip(DENSITY_PARTS, (priors, lkj, mixing, observations, outcome)))
    return priors + lkj + mixing + observations + outcome


@dataclasses.dataclass(frozen=True)
class InterceptCentering(object):
    """Linear shift the sampler works in: ``alpha0 + centers . coefficients``.

    With raw age near 75 and thickness near 7, the population intercept is
    almost collinear with their coefficients and a diagonal metric cannot
    absorb it. The shifted intercept is the mean prediction at the covariate
    means. The map has unit Jacobian, so the target density is unchanged.
    """

    intercept: int
    coefficients: Array
    centers: Array

    @classmethod
    def for_spec(
        cls, spec: TransformSpec, data: PosteriorData, ct_center: float
    ) -> "InterceptCentering":
        names = [f"beta_{name}" for name in FIXED_EFFECTS] + ["beta_ct", "alpha1"]
        centers = list(data.design.mean(axis=0)) + [ct_center, data.years.mean()]
        return cls(
            intercept=spec.slices["alpha0"].start,
            coefficients=onp.array([spec.slices[name].start for name in names]),
            centers=onp.array(centers, dtype=float),
        )

    def to_sampling(self, u: Array) -> Array:
        v = onp.array(u, dtype=float)
        v[self.intercept] += self.centers @ v[self.coefficients]
        return v

    def from_sampling(self, v: Array) -> Array:
        u = onp.array(v, dtype=float)
        u[self.intercept] -= self.centers @ u[self.coefficients]
        return u

    def pull_back(self, grad: Array) -> Array:
        """Gradient with respect to the sampling coordinates."""
        out = onp.array(grad, dtype=float)
        out[self.coefficients] -= self.centers * grad[self.intercept]
        return out


class _UnconstrainedTarget(object):
    """Shared plumbing: a ``TransformSpec`` plus a log density on its constrained values."""

    spec: TransformSpec

    @property
    def dim(self) -> int:
        return self.spec.size

    def constrain(
        self, u: typing.Any
    ) -> typing.Tuple[typing.Dict[str, typing.Any], typing.Any]:
        return self.spec.constrain(u)

    def view(self, u: typing.Any) -> ParamView:
        theta, _ = self.spec.constrain(u)
        return ParamView.from_theta(theta)

    def _log_density(self, view: ParamView) -> typing.Any:
        raise NotImplementedError()  # pragma: nocover

    def _log_target(self, u: typing.Any) -> typing.Any:
        theta, log_jac = self.spec.constrain(u)
        return self._log_density(ParamView.from_theta(theta)) + log_jac

    def __call__(self, u: Array) -> float:
        with onp.errstate(all="ignore"):
            value = float(self._log_target(onp.asarray(u, dtype=float)))
        return value if onp.isfinite(value) else -onp.inf

    def value_and_grad(self, u: Array) -> typing.Tuple[float, Array]:
        """Log target and its gradient; non-finite values come back as ``-inf``."""
        with onp.errstate(all="ignore"):
            value, grad = self._value_and_grad(onp.asarray(u, dtype=float))
        value = float(value)
        grad = onp.asarray(grad, dtype=float)
        if not onp.isfinite(value) or not onp.all(onp.isfinite(grad)):
            return -onp.inf, grad
        return value, grad

    def gradient(self, u: Array) -> Array:
        return self.value_and_grad(u)[1]

    @functools.cached_property
    def _value_and_grad(self) -> typing.Callable:
        return autograd.value_and_grad(self._log_target)

    def unconstrain(self, view: ParamView) -> Array:
        return self.spec.unconstrain(view.to_theta())

    def draw_names(self, keep_latents: bool = False) -> typing.List[str]:
        return self.spec.names(exclude=() if keep_latents else ("chisq",))

    def flatten_draw(self, u: Array, keep_latents: bool = False) -> Array:
        theta, _ = self.spec.constrain(onp.asarray(u, dtype=float))
        return self.spec.flatten(theta, exclude=() if keep_latents else ("chisq",))

    def init_center(self) -> Array:
        return onp.zeros(self.dim)

    def _ct_center(self) -> float:
        raise NotImplementedError()  # pragma: nocover

    @functools.cached_property
    def centering(self) -> InterceptCentering:
        return InterceptCentering.for_spec(self.spec, self.data, self._ct_center())

    def sampling_value_and_grad(self, v: Array) -> typing.Tuple[float, Array]:
        """``value_and_grad`` in the centered coordinates the sampler moves in."""
        value, grad = self.value_and_grad(self.centering.from_sampling(v))
        return value, self.centering.pull_back(grad)

    def flatten_sampling_draw(self, v: Array, keep_latents: bool = False) -> Array:
        return self.flatten_draw(self.centering.from_sampling(v), keep_latents)


class LogPosterior(_UnconstrainedTarget):
    def __init__(self, panel: PipelinePanel, cfg: ModelConfig = None) -> None:
        self.panel = panel
        self.cfg = cfg or ModelConfig()
        self.data = PosteriorData.from_panel(panel)
        self.spec = build_transform_spec(
            self.data.n_rows, self.data.n_subjects, self.data.n_pipelines
        )
        logger.debug(
            "posterior over %d unconstrained coordinates (%d explicit)",
            self.dim,
            self.n_explicit,
        )

    @property
    def n_explicit(self) -> int:
        return self.dim - self.spec.block_size("chisq")

    def _log_density(self, view: ParamView) -> typing.Any:
        return log_density(view, self.data, self.cfg)

    def log_density_parts(self, u: Array) -> typing.Dict[str, float]:
        parts = log_density(self.view(u), self.data, self.cfg, parts=True)
        return {name: float(getval(value)) for name, value in parts.items()}

    def init_center(self) -> Array:
        """Zero except the thickness block (log row means) and the intercept mean."""
        center = onp.zeros(self.dim)
        center[self.spec.slices["ct"]] = onp.log(self.data.ect.mean(axis=1))
        center[self.spec.slices["alpha0"]] = self.data.mmse.mean()
        return center

    def _ct_center(self) -> float:
        return float(self.data.ect.mean())


class NaiveClinicalPosterior(_UnconstrainedTarget):
    """Clinical model alone, one pipeline's values plugged in as an observed covariate."""

    def __init__(
        self,
        panel: PipelinePanel,
        pipeline: typing.Union[int, str],
        cfg: ModelConfig = None,
    ) -> None:
        self.panel = panel
        self.cfg = cfg or ModelConfig()
        self.data = PosteriorData.from_panel(panel)
        self.pipeline = panel.pipeline_position(pipeline)
        self.pipeline_name = panel.pipeline_names[self.pipeline]
        self.covariate = self.data.ect[:, self.pipeline]
        self.spec = TransformSpec(clinical_blocks(self.data.n_subjects))

    def _log_density(self, view: ParamView) -> typing.Any:
        return clinical_prior(view, self.cfg) + outcome_logpdf(
            view, self.data, self.covariate
        )

    def init_center(self) -> Array:
        center = onp.zeros(self.dim)
        center[self.spec.slices["alpha0"]] = self.data.mmse.mean()
        return center

    def _ct_center(self) -> float:
        return float(self.covariate.mean())


def log_posterior(u: Array, panel: PipelinePanel, cfg: ModelConfig = None) -> float:
    return LogPosterior(panel, cfg)(u)


def grad_log_posterior(
    u: Array, panel: PipelinePanel, cfg: ModelConfig = None
) -> Array:
    return LogPosterior(panel, cfg).gradient(u)


def sample_posterior(
    posterior: _UnconstrainedTarget,
    sampler_cfg: sampler.SamplerConfig = None,
    keep_latents: bool = False,
) -> DrawsMatrix:
    if posterior.dim == 0:
        raise TransformError("posterior has no parameters")
    return sampler.nuts_run(
        posterior.sampling_value_and_grad,
        posterior.dim,
        sampler_cfg,
        constrain=functools.partial(
            posterior.flatten_sampling_draw, keep_latents=keep_latents
        ),
        names=posterior.draw_names(keep_latents),
        init_center=posterior.centering.to_sampling(posterior.init_center()),
    )


def fit(
    panel: PipelinePanel,
    cfg: ModelConfig = None,
    sampler_cfg: sampler.SamplerConfig = None,
    keep_latents: bool = False,
) -> DrawsMatrix:
    return sample_posterior(LogPosterior(panel, cfg), sampler_cfg, keep_latents)


def fit_naive_single_pipeline(
    panel: PipelinePanel,
    pipeline: typing.Union[int, str],
    cfg: ModelConfig = None,
    sampler_cfg: sampler.SamplerConfig = None,
) -> DrawsMatrix:
    """``pipeline`` is a name or a 1-based index."""
    posterior = NaiveClinicalPosterior(panel, pipeline, cfg)
    logger.info("naive clinical fit on pipeline `%s`", posterior.pipeline_name)
    return sample_posterior(posterior, sampler_cfg)


def posterior_ct_profile(draws: DrawsMatrix, panel: PipelinePanel) -> pd.DataFrame:
    """Per visit: posterior mean and 95% interval of the latent thickness next to the raw values."""
    names = [f"ct[{row + 1}]" for row in range(panel.n_rows)]
    missing = [name for name in names if name not in draws]
    if missing:
        raise SchemaError(f"draws lack the thickness block, e.g. `{missing[0]}`")

    values = draws.select(names).draws
    frame = pd.DataFrame(
        {
            "subject_id": [row.subject_id for row in panel.rows],
            "years": panel.years,
            "dx": [row.dx.value for row in panel.rows],
            "ct_mean": values.mean(axis=0),
            "ct_low": onp.quantile(values, 0.025, axis=0),
            "ct_high": onp.quantile(values, 0.975, axis=0),
        }
    )
    for position, name in enumerate(panel.pipeline_names):
        frame[name] = panel.ect_matrix[:, position]
    frame["empirical_mean"] = panel.ect_matrix.mean(axis=1)
    return frame
