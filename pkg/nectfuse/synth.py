"""
title: Synthetic panels
module: nectfuse.synth
description:
    Runs the fusion model forward from known parameters, so fits can be
    checked against the truth that generated the data.

    Latent thickness follows a straight line per subject; the model itself
    estimates it pointwise and does not depend on that choice.

    A measurement vector with any non-positive entry is redrawn whole, so the
    generated errors follow the NECT law truncated to positive values, not
    the NECT law itself. The truncation is negligible at thickness near 7 and
    grows as thickness approaches the pipeline scales.
"""
import dataclasses
import logging
import math
import typing

import numpy as np
import pandas as pd

from nectfuse.config import ConfigSection
from nectfuse.datastructures import (
    Diagnosis,
    PipelinePanel,
    VisitRow,
    floats,
    strings,
)
from nectfuse.distributions import NectParams, nect_sample
from nectfuse.exceptions import ConfigError, DomainError
from nectfuse.posterior import BETA_NAMES

logger = logging.getLogger(__name__)

PIPELINES = (
    "FSCross",
    "FSLong",
    "ANTsCross",
    "ANTsNative",
    "ANTsSST",
    "ANTsXNetCross",
    "ANTsXNetLong",
)
PHI = (-1.02, -1.00, 0.92, 0.21, 0.23, -0.51, 0.24)
TAU = (0.21, 0.24, 1.06, 1.23, 1.27, 0.97, 0.79)
NU = (17.43, 6.06, 15.66, 105.02, 54.78, 35.95, 13.01)

MAX_REDRAWS = 1000
DIAGNOSES = (Diagnosis.CN, Diagnosis.MCI, Diagnosis.AD)


def _vector(default: typing.Tuple, cast: typing.Callable = floats) -> typing.Any:
    return dataclasses.field(default=default, metadata={"cast": cast})


@dataclasses.dataclass(frozen=True)
class TruthConfig(ConfigSection):
    """Ground truth for a synthetic panel; defaults are reference posterior means."""

    n_subjects: int = 60
    visits_min: int = 4
    visits_max: int = 4
    visit_spacing: float = 0.5
    visit_jitter: float = 0.1

    pipelines: typing.Tuple[str, ...] = _vector(PIPELINES, strings)
    phi: typing.Tuple[float, ...] = _vector(PHI)
    tau: typing.Tuple[float, ...] = _vector(TAU)
    nu: typing.Tuple[float, ...] = _vector(NU)
    # row-major K x K correlation matrix; empty means identity
    corr: typing.Tuple[float, ...] = _vector(())

    alpha0: float = 22.29
    alpha1: float = 0.01
    lambda0: float = 1.61
    lambda1: float = 1.53
    beta_mci: float = -1.72
    beta_ad: float = -4.86
    beta_age: float = 0.01
    beta_male: float = 0.00
    beta_ct: float = 0.75
    beta_mci_t: float = -0.81
    beta_ad_t: float = -2.35
    sigma: float = 1.48

    ct_baseline_mean: float = 7.0
    ct_baseline_sd: float = 0.8
    ct_slope_mean: float = -0.1
    ct_slope_sd: float = 0.05

    p_dx: typing.Tuple[float, ...] = _vector((197 / 663, 324 / 663, 142 / 663))
    age_mean: float = 75.0
    age_sd: float = 6.5
    p_male: float = 0.5

    round_mmse: bool = False
    clamp_mmse: bool = False

    def __post_init__(self) -> None:
        size = len(self.pipelines)
        if size < 1:
            raise ConfigError("at least one pipeline is needed", key="pipelines")
        for key in ("phi", "tau", "nu"):
            if len(getattr(self, key)) != size:
                raise ConfigError(
                    f"`{key}` has {len(getattr(self, key))} values "
                    f"for {size} pipelines",
                    key=key,
                )
        if self.corr and len(self.corr) != size * size:
            raise ConfigError(f"`corr` needs {size * size} values", key="corr")

        positive = [
            ("n_subjects", self.n_subjects >= 1),
            ("visits_min", self.visits_min >= 1),
            ("visits_max", self.visits_max >= self.visits_min),
            ("visit_spacing", self.visit_spacing > 0),
            ("visit_jitter", 0 <= self.visit_jitter < self.visit_spacing),
            ("tau", all(value > 0 for value in self.tau)),
            ("nu", all(value > 0 for value in self.nu)),
            ("lambda0", self.lambda0 >= 0),
            ("lambda1", self.lambda1 >= 0),
            ("sigma", self.sigma >= 0),
            ("ct_baseline_sd", self.ct_baseline_sd >= 0),
            ("ct_slope_sd", self.ct_slope_sd >= 0),
            ("age_sd", self.age_sd >= 0),
            ("p_male", 0 <= self.p_male <= 1),
            ("p_dx", len(self.p_dx) == 3 and min(self.p_dx) >= 0),
            ("p_dx", math.isclose(sum(self.p_dx), 1.0, abs_tol=1e-9)),
        ]
        for key, valid in positive:
            if not valid:
                raise ConfigError(f"truth setting `{key}` is out of range", key=key)
        try:
            self.nect_params
        except DomainError as exc:
            raise ConfigError(exc.detail, key="corr")

    @classmethod
    def reference(cls, **overrides: typing.Any) -> "TruthConfig":
        return cls(**overrides)

    @property
    def n_pipelines(self) -> int:
        return len(self.pipelines)

    @property
    def correlation(self) -> np.ndarray:
        size = self.n_pipelines
        if not self.corr:
            return np.eye(size)
        return np.asarray(self.corr, dtype=float).reshape(size, size)

    @property
    def nect_params(self) -> NectParams:
        return NectParams.from_correlation(self.nu, self.phi, self.tau, self.correlation)

    @property
    def beta(self) -> typing.Dict[str, float]:
        return {name: getattr(self, f"beta_{name}") for name in BETA_NAMES}


@dataclasses.dataclass(frozen=True)
class GroundTruth(object):
    """Latent values behind a generated panel, rows in panel order."""

    truth: TruthConfig
    ct: np.ndarray
    z0: np.ndarray
    z1: np.ndarray
    q: np.ndarray
    errors: np.ndarray

    @property
    def alpha0_subject(self) -> np.ndarray:
        return self.truth.alpha0 + self.truth.lambda0 * self.z0

    @property
    def alpha1_subject(self) -> np.ndarray:
        return self.truth.alpha1 + self.truth.lambda1 * self.z1

    def to_named(self) -> typing.Dict[str, float]:
        """Every true value under the name it carries in the draws file."""
        truth = self.truth
        params = truth.nect_params
        named: typing.Dict[str, float] = {}

        def _put(prefix: str, values: np.ndarray) -> None:
            for index, value in np.ndenumerate(values):
                label = ",".join(str(position + 1) for position in index)
                named[f"{prefix}[{label}]"] = float(value)

        _put("ct", self.ct)
        _put("z0", self.z0)
        _put("z1", self.z1)
        for name in ("alpha0", "alpha1", "lambda0", "lambda1"):
            named[name] = float(getattr(truth, name))
        for name, value in truth.beta.items():
            named[f"beta_{name}"] = float(value)
        named["sigma"] = float(truth.sigma)
        _put("phi", params.mu)
        _put("tau", params.tau)
        _put("nu", params.nu)
        for i in range(truth.n_pipelines):
            for j in range(i + 1):
                named[f"L_R[{i + 1},{j + 1}]"] = float(params.L_R[i, j])
        _put("chisq", self.q * params.nu)
        correlation = params.correlation
        for k in range(truth.n_pipelines):
            for m in range(k):
                named[f"rho[{k + 1},{m + 1}]"] = float(correlation[k, m])
        _put("alpha0_subject", self.alpha0_subject)
        _put("alpha1_subject", self.alpha1_subject)
        return named


def _measurement(
    ct: float, params: NectParams, rng: np.random.Generator
) -> typing.Tuple[np.ndarray, np.ndarray]:
    for _ in range(MAX_REDRAWS):
        error, latents = nect_sample(params, rng)
        if np.all(ct + error > 0):
            return error, latents.q
    raise DomainError(
        f"no positive measurement vector in {MAX_REDRAWS} draws at thickness {ct:.3f}"
    )


def generate(
    truth: TruthConfig = None, seed: int = 1
) -> typing.Tuple[PipelinePanel, GroundTruth]:
    truth = truth or TruthConfig()
    rng = np.random.default_rng(seed)
    params = truth.nect_params
    beta = truth.beta

    z0 = rng.standard_normal(truth.n_subjects)
    z1 = rng.standard_normal(truth.n_subjects)
    alpha0 = truth.alpha0 + truth.lambda0 * z0
    alpha1 = truth.alpha1 + truth.lambda1 * z1

    # ids sort in generation order, so the latents line up with the panel rows
    width = max(4, len(str(truth.n_subjects)))
    rows, cts, qs, errors = [], [], [], []
    for subject in range(truth.n_subjects):
        subject_id = f"S{subject + 1:0{width}d}"
        n_visits = int(rng.integers(truth.visits_min, truth.visits_max + 1))
        gaps = truth.visit_spacing + rng.uniform(
            -truth.visit_jitter, truth.visit_jitter, size=n_visits - 1
        )
        years = np.concatenate([[0.0], np.cumsum(gaps)])
        dx = DIAGNOSES[int(rng.choice(3, p=truth.p_dx))]
        age = float(max(rng.normal(truth.age_mean, truth.age_sd), 1.0))
        male = int(rng.random() < truth.p_male)
        baseline = rng.normal(truth.ct_baseline_mean, truth.ct_baseline_sd)
        slope = rng.normal(truth.ct_slope_mean, truth.ct_slope_sd)

        mci = float(dx is Diagnosis.MCI)
        ad = float(dx is Diagnosis.AD)
        for t in years:
            ct = baseline + slope * t
            error, q = _measurement(ct, params, rng)
            mmse = (
                beta["mci"] * mci
                + beta["ad"] * ad
                + beta["age"] * age
                + beta["male"] * male
                + beta["mci_t"] * mci * t
                + beta["ad_t"] * ad * t
                + beta["ct"] * ct
                + alpha0[subject]
                + alpha1[subject] * t
                + truth.sigma * rng.standard_normal()
            )
            if truth.round_mmse:
                mmse = float(np.round(mmse))
            if truth.clamp_mmse:
                mmse = float(np.clip(mmse, 0.0, 30.0))

            rows.append(
                VisitRow(
                    subject_id=subject_id,
                    years=float(t),
                    age=age,
                    male=male,
                    dx=dx,
                    mmse=float(mmse),
                    ect=tuple(float(value) for value in ct + error),
                )
            )
            cts.append(ct)
            qs.append(q)
            errors.append(error)

    panel = PipelinePanel.from_rows(rows, truth.pipelines)
    logger.info(
        "generated %d visits of %d subjects (seed %d)",
        panel.n_rows,
        panel.n_subjects,
        seed,
    )
    latents = GroundTruth(
        truth=truth,
        ct=np.asarray(cts),
        z0=z0,
        z1=z1,
        q=np.vstack(qs),
        errors=np.vstack(errors),
    )
    return panel, latents


def truth_frame(latents: GroundTruth) -> pd.DataFrame:
    named = latents.to_named()
    return pd.DataFrame({"name": list(named), "value": list(named.values())})


def write_truth(latents: GroundTruth, path: str) -> None:
    truth_frame(latents).to_csv(path, index=False)
