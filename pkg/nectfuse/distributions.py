"""
title: Distributions
module: nectfuse.distributions
description:
    Log densities of the primitive laws of the model and samplers for the
    non-elliptically-contoured t (NECT) error law.
    Every log density is written against autograd.numpy, so the posterior
    can differentiate through it.
"""
import dataclasses
import logging
import math
import typing

import autograd.numpy as np
import numpy as onp
from autograd.scipy.linalg import solve_triangular
from autograd.scipy.special import gammaln
from autograd.tracer import getval

from nectfuse.exceptions import DomainError
from nectfuse.types import RandomStream

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
LOG_2 = math.log(2.0)

FACTOR_TOLERANCE = 1e-8


def _raw(value: typing.Any) -> onp.ndarray:
    return onp.asarray(getval(value), dtype=float)


def _require_finite(name: str, value: typing.Any) -> None:
    if not onp.all(onp.isfinite(_raw(value))):
        raise DomainError(f"`{name}` must be finite")


def _require_positive(name: str, value: typing.Any) -> None:
    raw = _raw(value)
    if not onp.all(onp.isfinite(raw)) or onp.any(raw <= 0):
        raise DomainError(f"`{name}` must be finite and > 0")


def _require_nonnegative(name: str, value: typing.Any) -> None:
    raw = _raw(value)
    if not onp.all(onp.isfinite(raw)) or onp.any(raw < 0):
        raise DomainError(f"`{name}` must be finite and >= 0")


def _as_factor(L_R: typing.Any) -> typing.Any:
    if onp.ndim(getval(L_R)) < 2:
        return np.reshape(L_R, (1, 1))
    return L_R


def check_corr_factor(L_R: typing.Any, tol: float = FACTOR_TOLERANCE) -> None:
    """Raise ``DomainError`` unless ``L_R`` is a Cholesky factor of a correlation matrix."""
    raw = _raw(L_R)
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
        raise DomainError(f"correlation factor must be square, got {raw.shape}")
    if not onp.all(onp.isfinite(raw)):
        raise DomainError("correlation factor must be finite")
    if onp.any(onp.abs(onp.triu(raw, 1)) > tol):
        raise DomainError("correlation factor must be lower triangular")
    if onp.any(onp.diag(raw) <= 0):
        raise DomainError("correlation factor needs a positive diagonal")
    if onp.any(onp.abs(onp.sum(raw**2, axis=1) - 1.0) > tol):
        raise DomainError("correlation factor rows must have unit norm")


@dataclasses.dataclass(frozen=True)
class NectParams(object):
    nu: onp.ndarray
    mu: onp.ndarray
    tau: onp.ndarray
    L_R: onp.ndarray

    def __post_init__(self) -> None:
        for name in ("nu", "mu", "tau"):
            object.__setattr__(
                self, name, onp.atleast_1d(onp.asarray(getattr(self, name), float))
            )
        object.__setattr__(self, "L_R", onp.atleast_2d(onp.asarray(self.L_R, float)))
        size = len(self.mu)
        if len(self.nu) != size or len(self.tau) != size or self.L_R.shape != (
            size,
            size,
        ):
            raise DomainError("nu, mu, tau and L_R dimensions disagree")
        _require_positive("nu", self.nu)
        _require_finite("mu", self.mu)
        _require_positive("tau", self.tau)
        check_corr_factor(self.L_R)

    @classmethod
    def from_correlation(
        cls,
        nu: typing.Sequence[float],
        mu: typing.Sequence[float],
        tau: typing.Sequence[float],
        R: typing.Any = None,
    ) -> "NectParams":
        size = len(mu)
        R = onp.eye(size) if R is None else onp.asarray(R, dtype=float)
        try:
            L_R = onp.linalg.cholesky(R)
        except onp.linalg.LinAlgError:
            raise DomainError("correlation matrix is not positive definite")
        return cls(nu=nu, mu=mu, tau=tau, L_R=L_R)

    @property
    def size(self) -> int:
        return len(self.mu)

    @property
    def correlation(self) -> onp.ndarray:
        return self.L_R @ self.L_R.T

    def subset(self, positions: typing.Sequence[int]) -> "NectParams":
        """Law of the sub-vector; q_k are independent, so the margin is NECT again."""
        positions = list(positions)
        R = self.correlation[onp.ix_(positions, positions)]
        return NectParams.from_correlation(
            self.nu[positions], self.mu[positions], self.tau[positions], R
        )


@dataclasses.dataclass(frozen=True)
class MixingLatents(object):
    q: onp.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "q", onp.asarray(self.q, dtype=float))
        _require_positive("q", self.q)


def normal_logpdf(x: typing.Any, mu: typing.Any, sd: typing.Any) -> typing.Any:
    z = (x - mu) / sd
    return -0.5 * z**2 - np.log(sd) - 0.5 * LOG_2PI


def t_logpdf(x: typing.Any, nu: typing.Any, mu: typing.Any, tau: typing.Any) -> typing.Any:
    _require_finite("x", x)
    _require_finite("mu", mu)
    _require_positive("nu", nu)
    _require_positive("tau", tau)
    z = (x - mu) / tau
    return (
        gammaln(0.5 * (nu + 1.0))
        - gammaln(0.5 * nu)
        - 0.5 * np.log(nu * math.pi)
        - np.log(tau)
        - 0.5 * (nu + 1.0) * np.log1p(z**2 / nu)
    )


def excess_kurtosis(nu: float) -> float:
    if not nu > 4:
        raise DomainError(f"excess kurtosis needs nu > 4, got {nu}")
    return 6.0 / (nu - 4.0)


def halfnormal_logpdf(x: typing.Any, scale: typing.Any) -> typing.Any:
    _require_nonnegative("x", x)
    return LOG_2 + normal_logpdf(x, 0.0, scale)


def exponential_logpdf(x: typing.Any, mean: typing.Any) -> typing.Any:
    """Exponential law parameterized by its mean; the rate is ``1 / mean``."""
    _require_nonnegative("x", x)
    _require_positive("mean", mean)
    rate = 1.0 / mean
    return np.log(rate) - rate * x


def chisq_logpdf(x: typing.Any, nu: typing.Any) -> typing.Any:
    _require_positive("x", x)
    _require_positive("nu", nu)
    return chisq_kernel(x, nu)


def chisq_kernel(x: typing.Any, nu: typing.Any) -> typing.Any:
    half = 0.5 * nu
    return (half - 1.0) * np.log(x) - 0.5 * x - half * LOG_2 - gammaln(half)


def mvn_chol_logpdf(
    y: typing.Any, mu: typing.Any, scale_diag: typing.Any, L_R: typing.Any
) -> typing.Any:
    """Log density of ``N(mu, (D L_R)(D L_R)')`` with ``D = diag(scale_diag)``.

    ``y`` may hold one observation ``(K,)`` or a stack ``(N, K)``; ``scale_diag``
    broadcasts against it, so each row can carry its own scales.
    """
    _require_positive("scale_diag", scale_diag)
    return mvn_chol_kernel(y, mu, scale_diag, L_R)


def mvn_chol_kernel(
    y: typing.Any, mu: typing.Any, scale_diag: typing.Any, L_R: typing.Any
) -> typing.Any:
    L_R = _as_factor(L_R)
    size = onp.shape(getval(L_R))[0]
    w = (y - mu) / scale_diag
    shape = onp.shape(getval(w))
    if len(shape) == 1:
        x = solve_triangular(L_R, w, lower=True)
        quad = np.sum(x**2)
        log_scale = np.sum(np.log(scale_diag) * onp.ones(size))
    else:
        x = solve_triangular(L_R, np.transpose(w), lower=True)
        quad = np.sum(x**2, axis=0)
        log_scale = np.sum(np.log(scale_diag) * onp.ones(shape), axis=1)
    log_det = log_scale + np.sum(np.log(np.diag(L_R)))
    return -0.5 * quad - log_det - 0.5 * size * LOG_2PI


def nect_conditional_logpdf(
    y: typing.Any, params: NectParams, q: typing.Union[MixingLatents, typing.Any]
) -> typing.Any:
    if isinstance(q, MixingLatents):
        q = q.q
    _require_positive("q", q)
    return mvn_chol_logpdf(y, params.mu, params.tau / np.sqrt(q), params.L_R)


def lkj_chol_logpdf(L_R: typing.Any, eta: float, validate: bool = True) -> typing.Any:
    """LKJ(eta) on the Cholesky factor, without its normalizing constant."""
    if validate:
        check_corr_factor(L_R)
    _require_positive("eta", eta)
    L_R = _as_factor(L_R)
    size = onp.shape(getval(L_R))[0]
    if size < 2:
        return 0.0
    rows = onp.arange(2, size + 1)
    coefficients = size - rows + 2.0 * eta - 2.0
    return np.sum(coefficients * np.log(np.diag(L_R)[1:]))


def t_sample(
    nu: typing.Any,
    mu: typing.Any,
    tau: typing.Any,
    rng: RandomStream,
    size: typing.Union[int, typing.Tuple[int, ...]] = None,
) -> onp.ndarray:
    _require_positive("nu", nu)
    _require_positive("tau", tau)
    z = rng.standard_normal(size)
    q = rng.chisquare(nu, size) / nu
    return mu + tau * z / onp.sqrt(q)


def nect_sample(
    params: NectParams, rng: RandomStream, size: int = None
) -> typing.Tuple[onp.ndarray, MixingLatents]:
    """Draw ``y = mu + Q^(-1/2) T L_R z`` together with its mixing latents."""
    shape = (params.size,) if size is None else (size, params.size)
    z = rng.standard_normal(shape)
    q = rng.chisquare(params.nu, shape) / params.nu
    correlated = z @ params.L_R.T
    y = params.mu + params.tau * correlated / onp.sqrt(q)
    return y, MixingLatents(q)
