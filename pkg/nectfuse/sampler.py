"""
title: Sampler
module: nectfuse.sampler
description:
    No-U-Turn Hamiltonian Monte Carlo on an unconstrained target.

    Trajectories grow by doubling in a random direction; the retained point
    is drawn multinomially with weights ``exp(-H)``, biased towards the newest
    subtree at the top level. Expansion stops on the generalized no-U-turn
    criterion, on a divergence or at ``max_tree_depth``.

    Warmup adapts the step size by dual averaging throughout and re-estimates
    a diagonal inverse metric at the end of each slow window.
"""
import dataclasses
import functools
import logging
import math
import typing

import numpy as np

from nectfuse.concurrency import run_parallel
from nectfuse.config import ConfigSection
from nectfuse.datastructures import DrawsMatrix, SamplerStats
from nectfuse.exceptions import (
    AdaptationError,
    ConfigError,
    DomainError,
    InitializationError,
)
from nectfuse.types import Array, Constrain, RandomStream, ValueAndGrad

logger = logging.getLogger(__name__)

MAX_ENERGY_ERROR = 1000.0
MAX_INIT_ATTEMPTS = 100
MIN_ADAPTATION_WARMUP = 20
BASE_WINDOW = 25
INIT_BUFFER_RATIO = 0.15
TERM_BUFFER_RATIO = 0.10


@dataclasses.dataclass(frozen=True)
class SamplerConfig(ConfigSection):
    n_chains: int = 4
    n_warmup: int = 1000
    n_iterations: int = 1000
    thin: int = 1
    target_accept: float = 0.8
    max_tree_depth: int = 10
    seed: int = 1
    init_radius: float = 2.0
    progress_every: int = 0
    max_workers: int = 1

    def __post_init__(self) -> None:
        checks = [
            ("n_chains", self.n_chains >= 1),
            ("n_warmup", self.n_warmup >= 0),
            ("n_iterations", self.n_iterations >= 1),
            ("thin", self.thin >= 1),
            ("target_accept", 0.0 < self.target_accept < 1.0),
            ("max_tree_depth", self.max_tree_depth >= 1),
            ("seed", 0 <= self.seed < 2**64),
            ("init_radius", self.init_radius > 0),
            ("progress_every", self.progress_every >= 0),
            ("max_workers", self.max_workers >= 1),
        ]
        for key, valid in checks:
            if not valid:
                raise ConfigError(
                    f"sampler setting `{key}` = {getattr(self, key)!r} is out of range",
                    key=key,
                )

    @property
    def n_retained(self) -> int:
        """Retained draws per chain."""
        return self.n_iterations // self.thin


def chain_stream(seed: int, chain: int) -> RandomStream:
    """Independent stream of one chain, fixed by ``(seed, chain)`` alone."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(chain,)))


@dataclasses.dataclass(frozen=True)
class PhasePoint(object):
    position: Array
    momentum: Array
    logp: float
    grad: Array

    def kinetic(self, inv_metric: Array) -> float:
        return 0.5 * float(np.sum(inv_metric * self.momentum**2))

    def hamiltonian(self, inv_metric: Array) -> float:
        if not math.isfinite(self.logp):
            return math.inf
        value = -self.logp + self.kinetic(inv_metric)
        return value if math.isfinite(value) else math.inf


def evaluate(target: ValueAndGrad, position: Array) -> typing.Tuple[float, Array]:
    """``target`` at ``position``; any failure comes back as ``-inf``."""
    try:
        logp, grad = target(position)
        logp = float(logp)
        grad = np.asarray(grad, dtype=float)
    except (FloatingPointError, OverflowError, ZeroDivisionError, DomainError):
        return -math.inf, np.full(position.shape, np.nan)
    if not math.isfinite(logp) or not np.all(np.isfinite(grad)):
        return -math.inf, grad
    return logp, grad


def leapfrog(
    point: PhasePoint, step: float, target: ValueAndGrad, inv_metric: Array = None
) -> PhasePoint:
    if inv_metric is None:
        inv_metric = np.ones_like(point.position)
    momentum = point.momentum + 0.5 * step * point.grad
    position = point.position + step * inv_metric * momentum
    logp, grad = evaluate(target, position)
    if math.isfinite(logp):
        momentum = momentum + 0.5 * step * grad
    return PhasePoint(position, momentum, logp, grad)


@dataclasses.dataclass
class Subtree(object):
    valid: bool
    outer: PhasePoint
    proposal: PhasePoint
    log_sum_weight: float
    rho: Array
    p_sharp_inner: Array
    p_sharp_outer: Array
    p_inner: Array
    p_outer: Array
    n_leapfrog: int
    sum_accept: float
    divergent: bool


def _no_u_turn(p_sharp_minus: Array, p_sharp_plus: Array, rho: Array) -> bool:
    return float(p_sharp_plus @ rho) > 0 and float(p_sharp_minus @ rho) > 0


class NutsKernel(object):
    """One chain's transition kernel under a fixed metric."""

    def __init__(
        self,
        target: ValueAndGrad,
        inv_metric: Array,
        step_size: float,
        max_tree_depth: int,
        rng: RandomStream,
    ) -> None:
        self.target = target
        self.inv_metric = inv_metric
        self.step_size = step_size
        self.max_tree_depth = max_tree_depth
        self.rng = rng

    def sample_momentum(self, position: Array) -> Array:
        return self.rng.standard_normal(position.shape) / np.sqrt(self.inv_metric)

    def _leaf(self, point: PhasePoint, sign: int, H0: float) -> Subtree:
        point = leapfrog(point, sign * self.step_size, self.target, self.inv_metric)
        H = point.hamiltonian(self.inv_metric)
        divergent = H - H0 > MAX_ENERGY_ERROR
        p_sharp = self.inv_metric * point.momentum
        return Subtree(
            valid=not divergent,
            outer=point,
            proposal=point,
            log_sum_weight=H0 - H,
            rho=point.momentum.copy(),
            p_sharp_inner=p_sharp,
            p_sharp_outer=p_sharp,
            p_inner=point.momentum,
            p_outer=point.momentum,
            n_leapfrog=1,
            sum_accept=1.0 if H0 - H > 0 else math.exp(H0 - H),
            divergent=divergent,
        )

    def build_tree(self, point: PhasePoint, depth: int, sign: int, H0: float) -> Subtree:
        if depth == 0:
            return self._leaf(point, sign, H0)

        inner = self.build_tree(point, depth - 1, sign, H0)
        if not inner.valid:
            return inner
        outer = self.build_tree(inner.outer, depth - 1, sign, H0)
        n_leapfrog = inner.n_leapfrog + outer.n_leapfrog
        sum_accept = inner.sum_accept + outer.sum_accept
        if not outer.valid:
            outer.n_leapfrog = n_leapfrog
            outer.sum_accept = sum_accept
            return outer

        log_sum_weight = np.logaddexp(inner.log_sum_weight, outer.log_sum_weight)
        if outer.log_sum_weight > log_sum_weight:
            proposal = outer.proposal
        elif self.rng.uniform() < math.exp(outer.log_sum_weight - log_sum_weight):
            proposal = outer.proposal
        else:
            proposal = inner.proposal

        rho = inner.rho + outer.rho
        valid = (
            _no_u_turn(inner.p_sharp_inner, outer.p_sharp_outer, rho)
            and _no_u_turn(
                inner.p_sharp_inner, outer.p_sharp_inner, inner.rho + outer.p_inner
            )
            and _no_u_turn(
                inner.p_sharp_outer, outer.p_sharp_outer, outer.rho + inner.p_outer
            )
        )
        return Subtree(
            valid=valid,
            outer=outer.outer,
            proposal=proposal,
            log_sum_weight=float(log_sum_weight),
            rho=rho,
            p_sharp_inner=inner.p_sharp_inner,
            p_sharp_outer=outer.p_sharp_outer,
            p_inner=inner.p_inner,
            p_outer=outer.p_outer,
            n_leapfrog=n_leapfrog,
            sum_accept=sum_accept,
            divergent=False,
        )

    def transition(self, position: Array, logp: float, grad: Array) -> typing.Tuple[
        PhasePoint, typing.Dict[str, typing.Any]
    ]:
        start = PhasePoint(position, self.sample_momentum(position), logp, grad)
        H0 = start.hamiltonian(self.inv_metric)
        p_sharp = self.inv_metric * start.momentum

        # ends of the trajectory: forward and backward, each with the momentum
        # at its outer edge and at the edge facing the other end
        forward = backward = start
        p_fwd_outer = p_fwd_inner = p_bwd_outer = p_bwd_inner = start.momentum
        sharp_fwd_outer = sharp_fwd_inner = sharp_bwd_outer = sharp_bwd_inner = p_sharp
        rho = start.momentum.copy()

        sample = start
        log_sum_weight = 0.0
        depth = 0
        n_leapfrog = 0
        sum_accept = 0.0
        divergent = False

        while depth < self.max_tree_depth:
            if self.rng.uniform() > 0.5:
                rho_bwd, p_bwd_inner, sharp_bwd_inner = rho, p_fwd_outer, sharp_fwd_outer
                subtree = self.build_tree(forward, depth, 1, H0)
                forward = subtree.outer
                rho_fwd = subtree.rho
                p_fwd_inner, p_fwd_outer = subtree.p_inner, subtree.p_outer
                sharp_fwd_inner, sharp_fwd_outer = (
                    subtree.p_sharp_inner,
                    subtree.p_sharp_outer,
                )
            else:
                rho_fwd, p_fwd_inner, sharp_fwd_inner = rho, p_bwd_outer, sharp_bwd_outer
                subtree = self.build_tree(backward, depth, -1, H0)
                backward = subtree.outer
                rho_bwd = subtree.rho
                p_bwd_inner, p_bwd_outer = subtree.p_inner, subtree.p_outer
                sharp_bwd_inner, sharp_bwd_outer = (
                    subtree.p_sharp_inner,
                    subtree.p_sharp_outer,
                )

            n_leapfrog += subtree.n_leapfrog
            sum_accept += subtree.sum_accept
            if not subtree.valid:
                divergent = subtree.divergent
                break
            depth += 1

            if subtree.log_sum_weight > log_sum_weight:
                sample = subtree.proposal
            elif self.rng.uniform() < math.exp(subtree.log_sum_weight - log_sum_weight):
                sample = subtree.proposal
            log_sum_weight = float(np.logaddexp(log_sum_weight, subtree.log_sum_weight))

            rho = rho_bwd + rho_fwd
            persist = (
                _no_u_turn(sharp_bwd_outer, sharp_fwd_outer, rho)
                and _no_u_turn(sharp_bwd_outer, sharp_fwd_inner, rho_bwd + p_fwd_inner)
                and _no_u_turn(sharp_bwd_inner, sharp_fwd_outer, rho_fwd + p_bwd_inner)
            )
            if not persist:
                break

        stats = {
            "tree_depth": depth,
            "divergent": divergent,
            "step_size": self.step_size,
            "energy": sample.hamiltonian(self.inv_metric),
            "accept_stat": sum_accept / n_leapfrog if n_leapfrog else 0.0,
            "n_leapfrog": n_leapfrog,
            "max_depth_hit": depth >= self.max_tree_depth,
        }
        return sample, stats


def find_reasonable_step_size(
    target: ValueAndGrad,
    position: Array,
    inv_metric: Array,
    rng: RandomStream,
    step_size: float = 1.0,
    accept: float = 0.5,
    min_step: float = 1e-8,
    max_step: float = 1e7,
) -> float:
    """Double or halve the step until one leapfrog step crosses ``accept``."""
    logp, grad = evaluate(target, position)
    momentum = rng.standard_normal(position.shape) / np.sqrt(inv_metric)
    start = PhasePoint(position, momentum, logp, grad)
    H0 = start.hamiltonian(inv_metric)
    log_accept = math.log(accept)

    def _log_ratio(step: float) -> float:
        point = leapfrog(start, step, target, inv_metric)
        return H0 - point.hamiltonian(inv_metric)

    direction = 1 if _log_ratio(step_size) > log_accept else -1
    while min_step < step_size < max_step:
        candidate = step_size * 2.0**direction
        log_ratio = _log_ratio(candidate)
        if direction > 0 and not log_ratio > log_accept:
            break
        if direction < 0 and log_ratio > log_accept:
            step_size = candidate
            break
        step_size = candidate
    return float(np.clip(step_size, min_step, max_step))


class DualAveraging(object):
    def __init__(
        self,
        step_size: float,
        target_accept: float,
        gamma: float = 0.05,
        t0: float = 10.0,
        kappa: float = 0.75,
    ) -> None:
        self.target_accept = target_accept
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.restart(step_size)

    def restart(self, step_size: float) -> None:
        self.mu = math.log(10.0 * step_size)
        self.log_step = math.log(step_size)
        self.log_step_bar = 0.0
        self.h_bar = 0.0
        self.counter = 0

    def update(self, accept_stat: float) -> float:
        self.counter += 1
        accept_stat = min(1.0, accept_stat)
        eta = 1.0 / (self.counter + self.t0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target_accept - accept_stat)
        self.log_step = self.mu - math.sqrt(self.counter) / self.gamma * self.h_bar
        weight = self.counter ** (-self.kappa)
        self.log_step_bar = weight * self.log_step + (1.0 - weight) * self.log_step_bar
        return math.exp(self.log_step)

    @property
    def step_size(self) -> float:
        return math.exp(self.log_step)

    @property
    def final_step_size(self) -> float:
        return math.exp(self.log_step_bar)


class WelfordVariance(object):
    def __init__(self, dim: int) -> None:
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def update(self, x: Array) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + delta * (x - self.mean)

    def regularized_variance(self) -> Array:
        n = self.count
        variance = self.m2 / (n - 1)
        return (n / (n + 5.0)) * variance + 1e-3 * (5.0 / (n + 5.0))


def warmup_windows(n_warmup: int) -> typing.List[typing.Tuple[int, int]]:
    """Slow windows ``(start, end)`` of the warmup; the metric is updated at each ``end``."""
    if n_warmup < MIN_ADAPTATION_WARMUP:
        return []
    init_buffer = int(INIT_BUFFER_RATIO * n_warmup)
    slow_end = n_warmup - int(TERM_BUFFER_RATIO * n_warmup)
    if slow_end <= init_buffer:
        return []

    windows = []
    start = init_buffer
    size = min(BASE_WINDOW, slow_end - init_buffer)
    while start < slow_end:
        end = start + size
        if end + 2 * size > slow_end:
            end = slow_end
        windows.append((start, end))
        start = end
        size *= 2
    return windows


def initial_point(
    target: ValueAndGrad,
    dim: int,
    rng: RandomStream,
    radius: float,
    center: Array = None,
) -> typing.Tuple[Array, float, Array]:
    center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    for attempt in range(MAX_INIT_ATTEMPTS):
        position = center + rng.uniform(-radius, radius, size=dim)
        logp, grad = evaluate(target, position)
        if math.isfinite(logp):
            return position, logp, grad
        logger.debug("initial point %d is not finite, retrying", attempt + 1)
    raise InitializationError(
        f"no finite initial point in {MAX_INIT_ATTEMPTS} attempts "
        f"within radius {radius}"
    )


@dataclasses.dataclass
class ChainResult(object):
    chain: int
    draws: Array
    iteration: Array
    stats: SamplerStats
    step_size: float
    inv_metric: Array


def run_chain(
    target: ValueAndGrad,
    dim: int,
    cfg: SamplerConfig,
    chain: int,
    constrain: Constrain,
    init_center: Array = None,
) -> ChainResult:
    rng = chain_stream(cfg.seed, chain)
    position, logp, grad = initial_point(target, dim, rng, cfg.init_radius, init_center)
    inv_metric = np.ones(dim)
    step_size = find_reasonable_step_size(target, position, inv_metric, rng)
    kernel = NutsKernel(target, inv_metric, step_size, cfg.max_tree_depth, rng)
    averaging = DualAveraging(step_size, cfg.target_accept)

    windows = warmup_windows(cfg.n_warmup)
    window_ends = {end for _, end in windows}
    slow_start, slow_end = (windows[0][0], windows[-1][1]) if windows else (0, 0)
    variance = WelfordVariance(dim)
    n_divergent = 0

    for iteration in range(cfg.n_warmup):
        kernel.step_size = averaging.step_size
        point, stats = kernel.transition(position, logp, grad)
        position, logp, grad = point.position, point.logp, point.grad
        n_divergent += stats["divergent"]
        averaging.update(stats["accept_stat"])

        if slow_start <= iteration < slow_end:
            variance.update(position)
        if iteration + 1 in window_ends:
            kernel.inv_metric = variance.regularized_variance()
            variance = WelfordVariance(dim)
            step_size = find_reasonable_step_size(
                target, position, kernel.inv_metric, rng, averaging.step_size
            )
            averaging.restart(step_size)
            logger.debug(
                "chain %d: metric updated at warmup iteration %d", chain, iteration + 1
            )
        _progress(cfg, chain, iteration, "warmup")

    if cfg.n_warmup and n_divergent == cfg.n_warmup:
        raise AdaptationError(
            f"chain {chain}: every one of {cfg.n_warmup} warmup iterations diverged"
        )
    if cfg.n_warmup:
        kernel.step_size = averaging.final_step_size
    logger.info("chain %d: warmup done, step size %.4g", chain, kernel.step_size)

    rows, kept, records = [], [], []
    for iteration in range(cfg.n_iterations):
        point, stats = kernel.transition(position, logp, grad)
        position, logp, grad = point.position, point.logp, point.grad
        if (iteration + 1) % cfg.thin == 0:
            rows.append(np.asarray(constrain(position), dtype=float))
            kept.append(iteration + 1)
            records.append(stats)
        _progress(cfg, chain, iteration, "sampling")

    stats = SamplerStats(
        tree_depth=np.array([record["tree_depth"] for record in records], dtype=int),
        divergent=np.array([record["divergent"] for record in records], dtype=bool),
        step_size=np.array([record["step_size"] for record in records], dtype=float),
        energy=np.array([record["energy"] for record in records], dtype=float),
        accept_stat=np.array([record["accept_stat"] for record in records], dtype=float),
        n_leapfrog=np.array([record["n_leapfrog"] for record in records], dtype=int),
        max_depth_hit=np.array(
            [record["max_depth_hit"] for record in records], dtype=bool
        ),
    )
    return ChainResult(
        chain=chain,
        draws=np.vstack(rows) if rows else np.zeros((0, len(constrain(position)))),
        iteration=np.array(kept, dtype=int),
        stats=stats,
        step_size=kernel.step_size,
        inv_metric=kernel.inv_metric,
    )


def _progress(cfg: SamplerConfig, chain: int, iteration: int, phase: str) -> None:
    if cfg.progress_every and (iteration + 1) % cfg.progress_every == 0:
        logger.info("chain %d: %s iteration %d", chain, phase, iteration + 1)


def nuts_run(
    target: ValueAndGrad,
    dim: int,
    cfg: SamplerConfig = None,
    constrain: Constrain = None,
    names: typing.Sequence[str] = None,
    init_center: Array = None,
) -> DrawsMatrix:
    """Run ``cfg.n_chains`` chains of NUTS and gather their retained draws.

    ``target`` maps an unconstrained point to ``(log density, gradient)``;
    ``constrain`` maps a retained point to the row stored in the draws.
    """
    cfg = cfg or SamplerConfig()
    constrain = constrain or np.copy
    if names is None:
        names = [f"x[{index + 1}]" for index in range(dim)]

    calls = [
        functools.partial(run_chain, target, dim, cfg, chain, constrain, init_center)
        for chain in range(1, cfg.n_chains + 1)
    ]
    results = run_parallel(calls, max_workers=cfg.max_workers)

    divergent = sum(int(result.stats.divergent.sum()) for result in results)
    if divergent:
        logger.warning(
            "%d of %d retained draws diverged",
            divergent,
            cfg.n_chains * cfg.n_retained,
        )
    return DrawsMatrix(
        names=tuple(names),
        draws=np.vstack([result.draws for result in results]),
        chain_id=np.concatenate(
            [np.full(len(result.draws), result.chain, dtype=int) for result in results]
        ),
        iteration=np.concatenate([result.iteration for result in results]),
        sampler_stats=SamplerStats.concatenate([result.stats for result in results]),
    )
