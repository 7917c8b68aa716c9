"""EM estimation with a belief-propagation E-step, and deregulation scoring."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .builder import build_graph
from .factorgraph import ZeroEvidenceError, run_sum_product
from .model import DeregulationScores, ExpressionMatrix, ModelParams, RegulatoryNetwork

log = logging.getLogger(__name__)

EMPTY_STATE_MASS = 1e-12
SIGMA_FLOOR_FRACTION = 1e-3
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class SampleEvidenceError(ArithmeticError):
    """Zero-probability evidence, tagged with the offending sample ids."""

    def __init__(self, sample_ids, variable):
        self.sample_ids = list(sample_ids)
        self.variable = variable
        super().__init__(f"samples {self.sample_ids} have zero posterior mass (at variable {variable!r})")


@dataclass(frozen=True)
class SampleMarginals:
    """Posterior marginals per sample.

    ``S[i, g, s]`` is q(S_{i,g} = s-1) in network gene order and
    ``D[i, k, d]`` is q(D_{i,k} = d) for the k-th target.
    """

    sample_ids: tuple[str, ...]
    S: np.ndarray
    D: np.ndarray


@dataclass(frozen=True)
class FitConfig:
    passes: int = 10
    damping: float = 0.0
    tol: float = 1e-4
    max_iters: int = 100
    threads: int | None = 1
    init: ModelParams | None = None

    def __post_init__(self):
        if self.passes < 1:
            raise ValueError("passes must be >= 1")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.threads is not None and self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    params: ModelParams
    max_change: float


@dataclass(frozen=True)
class FitResult:
    params: ModelParams
    iterations: int
    trajectory: tuple[IterationRecord, ...] = field(default_factory=tuple)
    converged: bool = False


def _chunks(n: int, parts: int) -> list[np.ndarray]:
    parts = max(1, min(parts, n))
    return [c for c in np.array_split(np.arange(n), parts) if len(c)]


def e_step(
    net: RegulatoryNetwork,
    params: ModelParams,
    data: ExpressionMatrix,
    passes: int = 10,
    damping: float = 0.0,
    threads: int | None = 1,
) -> SampleMarginals:
    """Posterior S and D marginals for every sample; samples are processed independently."""
    x = data.aligned(net)
    n = x.shape[0]
    workers = threads or os.cpu_count() or 1

    def run(rows):
        compiled = build_graph(net, params, x[rows])
        try:
            beliefs = run_sum_product(compiled.graph, passes, damping)
        except ZeroEvidenceError as err:
            bad = [data.sample_ids[rows[b]] for b in err.batch_indices]
            raise SampleEvidenceError(bad, err.variable) from err
        return beliefs.stack(compiled.gene_vars, 3), beliefs.stack(compiled.dereg_vars, 2)

    chunks = _chunks(n, workers)
    if len(chunks) == 1:
        parts = [run(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(run, chunks))
    S = np.concatenate([p[0] for p in parts], axis=0)
    D = np.concatenate([p[1] for p in parts], axis=0)
    return SampleMarginals(data.sample_ids, S, D)


def initial_params(data: ExpressionMatrix) -> ModelParams:
    """Deterministic starting point scaled to the data."""
    values = np.asarray(data.values).ravel()
    mu = np.quantile(values, [0.2, 0.5, 0.8])
    spread = (mu[2] - mu[0]) / 4.0
    if not spread > 0:
        spread = float(values.std()) or 1.0
    return ModelParams((1 / 3, 1 / 3, 1 - 2 / 3), 0.05, tuple(mu), (spread,) * 3)


def sigma_floor(data: ExpressionMatrix) -> float:
    sd = float(np.asarray(data.values).std())
    return SIGMA_FLOOR_FRACTION * sd if sd > 0 else np.finfo(float).tiny


def m_step(
    marginals: SampleMarginals,
    data: ExpressionMatrix,
    net: RegulatoryNetwork,
    previous: ModelParams | None = None,
) -> ModelParams:
    """Closed-form maximiser of the expected complete-data log likelihood.

    States with (numerically) no posterior mass keep their previous mean and
    deviation; sigmas are floored and the three states are relabelled so that
    mu is increasing.
    """
    x = data.aligned(net)
    qS, qD = marginals.S, marginals.D
    if qS.shape != x.shape + (3,):
        raise ValueError("marginals do not match the expression matrix")
    fallback = previous or initial_params(data)

    reg_mass = qS[:, : net.r].sum(axis=(0, 1))
    alpha = reg_mass / reg_mass.sum() if reg_mass.sum() > 0 else np.asarray(fallback.alpha)
    epsilon = float(qD[:, :, 1].mean()) if qD.size else fallback.epsilon

    w = qS.sum(axis=(0, 1))
    mu = np.array(fallback.mu, dtype=float)
    sigma = np.array(fallback.sigma, dtype=float)
    for s in range(3):
        if w[s] < EMPTY_STATE_MASS:
            continue
        q = qS[:, :, s]
        mu[s] = float((q * x).sum() / w[s])
        sigma[s] = float(np.sqrt((q * (x - mu[s]) ** 2).sum() / w[s]))
    sigma = np.maximum(sigma, sigma_floor(data))

    order = np.argsort(mu, kind="stable")
    alpha = alpha[order]
    alpha = alpha / alpha.sum()
    return ModelParams(tuple(alpha), min(max(epsilon, 0.0), 1.0), tuple(mu[order]), tuple(sigma[order]))


def expected_complete_loglik(
    marginals: SampleMarginals, data: ExpressionMatrix, net: RegulatoryNetwork, params: ModelParams
) -> float:
    """Expected complete-data log likelihood written in terms of S and D marginals only."""
    x = data.aligned(net)
    qS, qD = marginals.S, marginals.D
    with np.errstate(divide="ignore"):
        la = np.log(np.asarray(params.alpha))
        ld = np.log(np.array([1.0 - params.epsilon, params.epsilon / 2.0]))
    mu, sigma = np.asarray(params.mu), np.asarray(params.sigma)
    gauss = -np.log(sigma) - _LOG_SQRT_2PI - (x[..., None] - mu) ** 2 / (2 * sigma**2)

    def dot(q, logp):
        return float(np.sum(np.where(q > 0, q * logp, 0.0)))

    return dot(qS[:, : net.r], la) + dot(qD, ld) + dot(qS, gauss)


def fit(net: RegulatoryNetwork, data: ExpressionMatrix, config: FitConfig | None = None) -> FitResult:
    """Alternate E- and M-steps until the largest parameter change drops below ``config.tol``."""
    config = config or FitConfig()
    params = config.init or initial_params(data)
    trajectory: list[IterationRecord] = []
    converged = False
    for it in range(1, config.max_iters + 1):
        marg = e_step(net, params, data, config.passes, config.damping, config.threads)
        new = m_step(marg, data, net, previous=params)
        change = new.max_abs_change(params)
        trajectory.append(IterationRecord(it, new, change))
        log.debug("iteration %d max change %.3g", it, change)
        params = new
        if change < config.tol:
            converged = True
            break
    if not converged:
        log.warning("EM stopped after %d iterations without converging", config.max_iters)
    return FitResult(params, len(trajectory), tuple(trajectory), converged)


def score(
    net: RegulatoryNetwork,
    params: ModelParams,
    data: ExpressionMatrix,
    passes: int = 10,
    damping: float = 0.0,
    threads: int | None = 1,
) -> DeregulationScores:
    """Posterior deregulation probabilities q(D=1) from one E-step."""
    marg = e_step(net, params, data, passes, damping, threads)
    return DeregulationScores(data.sample_ids, net.targets, marg.D[:, :, 1])
