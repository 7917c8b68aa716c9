"""Brute-force exact inference for small instances.

Nothing here goes through the factor-graph compiler: configurations are
enumerated and scored directly from the generative model, so the results
can be used to check the compiler, the belief-propagation engine and the
M-step.

A hidden configuration is a row ``(S_reg..., D_target..., S_target...)``;
the collective and truth-table states are deterministic functions of the
regulator states and are recomputed on the fly.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .factorgraph import FactorGraph
from .model import ModelParams, RegulatoryNetwork, truth_table

MAX_CONFIGURATIONS = 10**7
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class EnumerationTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class JointEnumeration:
    """Hidden configurations with log weights (unnormalised joint with x).

    ``log_normalizer`` is the log of the summed weights; for a posterior this
    is the log marginal likelihood ``log p(x | theta)``.
    """

    configs: np.ndarray
    log_weights: np.ndarray

    @property
    def log_normalizer(self) -> float:
        return float(logsumexp(self.log_weights))

    @property
    def normalizer(self) -> float:
        return float(np.exp(self.log_normalizer))

    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_weights - self.log_normalizer)

    @classmethod
    def point_mass(cls, config) -> "JointEnumeration":
        return cls(np.asarray(config, dtype=int)[None, :], np.zeros(1))


@dataclass(frozen=True)
class ExactMarginals:
    S: np.ndarray  # (r+t, 3), network gene order
    D: np.ndarray  # (t, 2)
    SA: np.ndarray  # (t, 3)
    SI: np.ndarray
    SR: np.ndarray
    log_likelihood: float


def configuration_count(net: RegulatoryNetwork) -> int:
    return 3**net.r * 2**net.t * 3**net.t


def enumerate_configurations(net: RegulatoryNetwork) -> np.ndarray:
    n = configuration_count(net)
    if n > MAX_CONFIGURATIONS:
        raise EnumerationTooLarge(f"{n} hidden configurations exceed the limit {MAX_CONFIGURATIONS}")
    axes = [(-1, 0, 1)] * net.r + [(0, 1)] * net.t + [(-1, 0, 1)] * net.t
    return np.array(list(itertools.product(*axes)), dtype=int).reshape(n, net.r + 2 * net.t)


_TRUTH_LOOKUP = np.array([[truth_table(a, i) for i in (-1, 0, 1)] for a in (-1, 0, 1)])


def _collective(states: np.ndarray) -> np.ndarray:
    """Row-wise collective state of an (N, k) array; 0 when k == 0."""
    if states.shape[1] == 0:
        return np.zeros(states.shape[0], dtype=int)
    up = np.all(states == 1, axis=1)
    down = np.all(states == -1, axis=1)
    return up.astype(int) - down.astype(int)


def derived_states(net: RegulatoryNetwork, configs: np.ndarray):
    """Collective activator, inhibitor and truth-table states, each (N, t)."""
    col = {g: k for k, g in enumerate(net.regulators)}
    sa = np.column_stack([_collective(configs[:, [col[x] for x in net.activators[g]]]) for g in net.targets])
    si = np.column_stack([_collective(configs[:, [col[x] for x in net.inhibitors[g]]]) for g in net.targets])
    sr = _TRUTH_LOOKUP[sa + 1, si + 1]
    return sa, si, sr


def log_joint(net: RegulatoryNetwork, params: ModelParams, row, configs: np.ndarray) -> np.ndarray:
    """``log p(x, Z | theta)`` for each configuration Z (full Gaussian density)."""
    configs = np.atleast_2d(np.asarray(configs, dtype=int))
    x = np.asarray(row, dtype=float)
    r, t = net.r, net.t
    reg = configs[:, :r]
    d = configs[:, r : r + t]
    s_t = configs[:, r + t :]
    _, _, sr = derived_states(net, configs)
    with np.errstate(divide="ignore"):
        log_alpha = np.log(np.asarray(params.alpha))
        log_keep = np.log(1.0 - params.epsilon)
        log_flip = np.log(params.epsilon / 2.0)
    out = log_alpha[reg + 1].sum(axis=1)
    consistent = np.where(d == 0, s_t == sr, s_t != sr)
    target_term = np.where(d == 0, log_keep, log_flip)
    out = out + np.where(consistent, target_term, -np.inf).sum(axis=1)
    states = np.concatenate([reg, s_t], axis=1) + 1
    mu = np.asarray(params.mu)[states]
    sigma = np.asarray(params.sigma)[states]
    out = out + (-np.log(sigma) - _LOG_SQRT_2PI - (x[None, :] - mu) ** 2 / (2.0 * sigma**2)).sum(axis=1)
    return out


def exact_posterior(net: RegulatoryNetwork, params: ModelParams, row) -> JointEnumeration:
    configs = enumerate_configurations(net)
    return JointEnumeration(configs, log_joint(net, params, row, configs))


def marginals_from_enumeration(net: RegulatoryNetwork, post: JointEnumeration) -> ExactMarginals:
    p = post.probabilities()
    r, t = net.r, net.t
    c = post.configs
    sa, si, sr = derived_states(net, c)
    genes = np.concatenate([c[:, :r], c[:, r + t :]], axis=1)

    def tern(states):
        return np.stack([(p[:, None] * (states == s)).sum(axis=0) for s in (-1, 0, 1)], axis=-1)

    d = c[:, r : r + t]
    D = np.stack([(p[:, None] * (d == v)).sum(axis=0) for v in (0, 1)], axis=-1)
    return ExactMarginals(tern(genes), D, tern(sa), tern(si), tern(sr), post.log_normalizer)


def exact_marginals(net: RegulatoryNetwork, params: ModelParams, expression_row) -> ExactMarginals:
    """Exact posterior marginals of every hidden state given one expression row."""
    row = np.asarray(expression_row, dtype=float)
    if row.shape != (len(net.genes),):
        raise ValueError("expression_row must be aligned to the network gene order")
    return marginals_from_enumeration(net, exact_posterior(net, params, row))


class CompleteLoglik:
    """``theta -> sum_i sum_Z q_i(Z) log p(x_i, Z | theta)`` for fixed data and q.

    Configurations with q(Z) > 0 are enumerated once; evaluation then takes
    raw parameter arrays (no ordering or simplex checks) so that numerical
    optimisers can probe any point.
    """

    def __init__(self, net: RegulatoryNetwork, data, q):
        x = data.aligned(net) if hasattr(data, "aligned") else np.asarray(data, dtype=float)
        if len(q) != x.shape[0]:
            raise ValueError("need one distribution per sample")
        r, t = net.r, net.t
        weights, reg, dereg, consistent, states, xs = [], [], [], [], [], []
        for row, qi in zip(x, q):
            probs = qi.probabilities()
            keep = probs > 0
            c = qi.configs[keep]
            _, _, sr = derived_states(net, c)
            d, s_t = c[:, r : r + t], c[:, r + t :]
            weights.append(probs[keep])
            reg.append(c[:, :r] + 1)
            dereg.append(d)
            consistent.append(np.where(d == 0, s_t == sr, s_t != sr).all(axis=1))
            states.append(np.concatenate([c[:, :r], s_t], axis=1) + 1)
            xs.append(np.broadcast_to(row, (len(c), len(row))))
        self.w = np.concatenate(weights)
        self.reg = np.concatenate(reg)
        self.dereg = np.concatenate(dereg)
        self.consistent = np.concatenate(consistent)
        self.states = np.concatenate(states)
        self.x = np.concatenate(xs)

    def __call__(self, alpha, epsilon, mu, sigma) -> float:
        if not np.all(self.consistent):
            return -np.inf
        alpha, mu, sigma = (np.asarray(v, dtype=float) for v in (alpha, mu, sigma))
        with np.errstate(divide="ignore", invalid="ignore"):
            per = np.log(alpha)[self.reg].sum(axis=1)
            n_flip = self.dereg.sum(axis=1)
            n_keep = self.dereg.shape[1] - n_flip
            per = per + np.where(n_keep > 0, n_keep * np.log1p(-epsilon), 0.0)
            per = per + np.where(n_flip > 0, n_flip * np.log(epsilon / 2.0), 0.0)
            m, sd = mu[self.states], sigma[self.states]
            per = per + (-np.log(sd) - _LOG_SQRT_2PI - (self.x - m) ** 2 / (2.0 * sd**2)).sum(axis=1)
        return float(np.sum(self.w * per))


def exact_expected_complete_loglik(net: RegulatoryNetwork, params: ModelParams, data, q) -> float:
    """``sum_i sum_Z q_i(Z) log p(x_i, Z | theta)`` by enumeration.

    `data` is an ``(n, r+t)`` array in network gene order (or an
    ExpressionMatrix) and `q` a sequence of per-sample
    :class:`JointEnumeration` distributions.
    """
    x = data.aligned(net) if hasattr(data, "aligned") else np.asarray(data, dtype=float)
    if len(q) != x.shape[0]:
        raise ValueError("need one distribution per sample")
    total = 0.0
    for row, qi in zip(x, q):
        probs = qi.probabilities()
        keep = probs > 0
        lj = log_joint(net, params, row, qi.configs[keep])
        total += float(np.sum(probs[keep] * lj))
    return total


def exact_log_likelihood(net: RegulatoryNetwork, params: ModelParams, data) -> float:
    """Observed-data log likelihood ``sum_i log p(x_i | theta)``."""
    x = data.aligned(net) if hasattr(data, "aligned") else np.asarray(data, dtype=float)
    configs = enumerate_configurations(net)
    return float(sum(logsumexp(log_joint(net, params, row, configs)) for row in x))


def enumerate_factor_graph(graph: FactorGraph) -> dict:
    """Exact marginals of an unbatched factor graph by building the full joint table."""
    if graph.batch_size is not None:
        raise ValueError("enumeration supports unbatched graphs only")
    ids = list(graph.variables)
    axis = {v: k for k, v in enumerate(ids)}
    cards = [graph.variables[v].cardinality for v in ids]
    if int(np.prod(cards, dtype=float)) > MAX_CONFIGURATIONS:
        raise EnumerationTooLarge("factor graph too large to enumerate")
    joint = np.ones(cards)
    for f in graph.factors:
        order = np.argsort([axis[v] for v in f.scope])
        table = np.transpose(f.table, order)
        shape = [1] * len(ids)
        for v in f.scope:
            shape[axis[v]] = cards[axis[v]]
        joint = joint * table.reshape(shape)
    z = joint.sum()
    if z <= 0:
        raise ZeroDivisionError("factor graph assigns zero mass to every configuration")
    out = {}
    for v in ids:
        others = tuple(k for k in range(len(ids)) if k != axis[v])
        out[v] = joint.sum(axis=others) / z
    return out
