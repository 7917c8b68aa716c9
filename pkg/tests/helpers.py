"""Shared instance generators and oracle comparisons for the test suite."""
from __future__ import annotations

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit, softmax

from deregnet.builder import build_sample_graph
from deregnet.em import SampleMarginals
from deregnet.factorgraph import FactorGraph, run_sum_product
from deregnet.model import ExpressionMatrix, ModelParams, RegulatoryNetwork
from deregnet.oracle import exact_marginals, exact_posterior, marginals_from_enumeration
from deregnet.simulate import sample_ids, tree_network


def random_params(rng: np.random.Generator, eps_low: float = 0.02, eps_high: float = 0.4) -> ModelParams:
    mu = np.sort(rng.normal([-1.0, 0.0, 1.0], 0.3))
    return ModelParams(
        tuple(rng.dirichlet([2.0, 2.0, 2.0])),
        float(rng.uniform(eps_low, eps_high)),
        tuple(mu),
        tuple(rng.uniform(0.2, 1.0, 3)),
    )


def random_tree_instance(rng: np.random.Generator, max_targets: int = 3, max_regs: int = 4):
    """Tree-structured network (<= `max_regs` regulators in total), random params and evidence row."""
    while True:
        net = tree_network(int(rng.integers(1, max_targets + 1)), 3, int(rng.integers(2**31)))
        if net.r <= max_regs:
            break
    params = random_params(rng)
    row = rng.normal(0.0, 1.2, len(net.genes))
    return net, params, row


def bp_oracle_error(net: RegulatoryNetwork, params: ModelParams, row, passes: int = 12) -> float:
    """Largest absolute gap between BP and enumeration marginals over every S and D variable."""
    compiled = build_sample_graph(net, params, row)
    beliefs = run_sum_product(compiled.graph, passes=passes)
    exact = exact_marginals(net, params, row)
    s_err = np.abs(beliefs.stack(compiled.gene_vars, 3)[0] - exact.S).max()
    d_err = np.abs(beliefs.stack(compiled.dereg_vars, 2)[0] - exact.D).max()
    return float(max(s_err, d_err))


def exact_sample_marginals(net: RegulatoryNetwork, params: ModelParams, x: np.ndarray):
    """Exact posteriors for every row of `x`, as (list of JointEnumeration, SampleMarginals)."""
    q = [exact_posterior(net, params, row) for row in x]
    ms = [marginals_from_enumeration(net, qi) for qi in q]
    marg = SampleMarginals(sample_ids(len(x)), np.stack([m.S for m in ms]), np.stack([m.D for m in ms]))
    return q, marg


def as_matrix(net: RegulatoryNetwork, x: np.ndarray) -> ExpressionMatrix:
    return ExpressionMatrix(sample_ids(len(x)), net.genes, x)


# unconstrained coordinates for numerical maximisation over the parameter space


def pack(alpha, epsilon, mu, sigma) -> np.ndarray:
    la = np.log(alpha)
    return np.r_[la[1:] - la[0], logit(epsilon), mu, np.log(sigma)]


def unpack(z: np.ndarray):
    return softmax(np.r_[0.0, z[:2]]), float(expit(z[2])), np.asarray(z[3:6]), np.exp(z[6:9])


def numerical_maximiser(objective, start: np.ndarray) -> np.ndarray:
    """Two rounds of Powell's method on ``-objective`` in unconstrained coordinates."""
    f = lambda z: -objective(*unpack(z))  # noqa: E731
    opts = dict(xtol=1e-12, ftol=1e-15, maxfev=200_000)
    z = minimize(f, start, method="Powell", options=opts).x
    z = minimize(f, z, method="Powell", options=opts).x
    a, e, mu, s = unpack(z)
    return np.r_[a, e, mu, s]


def random_factor_tree(
    rng: np.random.Generator, n_vars: int, batch: int | None = None, max_new: int = 2, unary: bool = True
) -> FactorGraph:
    """Random acyclic factor graph: factors of degree <= 3 attach each new variable group to the tree."""
    g = FactorGraph(batch_size=batch)
    cards = rng.integers(2, 4, n_vars)
    for v in range(n_vars):
        g.add_variable(v, int(cards[v]))

    def table(scope):
        shape = tuple(int(cards[v]) for v in scope)
        if batch is not None:
            shape = (batch,) + shape
        t = rng.uniform(0.05, 1.0, shape)
        # sprinkle hard zeros but keep every slice non-zero
        t[rng.random(shape) < 0.15] = 0.0
        flat = t.reshape((batch or 1, -1))
        flat[flat.sum(axis=1) == 0, 0] = 1.0
        return t

    placed = [0]
    k = 1
    fid = 0
    while k < n_vars:
        size = int(min(rng.integers(1, max_new + 1), n_vars - k))
        anchor = int(rng.choice(placed))
        scope = (anchor, *range(k, k + size))
        g.add_factor(("f", fid), scope, table(scope))
        fid += 1
        placed.extend(range(k, k + size))
        k += size
    for v in rng.choice(n_vars, size=max(1, n_vars // 2), replace=False) if unary else []:
        g.add_factor(("u", int(v)), (int(v),), table((int(v),)))
    return g
