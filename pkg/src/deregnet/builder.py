"""Compile (network, parameters, expression) into a factor graph of degree <= 3.

Variable ids are tuples:

* ``("S", gene)``: ternary state of every gene
* ``("SA", target)``, ``("SI", target)``: collective activator / inhibitor state
* ``("SR", target)``: state predicted by the truth table
* ``("D", target)``: binary deregulation indicator
* ``("A", target, k)``, ``("I", target, k)``: internal nodes of the balanced
  binary combination trees that replace one wide collective-state factor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .factorgraph import FactorGraph, node_count
from .model import ModelParams, RegulatoryNetwork, STATES, combine, truth_table

COMBINE_TABLE = np.zeros((3, 3, 3))
TRUTH_TABLE = np.zeros((3, 3, 3))
for _a in STATES:
    for _b in STATES:
        COMBINE_TABLE[_a + 1, _b + 1, combine(_a, _b) + 1] = 1.0
        # scope order (SA, SI, SR)
        TRUTH_TABLE[_a + 1, _b + 1, truth_table(_a, _b) + 1] = 1.0
EQUAL_TABLE = np.eye(3)
PIN_NORMAL = np.array([0.0, 1.0, 0.0])


def deregulation_table(epsilon: float) -> np.ndarray:
    """Table over (SR, D, S): 1-eps if D=0 and S=SR, eps/2 if D=1 and S!=SR, else 0."""
    out = np.zeros((3, 2, 3))
    for sr in range(3):
        for s in range(3):
            if s == sr:
                out[sr, 0, s] = 1.0 - epsilon
            else:
                out[sr, 1, s] = epsilon / 2.0
    return out


def gaussian_log_evidence(x: np.ndarray, params: ModelParams) -> np.ndarray:
    """``log(1/sigma_s) - (x - mu_s)^2 / (2 sigma_s^2)`` with a trailing state axis."""
    mu = np.asarray(params.mu)
    sigma = np.asarray(params.sigma)
    x = np.asarray(x, dtype=float)[..., None]
    return -np.log(sigma) - (x - mu) ** 2 / (2.0 * sigma**2)


@dataclass
class CompiledSampleGraph:
    graph: FactorGraph
    index: dict  # model variable key -> variable id
    gene_vars: list
    dereg_vars: list

    @property
    def node_count(self) -> int:
        return node_count(self.graph)


def _add_collective(graph: FactorGraph, members: tuple, root, tag: str, target: str) -> list:
    """Tie `root` to the collective state of `members`; returns the internal variable ids."""
    internal: list = []
    leaves = [("S", reg) for reg in members]
    if not leaves:
        graph.add_factor(("pin", root), (root,), PIN_NORMAL)
        return internal
    if len(leaves) == 1:
        graph.add_factor(("eq", root), (leaves[0], root), EQUAL_TABLE)
        return internal

    def node_for(chunk):
        if len(chunk) == 1:
            return chunk[0]
        vid = (tag, target, len(internal))
        internal.append(vid)
        graph.add_variable(vid, 3)
        attach(chunk, vid)
        return vid

    def attach(chunk, parent):
        mid = (len(chunk) + 1) // 2
        left, right = node_for(chunk[:mid]), node_for(chunk[mid:])
        graph.add_factor(("comb", parent), (left, right, parent), COMBINE_TABLE)

    attach(leaves, root)
    return internal


def build_graph(net: RegulatoryNetwork, params: ModelParams, expression) -> CompiledSampleGraph:
    """Compile the model posterior given expression.

    `expression` is either one row of length r+t (network gene order) or an
    ``(n, r+t)`` matrix, in which case the graph is batched over samples.
    """
    if not isinstance(params, ModelParams):
        raise TypeError("params must be ModelParams")
    x = np.asarray(expression, dtype=float)
    if x.ndim not in (1, 2) or x.shape[-1] != len(net.genes):
        raise ValueError(
            f"expression has shape {x.shape}; expected trailing length {len(net.genes)} "
            "aligned to the network gene order"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("expression values must be finite")
    graph = FactorGraph(batch_size=x.shape[0] if x.ndim == 2 else None)
    index: dict = {}

    def var(key, card=3):
        graph.add_variable(key, card)
        index[key] = key
        return key

    gene_vars = [var(("S", g)) for g in net.genes]
    alpha = np.asarray(params.alpha)
    for g in net.regulators:
        graph.add_factor(("alpha", g), (("S", g),), alpha)

    logev = gaussian_log_evidence(x, params)
    ev = np.exp(logev - logev.max(axis=-1, keepdims=True))
    for k, g in enumerate(net.genes):
        graph.add_factor(("evidence", g), (("S", g),), ev[..., k, :])

    dereg = deregulation_table(params.epsilon)
    dereg_vars = []
    for g in net.targets:
        sa, si, sr = var(("SA", g)), var(("SI", g)), var(("SR", g))
        d = var(("D", g), 2)
        dereg_vars.append(d)
        for vid in _add_collective(graph, net.activators[g], sa, "A", g):
            index[vid] = vid
        for vid in _add_collective(graph, net.inhibitors[g], si, "I", g):
            index[vid] = vid
        graph.add_factor(("truth", g), (sa, si, sr), TRUTH_TABLE)
        graph.add_factor(("dereg", g), (sr, d, ("S", g)), dereg)

    graph.check_max_degree(3)
    return CompiledSampleGraph(graph, index, gene_vars, dereg_vars)


def build_sample_graph(net: RegulatoryNetwork, params: ModelParams, expression_row) -> CompiledSampleGraph:
    row = np.asarray(expression_row, dtype=float)
    if row.ndim != 1:
        raise ValueError("expression_row must be one-dimensional")
    return build_graph(net, params, row)


@dataclass(frozen=True)
class TargetCensus:
    target: str
    n_activators: int
    n_inhibitors: int
    activator_internal: int
    inhibitor_internal: int
    variables: int
    factors: int


@dataclass(frozen=True)
class Census:
    targets: tuple[TargetCensus, ...]
    regulator_variables: int
    regulator_factors: int
    n_edges: int
    n_genes: int

    @property
    def variables(self) -> int:
        return self.regulator_variables + sum(c.variables for c in self.targets)

    @property
    def factors(self) -> int:
        return self.regulator_factors + sum(c.factors for c in self.targets)

    @property
    def nodes(self) -> int:
        return self.variables + self.factors

    @property
    def ratio(self) -> float:
        """Compiled node count relative to 2E + G."""
        return self.nodes / (2 * self.n_edges + self.n_genes)


def _set_factors(k: int) -> int:
    return k - 1 if k >= 2 else 1


def hidden_variable_census(net: RegulatoryNetwork) -> Census:
    """Variable and factor counts of the compiled graph, without building it."""
    rows = []
    for g in net.targets:
        a, i = len(net.activators[g]), len(net.inhibitors[g])
        ai, ii = max(a - 2, 0), max(i - 2, 0)
        # S, SA, SI, SR, D; factors: evidence, truth, dereg + collective trees
        rows.append(TargetCensus(g, a, i, ai, ii, 5 + ai + ii, 3 + _set_factors(a) + _set_factors(i)))
    return Census(tuple(rows), net.r, 2 * net.r, net.n_edges, len(net.genes))
