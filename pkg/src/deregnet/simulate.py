"""Sampling from the generative model and random network topologies."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ExpressionMatrix, ModelParams, RegulatoryNetwork, truth_table


@dataclass(frozen=True)
class GroundTruth:
    """Realised hidden states (network gene order) and deregulation mask (samples x targets)."""

    sample_ids: tuple[str, ...]
    gene_ids: tuple[str, ...]
    target_ids: tuple[str, ...]
    states: np.ndarray
    deregulated: np.ndarray


def _collective(block: np.ndarray) -> np.ndarray:
    if block.shape[1] == 0:
        return np.zeros(block.shape[0], dtype=int)
    return np.all(block == 1, axis=1).astype(int) - np.all(block == -1, axis=1).astype(int)


def _streams(seed: int, k: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(k)]


def sample_ids(n: int) -> tuple[str, ...]:
    return tuple(f"S{i + 1}" for i in range(n))


def simulate(
    net: RegulatoryNetwork, params: ModelParams, n: int, seed: int
) -> tuple[ExpressionMatrix, GroundTruth]:
    """Draw `n` independent samples of (expression, hidden states)."""
    net.check()
    if n < 1:
        raise ValueError("n must be >= 1")
    state_rng, dereg_rng, noise_rng = _streams(seed, 3)
    r, t = net.r, net.t
    states = np.zeros((n, r + t), dtype=int)
    states[:, :r] = state_rng.choice([-1, 0, 1], size=(n, r), p=np.asarray(params.alpha))

    col = {g: k for k, g in enumerate(net.regulators)}
    deregulated = dereg_rng.random((n, t)) < params.epsilon
    # deregulated targets shift cyclically by 1 or 2 from the expected state
    wrong_pick = dereg_rng.integers(0, 2, size=(n, t))
    truth = np.array([[truth_table(a, i) for i in (-1, 0, 1)] for a in (-1, 0, 1)])
    for k, g in enumerate(net.targets):
        sa = _collective(states[:, [col[x] for x in net.activators[g]]])
        si = _collective(states[:, [col[x] for x in net.inhibitors[g]]])
        expected = truth[sa + 1, si + 1]
        flipped = (expected + 1 + 1 + wrong_pick[:, k]) % 3 - 1
        states[:, r + k] = np.where(deregulated[:, k], flipped, expected)

    mu = np.asarray(params.mu)[states + 1]
    sigma = np.asarray(params.sigma)[states + 1]
    values = mu + sigma * noise_rng.standard_normal(states.shape)
    ids = sample_ids(n)
    expr = ExpressionMatrix(ids, net.genes, values)
    return expr, GroundTruth(ids, net.genes, net.targets, states, deregulated)


def random_network(r: int, t: int, max_regulators: int, seed: int) -> RegulatoryNetwork:
    """Each target gets k ~ U{1..max_regulators} distinct regulators, each an activator or inhibitor with prob 1/2."""
    if r < 1 or t < 1 or max_regulators < 1:
        raise ValueError("r, t and max_regulators must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    regulators = tuple(f"TF{i + 1}" for i in range(r))
    targets = tuple(f"G{i + 1}" for i in range(t))
    act, inh = {}, {}
    for g in targets:
        k = int(rng.integers(1, min(max_regulators, r) + 1))
        chosen = sorted(rng.choice(r, size=k, replace=False))
        roles = rng.random(k) < 0.5
        act[g] = tuple(regulators[j] for j, a in zip(chosen, roles) if a)
        inh[g] = tuple(regulators[j] for j, a in zip(chosen, roles) if not a)
    return RegulatoryNetwork(regulators, targets, act, inh)


def tree_network(n_targets: int, max_regulators: int, seed: int) -> RegulatoryNetwork:
    """Random network in which no regulator is shared, so every compiled graph is a tree."""
    rng = np.random.default_rng(seed)
    regulators, act, inh = [], {}, {}
    targets = tuple(f"G{i + 1}" for i in range(n_targets))
    for g in targets:
        k = int(rng.integers(1, max_regulators + 1))
        mine = [f"TF{len(regulators) + j + 1}" for j in range(k)]
        regulators.extend(mine)
        roles = rng.random(k) < 0.5
        act[g] = tuple(x for x, a in zip(mine, roles) if a)
        inh[g] = tuple(x for x, a in zip(mine, roles) if not a)
    return RegulatoryNetwork(tuple(regulators), targets, act, inh)
