"""Discrete factor graphs and sum-product belief propagation.

The engine knows nothing about gene regulation.  A graph may carry an
optional batch axis: factor tables then either have shape ``cards`` (shared
by every batch element) or ``(batch_size, *cards)``.  Batch elements never
exchange messages, so a batched graph is exactly a stack of independent
graphs with a common topology.

Messages live in the linear domain and are renormalised after every update.
Products of incoming messages at a variable are formed in the log domain,
with exact zeros counted separately, so that high-degree variables do not
underflow and hard constraints are never divided out.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy import sparse


class ZeroEvidenceError(ArithmeticError):
    """Every joint state compatible with the evidence has probability zero."""

    def __init__(self, variable: Hashable, batch_indices: Sequence[int]):
        self.variable = variable
        self.batch_indices = list(batch_indices)
        super().__init__(
            f"zero belief normaliser at variable {variable!r} "
            f"(batch elements {self.batch_indices})"
        )


@dataclass(frozen=True)
class VariableNode:
    id: Hashable
    cardinality: int


@dataclass(frozen=True)
class FactorNode:
    id: Hashable
    scope: tuple
    table: np.ndarray

    @property
    def degree(self) -> int:
        return len(self.scope)


class FactorGraph:
    """Mutable container of variables and dense factors."""

    def __init__(self, batch_size: int | None = None):
        if batch_size is not None and batch_size < 1:
            raise ValueError("batch_size must be positive")
        self.batch_size = batch_size
        self.variables: dict[Hashable, VariableNode] = {}
        self.factors: list[FactorNode] = []
        self._factor_ids: set = set()

    def add_variable(self, vid: Hashable, cardinality: int) -> VariableNode:
        if vid in self.variables:
            raise ValueError(f"duplicate variable {vid!r}")
        if int(cardinality) < 2:
            raise ValueError(f"variable {vid!r}: cardinality must be >= 2")
        node = VariableNode(vid, int(cardinality))
        self.variables[vid] = node
        return node

    def add_factor(self, fid: Hashable, scope: Iterable[Hashable], table) -> FactorNode:
        scope = tuple(scope)
        if fid in self._factor_ids:
            raise ValueError(f"duplicate factor {fid!r}")
        for vid in scope:
            if vid not in self.variables:
                raise KeyError(f"factor {fid!r} references undeclared variable {vid!r}")
        if len(set(scope)) != len(scope):
            raise ValueError(f"factor {fid!r} repeats a variable in its scope")
        cards = tuple(self.variables[v].cardinality for v in scope)
        table = np.asarray(table, dtype=float)
        if table.ndim == 1 and len(cards) != 1 and table.size == int(np.prod(cards)):
            table = table.reshape(cards)
        if table.shape == cards:
            per_elem = table.reshape(1, -1)
        elif self.batch_size is not None and table.shape == (self.batch_size, *cards):
            per_elem = table.reshape(self.batch_size, -1)
        else:
            raise ValueError(f"factor {fid!r}: table shape {table.shape} does not match scope {cards}")
        if np.any(~np.isfinite(per_elem)) or np.any(per_elem < 0):
            raise ValueError(f"factor {fid!r}: entries must be finite and non-negative")
        if np.any(per_elem.max(axis=1) <= 0):
            raise ValueError(f"factor {fid!r}: table has no positive entry")
        node = FactorNode(fid, scope, table)
        self.factors.append(node)
        self._factor_ids.add(fid)
        return node

    def max_degree(self) -> int:
        return max((f.degree for f in self.factors), default=0)

    def check_max_degree(self, limit: int = 3) -> None:
        worst = [f.id for f in self.factors if f.degree > limit]
        if worst:
            raise ValueError(f"{len(worst)} factors exceed degree {limit}, e.g. {worst[0]!r}")

    def neighbours(self) -> dict[Hashable, list[Hashable]]:
        """Variable id -> ids of the factors touching it."""
        out: dict[Hashable, list[Hashable]] = {v: [] for v in self.variables}
        for f in self.factors:
            for v in f.scope:
                out[v].append(f.id)
        return out


def node_count(graph: FactorGraph) -> int:
    return len(graph.variables) + len(graph.factors)


class MarginalSet:
    """Per-variable beliefs; vectors carry a leading batch axis for batched graphs."""

    def __init__(self, ids: Sequence[Hashable], cards: np.ndarray, beliefs: np.ndarray, batched: bool):
        self.ids = list(ids)
        self._index = {v: k for k, v in enumerate(self.ids)}
        self.cards = cards
        self.batched = batched
        self._beliefs = beliefs

    def __contains__(self, vid) -> bool:
        return vid in self._index

    def __getitem__(self, vid: Hashable) -> np.ndarray:
        k = self._index[vid]
        b = self._beliefs[:, k, : self.cards[k]]
        return b if self.batched else b[0]

    def stack(self, vids: Sequence[Hashable], cardinality: int) -> np.ndarray:
        """Beliefs of `vids` as an array of shape ``(batch, len(vids), cardinality)``."""
        ks = [self._index[v] for v in vids]
        return self._beliefs[:, ks, :cardinality]


_BLOCK_CELLS = 1 << 17


def _log_totals(fv: np.ndarray, segments: sparse.csr_matrix):
    """Per-edge log messages with zeros replaced by 0, the zero mask, and per-variable sums of both."""
    zero = fv <= 0
    logm = np.zeros_like(fv)
    np.log(fv, out=logm, where=~zero)
    shape = (segments.shape[0],) + fv.shape[1:]
    log_tot = (segments @ logm.reshape(fv.shape[0], -1)).reshape(shape)
    zero_tot = (segments @ zero.reshape(fv.shape[0], -1).astype(float)).reshape(shape)
    return logm, zero, log_tot, zero_tot


def _state_reduce(op, x: np.ndarray) -> np.ndarray:
    """Reduce axis 1 (the state axis, which is tiny) by slice arithmetic, keeping the axis."""
    out = x[:, 0].copy()
    for k in range(1, x.shape[1]):
        op(out, x[:, k], out=out)
    return out[:, None]


def _normalise(x: np.ndarray) -> np.ndarray:
    """Normalise along axis 1 in place; all-zero columns stay zero."""
    s = _state_reduce(np.add, x)
    s[s <= 0] = 1.0
    x /= s
    return x


def _normalise_log(logx: np.ndarray) -> np.ndarray:
    """Exponentiate and normalise along axis 1; all -inf columns become zeros.  Overwrites `logx`."""
    m = _state_reduce(np.maximum, logx)
    m[~np.isfinite(m)] = 0.0
    logx -= m
    np.exp(logx, out=logx)
    return _normalise(logx)


class SumProduct:
    """Synchronous flooding sum-product on a :class:`FactorGraph`.

    One call to :meth:`sweep` updates every variable-to-factor message and
    then every factor-to-variable message.  An edge is one (factor, scope
    position) pair; edges are numbered so that each variable's neighbourhood
    is contiguous.  Both message arrays have shape ``(n_edges, K, batch)``
    with K the largest cardinality; states beyond a variable's cardinality
    always carry zero mass.
    """

    def __init__(self, graph: FactorGraph, damping: float = 0.0):
        if not 0.0 <= damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        self.graph = graph
        self.damping = float(damping)
        self.batched = graph.batch_size is not None
        self.B = B = graph.batch_size or 1
        self.var_ids = list(graph.variables)
        vindex = {v: k for k, v in enumerate(self.var_ids)}
        V = len(self.var_ids)
        self.cards = np.array([graph.variables[v].cardinality for v in self.var_ids], dtype=int)
        K = int(self.cards.max()) if V else 1
        self.K = K
        self.log_mask = np.where(np.arange(K)[None, :] < self.cards[:, None], 0.0, -np.inf)

        slots = [(vindex[v], fi, p) for fi, f in enumerate(graph.factors) for p, v in enumerate(f.scope)]
        slots.sort()
        fac_edges: list[list[int]] = [[0] * f.degree for f in graph.factors]
        for e, (_, fi, p) in enumerate(slots):
            fac_edges[fi][p] = e
        self.n_edges = len(slots)
        self.edge_var = np.array([v for v, _, _ in slots], dtype=int)

        # factor groups keyed by (arity, batched table); tables stored per
        # output position p as (F, K, K**(arity-1)[, B]) with axis p first
        groups: dict[tuple[int, bool], list[int]] = {}
        for fi, f in enumerate(graph.factors):
            groups.setdefault((f.degree, f.table.ndim > f.degree), []).append(fi)
        self.factor_groups = []
        for (arity, has_batch), members in sorted(groups.items()):
            F = len(members)
            tables = np.zeros((F,) + (K,) * arity + ((B,) if has_batch else ()))
            for j, fi in enumerate(members):
                t = graph.factors[fi].table
                if has_batch:
                    t = np.moveaxis(t, 0, -1)
                tables[(j,) + tuple(slice(0, c) for c in t.shape)] = t
            edges = np.array([fac_edges[fi] for fi in members], dtype=int).reshape(F, arity)
            per_output = []
            for p in range(arity):
                moved = np.moveaxis(tables, 1 + p, 1)
                shape = (F, K, K ** (arity - 1)) + ((B,) if has_batch else ())
                per_output.append(np.ascontiguousarray(moved).reshape(shape))
            self.factor_groups.append((arity, has_batch, per_output, edges))

        self._degree = np.bincount(self.edge_var, minlength=V)
        self._seg_var = np.flatnonzero(self._degree)
        self._seg_len = self._degree[self._seg_var]
        # (variables with edges) x edges indicator; sums each neighbourhood exactly
        self._segments = sparse.csr_matrix(
            (np.ones(self.n_edges), (np.repeat(np.arange(len(self._seg_var)), self._seg_len), np.arange(self.n_edges))),
            shape=(len(self._seg_var), self.n_edges),
        )
        padded = self.cards[self.edge_var] < K
        self._edge_log_mask = self.log_mask[self.edge_var][:, :, None] if padded.any() else None

        # Sweeps run over blocks of about _BLOCK_CELLS message entries so the
        # temporaries stay cache resident on large graphs.  Variable-side
        # blocks end on neighbourhood boundaries.
        self._block_edges = max(1, _BLOCK_CELLS // (K * B))
        ends = np.cumsum(self._seg_len)
        self._var_blocks = []
        a = 0
        while a < len(self._seg_var):
            ea = int(ends[a - 1]) if a else 0
            b = max(a + 1, int(np.searchsorted(ends, ea + self._block_edges, side="right")))
            eb = int(ends[b - 1])
            self._var_blocks.append((slice(a, b), slice(ea, eb), self._segments[a:b, ea:eb].tocsr()))
            a = b

        self.reset()

    def reset(self) -> None:
        init = np.exp(self.log_mask[self.edge_var])[:, :, None] if self.n_edges else np.zeros((0, self.K, 1))
        init = _normalise(init)
        self.factor_to_var = np.repeat(init, self.B, axis=2)
        self.var_to_factor = self.factor_to_var.copy()

    def _update_var_to_factor(self) -> None:
        if self.n_edges == 0:
            return
        new = np.empty_like(self.var_to_factor)
        for segs, edges, segments in self._var_blocks:
            logm, zero, log_tot, zero_tot = _log_totals(self.factor_to_var[edges], segments)
            seg_len = self._seg_len[segs]
            excl = np.repeat(log_tot, seg_len, axis=0)
            excl -= logm
            others_zero = np.repeat(zero_tot, seg_len, axis=0)
            others_zero -= zero
            np.copyto(excl, -np.inf, where=others_zero > 0)
            if self._edge_log_mask is not None:
                excl += self._edge_log_mask[edges]
            new[edges] = _normalise_log(excl)
        if self.damping:
            new = (1.0 - self.damping) * new + self.damping * self.var_to_factor
        self.var_to_factor = new

    def _update_factor_to_var(self) -> None:
        B, K = self.B, self.K
        new = np.empty_like(self.factor_to_var)
        for arity, has_batch, per_output, all_edges in self.factor_groups:
            if arity == 1:
                out = per_output[0][:, :, 0]
                new[all_edges[:, 0]] = _normalise(out.copy() if has_batch else np.repeat(out[:, :, None], B, axis=2))
                continue
            step = max(1, self._block_edges // arity)
            for start in range(0, all_edges.shape[0], step):
                block = slice(start, start + step)
                edges = all_edges[block]
                F = edges.shape[0]
                incoming = [self.var_to_factor[edges[:, q]] for q in range(arity)]  # (F, K, B)
                for p in range(arity):
                    # joint message over the other scope variables, flattened in scope order
                    outer = None
                    for q in range(arity):
                        if q == p:
                            continue
                        m = incoming[q]
                        outer = m if outer is None else (outer[:, :, None, :] * m[:, None, :, :]).reshape(F, -1, B)
                    table = per_output[p][block]
                    if has_batch:
                        out = np.einsum("fiab,fab->fib", table, outer)
                    else:
                        out = np.matmul(table, outer)
                    new[edges[:, p]] = _normalise(out)
        if self.damping:
            new = (1.0 - self.damping) * new + self.damping * self.factor_to_var
        self.factor_to_var = new

    def sweep(self) -> None:
        self._update_var_to_factor()
        self._update_factor_to_var()

    def beliefs(self) -> MarginalSet:
        V, K = len(self.var_ids), self.K
        total = np.zeros((V, K, self.B))
        if self.n_edges:
            _, _, log_tot, zero_tot = _log_totals(self.factor_to_var, self._segments)
            total[self._seg_var] = np.where(zero_tot > 0, -np.inf, log_tot)
        total += self.log_mask[:, :, None]
        bad = ~np.isfinite(_state_reduce(np.maximum, total)[:, 0])  # (V, B)
        if np.any(bad):
            v = int(np.argmax(bad.any(axis=1)))
            raise ZeroEvidenceError(self.var_ids[v], np.flatnonzero(bad[v]).tolist())
        probs = _normalise_log(total).transpose(2, 0, 1)
        return MarginalSet(self.var_ids, self.cards, np.ascontiguousarray(probs), self.batched)


def run_sum_product(graph: FactorGraph, passes: int = 10, damping: float = 0.0) -> MarginalSet:
    """Run `passes` flooding sweeps and return normalised beliefs for every variable.

    Raises :class:`ZeroEvidenceError` if some variable's belief has zero mass.
    """
    if passes < 1:
        raise ValueError("passes must be >= 1")
    bp = SumProduct(graph, damping)
    for _ in range(passes):
        bp.sweep()
    return bp.beliefs()
