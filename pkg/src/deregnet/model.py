"""Domain types and the deterministic regulation logic.

Ternary states are plain ints in {-1, 0, +1}.  Arrays indexed by state use
``state + 1`` as the position, so index 0 is under-expressed, 1 normal and
2 over-expressed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Mapping, Sequence

import numpy as np

STATES = (-1, 0, 1)

# rows: inhibitor collective state, columns: activator collective state
_TRUTH = {
    -1: {-1: 0, 0: 1, 1: 1},
    0: {-1: -1, 0: 0, 1: 1},
    1: {-1: -1, 0: -1, 1: -1},
}


def _check_state(s: int) -> int:
    if s not in (-1, 0, 1):
        raise ValueError(f"not a ternary state: {s!r}")
    return int(s)


def truth_table(sa: int, si: int) -> int:
    """Expected target state given co-activator state `sa` and co-inhibitor state `si`."""
    return _TRUTH[_check_state(si)][_check_state(sa)]


def combine(a: int, b: int) -> int:
    a, b = _check_state(a), _check_state(b)
    return a if a == b else 0


def collective_state(states: Iterable[int]) -> int:
    """Shared status of a regulator set; 0 unless every member agrees (and 0 for an empty set)."""
    states = list(states)
    if not states:
        return 0
    return reduce(combine, states)


def truth_table_array() -> np.ndarray:
    """3x3 array ``T[a+1, i+1] = truth_table(a, i)``."""
    out = np.zeros((3, 3), dtype=int)
    for a in STATES:
        for i in STATES:
            out[a + 1, i + 1] = truth_table(a, i)
    return out


@dataclass(frozen=True)
class RegulatoryNetwork:
    """Bipartite regulator -> target structure.

    ``activators[g]`` and ``inhibitors[g]`` are tuples of regulator ids.  The
    network is not validated on construction; call :func:`validate_network`
    or :meth:`check`.
    """

    regulators: tuple[str, ...]
    targets: tuple[str, ...]
    activators: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    inhibitors: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "regulators", tuple(self.regulators))
        object.__setattr__(self, "targets", tuple(self.targets))
        act = {g: tuple(self.activators.get(g, ())) for g in self.targets}
        inh = {g: tuple(self.inhibitors.get(g, ())) for g in self.targets}
        for extra in set(self.activators) | set(self.inhibitors):
            if extra not in act:
                act[extra] = tuple(self.activators.get(extra, ()))
                inh[extra] = tuple(self.inhibitors.get(extra, ()))
        object.__setattr__(self, "activators", act)
        object.__setattr__(self, "inhibitors", inh)

    @property
    def genes(self) -> tuple[str, ...]:
        return self.regulators + self.targets

    @property
    def r(self) -> int:
        return len(self.regulators)

    @property
    def t(self) -> int:
        return len(self.targets)

    @property
    def n_edges(self) -> int:
        return sum(len(self.activators[g]) + len(self.inhibitors[g]) for g in self.targets)

    def gene_index(self) -> dict[str, int]:
        return {g: k for k, g in enumerate(self.genes)}

    def check(self) -> None:
        report = validate_network(self)
        if not report.ok:
            raise ValueError("invalid network: " + "; ".join(str(v) for v in report.violations))

    def edges(self) -> list[tuple[str, str, str]]:
        """(target, regulator, role) triples in declaration order."""
        out = []
        for g in self.targets:
            out.extend((g, reg, "activator") for reg in self.activators[g])
            out.extend((g, reg, "inhibitor") for reg in self.inhibitors[g])
        return out


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str

    def __str__(self):
        return f"{self.kind}: {self.detail}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


def _duplicates(items: Sequence[str]) -> list[str]:
    seen, dup = set(), []
    for x in items:
        if x in seen and x not in dup:
            dup.append(x)
        seen.add(x)
    return dup


def validate_network(net: RegulatoryNetwork) -> ValidationReport:
    """Collect every invariant violation of `net` (an empty report means valid)."""
    out: list[Violation] = []
    for ident in _duplicates(net.regulators):
        out.append(Violation("duplicate id", f"regulator {ident} listed twice"))
    for ident in _duplicates(net.targets):
        out.append(Violation("duplicate id", f"target {ident} listed twice"))
    for ident in sorted(set(net.regulators) & set(net.targets)):
        out.append(Violation("duplicate id", f"{ident} is both regulator and target"))
    known = set(net.regulators)
    for g in sorted(set(net.activators) - set(net.targets)):
        out.append(Violation("unknown target", f"regulator sets given for undeclared target {g}"))
    for g in net.targets:
        act, inh = net.activators[g], net.inhibitors[g]
        for reg in _duplicates(list(act)) + _duplicates(list(inh)):
            out.append(Violation("duplicate id", f"{reg} repeated in a regulator set of {g}"))
        for reg in sorted(set(act) & set(inh)):
            out.append(Violation("overlap", f"{reg} is both activator and inhibitor of {g}"))
        for reg in [x for x in act + inh if x not in known]:
            out.append(Violation("unknown regulator", f"{reg} (regulating {g}) is not a declared regulator"))
        if not act and not inh:
            out.append(Violation("empty regulator sets", f"target {g} has no regulators"))
    return ValidationReport(tuple(out))


@dataclass(frozen=True)
class ExpressionMatrix:
    """Samples x genes matrix of log-expression values."""

    sample_ids: tuple[str, ...]
    gene_ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        object.__setattr__(self, "gene_ids", tuple(self.gene_ids))
        object.__setattr__(self, "values", values)
        if values.shape != (len(self.sample_ids), len(self.gene_ids)):
            raise ValueError(
                f"values shape {values.shape} does not match "
                f"{len(self.sample_ids)} samples x {len(self.gene_ids)} genes"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("expression values must be finite")

    @property
    def n(self) -> int:
        return len(self.sample_ids)

    def aligned(self, net: RegulatoryNetwork) -> np.ndarray:
        """Values reordered to the network gene order (regulators, then targets)."""
        have, want = set(self.gene_ids), set(net.genes)
        missing = [g for g in net.genes if g not in have]
        extra = [g for g in self.gene_ids if g not in want]
        if missing or extra:
            raise AlignmentError(missing, extra)
        pos = {g: k for k, g in enumerate(self.gene_ids)}
        return self.values[:, [pos[g] for g in net.genes]]

    def subset(self, rows: Sequence[int]) -> "ExpressionMatrix":
        rows = list(rows)
        return ExpressionMatrix(
            tuple(self.sample_ids[i] for i in rows), self.gene_ids, self.values[rows]
        )


class AlignmentError(ValueError):
    def __init__(self, missing: Sequence[str], extra: Sequence[str]):
        self.missing = list(missing)
        self.extra = list(extra)
        super().__init__(
            f"expression genes do not match network: missing={self.missing} extra={self.extra}"
        )


@dataclass(frozen=True)
class ModelParams:
    """Parameters (alpha, epsilon, mu, sigma); triples are ordered (-, 0, +)."""

    alpha: tuple[float, float, float]
    epsilon: float
    mu: tuple[float, float, float]
    sigma: tuple[float, float, float]

    def __post_init__(self):
        for name in ("alpha", "mu", "sigma"):
            val = tuple(float(v) for v in getattr(self, name))
            if len(val) != 3:
                raise ValueError(f"{name} must have three entries")
            object.__setattr__(self, name, val)
        object.__setattr__(self, "epsilon", float(self.epsilon))
        a = np.array(self.alpha)
        if np.any(a < 0) or abs(a.sum() - 1.0) > 1e-12:
            raise ValueError(f"alpha must be a probability vector, got {self.alpha}")
        # 0 and 1 are accepted: they are degenerate but well defined
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if not all(s > 0 and np.isfinite(s) for s in self.sigma):
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not all(np.isfinite(self.mu)):
            raise ValueError("mu must be finite")
        if not self.mu[0] <= self.mu[1] <= self.mu[2]:
            raise ValueError(f"mu must be ordered mu- <= mu0 <= mu+, got {self.mu}")

    def as_vector(self) -> np.ndarray:
        return np.array([*self.alpha, self.epsilon, *self.mu, *self.sigma])

    @classmethod
    def from_vector(cls, v: Sequence[float]) -> "ModelParams":
        v = [float(x) for x in v]
        return cls(tuple(v[0:3]), v[3], tuple(v[4:7]), tuple(v[7:10]))

    def max_abs_change(self, other: "ModelParams") -> float:
        return float(np.max(np.abs(self.as_vector() - other.as_vector())))


@dataclass(frozen=True)
class DeregulationScores:
    sample_ids: tuple[str, ...]
    target_ids: tuple[str, ...]
    scores: np.ndarray

    def __post_init__(self):
        scores = np.array(self.scores, dtype=float)
        scores.setflags(write=False)
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        object.__setattr__(self, "target_ids", tuple(self.target_ids))
        object.__setattr__(self, "scores", scores)
        if scores.shape != (len(self.sample_ids), len(self.target_ids)):
            raise ValueError("scores shape does not match sample/target ids")
        if np.any(~np.isfinite(scores)) or np.any(scores < 0) or np.any(scores > 1):
            raise ValueError("scores must lie in [0, 1]")
