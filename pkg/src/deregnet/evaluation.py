"""Precision-recall evaluation and posterior-based FDR control."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DeregulationScores
from .simulate import GroundTruth


@dataclass(frozen=True)
class PRCurve:
    """One (recall, precision) point per distinct positive score, thresholds descending."""

    thresholds: np.ndarray
    recall: np.ndarray
    precision: np.ndarray
    auprc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall.tolist(), self.precision.tolist()))


@dataclass(frozen=True)
class FdrSelection:
    threshold: float
    selected: tuple[tuple[str, str], ...]
    scores: np.ndarray
    estimated_fdr: float


def _flat(scores, truth):
    if isinstance(scores, DeregulationScores):
        s = scores.scores
        if isinstance(truth, GroundTruth):
            if truth.sample_ids != scores.sample_ids or truth.target_ids != scores.target_ids:
                raise ValueError("scores and truth refer to different samples or targets")
    else:
        s = np.asarray(scores, dtype=float)
    y = truth.deregulated if isinstance(truth, GroundTruth) else np.asarray(truth)
    if s.shape != y.shape:
        raise ValueError(f"scores shape {s.shape} does not match truth shape {y.shape}")
    return s.ravel(), y.ravel().astype(bool)


def step_area(recall: np.ndarray, precision: np.ndarray) -> float:
    """Right-continuous step integral of precision over recall, starting at recall 0."""
    if len(recall) == 0:
        return 0.0
    return float(np.sum(np.diff(recall, prepend=0.0) * precision))


def pr_curve(scores, truth) -> PRCurve:
    """Sweep thresholds over the distinct positive scores, calling pairs with score >= threshold.

    A pair with score exactly 0 is never called.  Raises ValueError if the
    truth has no positive pair.
    """
    s, y = _flat(scores, truth)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("truth contains no positive pair; recall is undefined")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    called = np.arange(1, len(s) + 1)
    # last position of every run of equal scores
    last = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    last = last[s[last] > 0]
    recall = tp[last] / n_pos
    precision = tp[last] / called[last]
    return PRCurve(s[last], recall, precision, step_area(recall, precision))


def estimate_fdr(scores) -> list[tuple[int, float]]:
    """(K, (K - S_K) / K) for every prefix of descending-sorted posterior scores."""
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        return []
    if np.any(np.diff(s) > 0):
        raise ValueError("scores must be sorted in descending order")
    k = np.arange(1, len(s) + 1)
    fdr = (k - np.cumsum(s)) / k
    return list(zip(k.tolist(), fdr.tolist()))


def select_at_fdr(scores: DeregulationScores, target_fdr: float) -> FdrSelection:
    """Largest top-scoring set of (sample, target) pairs whose estimated FDR is within `target_fdr`.

    Equal scores are ordered by (sample id, target id).
    """
    if not 0.0 < target_fdr < 1.0:
        raise ValueError("target_fdr must lie in (0, 1)")
    n, t = scores.scores.shape
    rows, cols = np.divmod(np.arange(n * t), t)
    flat = scores.scores.ravel()
    sid = np.array(scores.sample_ids, dtype=str)[rows]
    tid = np.array(scores.target_ids, dtype=str)[cols]
    order = np.lexsort((tid, sid, -flat))
    ranked = flat[order]
    fdr = np.array([f for _, f in estimate_fdr(ranked)])
    ok = np.flatnonzero(fdr <= target_fdr)
    k = int(ok[-1]) + 1 if len(ok) else 0
    chosen = order[:k]
    return FdrSelection(
        threshold=float(ranked[k - 1]) if k else 1.0,
        selected=tuple((str(sid[j]), str(tid[j])) for j in chosen),
        scores=flat[chosen],
        estimated_fdr=float(fdr[k - 1]) if k else 0.0,
    )


def false_discovery_proportion(selection: FdrSelection, truth: GroundTruth) -> float:
    """Realised fraction of selected pairs that are not truly deregulated (0 for an empty selection)."""
    if not selection.selected:
        return 0.0
    si = {s: i for i, s in enumerate(truth.sample_ids)}
    ti = {g: k for k, g in enumerate(truth.target_ids)}
    hits = sum(bool(truth.deregulated[si[s], ti[g]]) for s, g in selection.selected)
    return 1.0 - hits / len(selection.selected)
