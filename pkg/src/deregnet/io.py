"""Tab-separated file formats used by the command line.

All floats are written with 17 significant digits so that reading a file
back reproduces the in-memory values exactly.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from .em import FitResult
from .evaluation import FdrSelection, PRCurve
from .model import DeregulationScores, ExpressionMatrix, ModelParams, RegulatoryNetwork, validate_network
from .simulate import GroundTruth

PARAMS_FORMAT = "deregnet-params/1"
ROLES = ("activator", "inhibitor")


class FormatError(ValueError):
    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{path}: {message}")


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _rows(path) -> list[list[str]]:
    with open(path, newline="") as fh:
        return [row for row in csv.reader(fh, delimiter="\t") if row and any(c.strip() for c in row)]


def _write(path, lines: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


# network: one edge per line, plus optional #regulators / #targets lines fixing order


def write_network(path, net: RegulatoryNetwork) -> None:
    lines = ["#regulators\t" + "\t".join(net.regulators), "#targets\t" + "\t".join(net.targets)]
    lines.append("target\tregulator\trole")
    lines += ["\t".join(edge) for edge in net.edges()]
    _write(path, lines)


def read_network(path) -> RegulatoryNetwork:
    rows = _rows(path)
    declared: dict[str, list[str]] = {}
    body = []
    for row in rows:
        if row[0].startswith("#"):
            declared[row[0][1:].strip()] = [c for c in row[1:] if c]
        else:
            body.append(row)
    if not body or [c.strip().lower() for c in body[0][:3]] != ["target", "regulator", "role"]:
        raise FormatError(path, "expected header line 'target<TAB>regulator<TAB>role'")
    regulators, targets = list(declared.get("regulators", [])), list(declared.get("targets", []))
    seen_regulators, seen_targets = set(regulators), set(targets)
    act: dict[str, list[str]] = {}
    inh: dict[str, list[str]] = {}
    for lineno, row in enumerate(body[1:], start=2):
        if len(row) < 3:
            raise FormatError(path, f"edge line {lineno} needs three columns")
        target, reg, role = (c.strip() for c in row[:3])
        role = role.lower()
        if role not in ROLES:
            raise FormatError(path, f"edge line {lineno}: role must be activator or inhibitor, got {role!r}")
        if target not in seen_targets:
            seen_targets.add(target)
            targets.append(target)
        if reg not in seen_regulators:
            seen_regulators.add(reg)
            regulators.append(reg)
        (act if role == "activator" else inh).setdefault(target, []).append(reg)
    net = RegulatoryNetwork(tuple(regulators), tuple(targets), act, inh)
    report = validate_network(net)
    if not report.ok:
        raise FormatError(path, "invalid network: " + "; ".join(map(str, report.violations)))
    return net


# expression and ground-truth states: genes as rows, samples as columns


def write_gene_matrix(path, gene_ids, sample_ids, values: np.ndarray, integer: bool = False) -> None:
    """`values` is samples x genes; the file is transposed (one gene per line)."""
    cell = (lambda v: str(int(v))) if integer else fmt
    lines = ["gene\t" + "\t".join(sample_ids)]
    for k, g in enumerate(gene_ids):
        lines.append(g + "\t" + "\t".join(cell(v) for v in values[:, k]))
    _write(path, lines)


def _read_gene_matrix(path, dtype):
    rows = _rows(path)
    if not rows:
        raise FormatError(path, "empty file")
    samples = [c.strip() for c in rows[0][1:]]
    genes, values = [], []
    for row in rows[1:]:
        if len(row) != len(samples) + 1:
            raise FormatError(path, f"gene {row[0]!r} has {len(row) - 1} values, expected {len(samples)}")
        genes.append(row[0].strip())
        try:
            values.append([dtype(c) for c in row[1:]])
        except ValueError as err:
            raise FormatError(path, f"gene {row[0]!r}: {err}") from None
    return samples, genes, np.array(values, dtype=dtype).reshape(len(genes), len(samples)).T


def write_expression(path, expr: ExpressionMatrix) -> None:
    write_gene_matrix(path, expr.gene_ids, expr.sample_ids, expr.values)


def read_expression(path) -> ExpressionMatrix:
    samples, genes, values = _read_gene_matrix(path, float)
    try:
        return ExpressionMatrix(tuple(samples), tuple(genes), values)
    except ValueError as err:
        raise FormatError(path, str(err)) from None


# samples x targets matrices (scores, deregulation mask)


def _write_sample_matrix(path, sample_ids, target_ids, values, cell) -> None:
    lines = ["sample\t" + "\t".join(target_ids)]
    for i, s in enumerate(sample_ids):
        lines.append(s + "\t" + "\t".join(cell(v) for v in values[i]))
    _write(path, lines)


def _read_sample_matrix(path, dtype):
    rows = _rows(path)
    if not rows:
        raise FormatError(path, "empty file")
    targets = [c.strip() for c in rows[0][1:]]
    samples = [row[0].strip() for row in rows[1:]]
    try:
        values = np.array([[dtype(c) for c in row[1:]] for row in rows[1:]], dtype=dtype)
    except ValueError as err:
        raise FormatError(path, str(err)) from None
    return samples, targets, values.reshape(len(samples), len(targets))


def write_scores(path, scores: DeregulationScores) -> None:
    _write_sample_matrix(path, scores.sample_ids, scores.target_ids, scores.scores, fmt)


def read_scores(path) -> DeregulationScores:
    samples, targets, values = _read_sample_matrix(path, float)
    return DeregulationScores(tuple(samples), tuple(targets), values)


def write_truth(path, truth: GroundTruth) -> None:
    _write_sample_matrix(path, truth.sample_ids, truth.target_ids, truth.deregulated, lambda v: str(int(v)))


def write_states(path, truth: GroundTruth) -> None:
    write_gene_matrix(path, truth.gene_ids, truth.sample_ids, truth.states, integer=True)


def read_truth(path, states_path=None) -> GroundTruth:
    """Deregulation mask, optionally completed with the realised states file."""
    samples, targets, mask = _read_sample_matrix(path, int)
    if not np.isin(mask, (0, 1)).all():
        raise FormatError(path, "mask entries must be 0 or 1")
    if states_path is None:
        return GroundTruth(tuple(samples), (), tuple(targets), np.zeros((len(samples), 0), int), mask.astype(bool))
    s_samples, genes, states = _read_gene_matrix(states_path, int)
    if s_samples != samples:
        raise FormatError(states_path, "sample ids differ from the mask file")
    return GroundTruth(tuple(samples), tuple(genes), tuple(targets), states, mask.astype(bool))


# parameters


def write_params(path, params: ModelParams) -> None:
    _write(
        path,
        [
            f"format\t{PARAMS_FORMAT}",
            "alpha\t" + "\t".join(fmt(v) for v in params.alpha),
            "epsilon\t" + fmt(params.epsilon),
            "mu\t" + "\t".join(fmt(v) for v in params.mu),
            "sigma\t" + "\t".join(fmt(v) for v in params.sigma),
        ],
    )


def read_params(path) -> ModelParams:
    fields = {row[0].strip(): [c.strip() for c in row[1:] if c.strip()] for row in _rows(path)}
    if fields.get("format") != [PARAMS_FORMAT]:
        raise FormatError(path, f"missing or unsupported format tag (expected {PARAMS_FORMAT})")
    try:
        for key, size in (("alpha", 3), ("epsilon", 1), ("mu", 3), ("sigma", 3)):
            if len(fields.get(key, [])) != size:
                raise ValueError(f"{key} needs {size} value(s)")
        return ModelParams(
            tuple(map(float, fields["alpha"])),
            float(fields["epsilon"][0]),
            tuple(map(float, fields["mu"])),
            tuple(map(float, fields["sigma"])),
        )
    except ValueError as err:
        raise FormatError(path, str(err)) from None


TRAJECTORY_COLUMNS = (
    "iteration alpha_minus alpha_zero alpha_plus epsilon mu_minus mu_zero mu_plus "
    "sigma_minus sigma_zero sigma_plus max_change"
).split()


def write_trajectory(path, result: FitResult) -> None:
    lines = [f"#converged\t{str(result.converged).lower()}", "\t".join(TRAJECTORY_COLUMNS)]
    for rec in result.trajectory:
        vals = [fmt(v) for v in rec.params.as_vector()] + [fmt(rec.max_change)]
        lines.append("\t".join([str(rec.iteration)] + vals))
    _write(path, lines)


def read_trajectory(path) -> list[dict]:
    rows = [r for r in _rows(path) if not r[0].startswith("#")]
    header = rows[0]
    return [dict(zip(header, (int(r[0]), *map(float, r[1:])))) for r in rows[1:]]


# evaluation outputs


def write_pr(path, curve: PRCurve) -> None:
    lines = [f"#auprc\t{fmt(curve.auprc)}", "threshold\trecall\tprecision"]
    for th, r, p in zip(curve.thresholds, curve.recall, curve.precision):
        lines.append(f"{fmt(th)}\t{fmt(r)}\t{fmt(p)}")
    _write(path, lines)


def read_pr(path) -> PRCurve:
    rows = _rows(path)
    auprc = float(next(r[1] for r in rows if r[0] == "#auprc"))
    data = np.array([[float(c) for c in r] for r in rows if not r[0].startswith("#") and r[0] != "threshold"])
    data = data.reshape(-1, 3)
    return PRCurve(data[:, 0], data[:, 1], data[:, 2], auprc)


def write_selection(path, sel: FdrSelection, target_fdr: float) -> None:
    lines = [
        f"#target_fdr\t{fmt(target_fdr)}",
        f"#threshold\t{fmt(sel.threshold)}",
        f"#estimated_fdr\t{fmt(sel.estimated_fdr)}",
        "sample\ttarget\tscore",
    ]
    lines += [f"{s}\t{g}\t{fmt(v)}" for (s, g), v in zip(sel.selected, sel.scores)]
    _write(path, lines)


def read_selection(path) -> FdrSelection:
    rows = _rows(path)
    meta = {r[0][1:]: float(r[1]) for r in rows if r[0].startswith("#")}
    body = [r for r in rows if not r[0].startswith("#")][1:]
    return FdrSelection(
        meta["threshold"],
        tuple((r[0], r[1]) for r in body),
        np.array([float(r[2]) for r in body]),
        meta["estimated_fdr"],
    )


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
