"""Command line front end: simulate, fit, score, eval, fdr.

Failures exit non-zero after printing one line ``error<TAB>kind<TAB>message``
to stderr.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import io
from .em import FitConfig, SampleEvidenceError, fit, score
from .evaluation import pr_curve, select_at_fdr
from .model import AlignmentError, ModelParams
from .simulate import random_network, simulate

log = logging.getLogger("deregnet")


class ConfigError(ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


def _require(cond, field, message):
    if not cond:
        raise ConfigError(field, message)


def _check_inference_flags(args):
    _require(args.passes >= 1, "passes", "must be >= 1")
    _require(0.0 <= args.damping < 1.0, "damping", "must lie in [0, 1)")
    _require(args.threads is None or args.threads >= 1, "threads", "must be >= 1")


def _threads(args):
    return args.threads or os.cpu_count() or 1


def _params_from_flags(args) -> ModelParams:
    if args.params:
        return io.read_params(args.params)
    try:
        return ModelParams(tuple(args.alpha), args.epsilon, tuple(args.mu), tuple(args.sigma))
    except ValueError as err:
        field = str(err).split()[0]
        raise ConfigError(field, str(err)) from None


def cmd_simulate(args) -> None:
    params = _params_from_flags(args)
    _require(args.samples >= 1, "samples", "must be >= 1")
    if args.network:
        net = io.read_network(args.network)
    else:
        for name in ("regulators", "targets", "max_regulators"):
            _require(getattr(args, name) >= 1, name.replace("_", "-"), "must be >= 1")
        net = random_network(args.regulators, args.targets, args.max_regulators, args.seed)
    expr, truth = simulate(net, params, args.samples, args.seed)
    out = io.ensure_dir(args.out_dir)
    io.write_network(out / "network.tsv", net)
    io.write_expression(out / "expression.tsv", expr)
    io.write_states(out / "states.tsv", truth)
    io.write_truth(out / "truth.tsv", truth)
    io.write_params(out / "params.txt", params)


def cmd_fit(args) -> None:
    _check_inference_flags(args)
    _require(args.tol > 0, "tol", "must be positive")
    _require(args.max_iters >= 1, "max-iters", "must be >= 1")
    net = io.read_network(args.network)
    expr = io.read_expression(args.expression)
    init = io.read_params(args.init) if args.init else None
    config = FitConfig(args.passes, args.damping, args.tol, args.max_iters, _threads(args), init)
    result = fit(net, expr, config)
    io.write_params(args.out, result.params)
    if args.trajectory:
        io.write_trajectory(args.trajectory, result)
    log.info("fit: %d iterations, converged=%s", result.iterations, result.converged)


def cmd_score(args) -> None:
    _check_inference_flags(args)
    net = io.read_network(args.network)
    expr = io.read_expression(args.expression)
    params = io.read_params(args.params)
    io.write_scores(args.out, score(net, params, expr, args.passes, args.damping, _threads(args)))


def cmd_eval(args) -> None:
    scores = io.read_scores(args.scores)
    truth = io.read_truth(args.truth)
    curve = pr_curve(scores, truth)
    io.write_pr(args.out, curve)
    print(f"auprc\t{io.fmt(curve.auprc)}")


def cmd_fdr(args) -> None:
    _require(0.0 < args.target_fdr < 1.0, "target-fdr", "must lie in (0, 1)")
    scores = io.read_scores(args.scores)
    sel = select_at_fdr(scores, args.target_fdr)
    io.write_selection(args.out, sel, args.target_fdr)
    print(f"selected\t{len(sel.selected)}\tthreshold\t{io.fmt(sel.threshold)}\testimated_fdr\t{io.fmt(sel.estimated_fdr)}")


def _inference_flags(p):
    p.add_argument("--passes", type=int, default=10, help="belief propagation sweeps per E-step")
    p.add_argument("--damping", type=float, default=0.0)
    p.add_argument("--threads", type=int, default=None, help="E-step worker threads (default: all CPUs)")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"error\tusage\t{message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deregnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="sample expression data from the model")
    p.add_argument("--network", help="network TSV; a random network is drawn if omitted")
    p.add_argument("--regulators", type=int, default=20)
    p.add_argument("--targets", type=int, default=50)
    p.add_argument("--max-regulators", type=int, default=3)
    p.add_argument("--params", help="parameter file; overrides the individual flags below")
    p.add_argument("--alpha", type=float, nargs=3, default=[1 / 3, 1 / 3, 1 - 2 / 3])
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--mu", type=float, nargs=3, default=[-1.0, 0.0, 1.0])
    p.add_argument("--sigma", type=float, nargs=3, default=[0.5, 0.5, 0.5])
    p.add_argument("-n", "--samples", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="estimate model parameters by EM")
    p.add_argument("--network", required=True)
    p.add_argument("--expression", required=True)
    p.add_argument("--init", help="starting parameters (default: data-driven)")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--out", required=True, help="parameter file to write")
    p.add_argument("--trajectory", help="per-iteration TSV log")
    _inference_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", help="posterior deregulation probabilities")
    p.add_argument("--network", required=True)
    p.add_argument("--expression", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)
    _inference_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="precision-recall curve against a truth mask")
    p.add_argument("--scores", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fdr", help="select pairs at a target false discovery rate")
    p.add_argument("--scores", required=True)
    p.add_argument("--target-fdr", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fdr)
    return parser


def _fail(kind: str, message: str, code: int = 1) -> int:
    print(f"error\t{kind}\t{message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as err:
        return _fail("invalid-config", str(err), 2)
    except AlignmentError as err:
        return _fail("alignment", f"missing={','.join(err.missing)} extra={','.join(err.extra)}")
    except io.FormatError as err:
        return _fail("format", str(err))
    except SampleEvidenceError as err:
        return _fail("zero-evidence", str(err))
    except OSError as err:
        return _fail("io", str(err))
    except ValueError as err:
        return _fail("invalid-input", str(err))
    return 0


if __name__ == "__main__":
    sys.exit(main())
