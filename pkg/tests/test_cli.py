import shutil
import subprocess

import numpy as np
import pytest

from deregnet import io
from deregnet.cli import main
from deregnet.em import FitConfig, fit, score
from deregnet.evaluation import pr_curve, select_at_fdr
from deregnet.model import ModelParams
from deregnet.simulate import random_network, simulate

OUTPUTS = ("network.tsv", "expression.tsv", "states.tsv", "truth.tsv", "params.txt")


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def simulated(tmp_path, capsys):
    d = tmp_path / "sim"
    code, _, _ = run(capsys, "simulate", "--regulators", 8, "--targets", 15, "-n", 30, "--seed", 3, "--out-dir", d)
    assert code == 0
    return d


class TestSimulate:
    def test_byte_identical_reruns(self, tmp_path, capsys):
        for name in ("a", "b"):
            args = ["simulate", "--regulators", 20, "--targets", 50, "-n", 50, "--seed", 1, "--out-dir", tmp_path / name]
            assert run(capsys, *args)[0] == 0
        for f in OUTPUTS:
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_zero_epsilon_mask_is_empty(self, tmp_path, capsys):
        assert run(capsys, "simulate", "--epsilon", 0, "--seed", 2, "--out-dir", tmp_path)[0] == 0
        truth = io.read_truth(tmp_path / "truth.tsv")
        assert not truth.deregulated.any()

    def test_outputs_round_trip(self, simulated):
        net = io.read_network(simulated / "network.tsv")
        params = io.read_params(simulated / "params.txt")
        expr, truth = simulate(net, params, 30, 3)
        assert net == random_network(8, 15, 3, 3)
        np.testing.assert_array_equal(io.read_expression(simulated / "expression.tsv").values, expr.values)
        read_truth = io.read_truth(simulated / "truth.tsv", simulated / "states.tsv")
        np.testing.assert_array_equal(read_truth.deregulated, truth.deregulated)
        np.testing.assert_array_equal(read_truth.states, truth.states)
        assert read_truth.gene_ids == truth.gene_ids

    def test_network_flag_reuses_topology(self, simulated, tmp_path, capsys):
        out = tmp_path / "again"
        assert run(capsys, "simulate", "--network", simulated / "network.tsv", "--out-dir", out)[0] == 0
        assert (out / "network.tsv").read_bytes() == (simulated / "network.tsv").read_bytes()

    def test_invalid_config_names_field(self, tmp_path, capsys):
        code, _, err = run(capsys, "simulate", "--epsilon", 1.5, "--out-dir", tmp_path)
        assert code == 2
        kind, field = err.strip().split("\t")[1:3]
        assert kind == "invalid-config"
        assert field.startswith("epsilon")


class TestFitAndScore:
    def test_fit_writes_params_and_trajectory(self, simulated, tmp_path, capsys):
        args = ["fit", "--network", simulated / "network.tsv", "--expression", simulated / "expression.tsv", "--threads", 1]
        code, _, _ = run(capsys, *args, "--out", tmp_path / "p1.txt", "--trajectory", tmp_path / "t.tsv")
        assert code == 0
        run(capsys, *args, "--out", tmp_path / "p2.txt")
        assert (tmp_path / "p1.txt").read_bytes() == (tmp_path / "p2.txt").read_bytes()
        net = io.read_network(simulated / "network.tsv")
        expr = io.read_expression(simulated / "expression.tsv")
        expected = fit(net, expr, FitConfig(threads=1))
        assert io.read_params(tmp_path / "p1.txt") == expected.params
        rows = io.read_trajectory(tmp_path / "t.tsv")
        assert len(rows) == expected.iterations
        assert rows[-1]["mu_plus"] == expected.params.mu[2]

    def test_infinite_tolerance_single_row(self, simulated, tmp_path, capsys):
        code, _, _ = run(
            capsys, "fit", "--network", simulated / "network.tsv", "--expression", simulated / "expression.tsv",
            "--tol", "inf", "--out", tmp_path / "p.txt", "--trajectory", tmp_path / "t.tsv",
        )
        assert code == 0
        assert len(io.read_trajectory(tmp_path / "t.tsv")) == 1

    def test_fit_recovers_simulation_parameters(self, tmp_path, capsys):
        sim = tmp_path / "sim"
        run(capsys, "simulate", "--sigma", 0.2, 0.2, 0.2, "-n", 100, "--seed", 5, "--out-dir", sim)
        code, _, _ = run(
            capsys, "fit", "--network", sim / "network.tsv", "--expression", sim / "expression.tsv",
            "--out", tmp_path / "fit.txt",
        )
        assert code == 0
        got, true = io.read_params(tmp_path / "fit.txt"), io.read_params(sim / "params.txt")
        assert np.all(np.abs(np.subtract(got.mu, true.mu)) <= 0.1)
        assert abs(got.epsilon - true.epsilon) <= 0.05

    def test_score_matches_library_and_is_deterministic(self, simulated, tmp_path, capsys):
        args = [
            "score", "--network", simulated / "network.tsv", "--expression", simulated / "expression.tsv",
            "--params", simulated / "params.txt",
        ]
        assert run(capsys, *args, "--out", tmp_path / "a.tsv", "--threads", 2)[0] == 0
        assert run(capsys, *args, "--out", tmp_path / "b.tsv", "--threads", 2)[0] == 0
        assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()
        net = io.read_network(simulated / "network.tsv")
        expr = io.read_expression(simulated / "expression.tsv")
        expected = score(net, io.read_params(simulated / "params.txt"), expr, threads=2)
        np.testing.assert_array_equal(io.read_scores(tmp_path / "a.tsv").scores, expected.scores)

    def test_zero_epsilon_scores_are_zero(self, simulated, tmp_path, capsys):
        p = io.read_params(simulated / "params.txt")
        io.write_params(tmp_path / "p.txt", ModelParams(p.alpha, 0.0, p.mu, p.sigma))
        run(
            capsys, "score", "--network", simulated / "network.tsv", "--expression", simulated / "expression.tsv",
            "--params", tmp_path / "p.txt", "--out", tmp_path / "s.tsv",
        )
        assert np.all(io.read_scores(tmp_path / "s.tsv").scores == 0.0)

    def test_alignment_error_lists_gene_ids(self, simulated, tmp_path, capsys):
        expr = io.read_expression(simulated / "expression.tsv")
        lines = (simulated / "expression.tsv").read_text().splitlines()
        dropped = expr.gene_ids[0]
        kept = [ln for ln in lines if not ln.startswith(dropped + "\t")]
        kept.append("EXTRA\t" + "\t".join(["0"] * expr.n))
        (tmp_path / "bad.tsv").write_text("\n".join(kept) + "\n")
        code, _, err = run(
            capsys, "score", "--network", simulated / "network.tsv", "--expression", tmp_path / "bad.tsv",
            "--params", simulated / "params.txt", "--out", tmp_path / "s.tsv",
        )
        assert code == 1
        assert err.strip() == f"error\talignment\tmissing={dropped} extra=EXTRA"


class TestEvalAndFdr:
    @pytest.fixture
    def scored(self, simulated, tmp_path, capsys):
        run(
            capsys, "score", "--network", simulated / "network.tsv", "--expression", simulated / "expression.tsv",
            "--params", simulated / "params.txt", "--out", tmp_path / "scores.tsv",
        )
        return tmp_path / "scores.tsv"

    def test_eval(self, simulated, scored, tmp_path, capsys):
        code, out, _ = run(capsys, "eval", "--scores", scored, "--truth", simulated / "truth.tsv", "--out", tmp_path / "pr.tsv")
        assert code == 0
        expected = pr_curve(io.read_scores(scored), io.read_truth(simulated / "truth.tsv"))
        assert out == f"auprc\t{io.fmt(expected.auprc)}\n"
        read = io.read_pr(tmp_path / "pr.tsv")
        assert read.auprc == expected.auprc
        np.testing.assert_array_equal(read.precision, expected.precision)
        np.testing.assert_array_equal(read.recall, expected.recall)

    def test_eval_without_positives(self, scored, tmp_path, capsys):
        scores = io.read_scores(scored)
        lines = ["sample\t" + "\t".join(scores.target_ids)]
        lines += [s + "\t" + "\t".join(["0"] * len(scores.target_ids)) for s in scores.sample_ids]
        (tmp_path / "empty.tsv").write_text("\n".join(lines) + "\n")
        code, _, err = run(capsys, "eval", "--scores", scored, "--truth", tmp_path / "empty.tsv", "--out", tmp_path / "pr.tsv")
        assert code == 1
        assert err.startswith("error\tinvalid-input\t")

    def test_fdr(self, scored, tmp_path, capsys):
        code, out, _ = run(capsys, "fdr", "--scores", scored, "--target-fdr", 0.1, "--out", tmp_path / "sel.tsv")
        assert code == 0
        expected = select_at_fdr(io.read_scores(scored), 0.1)
        read = io.read_selection(tmp_path / "sel.tsv")
        assert read.selected == expected.selected
        assert read.threshold == expected.threshold
        assert read.estimated_fdr == expected.estimated_fdr
        np.testing.assert_array_equal(read.scores, expected.scores)
        assert out.startswith(f"selected\t{len(expected.selected)}\t")

    @pytest.mark.parametrize("target", ["0", "1", "1.5"])
    def test_fdr_target_out_of_range(self, scored, tmp_path, capsys, target):
        code, _, err = run(capsys, "fdr", "--scores", scored, "--target-fdr", target, "--out", tmp_path / "sel.tsv")
        assert code == 2
        assert err.startswith("error\tinvalid-config\ttarget-fdr")


class TestErrors:
    def test_bad_params_file(self, simulated, tmp_path, capsys):
        (tmp_path / "p.txt").write_text("alpha\t0.5\t0.5\n")
        code, _, err = run(
            capsys, "score", "--network", simulated / "network.tsv", "--expression", simulated / "expression.tsv",
            "--params", tmp_path / "p.txt", "--out", tmp_path / "s.tsv",
        )
        assert code == 1
        assert err.startswith("error\tformat\t")

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(capsys, "eval", "--scores", tmp_path / "nope.tsv", "--truth", tmp_path / "nope.tsv", "--out", tmp_path / "x")
        assert code == 1
        assert err.startswith("error\tio\t")

    def test_usage_error_is_machine_readable(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["fit"])
        assert info.value.code == 2
        assert capsys.readouterr().err.strip().splitlines()[-1].startswith("error\tusage\t")

    @pytest.mark.skipif(shutil.which("deregnet") is None, reason="console script not installed")
    def test_console_script(self):
        proc = subprocess.run(["deregnet", "--help"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert "simulate" in proc.stdout


class TestFormats:
    def test_params_round_trip_exact(self, tmp_path):
        p = ModelParams((0.1, 0.2, 0.7), 0.123456789012345678, (-1 / 3, 0.0, np.pi), (0.1, 1 / 7, 2.0))
        io.write_params(tmp_path / "p.txt", p)
        assert io.read_params(tmp_path / "p.txt") == p

    def test_network_without_order_lines(self, tmp_path):
        (tmp_path / "n.tsv").write_text("target\tregulator\trole\ng1\ttf1\tactivator\ng1\ttf2\tinhibitor\n")
        net = io.read_network(tmp_path / "n.tsv")
        assert net.regulators == ("tf1", "tf2")
        assert net.inhibitors["g1"] == ("tf2",)

    @pytest.mark.parametrize(
        "text",
        ["g1\ttf1\tactivator\n", "target\tregulator\trole\ng1\ttf1\tbogus\n", "target\tregulator\trole\ng1\ttf1\n"],
    )
    def test_network_format_errors(self, tmp_path, text):
        (tmp_path / "n.tsv").write_text(text)
        with pytest.raises(io.FormatError):
            io.read_network(tmp_path / "n.tsv")

    def test_invalid_network_rejected(self, tmp_path):
        (tmp_path / "n.tsv").write_text("target\tregulator\trole\ng1\ttf1\tactivator\ng1\ttf1\tinhibitor\n")
        with pytest.raises(io.FormatError, match="overlap"):
            io.read_network(tmp_path / "n.tsv")
