"""Detect deregulated (sample, target gene) pairs given a regulatory network and expression data."""
from .builder import build_graph, build_sample_graph, hidden_variable_census
from .em import FitConfig, FitResult, SampleMarginals, e_step, fit, m_step, score
from .evaluation import estimate_fdr, pr_curve, select_at_fdr
from .factorgraph import FactorGraph, MarginalSet, ZeroEvidenceError, node_count, run_sum_product
from .model import (
    DeregulationScores,
    ExpressionMatrix,
    ModelParams,
    RegulatoryNetwork,
    collective_state,
    combine,
    truth_table,
    validate_network,
)
from .simulate import GroundTruth, random_network, simulate

__version__ = "0.1.0"
