"""Sparse score-matching estimation of undirected graphical models.

Quadratic score-matching losses for Gaussian, truncated Gaussian and
normal-conditionals families, l1 and group-penalised solvers (exact solution
paths and coordinate descent), extended-BIC tuning, simulators and
recovery experiments.
"""
__version__ = "0.1.0"

from .cd import Estimate, solve_cd, solve_cd_gaussian, solve_group_cd
from .data import DataMatrix, DomainError, InvalidDataError, read_data, sample_covariance, write_data
from .diagnostics import (irrepresentability_alpha, meinshausen_alpha, meinshausen_sigma,
                          meinshausen_threshold, population_gamma, signed_support_match,
                          theory_constants)
from .evaluate import (ExperimentConfig, auc_comparison, calibrate_rate_constant, crossing_n,
                       recovery_probability, rescale_alignment, roc_points)
from .losses import (NONNEG, REAL_LINE, FamilySpec, Layout, QuadraticLoss, build_gaussian_loss, gaussian_trace_loss,
                     build_general_pairwise_loss, build_location_loss, build_loss,
                     build_nonneg_gaussian_loss, build_normal_conditionals_loss)
from .path import SolutionPath, solve_path
from .penalty import PenaltySpec, default_penalty, kkt_residual, lambda_max
from .simulate import (Graph, TruthSpec, chain_truth, gen_graph, lattice_truth, precision_block_uniform,
                       precision_discrete, precision_peng, sample_mvn, sample_mvt,
                       sample_normal_conditionals_gibbs, sample_truncated_mvn_gibbs, star_truth)
from .tuning import EbicConfig, ebic_score, fit_grid, refit_restricted, select_lambda_ebic

__all__ = [name for name in dir() if not name.startswith("_")]
