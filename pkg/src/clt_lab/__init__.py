"""Numerical laboratory for Wasserstein CLT rates under dependence.

Exact optimal transport on point clouds, dependent-data generators with
closed-form Sigma_n, finite Markov chain Poisson/regeneration machinery,
big-small block decompositions, U-statistics, and a seeded experiment harness
that fits empirical log-log convergence rates against theoretical exponents.
"""
from .blocks import (BlockPartition, block_partition, block_sums,
                     optimal_block_length)
from .config import ExperimentConfig, load_config
from .errors import CltLabError
from .generators import (DependencyGraph, MomentProfile, SequenceSample,
                         band_graph, cycle_graph, draw_innovations,
                         exact_sigma_n_ma, gen_iid, gen_local_graph,
                         gen_m_dependent, grid_graph, path_graph,
                         sum_cloud_iid, sum_cloud_ma1)
from .linalg_gauss import (GaussianSpec, PsdMatrix, as_psd, cholesky_factor,
                           gaussian_spec, gaussian_w2_closed_form,
                           sample_gaussian, sqrt_psd)
from .markov_exact import (CovariancePair, DriftReport, FiniteChain,
                           PoissonSolution, drift_verify, exact_covariances,
                           g_t_backward, is_aperiodic, is_irreducible,
                           meeting_time_sample, poisson_solve,
                           simulate_chain_sums, stationary_dist, time_reversal)
from .rates import (DependenceFunctional, FitResult, RateCurve, RatePoint,
                    clt_distance_curve, estimate_dependence_functional,
                    fit_rate, theoretical_exponent)
from .regeneration import (CycleIncrements, Minorization, SplitTrace, TailFit,
                           build_minorization, cycle_increments,
                           cycle_tail_fit, kn_concentration,
                           mean_cycle_length, simulate_split_chain,
                           simulate_split_chain_batch)
from .seeding import child_rng
from .transport import (PointCloud, WpEstimate, estimate_wp_to_gaussian,
                        wp_assignment, wp_bruteforce, wp_sorted_1d)
from .ustat import (KERNELS, UKernel, projection_variance, q_nr, u_statistic)

__version__ = "0.1.0"
