"""Desk-scale numerical laboratory for random walks in low-disorder random
environments: potential kernels, killed Green functions, invariant-measure
estimators and the first-order density and velocity expansions."""

from .environment import (EnvironmentField, PerturbationLaw, SiteConfig,
                          check_ld, ellipticity_kappa, make_perturbation_law,
                          omega_window, p_epsilon, site_omega,
                          two_atom_drift_law, uniform_window, zero_law)
from .expansion import (ExpansionPrediction, VelocityPrediction,
                        box_density_predictions, density_first_order,
                        j_epsilon_vs_j0_gap, pair_density_2d,
                        velocity_expansion, velocity_q_average_oracle)
from .greenfn import (FinitePerturbation, KilledGreenTable,
                      first_order_green_prediction, killed_green_exact,
                      killed_green_mc, perturb_environment, required_steps,
                      verify_lemma_bounds)
from .kernels import (Direction, NStepTable, PotentialKernelTable,
                      TransitionKernel, directions, nstep_probability,
                      phi_eps, potential_kernel_2d_ssrw,
                      potential_kernel_fourier,
                      potential_kernel_table_2d_ssrw,
                      potential_kernel_table_fourier,
                      potential_kernel_table_truncated,
                      potential_kernel_truncated, reverse_kernel,
                      symmetric_kernel)
from .manifests import ExperimentManifest, RecipeResult, default_manifest
from .measures import (BoxConfiguration, DensityEstimate, VelocityEstimate,
                       WalkTrace, cesaro_invariant_estimate,
                       kalikow_j_delta, kalikow_j_delta_sweep,
                       mu_delta_estimate, occupation_identity_check,
                       polynomial_condition_check, velocity_mc)
from .recipes import RECIPES, residual_scaling_report, run_recipe

__version__ = "0.1.0"
