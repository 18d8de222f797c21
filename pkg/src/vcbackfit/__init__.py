"""Smooth backfitting estimators for varying-coefficient regression models."""

from .backfit import (BackfitConfig, LcFitResult, LpFitResult, backfit_local_constant,
                      backfit_local_polynomial, backfit_residual, check_uniqueness,
                      oracle_component_fit, solve_direct_lc, solve_direct_lp)
from .bandwidth import BandwidthResult, fit_plugins, optimal_bandwidths, select_bandwidths
from .dataset import Dataset
from .errors import (ConfigurationError, DomainError, EmptyWindow, IngestError, MiSingular,
                     NegativeVarianceIntegral, NonConvergence, PluginSingular, SingularPsi,
                     SingularSystem, UnsupportedOrder, VcBackfitError)
from .grid import Grid, GridFunction, GridVectorFunction
from .kernel import KERNELS, BaseKernel, eval_boundary_kernel, get_kernel, kernel_moments
from .marginal import MiConfig, mi_estimate, mi_fit
from .pipeline import FitArtifact, ModelSpec, SplitSpec, Term, fit_model, ingest, predict, rspe
from .simulate import generate, get_dgp, population_bandwidths, run_study
from .smoothers import SmootherSet, build_smoothers

__version__ = "0.1.0"
