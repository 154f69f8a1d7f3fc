"""Fast alternating-minimization matrix completion with sketched solvers."""

from .completion import (
    CompletionConfig,
    ConvergenceReport,
    FactorPair,
    complete,
    init_factor,
    partition_omega,
    sample_omega,
    sample_omega_with_replacement,
    sampling_probability,
)
from .metrics import (
    incoherence,
    leverage_scores,
    principal_dist,
    subspace_geometry,
)
from .multireg import fast_mult_reg, gather_column
from .observed import ObservedEntries, read_omega, write_omega
from .sketch import SrhtOperator, fwht_inplace, sketch_dim, srht_apply, srht_new
from .solver import RegressionResult, SolverConfig, high_precision_reg, weighted_reg
from .synth import GroundTruth, entry_oracle, gen_incoherent

__version__ = "0.1.0"
