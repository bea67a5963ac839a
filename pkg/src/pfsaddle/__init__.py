"""Projection-free solvers for convex-strongly-concave saddle-point problems."""

from .baselines import spfw_solve, spfw_step
from .cgs import CgsSchedule, cgs_iterations_for, cgs_minimize
from .cndg import cndg
from .core import (ConfigurationError, NumericalError, OracleCounters, ProblemConstants,
                   TraceRecord, make_rng)
from .istorc import IstorcSchedule, estimator_variance_probe, istorc_minimize
from .lo_oracles import L2Ball, NuclearBall, Simplex, lo_solve, membership, top_singular_pair
from .metrics import fw_gap, primal_dual_gap
from .mpcgs import MpcgsSchedule, SaddleSolution, mpcgs_solve, prox_step
from .mpscgs import MpscgsSchedule, mpscgs_solve, stochastic_prox_step
from .problems import Dataset, RobustMulticlass, SyntheticSaddle, estimate_constants, synthetic_make

__version__ = "0.1.0"
