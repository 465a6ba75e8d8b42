"""Average percentile upper bounds (APUB) for sample means and two-stage
stochastic linear programs with random recourse."""

from apub._kernels import BACKEND
from apub.bounds import (ApubEstimate, SampleSet, apub_bootstrap, apub_exact, cvar_of_samples,
                         efron_bootstrap, normal_ucb, var_of_samples)
from apub.errors import (ApubError, EnumerationTooLarge, IterationCapExceeded, ModelError,
                         ModelInfeasible, ModelUnbounded, NumericalBreakdown)
from apub.lp import LpProblem, LpSolution, LpStatus, solve_lp
from apub.lshaped import Cut, CutKind, SolveLog, compute_gamma, solve_apub_lshaped, solve_saa_lshaped
from apub.model import (Scenario, ScenarioBatch, TwoStageProblem, build_extensive_form,
                        solve_extensive, solve_saa_extensive)
from apub.sampling import (BootstrapWeights, RngStream, derive_substream, draw_bootstrap_weights,
                           draw_weight_matrix)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ApubEstimate", "SampleSet", "apub_bootstrap", "apub_exact", "cvar_of_samples",
    "efron_bootstrap", "normal_ucb", "var_of_samples", "ApubError", "EnumerationTooLarge",
    "IterationCapExceeded", "ModelError", "ModelInfeasible", "ModelUnbounded", "NumericalBreakdown",
    "LpProblem", "LpSolution", "LpStatus", "solve_lp", "Cut", "CutKind", "SolveLog", "compute_gamma",
    "solve_apub_lshaped", "solve_saa_lshaped", "Scenario", "ScenarioBatch", "TwoStageProblem",
    "build_extensive_form", "solve_extensive", "solve_saa_extensive", "BootstrapWeights", "RngStream",
    "derive_substream", "draw_bootstrap_weights", "draw_weight_matrix",
]
