"""Multitype continuous-state branching processes: branching mechanisms, the
Laplace semigroup, extinction analysis and Lamperti Monte Carlo."""

__version__ = "0.1.0"

from ._accel import BACKEND
from .extinction import (ExtinctionReport, RootError, SubordinatorError, extinction_report,
                         grey_condition, grey_quadrature, phi_zero)
from .mechanism import (BranchingMechanism, JumpAtom, LevyColumn, MechanismError,
                        ReducibleWarning, StableComponent, column, criticality, eval_phi,
                        eval_phi_offdiag, eval_phi_tilde, find_Dphi_witness, is_irreducible,
                        make_neutral, mean_matrix, perron_root, phi_jacobian)
from .mechfile import dumps_mechanism, load_mechanism, loads_mechanism, save_mechanism
from .semigroup import (AtInfinity, BlowUpError, ComparisonSolution, DichotomyError,
                        SemigroupSolution, SolverError, comparison_solution, semigroup_residual,
                        solve_u, u_at_infinity, verify_domination)
from .simulate import (ExtinctionEstimate, HittingTime, MCSBPPath, SpaLFPath, hitting_time,
                       mc_extinction, mc_laplace, sample_spalf, simulate_mcsbp,
                       verify_T_equals_integral)

__all__ = [name for name in dir() if not name.startswith("_")]
