"""Perron eigenvectors of infinite non-negative and Metzler matrices,

computed through weighted excursions of an embedded chain: the convergence
parameter R, taboo-power series for the left and right vectors, regenerative
Monte Carlo estimators, and the diagonal-shift pipeline that carries all of
it over to Metzler matrices.
"""

from .convergence import (ConvergenceReport, R_RECURRENT, R_TRANSIENT,
                          RecurrenceVerdict, UNDETERMINED, classify_recurrence,
                          convergence_parameter_finite, convergence_parameter_ladder)
from .errors import (AllTruncated, DomainError, DuplicateEntry, HorizonOverflow,
                     HypothesesUnmet, LadderNotMonotone, LemmaViolated,
                     NegativeOffDiagonal, NoConvergence, NonFiniteRowSum,
                     NonPositiveScale, ParseError, PerronChainError,
                     ShiftInadmissible, StateBudgetExhausted)
from .matrix import (FiniteMatrix, FiniteMetzler, IrreducibilityReport,
                     LazyMatrix, LazyMetzler, MatrixSource, MetzlerSource,
                     QMatrix, TabooPowerTable, TransitionKernel,
                     ball_restriction, build_kernel, build_qmatrix,
                     is_irreducible, row_sums, scale_columns, taboo_powers)
from .mc import (DEFAULT_SEED, ExcursionEstimate, McConfig, McScalar,
                 build_sampler, estimate_left, estimate_right,
                 estimate_total_mass, sample_excursion)
from .metzler import (CtmcPath, IterateTable, MetzlerSpectral, MetzlerVector,
                      default_shift, embedded_matrix, embedded_recurrence,
                      estimate_metzler_mc, left_vector_metzler_series,
                      minimal_solution_iterates, sample_ctmc_path,
                      shifted_source, spectral_bound)
from .mmio import read_matrix, write_matrix
from .models import (ModelSpec, birth_death, metzler_tridiagonal, parse_model,
                     srw_line)
from .series import (EigenPair, TotalMass, left_vector_series, merge_pairs,
                     residuals, right_vector_series, total_mass)

__version__ = "1.0.0"

__all__ = [name for name in dir() if not name.startswith("_")]
