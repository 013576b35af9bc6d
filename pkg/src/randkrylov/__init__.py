"""Classical, randomized and restarted Krylov methods for ``f(A) b``."""

from .approximants import Approximant, fom, rand_fom, rand_ls, ritz_values, sfom
from .basis import KrylovDecomposition, arnoldi, incomplete_arnoldi, randomized_arnoldi
from .densefun import (FunctionSpec, cossqrtm, dense_eig_oracle, dense_reference, expm, funm,
                       phi1m, schur_parlett, thin_qr)
from .instrument import OpCounter, counting
from .leastsq import LsqReport, lsmr, sketch_precondition_lsq
from .problems import (ProblemInstance, bessel_j, bessel_zero, gen_conv_diff, gen_membrane,
                       load_problem)
from .restart import (ConvergenceRecord, MethodSpec, RestartResult, RestartState,
                      convergence_sweep, restarted_krylov)
from .sketch import SketchOperator, estimate_distortion, make_sketch, sketch_apply
from .sparse import SparseMatrix, load_matrix_market, save_matrix_market, spmv

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
