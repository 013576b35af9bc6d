import numpy as np
import pytest
import scipy.sparse as sp

from randkrylov.sparse import SparseMatrix


def random_sparse(n, density=0.1, seed=0, shift=0.0):
    rng = np.random.default_rng(seed)
    M = sp.random(n, n, density=density, random_state=rng, format="csr")
    M = M + shift * sp.identity(n)
    return SparseMatrix.from_scipy(M)


def diagonalizable(n, seed, cond=10.0, spread=(0.5, 5.0)):
    """Dense ``V diag(lam) V^-1`` with real spectrum and moderate ``cond(V)``."""
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    s = np.geomspace(1.0, cond, n)
    V = Q * s
    lam = rng.uniform(*spread, n)
    return (V * lam) @ np.linalg.inv(V)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- desk-scale problems shared across test modules ---------------------------

from dataclasses import dataclass  # noqa: E402

from randkrylov.densefun import dense_reference  # noqa: E402
from randkrylov.problems import ProblemInstance, gen_conv_diff  # noqa: E402

# (alpha, beta, reference route); the c4 variant has cell Peclet number 1.1
DESK_CASES = {
    "a": (0.1, 0.01, "eig"),
    "b": (0.01, 0.01, "eig"),
    "c": (0.01, 1.0, "funm"),
    "c4": (0.01, 1.3, None),
}


@dataclass
class Desk:
    problem: ProblemInstance
    route: str | None
    _reference: np.ndarray | None = None

    @property
    def reference(self) -> np.ndarray:
        if self._reference is None:
            self._reference = dense_reference(self.problem.L.to_dense(), self.problem.f,
                                              self.problem.b, method=self.route)
        return self._reference


@pytest.fixture(scope="session")
def desk():
    """60x60 convection-diffusion instances (n = 3600) with lazily computed references."""
    cache = {}

    def get(case):
        if case not in cache:
            alpha, beta, route = DESK_CASES[case]
            cache[case] = Desk(gen_conv_diff(60, 60, alpha=alpha, beta=beta, t=1.0, seed=0), route)
        return cache[case]

    return get


@pytest.fixture(scope="session")
def small_conv_diff():
    return gen_conv_diff(18, 18, alpha=0.05, beta=0.5, t=1.0, seed=1)
