"""Extended generator of a simplex polynomial diffusion on degree-truncated polynomial
bases, and moments through matrix exponentials."""
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Union
import logging

import numpy as np
import scipy.linalg

from .exceptions import DegreeCapError, DomainError, NonFiniteError
from .model_params import AdmissibleSimplexParameterSet, driftless
from .simplex_poly import (
    HomogeneousPolynomial,
    SimplexPolynomial,
    _basis,
    _index,
    basis_size,
    check_simplex_points,
    form_gradient_from_coeffs,
    form_matrix,
    monomial_matrix,
)

MAX_GENERATOR_DIM = 20_000


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """The generator restricted to polynomials of degree ``<= degree``.

    Column ``j`` of ``A`` holds the reduced coefficients of the generator applied to the
    ``j``-th basis monomial, so ``A @ coeffs(p) = coeffs(G p)``. When ``forms`` is set the
    columns act instead on forms of degree exactly ``degree`` (see ``build_form_generator``).
    """

    d: int
    degree: int
    A: np.ndarray
    forms: bool = False

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @property
    def dim(self) -> int:
        return self.A.shape[0]


def _shift(e: tuple, i: int, delta: int) -> tuple:
    return e[:i] + (e[i] + delta,) + e[i + 1 :]


def build_generator(params: AdmissibleSimplexParameterSet, k: int) -> GeneratorMatrix:
    """Assembles the generator matrix by symbolic differentiation of reduced monomials.

    With ``n = d - 1`` reduced variables the drift and the covariance read
    ``b_i = (beta_i + B_id) + sum_j (B_ij - B_id) x_j`` and
    ``c_ij = -gamma_ij x_i x_j``, ``c_ii = x_i (gamma_id + sum_{j != i} (gamma_ij - gamma_id) x_j - gamma_id x_i)``.

    Args:
        params (AdmissibleSimplexParameterSet): The model
        k (int): Truncation degree

    Returns:
        GeneratorMatrix: Matrix of size binomial(d - 1 + k, k)
    """
    d = params.d
    N = _check_generator_size(d, k)
    logging.debug(f"Building generator for d={d}, k={k} ({N} basis polynomials)")

    n = d - 1
    last = d - 1
    beta_r = params.beta[:n] + params.B[:n, last]
    B_r = params.B[:n, :n] - params.B[:n, last][:, None]
    gamma = params.gamma
    gamma_last = gamma[:n, last]

    index = _index(n, k)
    A = np.zeros((N, N))
    for col, e in enumerate(_basis(n, k)):
        for i in range(n):
            if e[i] == 0:
                continue
            lowered = _shift(e, i, -1)
            A[index[lowered], col] += e[i] * beta_r[i]
            for j in range(n):
                A[index[_shift(lowered, j, 1)], col] += e[i] * B_r[i, j]

            if e[i] >= 2:
                half = 0.5 * e[i] * (e[i] - 1)
                A[index[lowered], col] += half * gamma_last[i]
                for j in range(n):
                    if j != i:
                        A[index[_shift(lowered, j, 1)], col] += half * (gamma[i, j] - gamma_last[i])
                A[col, col] -= half * gamma_last[i]

            for j in range(i + 1, n):
                A[col, col] -= gamma[i, j] * e[i] * e[j]
    return GeneratorMatrix(d, k, A)


def _check_generator_size(d: int, k: int) -> int:
    if k < 0:
        raise DomainError(f"truncation degree must be nonnegative, got {k}")
    N = basis_size(d, k)
    if N > MAX_GENERATOR_DIM:
        raise DegreeCapError(
            f"generator dimension {N} exceeds the cap {MAX_GENERATOR_DIM}",
            {"dimension": N, "cap": MAX_GENERATOR_DIM},
        )
    return N


def build_form_generator(params: AdmissibleSimplexParameterSet, k: int) -> GeneratorMatrix:
    """Assembles the generator on forms of degree ``k`` in the full coordinates.

    The generator maps ``x^a`` with ``|a| = k`` to a form of the same degree:
    ``sum_i a_i sum_j Bh_ij x^(a - e_i + e_j)`` from the drift ``Bh = beta 1^T + B``, and
    ``1/2 sum_{i != j} gamma_ij (a_i (a_i - 1) x^(a - e_i + e_j) - a_i a_j x^a)`` from the covariance.
    Off-diagonal entries are nonnegative for admissible parameters, which keeps the
    exponential free of cancellation at high degree.

    Args:
        params (AdmissibleSimplexParameterSet): The model
        k (int): Degree of the forms

    Returns:
        GeneratorMatrix: Matrix of size binomial(d - 1 + k, k) with ``forms`` set
    """
    d = params.d
    N = _check_generator_size(d, k)
    logging.debug(f"Building form generator for d={d}, k={k} ({N} basis forms)")

    n = d - 1
    B_hat = params.beta[:, None] + params.B
    gamma = params.gamma
    index = _index(n, k)
    A = np.zeros((N, N))
    for col, e in enumerate(_basis(n, k)):
        a = e + (k - sum(e),)
        for i in range(d):
            if a[i] == 0:
                continue
            lowered = _shift(a, i, -1)
            A[col, col] += a[i] * B_hat[i, i]
            for j in range(d):
                if j == i:
                    continue
                raised = _shift(lowered, j, 1)
                A[index[raised[:n]], col] += a[i] * B_hat[i, j] + 0.5 * gamma[i, j] * a[i] * (a[i] - 1)
                A[col, col] -= 0.5 * gamma[i, j] * a[i] * a[j]
    return GeneratorMatrix(d, k, A, forms=True)


def _as_matrix(A: Union[GeneratorMatrix, np.ndarray]) -> np.ndarray:
    return A.A if isinstance(A, GeneratorMatrix) else np.asarray(A, dtype=float)


def propagator(A: Union[GeneratorMatrix, np.ndarray], t: float) -> np.ndarray:
    """``exp(t A)`` by scaling and squaring with a diagonal Pade approximant."""
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t}")
    matrix = _as_matrix(A)
    if not np.all(np.isfinite(matrix)):
        raise NonFiniteError("generator matrix has non-finite entries")
    result = scipy.linalg.expm(t * matrix)
    if not np.all(np.isfinite(result)):
        raise NonFiniteError(f"matrix exponential overflowed at t={t}")
    return result


def expm_apply(A: Union[GeneratorMatrix, np.ndarray], t: float, coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    if not np.all(np.isfinite(coeffs)):
        raise NonFiniteError("coefficient vector has non-finite entries")
    return propagator(A, t) @ coeffs


def _coeffs_for(generator: GeneratorMatrix, p: SimplexPolynomial) -> np.ndarray:
    if generator.forms:
        raise DomainError("a generator on forms cannot act on reduced coefficients")
    if p.dim != generator.d:
        raise DomainError(f"dimension mismatch: polynomial on d={p.dim}, generator on d={generator.d}")
    if p.degree > generator.degree:
        raise DegreeCapError(
            f"polynomial degree {p.degree} exceeds the generator truncation {generator.degree}",
            {"degree": p.degree, "truncation": generator.degree},
        )
    return p.padded(generator.degree).coeffs


def apply_generator(params: AdmissibleSimplexParameterSet, p: SimplexPolynomial) -> SimplexPolynomial:
    """``G p`` as a polynomial of the same degree."""
    generator = build_generator(params, p.max_degree)
    return SimplexPolynomial(p.dim, p.max_degree, generator.A @ _coeffs_for(generator, p))


def conditional_moment(
    params: AdmissibleSimplexParameterSet,
    p: SimplexPolynomial,
    t: float,
    mu0: Sequence[float],
    generator: GeneratorMatrix = None,
) -> float:
    """``E[p(mu_t) | mu_0]``.

    Args:
        params (AdmissibleSimplexParameterSet): The model
        p (SimplexPolynomial): The polynomial
        t (float): Horizon, nonnegative
        mu0 (Sequence[float]): Initial point on the simplex
        generator (GeneratorMatrix, optional): A prebuilt generator of ``params`` with truncation at least deg(p).
    """
    if generator is None:
        generator = build_generator(params, p.max_degree)
    coeffs = expm_apply(generator, t, _coeffs_for(generator, p))
    return SimplexPolynomial(p.dim, generator.degree, coeffs).evaluate(mu0)


def moment_curve(
    generator: GeneratorMatrix, p: SimplexPolynomial, times: Iterable[float], mu0: Sequence[float]
) -> np.ndarray:
    """``E[p(mu_t) | mu_0]`` for several horizons with a single generator."""
    mu0 = check_simplex_points(mu0, generator.d)
    coeffs = _coeffs_for(generator, p)
    monomials = monomial_matrix(mu0, generator.degree)[0]
    return np.array([monomials @ expm_apply(generator, t, coeffs) for t in times])


@dataclass(frozen=True, eq=False)
class MomentRequest:
    """``E[polynomial(mu_t) | mu_0]`` to be evaluated."""

    polynomial: SimplexPolynomial
    t: float
    mu0: np.ndarray

    def __post_init__(self):
        if not self.t >= 0:
            raise DomainError(f"time must be nonnegative, got {self.t}")
        mu0 = check_simplex_points(self.mu0, self.polynomial.dim)[0].copy()
        mu0.setflags(write=False)
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "mu0", mu0)


def evaluate_requests(
    params: AdmissibleSimplexParameterSet, requests: Sequence[MomentRequest], k: int = None
) -> np.ndarray:
    """Evaluates all requests with one generator of degree ``max(k, deg p)``.

    Requests sharing a horizon share one matrix exponential.
    """
    if not requests:
        return np.zeros(0)
    degree = max([r.polynomial.degree for r in requests] + [k or 0])
    generator = build_generator(params, degree)
    propagators: Dict[float, np.ndarray] = {}
    values = np.empty(len(requests))
    for n, request in enumerate(requests):
        if request.t not in propagators:
            propagators[request.t] = propagator(generator, request.t)
        coeffs = propagators[request.t] @ _coeffs_for(generator, request.polynomial)
        values[n] = monomial_matrix(request.mu0[None], degree)[0] @ coeffs
    return values


@dataclass(eq=False)
class DriftlessPriceFamily:
    """The time-indexed polynomials ``p(t, .) = exp((tau - t) A_0) p`` where ``A_0`` is the
    generator of the martingale with the covariance structure of the model.

    The family is propagated as forms of degree ``generator.degree``. Form coefficient
    vectors are cached per distinct time.
    """

    generator: GeneratorMatrix
    terminal: HomogeneousPolynomial
    horizon: float
    _cache: Dict[float, np.ndarray] = field(default_factory=dict, repr=False)

    def coeffs_at(self, t: float) -> np.ndarray:
        t = float(t)
        if not -1e-12 * self.horizon <= t <= self.horizon * (1 + 1e-12):
            raise DomainError(f"time {t} outside [0, {self.horizon}]")
        if t not in self._cache:
            coeffs = expm_apply(self.generator, max(self.horizon - t, 0.0), self.terminal.coeffs)
            coeffs.setflags(write=False)
            self._cache[t] = coeffs
        return self._cache[t]

    def precompute(self, times: Iterable[float]):
        """Fills the cache backwards from the latest time, reusing one propagator per grid gap."""
        steps: Dict[float, np.ndarray] = {}
        previous = None
        for t in sorted({float(t) for t in times}, reverse=True):
            if t in self._cache or previous is None:
                self.coeffs_at(t)
            else:
                if not t >= -1e-12 * self.horizon:
                    raise DomainError(f"time {t} outside [0, {self.horizon}]")
                gap = round(previous - t, 12)
                if gap not in steps:
                    steps[gap] = propagator(self.generator, gap)
                coeffs = steps[gap] @ self._cache[previous]
                coeffs.setflags(write=False)
                self._cache[t] = coeffs
            previous = t

    def form_at(self, t: float) -> HomogeneousPolynomial:
        return HomogeneousPolynomial(self.terminal.dim, self.generator.degree, self.coeffs_at(t))

    def at(self, t: float) -> SimplexPolynomial:
        return self.form_at(t).dehomogenized()

    def value_many(self, t: float, points: np.ndarray) -> np.ndarray:
        return form_matrix(points, self.generator.degree) @ self.coeffs_at(t)

    def gradient_many(self, t: float, points: np.ndarray) -> np.ndarray:
        return form_gradient_from_coeffs(points, self.coeffs_at(t), self.generator.degree)


def price_polynomial_driftless(
    params: AdmissibleSimplexParameterSet,
    p: Union[SimplexPolynomial, HomogeneousPolynomial],
    horizon: float,
    times: Sequence[float] = (),
) -> DriftlessPriceFamily:
    """Conditional expectations of ``p(mu_horizon)`` under the driftless dynamics.

    Args:
        params (AdmissibleSimplexParameterSet): The model; only its gamma is used
        p (Union[SimplexPolynomial, HomogeneousPolynomial]): Terminal polynomial. A reduced
            polynomial is first written as a form of degree ``p.max_degree``.
        horizon (float): Positive horizon tau
        times (Sequence[float], optional): Times in [0, tau] to precompute.

    Returns:
        DriftlessPriceFamily: Lazily evaluated family of polynomials
    """
    if not horizon > 0:
        raise DomainError(f"horizon must be positive, got {horizon}")
    if isinstance(p, SimplexPolynomial):
        p = HomogeneousPolynomial.from_polynomial(p)
    family = DriftlessPriceFamily(build_form_generator(driftless(params), p.degree), p, float(horizon))
    family.precompute(times)
    return family


def generator_columns(generator: GeneratorMatrix) -> List[SimplexPolynomial]:
    """The images of the basis monomials as polynomials."""
    return [SimplexPolynomial(generator.d, generator.degree, generator.A[:, j]) for j in range(generator.dim)]
