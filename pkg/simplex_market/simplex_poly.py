"""Polynomials on the unit simplex in reduced coordinates.

A polynomial on the simplex has many representatives as a polynomial on R^d. The
canonical one used here eliminates the last coordinate through
``x_d = 1 - (x_1 + ... + x_{d-1})`` and stores a dense coefficient vector over the
monomials of degree ``<= k`` in the remaining ``d - 1`` variables, enumerated in
graded lexicographic order (by degree, ties with the larger leading exponent first).
Because the order is graded, the basis of degree ``<= m`` is a prefix of the basis of
degree ``<= k`` for every ``m <= k``.
"""
from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, Sequence, Tuple, Union
import functools
import numbers
import math

import numpy as np

from .exceptions import DegreeCapError, DomainError

MAX_DEGREE = 48
SIMPLEX_TOL = 1e-12

Exponents = Tuple[int, ...]


@dataclass(frozen=True)
class MultiIndex:
    exponents: Exponents

    @property
    def degree(self) -> int:
        return sum(self.exponents)


def _compositions(total: int, n_parts: int) -> Iterator[Exponents]:
    # descending lexicographic order
    if n_parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, n_parts - 1):
            yield (first,) + rest


@functools.lru_cache(maxsize=None)
def _basis(n_vars: int, k: int) -> Tuple[Exponents, ...]:
    return tuple(e for m in range(k + 1) for e in _compositions(m, n_vars))


@functools.lru_cache(maxsize=None)
def _index(n_vars: int, k: int) -> Dict[Exponents, int]:
    return {e: i for i, e in enumerate(_basis(n_vars, k))}


@functools.lru_cache(maxsize=None)
def _exponent_matrix(n_vars: int, k: int) -> np.ndarray:
    exps = np.array(_basis(n_vars, k), dtype=int).reshape(-1, n_vars)
    exps.setflags(write=False)
    return exps


@functools.lru_cache(maxsize=None)
def _degrees(n_vars: int, k: int) -> np.ndarray:
    degrees = _exponent_matrix(n_vars, k).sum(axis=1)
    degrees.setflags(write=False)
    return degrees


@functools.lru_cache(maxsize=None)
def derivative_matrix(n_vars: int, k: int, j: int) -> np.ndarray:
    """Matrix of the partial derivative with respect to reduced variable ``j``
    acting on coefficient vectors of degree ``<= k``."""
    index = _index(n_vars, k)
    D = np.zeros((len(index), len(index)))
    for col, e in enumerate(_basis(n_vars, k)):
        if e[j] > 0:
            lowered = e[:j] + (e[j] - 1,) + e[j + 1 :]
            D[index[lowered], col] = e[j]
    D.setflags(write=False)
    return D


def basis_size(d: int, k: int) -> int:
    return math.comb(d - 1 + k, k)


def basis_enumerate(d: int, k: int) -> List[MultiIndex]:
    """Lists all multi-indices of degree ``<= k`` in the ``d - 1`` reduced variables.

    Args:
        d (int): Dimension of the simplex, at least 2
        k (int): Maximal degree, nonnegative

    Returns:
        List[MultiIndex]: The graded lexicographic enumeration, of length binomial(d - 1 + k, k)
    """
    if d < 2 or k < 0:
        raise DomainError(f"basis needs d >= 2 and k >= 0, got d={d}, k={k}")
    return [MultiIndex(e) for e in _basis(d - 1, k)]


def monomial_matrix(points: np.ndarray, k: int) -> np.ndarray:
    """Evaluates every basis monomial of degree ``<= k`` at full-coordinate simplex points.

    Args:
        points (np.ndarray): Array of shape (m, d)
        k (int): Maximal degree

    Returns:
        np.ndarray: Array of shape (m, N) with N = binomial(d - 1 + k, k)
    """
    points = np.atleast_2d(points)
    n_vars = points.shape[1] - 1
    reduced = points[:, :n_vars]
    exps = _exponent_matrix(n_vars, k)
    # powers per variable up to k, then products along the exponent columns
    powers = reduced[:, :, None] ** np.arange(k + 1)[None, None, :]
    values = np.ones((points.shape[0], exps.shape[0]))
    for j in range(n_vars):
        values *= powers[:, j, exps[:, j]]
    return values


def check_simplex_points(points: np.ndarray, d: int, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Returns ``points`` as a float array of shape (m, d) after checking that every row
    lies on the simplex within ``tol``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != d:
        raise DomainError(
            f"dimension mismatch: expected points with {d} coordinates, got {points.shape[1]}",
            {"expected": d, "got": int(points.shape[1])},
        )
    if not np.all(np.isfinite(points)):
        raise DomainError("simplex points must be finite")
    if np.any(points < -tol):
        raise DomainError("simplex points must be nonnegative")
    sums = points.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > tol):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise DomainError(
            f"simplex points must sum to 1 (worst deviation {worst:.3e})",
            {"deviation": worst},
        )
    return points


@dataclass(frozen=True, eq=False)
class SimplexPolynomial:
    """A polynomial on the ``d``-dimensional unit simplex.

    ``coeffs[i]`` multiplies the ``i``-th monomial of ``basis_enumerate(dim, max_degree)``
    in the reduced variables ``x_1, ..., x_{d-1}``. Instances are immutable.
    """

    dim: int
    max_degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.dim < 2:
            raise DomainError(f"simplex dimension must be at least 2, got {self.dim}")
        if self.max_degree < 0:
            raise DomainError(f"degree must be nonnegative, got {self.max_degree}")
        coeffs = np.array(self.coeffs, dtype=float).reshape(-1)
        expected = basis_size(self.dim, self.max_degree)
        if coeffs.shape[0] != expected:
            raise DomainError(
                f"expected {expected} coefficients for d={self.dim}, k={self.max_degree}, got {coeffs.shape[0]}"
            )
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    # construction

    @classmethod
    def zero(cls, d: int, k: int = 0) -> "SimplexPolynomial":
        return cls(d, k, np.zeros(basis_size(d, k)))

    @classmethod
    def constant(cls, d: int, c: float = 1.0, k: int = 0) -> "SimplexPolynomial":
        coeffs = np.zeros(basis_size(d, k))
        coeffs[0] = c
        return cls(d, k, coeffs)

    @classmethod
    def coordinate(cls, d: int, i: int, k: int = 1) -> "SimplexPolynomial":
        """The full coordinate ``x_i`` (0-based); the last one is ``1 - sum of the others``."""
        if not 0 <= i < d:
            raise DomainError(f"coordinate index {i} out of range for d={d}")
        k = max(k, 1)
        index = _index(d - 1, k)
        coeffs = np.zeros(len(index))
        if i < d - 1:
            coeffs[index[_unit(d - 1, i)]] = 1.0
        else:
            coeffs[0] = 1.0
            for j in range(d - 1):
                coeffs[index[_unit(d - 1, j)]] = -1.0
        return cls(d, k, coeffs)

    @classmethod
    def from_terms(
        cls, d: int, terms: Mapping[Sequence[int], float], k: int = None
    ) -> "SimplexPolynomial":
        """Builds a polynomial from reduced-coordinate terms ``{exponents: coefficient}``."""
        terms = {tuple(int(v) for v in e): float(c) for e, c in terms.items()}
        for e in terms:
            if len(e) != d - 1 or min(e, default=0) < 0:
                raise DomainError(f"invalid reduced exponents {e} for d={d}")
        if k is None:
            k = max((sum(e) for e in terms), default=0)
        index = _index(d - 1, k)
        coeffs = np.zeros(len(index))
        for e, c in terms.items():
            if sum(e) > k:
                raise DegreeCapError(f"term {e} exceeds degree {k}")
            coeffs[index[e]] += c
        return cls(d, k, coeffs)

    # structure

    @property
    def n_vars(self) -> int:
        return self.dim - 1

    @property
    def basis(self) -> List[MultiIndex]:
        return basis_enumerate(self.dim, self.max_degree)

    @property
    def degree(self) -> int:
        nonzero = np.flatnonzero(self.coeffs)
        if nonzero.size == 0:
            return 0
        return int(_degrees(self.n_vars, self.max_degree)[nonzero].max())

    def terms(self) -> Dict[Exponents, float]:
        basis = _basis(self.n_vars, self.max_degree)
        return {basis[i]: float(self.coeffs[i]) for i in np.flatnonzero(self.coeffs)}

    def padded(self, k: int) -> "SimplexPolynomial":
        """The same polynomial stored with ``max_degree = k``."""
        if k < self.degree:
            raise DegreeCapError(f"cannot store a degree {self.degree} polynomial with k={k}")
        n = basis_size(self.dim, k)
        coeffs = np.zeros(n)
        m = min(n, self.coeffs.shape[0])
        coeffs[:m] = self.coeffs[:m]
        return SimplexPolynomial(self.dim, k, coeffs)

    def trimmed(self) -> "SimplexPolynomial":
        return self.padded(self.degree)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SimplexPolynomial) or other.dim != self.dim:
            return NotImplemented
        a, b = self.trimmed(), other.trimmed()
        return a.max_degree == b.max_degree and np.array_equal(a.coeffs, b.coeffs)

    __hash__ = None

    def allclose(self, other: "SimplexPolynomial", atol: float = 1e-12) -> bool:
        k = max(self.max_degree, other.max_degree)
        return bool(np.allclose(self.padded(k).coeffs, other.padded(k).coeffs, rtol=0.0, atol=atol))

    # arithmetic

    def _check_same_dim(self, other: "SimplexPolynomial"):
        if other.dim != self.dim:
            raise DomainError(f"dimension mismatch: {self.dim} != {other.dim}")

    def __add__(self, other) -> "SimplexPolynomial":
        if isinstance(other, numbers.Real):
            other = SimplexPolynomial.constant(self.dim, float(other))
        self._check_same_dim(other)
        k = max(self.max_degree, other.max_degree)
        return SimplexPolynomial(self.dim, k, self.padded(k).coeffs + other.padded(k).coeffs)

    __radd__ = __add__

    def __neg__(self) -> "SimplexPolynomial":
        return SimplexPolynomial(self.dim, self.max_degree, -self.coeffs)

    def __sub__(self, other) -> "SimplexPolynomial":
        return self + (-other)

    def __rsub__(self, other) -> "SimplexPolynomial":
        return (-self) + other

    def __mul__(self, other) -> "SimplexPolynomial":
        if isinstance(other, numbers.Real):
            return SimplexPolynomial(self.dim, self.max_degree, float(other) * self.coeffs)
        self._check_same_dim(other)
        return _multiply(self, other)

    __rmul__ = __mul__

    def power(self, n: int) -> "SimplexPolynomial":
        if n < 0:
            raise DomainError(f"negative power {n}")
        if n > 0 and self.degree * n > MAX_DEGREE:
            raise DegreeCapError(
                f"degree {self.degree * n} of the power exceeds the cap {MAX_DEGREE}",
                {"degree": self.degree * n, "cap": MAX_DEGREE},
            )
        result = SimplexPolynomial.constant(self.dim)
        base = self.trimmed()
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    # calculus

    def partial(self, j: int) -> "SimplexPolynomial":
        """Partial derivative with respect to the reduced variable ``x_j`` (0-based, ``j < d - 1``)."""
        if not 0 <= j < self.n_vars:
            raise DomainError(f"reduced variable index {j} out of range for d={self.dim}")
        D = derivative_matrix(self.n_vars, self.max_degree, j)
        return SimplexPolynomial(self.dim, self.max_degree, D @ self.coeffs)

    # evaluation

    def evaluate(self, mu: Sequence[float]) -> float:
        return float(self.evaluate_many(np.asarray(mu, dtype=float)[None, :])[0])

    def evaluate_many(self, points: np.ndarray, check: bool = True) -> np.ndarray:
        if check:
            points = check_simplex_points(points, self.dim)
        return monomial_matrix(points, self.max_degree) @ self.coeffs

    def gradient_full(self, mu: Sequence[float]) -> np.ndarray:
        return self.gradient_many(np.asarray(mu, dtype=float)[None, :])[0]

    def gradient_many(self, points: np.ndarray, check: bool = True) -> np.ndarray:
        """Gradients at many points, shape (m, d); the last component is 0."""
        if check:
            points = check_simplex_points(points, self.dim)
        return gradient_from_coeffs(points, self.coeffs, self.max_degree)

    def __repr__(self) -> str:
        return f"SimplexPolynomial(dim={self.dim}, max_degree={self.max_degree}, terms={self.terms()})"


def _unit(n_vars: int, j: int) -> Exponents:
    return tuple(1 if i == j else 0 for i in range(n_vars))


def gradient_from_coeffs(points: np.ndarray, coeffs: np.ndarray, k: int) -> np.ndarray:
    """Full-coordinate gradients of the polynomial with reduced coefficients ``coeffs``
    at the rows of ``points``; the last column is the canonical 0."""
    points = np.atleast_2d(points)
    n_vars = points.shape[1] - 1
    monomials = monomial_matrix(points, k)
    grad = np.zeros(points.shape)
    for j in range(n_vars):
        grad[:, j] = monomials @ (derivative_matrix(n_vars, k, j) @ coeffs)
    return grad


def _check_product_degree(k: int):
    if k > MAX_DEGREE:
        raise DegreeCapError(
            f"degree {k} of the product exceeds the cap {MAX_DEGREE}",
            {"degree": k, "cap": MAX_DEGREE},
        )


def _convolve(n_vars: int, k_p: int, coeffs_p: np.ndarray, k_q: int, coeffs_q: np.ndarray) -> np.ndarray:
    # coefficients of the product, stored at degree k_p + k_q
    index = _index(n_vars, k_p + k_q)
    exps_p = _exponent_matrix(n_vars, k_p)
    exps_q = _exponent_matrix(n_vars, k_q)
    coeffs = np.zeros(len(index))
    nz_q = np.flatnonzero(coeffs_q)
    for a in np.flatnonzero(coeffs_p):
        for b in nz_q:
            coeffs[index[tuple(exps_p[a] + exps_q[b])]] += coeffs_p[a] * coeffs_q[b]
    return coeffs


def _multiply(p: SimplexPolynomial, q: SimplexPolynomial) -> SimplexPolynomial:
    p, q = p.trimmed(), q.trimmed()
    k = p.max_degree + q.max_degree
    _check_product_degree(k)
    return SimplexPolynomial(p.dim, k, _convolve(p.n_vars, p.max_degree, p.coeffs, q.max_degree, q.coeffs))


@functools.lru_cache(maxsize=None)
def form_derivative_matrix(n_vars: int, k: int, j: int) -> np.ndarray:
    """Matrix of the partial derivative with respect to full variable ``j`` mapping forms
    of degree ``k`` to forms of degree ``k - 1``; ``j == n_vars`` is the last variable."""
    target = _index(n_vars, k - 1)
    D = np.zeros((len(target), basis_size(n_vars + 1, k)))
    for col, e in enumerate(_basis(n_vars, k)):
        if j < n_vars and e[j] > 0:
            D[target[e[:j] + (e[j] - 1,) + e[j + 1 :]], col] = e[j]
        elif j == n_vars and k - sum(e) > 0:
            D[target[e], col] = k - sum(e)
    D.setflags(write=False)
    return D


def form_matrix(points: np.ndarray, k: int) -> np.ndarray:
    """Evaluates every basis form of degree ``k`` at full-coordinate points, shape (m, N).

    Column ``i`` is ``x^e * x_d^(k - |e|)`` for the ``i``-th reduced exponent ``e``.
    """
    points = np.atleast_2d(points)
    n_vars = points.shape[1] - 1
    return monomial_matrix(points, k) * points[:, -1:] ** (k - _degrees(n_vars, k))[None, :]


@dataclass(frozen=True, eq=False)
class HomogeneousPolynomial:
    """A homogeneous polynomial (form) of degree ``degree`` in all ``d`` full coordinates.

    The coefficient layout is that of ``SimplexPolynomial``: ``coeffs[i]`` multiplies
    ``x_1^e_1 ... x_{d-1}^e_{d-1} x_d^(degree - |e|)`` for the ``i``-th exponent ``e`` of
    ``basis_enumerate(dim, degree)``. Every polynomial on the simplex has exactly one
    representative of each degree at least its own, obtained by multiplying terms with
    powers of ``x_1 + ... + x_d``.

    Forms keep high-degree functions such as ``(x_1 - x_2)^32`` in coefficients of
    moderate size, where the reduced representative alternates in sign and loses most
    digits when evaluated.
    """

    dim: int
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.dim < 2:
            raise DomainError(f"simplex dimension must be at least 2, got {self.dim}")
        if self.degree < 0:
            raise DomainError(f"degree must be nonnegative, got {self.degree}")
        coeffs = np.array(self.coeffs, dtype=float).reshape(-1)
        expected = basis_size(self.dim, self.degree)
        if coeffs.shape[0] != expected:
            raise DomainError(
                f"expected {expected} coefficients for a form with d={self.dim}, degree={self.degree}, "
                f"got {coeffs.shape[0]}"
            )
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def linear(cls, d: int, weights: Sequence[float]) -> "HomogeneousPolynomial":
        """The linear form ``sum_i weights[i] * x_i``."""
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (d,):
            raise DomainError(f"expected {d} weights, got shape {weights.shape}")
        index = _index(d - 1, 1)
        coeffs = np.zeros(len(index))
        coeffs[index[(0,) * (d - 1)]] = weights[-1]
        for i in range(d - 1):
            coeffs[index[_unit(d - 1, i)]] = weights[i]
        return cls(d, 1, coeffs)

    @classmethod
    def one(cls, d: int, k: int = 0) -> "HomogeneousPolynomial":
        """``(x_1 + ... + x_d)^k``, the degree ``k`` representative of the constant 1."""
        if k == 0:
            return cls(d, 0, [1.0])
        return cls.linear(d, np.ones(d)).power(k)

    @classmethod
    def monomial(cls, d: int, exponents: Sequence[int], c: float = 1.0) -> "HomogeneousPolynomial":
        """``c * x^exponents`` for a length-``d`` exponent vector."""
        exponents = tuple(int(e) for e in exponents)
        if len(exponents) != d or min(exponents) < 0:
            raise DomainError(f"invalid full-coordinate exponents {exponents} for d={d}")
        k = sum(exponents)
        index = _index(d - 1, k)
        coeffs = np.zeros(len(index))
        coeffs[index[exponents[:-1]]] = c
        return cls(d, k, coeffs)

    @classmethod
    def from_polynomial(cls, p: SimplexPolynomial, k: int = None) -> "HomogeneousPolynomial":
        """The degree ``k`` form agreeing with ``p`` on the simplex (``k`` defaults to ``p.max_degree``)."""
        k = p.max_degree if k is None else k
        if k < p.degree:
            raise DegreeCapError(f"cannot represent a degree {p.degree} polynomial by a form of degree {k}")
        n_vars = p.n_vars
        result = cls(p.dim, k, np.zeros(basis_size(p.dim, k)))
        # the terms of reduced degree j form a form of degree j in x_1, ..., x_{d-1}
        by_degree: Dict[int, Dict[Exponents, float]] = {}
        for e, c in p.terms().items():
            by_degree.setdefault(sum(e), {})[e] = c
        for j, terms in by_degree.items():
            index = _index(n_vars, j)
            coeffs = np.zeros(len(index))
            for e, c in terms.items():
                coeffs[index[e]] = c
            result = result + cls(p.dim, j, coeffs) * cls.one(p.dim, k - j)
        return result

    @property
    def n_vars(self) -> int:
        return self.dim - 1

    def _check_compatible(self, other: "HomogeneousPolynomial"):
        if other.dim != self.dim:
            raise DomainError(f"dimension mismatch: {self.dim} != {other.dim}")
        if other.degree != self.degree:
            raise DomainError(f"cannot add forms of degrees {self.degree} and {other.degree}")

    def __add__(self, other) -> "HomogeneousPolynomial":
        if isinstance(other, numbers.Real):
            other = float(other) * HomogeneousPolynomial.one(self.dim, self.degree)
        self._check_compatible(other)
        return HomogeneousPolynomial(self.dim, self.degree, self.coeffs + other.coeffs)

    __radd__ = __add__

    def __neg__(self) -> "HomogeneousPolynomial":
        return HomogeneousPolynomial(self.dim, self.degree, -self.coeffs)

    def __sub__(self, other) -> "HomogeneousPolynomial":
        return self + (-other)

    def __rsub__(self, other) -> "HomogeneousPolynomial":
        return (-self) + other

    def __mul__(self, other) -> "HomogeneousPolynomial":
        if isinstance(other, numbers.Real):
            return HomogeneousPolynomial(self.dim, self.degree, float(other) * self.coeffs)
        if other.dim != self.dim:
            raise DomainError(f"dimension mismatch: {self.dim} != {other.dim}")
        k = self.degree + other.degree
        _check_product_degree(k)
        return HomogeneousPolynomial(
            self.dim, k, _convolve(self.n_vars, self.degree, self.coeffs, other.degree, other.coeffs)
        )

    __rmul__ = __mul__

    def power(self, n: int) -> "HomogeneousPolynomial":
        if n < 0:
            raise DomainError(f"negative power {n}")
        if n > 0 and self.degree * n > MAX_DEGREE:
            raise DegreeCapError(
                f"degree {self.degree * n} of the power exceeds the cap {MAX_DEGREE}",
                {"degree": self.degree * n, "cap": MAX_DEGREE},
            )
        result = HomogeneousPolynomial(self.dim, 0, [1.0])
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def evaluate(self, mu: Sequence[float]) -> float:
        return float(self.evaluate_many(np.asarray(mu, dtype=float)[None, :])[0])

    def evaluate_many(self, points: np.ndarray, check: bool = True) -> np.ndarray:
        if check:
            points = check_simplex_points(points, self.dim)
        return form_matrix(points, self.degree) @ self.coeffs

    def gradient_many(self, points: np.ndarray, check: bool = True) -> np.ndarray:
        """Canonical gradients at many points, shape (m, d); the last component is 0."""
        if check:
            points = check_simplex_points(points, self.dim)
        return form_gradient_from_coeffs(points, self.coeffs, self.degree)

    def dehomogenized(self) -> SimplexPolynomial:
        """The reduced representative of the function this form takes on the simplex."""
        full = {e + (self.degree - sum(e),): c for e, c in self.terms().items()}
        return reduce(full, self.dim, self.degree)

    def terms(self) -> Dict[Exponents, float]:
        basis = _basis(self.n_vars, self.degree)
        return {basis[i]: float(self.coeffs[i]) for i in np.flatnonzero(self.coeffs)}

    def __repr__(self) -> str:
        return f"HomogeneousPolynomial(dim={self.dim}, degree={self.degree}, terms={self.terms()})"


def form_gradient_from_coeffs(points: np.ndarray, coeffs: np.ndarray, k: int) -> np.ndarray:
    """Canonical gradients of the degree ``k`` form with coefficients ``coeffs``.

    Column ``j < d - 1`` holds ``dF/dx_j - dF/dx_d``, the derivative along the simplex,
    which is the gradient of the reduced representative; the last column is 0.
    """
    points = np.atleast_2d(points)
    n_vars = points.shape[1] - 1
    grad = np.zeros(points.shape)
    if k == 0:
        return grad
    forms = form_matrix(points, k - 1)
    last = forms @ (form_derivative_matrix(n_vars, k, n_vars) @ coeffs)
    for j in range(n_vars):
        grad[:, j] = forms @ (form_derivative_matrix(n_vars, k, j) @ coeffs) - last
    return grad


def reduce(full_coeffs: Mapping[Sequence[int], float], d: int, k: int) -> SimplexPolynomial:
    """Canonical reduced representative of a polynomial given in full coordinates.

    Args:
        full_coeffs (Mapping[Sequence[int], float]): Map from length-``d`` exponent vectors to coefficients
        d (int): Dimension of the simplex
        k (int): Degree bound of the input monomials

    Returns:
        SimplexPolynomial: A polynomial of ``max_degree = k`` agreeing with the input on the simplex
    """
    last_powers = [SimplexPolynomial.constant(d)]
    last = SimplexPolynomial.coordinate(d, d - 1)
    result = SimplexPolynomial.zero(d, k)
    for exps, coef in full_coeffs.items():
        exps = tuple(int(e) for e in exps)
        if len(exps) != d or min(exps) < 0:
            raise DomainError(f"invalid full-coordinate exponents {exps} for d={d}")
        if sum(exps) > k:
            raise DegreeCapError(f"monomial {exps} has degree {sum(exps)} > {k}")
        if coef == 0:
            continue
        while len(last_powers) <= exps[-1]:
            last_powers.append(last_powers[-1] * last)
        head = SimplexPolynomial.from_terms(d, {exps[:-1]: float(coef)})
        result = result + head * last_powers[exps[-1]]
    assert result.degree <= k, "substitution cannot raise the total degree"
    return result.padded(k)


def evaluate(p: SimplexPolynomial, mu: Sequence[float]) -> float:
    return p.evaluate(mu)


def add(p: SimplexPolynomial, q: SimplexPolynomial) -> SimplexPolynomial:
    return p + q


def multiply(p: SimplexPolynomial, q: SimplexPolynomial) -> SimplexPolynomial:
    return p * q


def gradient_full(p: SimplexPolynomial, mu: Sequence[float]) -> np.ndarray:
    return p.gradient_full(mu)


def polynomial_from_dict(obj: Mapping) -> SimplexPolynomial:
    """Reads the JSON literal ``{"dim": d, "terms": [{"exps": [...], "coef": c}, ...]}``
    given in full coordinates and reduces it."""
    try:
        d = int(obj["dim"])
        terms = [(tuple(int(e) for e in t["exps"]), float(t["coef"])) for t in obj["terms"]]
    except (KeyError, TypeError, ValueError) as e:
        raise DomainError(f"malformed polynomial literal: {e}") from e
    full: Dict[Exponents, float] = {}
    for exps, coef in terms:
        full[exps] = full.get(exps, 0.0) + coef
    k = max((sum(e) for e in full), default=0)
    return reduce(full, d, k)


def polynomial_to_dict(p: SimplexPolynomial) -> Dict[str, Union[int, list]]:
    """Writes the reduced representative as a full-coordinate JSON literal."""
    return {
        "dim": p.dim,
        "terms": [{"exps": list(e) + [0], "coef": c} for e, c in p.terms().items()],
    }
