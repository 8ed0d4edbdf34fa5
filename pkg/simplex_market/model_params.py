"""Parameter sets of polynomial market weight and asset price models and their classifiers."""
from dataclasses import dataclass, field
from typing import List, NamedTuple, Sequence, Tuple
import enum
import logging

import numpy as np

from .exceptions import DomainError, HypothesisError, ParameterValidationError

LINEAR_TOL = 1e-12
PSD_TOL = 1e-10


# one member per admissibility condition that can be violated
class Violation(enum.Enum):
    SHAPE_MISMATCH = enum.auto()
    NON_FINITE = enum.auto()
    GAMMA_NOT_SYMMETRIC = enum.auto()
    GAMMA_NONZERO_DIAGONAL = enum.auto()
    GAMMA_NEGATIVE_OFF_DIAGONAL = enum.auto()
    DRIFT_COLUMN_SUM = enum.auto()
    DRIFT_NOT_INWARD = enum.auto()
    NEGATIVE_KAPPA = enum.auto()
    NEGATIVE_PHI = enum.auto()
    NEGATIVE_ALPHA = enum.auto()
    CAP_COVARIANCE_NOT_PSD = enum.auto()
    CAP_VARIANCE_NEGATIVE = enum.auto()


@dataclass(frozen=True)
class ViolationRecord:
    violation: Violation
    indices: Tuple[int, ...] = ()
    value: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "violation": self.violation.name,
            "indices": list(self.indices),
            "value": None if np.isnan(self.value) else self.value,
        }


@dataclass
class ValidationReport:
    violations: List[ViolationRecord] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, violation: Violation, indices: Tuple[int, ...] = (), value: float = float("nan")):
        self.violations.append(ViolationRecord(violation, tuple(int(i) for i in indices), float(value)))

    def of_kind(self, violation: Violation) -> List[ViolationRecord]:
        return [v for v in self.violations if v.violation == violation]

    def raise_if_invalid(self):
        if not self.ok:
            raise ParameterValidationError(self)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AdmissibleSimplexParameterSet:
    """Drift and covariance parameters (beta, B, gamma) of a polynomial diffusion on the simplex.

    The drift is ``b(mu) = beta + B mu`` and the covariance is
    ``c_ii = sum_{j != i} gamma_ij mu_i mu_j``, ``c_ij = -gamma_ij mu_i mu_j``.
    Use :func:`validate_simplex_params` to construct a checked instance.
    """

    beta: np.ndarray
    B: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", _frozen(self.beta))
        object.__setattr__(self, "B", _frozen(self.B))
        object.__setattr__(self, "gamma", _frozen(self.gamma))

    @property
    def d(self) -> int:
        return self.beta.shape[0]

    def drift(self, mu: Sequence[float]) -> np.ndarray:
        return self.drift_many(np.asarray(mu, dtype=float)[None, :])[0]

    def drift_many(self, mu: np.ndarray) -> np.ndarray:
        return self.beta[None, :] + mu @ self.B.T

    def diffusion(self, mu: Sequence[float]) -> np.ndarray:
        return self.diffusion_many(np.asarray(mu, dtype=float)[None, :])[0]

    def diffusion_many(self, mu: np.ndarray) -> np.ndarray:
        """Covariance matrices c(mu) for a stack of states, shape (m, d, d)."""
        outer = self.gamma[None, :, :] * mu[:, :, None] * mu[:, None, :]
        c = -outer
        idx = np.arange(self.d)
        c[:, idx, idx] = outer.sum(axis=2)
        return c

    def off_diagonal_gamma(self) -> np.ndarray:
        return self.gamma[~np.eye(self.d, dtype=bool)]

    def to_dict(self) -> dict:
        return {"d": self.d, "beta": self.beta.tolist(), "B": self.B.tolist(), "gamma": self.gamma.tolist()}


def check_simplex_params(beta, B, gamma) -> ValidationReport:
    """Checks every admissibility condition and reports all violations with their indices."""
    report = ValidationReport()
    beta = np.asarray(beta, dtype=float)
    B = np.asarray(B, dtype=float)
    gamma = np.asarray(gamma, dtype=float)

    if beta.ndim != 1 or beta.shape[0] < 2:
        report.add(Violation.SHAPE_MISMATCH, value=beta.size)
        return report
    d = beta.shape[0]
    if B.shape != (d, d) or gamma.shape != (d, d):
        report.add(Violation.SHAPE_MISMATCH, value=d)
        return report
    if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(B)) and np.all(np.isfinite(gamma))):
        report.add(Violation.NON_FINITE)
        return report

    for i in range(d):
        if gamma[i, i] != 0.0:
            report.add(Violation.GAMMA_NONZERO_DIAGONAL, (i, i), gamma[i, i])
        for j in range(i + 1, d):
            if abs(gamma[i, j] - gamma[j, i]) > LINEAR_TOL * max(1.0, abs(gamma[i, j])):
                report.add(Violation.GAMMA_NOT_SYMMETRIC, (i, j), gamma[i, j] - gamma[j, i])
    for i in range(d):
        for j in range(d):
            if i != j and gamma[i, j] < 0.0:
                report.add(Violation.GAMMA_NEGATIVE_OFF_DIAGONAL, (i, j), gamma[i, j])

    # B^T 1 + (beta^T 1) 1 = 0, one condition per column
    column_sums = B.sum(axis=0) + beta.sum()
    scale = max(1.0, np.abs(B).sum(axis=0).max(), np.abs(beta).sum())
    for j in np.flatnonzero(np.abs(column_sums) > LINEAR_TOL * scale):
        report.add(Violation.DRIFT_COLUMN_SUM, (j,), column_sums[j])

    inward = beta[:, None] + B
    for i in range(d):
        for j in range(d):
            if i != j and inward[i, j] < -LINEAR_TOL * scale:
                report.add(Violation.DRIFT_NOT_INWARD, (i, j), inward[i, j])
    return report


def validate_simplex_params(beta, B, gamma) -> AdmissibleSimplexParameterSet:
    """Returns the validated parameter set.

    Raises:
        ParameterValidationError: Carries the full :class:`ValidationReport`
    """
    check_simplex_params(beta, B, gamma).raise_if_invalid()
    return AdmissibleSimplexParameterSet(beta, B, gamma)


def driftless(params: AdmissibleSimplexParameterSet) -> AdmissibleSimplexParameterSet:
    """The martingale model with the covariance structure of ``params``."""
    return AdmissibleSimplexParameterSet(np.zeros(params.d), np.zeros((params.d, params.d)), params.gamma)


@dataclass(frozen=True)
class TotalCapParams:
    kappa: float = 0.0
    phi: float = 0.0
    lam: float = 0.0
    sigma: float = 0.0

    def check(self) -> ValidationReport:
        report = ValidationReport()
        values = (self.kappa, self.phi, self.lam, self.sigma)
        if not np.all(np.isfinite(values)):
            report.add(Violation.NON_FINITE)
            return report
        if self.kappa < 0:
            report.add(Violation.NEGATIVE_KAPPA, value=self.kappa)
        if self.phi < 0:
            report.add(Violation.NEGATIVE_PHI, value=self.phi)
        return report

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "phi": self.phi, "lambda": self.lam, "sigma": self.sigma}


def sigma_strictly_positive(tc: TotalCapParams) -> bool:
    return 2.0 * tc.kappa - tc.phi >= 0.0


@dataclass(frozen=True)
class VSMSpec:
    alpha: float
    d: int


@dataclass(frozen=True)
class JointModelSpec:
    simplex: AdmissibleSimplexParameterSet
    totalcap: TotalCapParams

    def to_dict(self) -> dict:
        return {**self.simplex.to_dict(), "totalcap": self.totalcap.to_dict()}


def validate_joint_spec(simplex: AdmissibleSimplexParameterSet, totalcap: TotalCapParams) -> JointModelSpec:
    report = check_simplex_params(simplex.beta, simplex.B, simplex.gamma)
    report.violations.extend(totalcap.check().violations)
    report.raise_if_invalid()
    return JointModelSpec(simplex, totalcap)


def vsm_to_params(spec: VSMSpec) -> JointModelSpec:
    """Parameters of the volatility stabilized model with parameter ``alpha`` in dimension ``d``."""
    if spec.alpha < 0:
        report = ValidationReport()
        report.add(Violation.NEGATIVE_ALPHA, value=spec.alpha)
        raise ParameterValidationError(report)
    d = spec.d
    half = (1.0 + spec.alpha) / 2.0
    simplex = validate_simplex_params(
        half * np.ones(d), -d * half * np.eye(d), np.ones((d, d)) - np.eye(d)
    )
    return JointModelSpec(simplex, TotalCapParams(kappa=0.0, phi=0.0, lam=d * half, sigma=1.0))


# boundary and arbitrage classifiers


def _check_face_index(params: AdmissibleSimplexParameterSet, i: int):
    if not 0 <= i < params.d:
        raise DomainError(f"face index {i} out of range for d={params.d}")


def non_attainment_margin(params: AdmissibleSimplexParameterSet, i: int) -> float:
    """``2 beta_i + min_{j != i} (2 B_ij - gamma_ij)``; the face {mu_i = 0} is not attained iff it is >= 0."""
    _check_face_index(params, i)
    others = [j for j in range(params.d) if j != i]
    return 2.0 * params.beta[i] + min(2.0 * params.B[i, j] - params.gamma[i, j] for j in others)


def boundary_attained(params: AdmissibleSimplexParameterSet, i: int) -> bool:
    return not non_attainment_margin(params, i) >= 0.0


def positive_face_drift(params: AdmissibleSimplexParameterSet, i: int) -> bool:
    """Whether the drift of ``mu_i`` is positive somewhere on the face {mu_i = 0}.

    On that face ``b_i`` is a convex combination of ``beta_i + B_ij`` over ``j != i``.
    """
    _check_face_index(params, i)
    return any(params.beta[i] + params.B[i, j] > 0.0 for j in range(params.d) if j != i)


def zero_face_drift_indices(params: AdmissibleSimplexParameterSet) -> List[int]:
    """The index set J of faces on which the drift vanishes identically."""
    return [i for i in range(params.d) if not positive_face_drift(params, i)]


def classify_nupbr_arbitrage(params: AdmissibleSimplexParameterSet) -> bool:
    """Whether the model satisfies NUPBR and admits strong relative arbitrage.

    Raises:
        HypothesisError: if some off-diagonal ``gamma_ij`` is not strictly positive
    """
    off = params.off_diagonal_gamma()
    if np.any(off <= 0.0):
        raise HypothesisError(
            "the classification requires gamma_ij > 0 for all i != j",
            {"min_off_diagonal_gamma": float(off.min())},
        )
    drifting = [i for i in range(params.d) if positive_face_drift(params, i)]
    if not drifting:
        return False
    return all(non_attainment_margin(params, i) >= 0.0 for i in drifting)


def excess_growth_lower_bound(params: AdmissibleSimplexParameterSet) -> float:
    off = params.off_diagonal_gamma()
    return float(max(off.min(), 0.0) * (params.d - 1) / 2.0)


def excess_growth_rate(params: AdmissibleSimplexParameterSet, mu: Sequence[float]) -> float:
    """Half the weight-averaged instantaneous variance of the log-weights at an interior point."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0.0):
        raise DomainError("the excess growth rate needs an interior point")
    c = params.diffusion(mu)
    return float(0.5 * np.sum(np.diag(c) / mu))


# characteristics


class JointCharacteristics(NamedTuple):
    b_mu: np.ndarray
    c_mu: np.ndarray
    b_S: np.ndarray
    c_S: np.ndarray
    c_mu_S: np.ndarray
    b_Sigma: float
    c_Sigma: float
    c_Sigma_S: np.ndarray
    c_Sigma_mu: np.ndarray


def joint_characteristics(spec: JointModelSpec, mu: Sequence[float], Sigma: float) -> JointCharacteristics:
    """Differential characteristics of (mu, S, Sigma) at the state (mu, Sigma) with S = mu * Sigma.

    ``c_mu_S[i, j]`` is the covariance of ``mu_i`` and ``S_j``.
    """
    if not Sigma > 0:
        raise DomainError(f"total capitalization must be positive, got {Sigma}")
    p, tc = spec.simplex, spec.totalcap
    mu = np.asarray(mu, dtype=float)
    S = mu * Sigma
    b_mu = p.drift(mu)
    c_mu = p.diffusion(mu)
    c_Sigma = tc.phi * Sigma + tc.sigma ** 2 * Sigma ** 2
    return JointCharacteristics(
        b_mu=b_mu,
        c_mu=c_mu,
        b_S=p.beta * Sigma + p.B @ S + tc.kappa * mu + tc.lam * S,
        c_S=Sigma ** 2 * c_mu + c_Sigma * np.outer(mu, mu),
        c_mu_S=Sigma * c_mu,
        b_Sigma=tc.kappa + tc.lam * Sigma,
        c_Sigma=c_Sigma,
        c_Sigma_S=tc.phi * S + tc.sigma ** 2 * S * Sigma,
        c_Sigma_mu=np.zeros(p.d),
    )


def log_covariances(spec: JointModelSpec, mu: Sequence[float], Sigma: float) -> np.ndarray:
    """Instantaneous covariance of log S at an interior state."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0.0):
        raise DomainError("log covariances need an interior point")
    S = mu * Sigma
    c_S = joint_characteristics(spec, mu, Sigma).c_S
    return c_S / np.outer(S, S)


@dataclass(frozen=True)
class PropMainSpec:
    """Model in which S and mu are polynomial separately but not necessarily jointly."""

    simplex: AdmissibleSimplexParameterSet
    zeta: float
    lambda_vec: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lambda_vec", _frozen(self.lambda_vec))

    def cap_covariance_matrix(self) -> np.ndarray:
        """``zeta 11^T + Lambda - gamma`` with ``Lambda_ij = lambda_i + lambda_j``."""
        lam = self.lambda_vec
        return self.zeta + lam[:, None] + lam[None, :] - self.simplex.gamma

    def to_joint_if_black_scholes(self) -> JointModelSpec:
        """The jointly polynomial model with Black-Scholes total capitalization when all
        ``lambda_i`` coincide (then ``sigma^2 = zeta + 2 lambda``)."""
        lam = self.lambda_vec
        if not np.all(lam == lam[0]):
            raise DomainError("the model is jointly polynomial only for a constant lambda vector")
        sigma2 = self.zeta + 2.0 * lam[0]
        return JointModelSpec(self.simplex, TotalCapParams(0.0, 0.0, float(lam[0]), float(np.sqrt(sigma2))))


def validate_prop_main_spec(simplex: AdmissibleSimplexParameterSet, zeta: float, lambda_vec) -> PropMainSpec:
    spec = PropMainSpec(simplex, float(zeta), lambda_vec)
    report = check_simplex_params(simplex.beta, simplex.B, simplex.gamma)
    lam = spec.lambda_vec
    if lam.shape != (simplex.d,):
        report.add(Violation.SHAPE_MISMATCH, value=lam.size)
        report.raise_if_invalid()
    eigenvalues = np.linalg.eigvalsh(spec.cap_covariance_matrix())
    if eigenvalues.min() < -PSD_TOL:
        report.add(Violation.CAP_COVARIANCE_NOT_PSD, value=eigenvalues.min())
    for i in np.flatnonzero(spec.zeta + 2.0 * lam < 0.0):
        report.add(Violation.CAP_VARIANCE_NEGATIVE, (i,), spec.zeta + 2.0 * lam[i])
    report.raise_if_invalid()
    return spec


def _check_caps(S) -> Tuple[np.ndarray, float]:
    S = np.asarray(S, dtype=float)
    if np.any(S < 0.0):
        raise DomainError("capitalizations must be nonnegative")
    Sigma = float(S.sum())
    if not Sigma > 0.0:
        raise DomainError(f"total capitalization must be positive, got {Sigma}")
    return S, Sigma


def prop_main_characteristics(spec: PropMainSpec, S: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Drift and covariance of S in the separately polynomial model."""
    S, Sigma = _check_caps(S)
    p = spec.simplex
    b_S = p.beta * Sigma + p.B @ S + spec.lambda_vec * S
    c_S = spec.cap_covariance_matrix() * np.outer(S, S)
    c_S[np.diag_indices(p.d)] += S * (p.gamma @ S)
    return b_S, c_S


class PropMainWeightCharacteristics(NamedTuple):
    b_mu: np.ndarray
    c_mu: np.ndarray
    b_Sigma: float
    c_Sigma: float
    c_Sigma_mu: np.ndarray
    c_mu_S: np.ndarray


def prop_main_weight_characteristics(spec: PropMainSpec, S: Sequence[float]) -> PropMainWeightCharacteristics:
    """Characteristics of (mu, Sigma) and the weight/cap covariances in the separately polynomial model."""
    S, Sigma = _check_caps(S)
    p, lam = spec.simplex, spec.lambda_vec
    mu = S / Sigma
    lam_S = float(lam @ S)
    c_mu = p.diffusion(mu)
    # rows sum to c^{Sigma,mu}_i = lambda_i S_i - mu_i sum_k lambda_k S_k
    c_mu_S = Sigma * c_mu + np.outer(lam * mu, S) - lam_S * np.outer(mu, mu)
    return PropMainWeightCharacteristics(
        b_mu=p.drift(mu),
        c_mu=c_mu,
        b_Sigma=lam_S,
        c_Sigma=spec.zeta * Sigma ** 2 + 2.0 * Sigma * lam_S,
        c_Sigma_mu=lam * S - mu * lam_S,
        c_mu_S=c_mu_S,
    )


def log_params_summary(params: AdmissibleSimplexParameterSet):
    logging.info(
        f"d={params.d}, min off-diagonal gamma={params.off_diagonal_gamma().min():.6g}, "
        f"zero face drift indices={zero_face_drift_indices(params)}"
    )
