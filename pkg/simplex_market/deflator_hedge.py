"""Market price of risk, local martingale deflators, self-financing wealth and the
approximate optimal arbitrage built from driftless polynomial prices.

All quantities are expressed relative to the market portfolio, i.e. in units of total
capitalization. Reduced objects (``b~``, ``c~``, ``lambda~``) drop the last weight.
"""
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np

from .exceptions import (
    DegreeCapError,
    DomainError,
    HypothesisError,
    NonFiniteError,
    NumericalError,
    PseudoInverseResidualError,
)
from .generator import DriftlessPriceFamily, price_polynomial_driftless
from .model_params import AdmissibleSimplexParameterSet, classify_nupbr_arbitrage, zero_face_drift_indices
from .sde_sim import PathBundle, PathConfig, map_weight_chunks
from .simplex_poly import MAX_DEGREE, HomogeneousPolynomial, SimplexPolynomial, check_simplex_points

PINV_RTOL = 1e-12
RESIDUAL_RTOL = 1e-8
DOMAIN_EXIT_POLICIES = ("raise", "drop")


def _interior(mu: Sequence[float]) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    check_simplex_points(mu, mu.shape[-1])
    if np.any(mu <= 0.0):
        raise DomainError("weights must lie in the interior of the simplex")
    return mu


def a_tilde(mu: Sequence[float]) -> np.ndarray:
    """Reduced covariance of the model with all ``gamma_ij = 1``: ``diag(mu~) - mu~ mu~^T``."""
    mu = np.asarray(mu, dtype=float)
    check_simplex_points(mu, mu.shape[-1])
    head = mu[:-1]
    return np.diag(head) - np.outer(head, head)


def a_tilde_inverse(mu: Sequence[float]) -> np.ndarray:
    """Closed-form inverse of ``a_tilde``: ``diag(1 / mu~) + 1 / mu_d``."""
    mu = _interior(mu)
    return np.diag(1.0 / mu[:-1]) + 1.0 / mu[-1]


def _reduced_characteristics(params: AdmissibleSimplexParameterSet, mus: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    n = params.d - 1
    return params.drift_many(mus)[:, :n], params.diffusion_many(mus)[:, :n, :n]


def _pinv_solve(b: np.ndarray, c: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Batched ``c^+ b`` through symmetric eigendecompositions.

    Returns:
        Tuple[np.ndarray, np.ndarray]: The solutions and a mask of rows with ``c x = b`` up to the residual tolerance
    """
    eigenvalues, eigenvectors = np.linalg.eigh(c)
    cutoff = PINV_RTOL * eigenvalues.max(axis=1, keepdims=True)
    kept = eigenvalues > np.maximum(cutoff, 0.0)
    inverse = np.divide(1.0, eigenvalues, out=np.zeros_like(eigenvalues), where=kept)
    projected = np.einsum("mji,mj->mi", eigenvectors, b)
    solution = np.einsum("mij,mj->mi", eigenvectors, inverse * projected)
    residual = np.abs(np.einsum("mij,mj->mi", c, solution) - b).max(axis=1)
    ok = residual <= RESIDUAL_RTOL * (1.0 + np.abs(b).max(axis=1))
    return solution, ok


def lambda_tilde_many(params: AdmissibleSimplexParameterSet, mus: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """``lambda~ = c~^+ b~`` at many points, with the residual mask (False outside the domain E)."""
    b, c = _reduced_characteristics(params, np.atleast_2d(mus))
    return _pinv_solve(b, c)


def lambda_tilde(params: AdmissibleSimplexParameterSet, mu: Sequence[float]) -> np.ndarray:
    """The market price of risk ``lambda~(mu)`` in reduced coordinates.

    Raises:
        PseudoInverseResidualError: ``c~ lambda~ = b~`` fails, i.e. ``mu`` lies outside the domain E
    """
    mu = np.asarray(mu, dtype=float)
    check_simplex_points(mu, params.d)
    lam, ok = lambda_tilde_many(params, mu[None, :])
    if not ok[0]:
        raise PseudoInverseResidualError(
            f"no market price of risk at mu={mu.tolist()}: the drift is not in the range of the covariance",
            {"mu": mu.tolist()},
        )
    return lam[0]


@dataclass(frozen=True)
class MarketPriceOfRisk:
    params: AdmissibleSimplexParameterSet

    def __call__(self, mu: Sequence[float]) -> np.ndarray:
        return lambda_tilde(self.params, mu)

    def evaluate_many(self, mus: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return lambda_tilde_many(self.params, mus)


def market_price_of_risk(params: AdmissibleSimplexParameterSet) -> MarketPriceOfRisk:
    return MarketPriceOfRisk(params)


@dataclass(eq=False)
class MonteCarloEstimate:
    """Sample mean with its standard error.

    ``caveat`` is set when the estimate was computed outside the hypotheses under which it
    has its intended meaning.
    """

    mean: float
    stderr: float
    n_used: int
    n_dropped: int = 0
    caveat: Optional[str] = None

    @classmethod
    def from_samples(cls, samples: np.ndarray, n_dropped: int = 0) -> "MonteCarloEstimate":
        samples = np.asarray(samples, dtype=float)
        if samples.size == 0:
            raise NumericalError("no path survived to form a Monte Carlo estimate", {"n_dropped": n_dropped})
        stderr = float(samples.std(ddof=1) / math.sqrt(samples.size)) if samples.size > 1 else 0.0
        return cls(float(samples.mean()), stderr, int(samples.size), int(n_dropped))

    def to_dict(self) -> dict:
        result = {"mean": self.mean, "stderr": self.stderr, "n_used": self.n_used, "n_dropped": self.n_dropped}
        if self.caveat is not None:
            result["caveat"] = self.caveat
        return result


@dataclass(eq=False)
class DeflatorPath:
    """Deflator values ``Z`` of shape (n_paths, n_times); rows of dropped paths are NaN
    from the step where they left the domain."""

    times: np.ndarray
    Z: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        if not np.all(self.Z[:, 0][self.valid] == 1.0):
            raise DomainError("deflator must start at 1")
        Z = self.Z[self.valid]
        if not (np.all(np.isfinite(Z)) and np.all(Z > 0.0)):
            raise NonFiniteError("deflator lost strict positivity")

    @property
    def n_dropped(self) -> int:
        return int((~self.valid).sum())

    def terminal(self) -> np.ndarray:
        return self.Z[self.valid, -1]


def _check_policy(on_domain_exit: str):
    if on_domain_exit not in DOMAIN_EXIT_POLICIES:
        raise DomainError(f"unknown domain exit policy {on_domain_exit!r}, expected one of {DOMAIN_EXIT_POLICIES}")


def deflator_path(
    params: AdmissibleSimplexParameterSet, weights: PathBundle, on_domain_exit: str = "raise"
) -> DeflatorPath:
    """Log-Euler discretization of ``Z = E(-int lambda~ dmu~^c)`` along simulated weights:
    ``log Z += -lambda~ . (dmu~ - b~ dt) - 1/2 lambda~^T c~ lambda~ dt``.

    Args:
        params (AdmissibleSimplexParameterSet): The model the weights were simulated from
        weights (PathBundle): Weight paths; the stored grid is used as the discretization grid
        on_domain_exit (str, optional): "raise" or "drop" paths whose state leaves the domain E. Defaults to "raise".

    Returns:
        DeflatorPath: The deflator on the stored grid
    """
    _check_policy(on_domain_exit)
    mu = weights.weights
    times = weights.times
    n_paths, n_times, _ = mu.shape
    n = params.d - 1

    valid = np.ones(n_paths, dtype=bool)
    valid[weights.aborted] = False
    log_z = np.zeros((n_paths, n_times))
    for k in range(n_times - 1):
        dt = times[k + 1] - times[k]
        b, c = _reduced_characteristics(params, mu[:, k])
        lam, ok = _pinv_solve(b, c)
        increment = (
            -np.einsum("mi,mi->m", lam, mu[:, k + 1, :n] - mu[:, k, :n] - b * dt)
            - 0.5 * np.einsum("mi,mij,mj->m", lam, c, lam) * dt
        )
        bad = valid & ~(ok & np.isfinite(increment))
        if bad.any():
            paths = np.flatnonzero(bad)
            if on_domain_exit == "raise":
                if not np.all(np.isfinite(increment[bad])):
                    raise NonFiniteError(f"non-finite deflator increment at t={times[k]}", {"paths": paths.tolist()})
                raise PseudoInverseResidualError(
                    f"{paths.size} path(s) left the deflator domain at t={times[k]}",
                    {"paths": paths.tolist()[:20], "time": float(times[k])},
                )
            valid &= ~bad
        log_z[:, k + 1] = np.where(valid, log_z[:, k] + increment, np.nan)

    if (~valid).any():
        logging.warning(f"Dropped {(~valid).sum()} of {n_paths} path(s) that left the deflator domain")
    return DeflatorPath(times, np.exp(log_z), valid)


@dataclass(eq=False)
class StrategyPath:
    """Share holdings ``theta`` of shape (n_paths, n_times, d) in units of market weights."""

    times: np.ndarray
    theta: np.ndarray


@dataclass(eq=False)
class WealthPath:
    """Relative wealth ``Y`` of shape (n_paths, n_times)."""

    times: np.ndarray
    Y: np.ndarray

    def terminal(self) -> np.ndarray:
        return self.Y[:, -1]


def self_financing_wealth(strategy: StrategyPath, weights: PathBundle, q: float = 1.0) -> WealthPath:
    """``Y_{t+dt} = Y_t + sum_i theta_t^i (mu_{t+dt}^i - mu_t^i)`` started at ``q``."""
    mu = weights.weights
    if strategy.theta.shape != mu.shape or not np.array_equal(strategy.times, weights.times):
        raise DomainError(
            "strategy and weights are not on the same grid",
            {"strategy": list(strategy.theta.shape), "weights": list(mu.shape)},
        )
    gains = np.einsum("mki,mki->mk", strategy.theta[:, :-1], np.diff(mu, axis=1))
    Y = np.concatenate([np.full((mu.shape[0], 1), float(q)), q + np.cumsum(gains, axis=1)], axis=1)
    return WealthPath(weights.times, Y)


def theta_to_portfolio(theta: np.ndarray, mu: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Converts share holdings to proportions of wealth:
    ``pi_i = mu_i (theta_i / Y + 1 - sum_j mu_j theta_j / Y)``. Works on stacked inputs.
    """
    theta = np.asarray(theta, dtype=float)
    mu = np.asarray(mu, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if np.any(Y <= 0.0):
        raise DomainError("wealth must be positive to express a portfolio")
    ratio = theta / Y[..., None]
    return mu * (ratio + 1.0 - np.sum(mu * ratio, axis=-1, keepdims=True))


def shannon_entropy(mu: np.ndarray) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    return -np.sum(mu * np.log(mu), axis=-1)


def shannon_entropy_gradient(mu: np.ndarray) -> np.ndarray:
    return -np.log(np.asarray(mu, dtype=float)) - 1.0


def functionally_generated_portfolio(
    mu: np.ndarray, G: Callable[[np.ndarray], np.ndarray], grad_G: Callable[[np.ndarray], np.ndarray]
) -> np.ndarray:
    """Portfolio generated by a positive function ``G`` of the weights: holdings ``grad G``
    at wealth ``G``."""
    mu = _interior(mu)
    return theta_to_portfolio(grad_G(mu), mu, G(mu))


def entropy_portfolio(mu: np.ndarray) -> np.ndarray:
    """``pi_i`` proportional to ``mu_i (1 - log(mu_i) / H(mu))`` with the Shannon entropy ``H``.

    ``functionally_generated_portfolio(mu, shannon_entropy, shannon_entropy_gradient)`` gives
    the portfolio ``-mu_i log(mu_i) / H(mu)`` instead.
    """
    mu = _interior(mu)
    H = shannon_entropy(mu)[..., None]
    raw = mu * (1.0 - np.log(mu) / H)
    return raw / raw.sum(axis=-1, keepdims=True)


def relative_wealth_from_portfolio(pi: np.ndarray, weights: PathBundle) -> WealthPath:
    """Wealth of a portfolio relative to the market: ``dY / Y = sum_i pi_i dmu_i / mu_i``, ``Y_0 = 1``."""
    mu = weights.weights
    if pi.shape != mu.shape:
        raise DomainError("portfolio and weights are not on the same grid")
    returns = np.divide(np.diff(mu, axis=1), mu[:, :-1], out=np.zeros_like(mu[:, :-1]), where=mu[:, :-1] > 0.0)
    growth = 1.0 + np.einsum("mki,mki->mk", pi[:, :-1], returns)
    Y = np.concatenate([np.ones((mu.shape[0], 1)), np.cumprod(growth, axis=1)], axis=1)
    return WealthPath(weights.times, Y)


def indicator_family(params: AdmissibleSimplexParameterSet, n: int) -> SimplexPolynomial:
    """``p_n = 1 - (1 - m^m prod_{i in K} mu_i)^n`` where ``K`` are the faces with positive
    drift (``m = |K|``). ``p_n`` vanishes wherever some ``mu_i``, ``i in K``, is zero and
    tends to 1 everywhere else.
    """
    return indicator_form(params, n).dehomogenized()


def indicator_form(params: AdmissibleSimplexParameterSet, n: int) -> HomogeneousPolynomial:
    """``p_n`` of ``indicator_family`` as a form of degree ``n m``, with ``1`` read as ``(sum_i mu_i)^m``.

    Raises:
        DomainError: ``n < 1``
        HypothesisError: No face has a positive inward drift
        DegreeCapError: ``n m`` exceeds ``MAX_DEGREE``
    """
    if n < 1:
        raise DomainError(f"n must be at least 1, got {n}")
    d = params.d
    J = set(zero_face_drift_indices(params))
    K = [i for i in range(d) if i not in J]
    if not K:
        raise HypothesisError("no face has a positive inward drift")
    m = len(K)
    if n * m > MAX_DEGREE:
        raise DegreeCapError(
            f"degree {n * m} of the indicator polynomial exceeds the cap {MAX_DEGREE}",
            {"degree": n * m, "cap": MAX_DEGREE},
        )
    q = HomogeneousPolynomial.monomial(d, [1 if i in K else 0 for i in range(d)], float(m ** m))
    return 1.0 - (1.0 - q).power(n)


@dataclass(eq=False)
class ArbitrageStrategy:
    """Holdings ``theta_t = grad p(t, mu_t) / p(0, mu_0)`` with relative wealth started at 1."""

    family: DriftlessPriceFamily
    price: float

    def theta(self, t: float, points: np.ndarray) -> np.ndarray:
        return self.family.gradient_many(t, points) / self.price

    def target(self, points: np.ndarray) -> np.ndarray:
        return self.family.value_many(self.family.horizon, points) / self.price

    def portfolio(self, t: float, points: np.ndarray, wealth: np.ndarray) -> np.ndarray:
        return theta_to_portfolio(self.theta(t, points), points, wealth)


@dataclass(eq=False)
class ArbitrageResult:
    n: int
    degree: int
    horizon: float
    price: float
    outperform: MonteCarloEstimate
    terminal_wealth: MonteCarloEstimate
    terminal_error_mean: float
    terminal_error_max: float
    strategy: ArbitrageStrategy
    superhedge: Optional[MonteCarloEstimate] = None
    terminal_wealth_paths: Optional[np.ndarray] = field(default=None, repr=False)
    target_paths: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "degree": self.degree,
            "T": self.horizon,
            "price": self.price,
            "p_outperform": self.outperform.mean,
            "p_outperform_stderr": self.outperform.stderr,
            "mean_terminal_wealth": self.terminal_wealth.mean,
            "terminal_error_mean": self.terminal_error_mean,
            "terminal_error_max": self.terminal_error_max,
            "U_T": self.superhedge.mean if self.superhedge else float("nan"),
            "U_T_stderr": self.superhedge.stderr if self.superhedge else float("nan"),
        }


def _require_arbitrage(params: AdmissibleSimplexParameterSet):
    if not classify_nupbr_arbitrage(params):
        raise HypothesisError("the model admits no relative arbitrage (classifier is false)")


def approximate_optimal_arbitrage(
    params: AdmissibleSimplexParameterSet,
    n: int,
    T: float,
    mu0: Sequence[float],
    config: PathConfig,
    polynomial: SimplexPolynomial = None,
    with_superhedge: bool = True,
    keep_paths: bool = False,
) -> ArbitrageResult:
    """Runs the strategy replicating ``p_n(mu_T) / p_n(0, mu_0)`` on simulated weights.

    ``p_n(t, .)`` is the driftless price of ``p_n``; since it solves the backward equation of the
    covariance part of the generator, the hedge reproduces it under the model's own drift.

    Args:
        params (AdmissibleSimplexParameterSet): A model for which relative arbitrage exists
        n (int): Index of the indicator approximation
        T (float): Horizon
        mu0 (Sequence[float]): Interior initial weights
        config (PathConfig): Simulation configuration; its horizon and stride are overridden
        polynomial (SimplexPolynomial, optional): A custom terminal polynomial instead of ``indicator_form(params, n)``.
        with_superhedge (bool, optional): Also estimate ``U_T = E[Z_T]`` on the same paths. Defaults to True.
        keep_paths (bool, optional): Keep per-path terminal wealth and targets. Defaults to False.

    Returns:
        ArbitrageResult: Price, outperformance probability and replication error
    """
    _require_arbitrage(params)
    mu0 = _interior(mu0)
    config = replace(config, T=T, stride=1)
    p = polynomial if polynomial is not None else indicator_form(params, n)
    logging.info(f"Pricing the degree {p.degree} arbitrage polynomial on {config.n_steps} time steps...")
    family = price_polynomial_driftless(params, p, T, times=config.times())
    price = float(family.value_many(0.0, mu0[None, :])[0])
    if not price > 0.0:
        raise DomainError(f"initial price {price} is not positive")
    strategy = ArbitrageStrategy(family, price)

    def evaluate_chunk(bundle: PathBundle) -> dict:
        mu = bundle.weights
        theta = np.stack([strategy.theta(t, mu[:, k]) for k, t in enumerate(bundle.times)], axis=1)
        wealth = self_financing_wealth(StrategyPath(bundle.times, theta), bundle).terminal()
        result = {"wealth": wealth, "target": strategy.target(mu[:, -1])}
        if with_superhedge:
            deflator = deflator_path(params, bundle, on_domain_exit="drop")
            result["Z"] = deflator.terminal()
            result["dropped"] = deflator.n_dropped
        return result

    chunks = map_weight_chunks(params, mu0, config, evaluate_chunk, description=f"arbitrage n={n}")
    wealth = np.concatenate([c["wealth"] for c in chunks])
    target = np.concatenate([c["target"] for c in chunks])
    error = np.abs(wealth - target)

    superhedge = None
    if with_superhedge:
        superhedge = MonteCarloEstimate.from_samples(
            np.concatenate([c["Z"] for c in chunks]), sum(c["dropped"] for c in chunks)
        )
    logging.info(f"n={n}: price {price:.6f}, P[Y_T > 1] = {np.mean(wealth > 1.0):.4f}")
    return ArbitrageResult(
        n=n,
        degree=p.degree,
        horizon=float(T),
        price=price,
        outperform=MonteCarloEstimate.from_samples((wealth > 1.0).astype(float)),
        terminal_wealth=MonteCarloEstimate.from_samples(wealth),
        terminal_error_mean=float(error.mean()),
        terminal_error_max=float(error.max()),
        strategy=strategy,
        superhedge=superhedge,
        terminal_wealth_paths=wealth if keep_paths else None,
        target_paths=target if keep_paths else None,
    )


@dataclass(eq=False)
class DeflatorStatistics:
    mean_Z: MonteCarloEstimate
    deflated_weights: List[MonteCarloEstimate]

    def to_dict(self) -> dict:
        return {
            "Z_T": self.mean_Z.to_dict(),
            "Z_T_mu_T": [e.to_dict() for e in self.deflated_weights],
        }


def deflator_statistics(
    params: AdmissibleSimplexParameterSet,
    T: float,
    mu0: Sequence[float],
    config: PathConfig,
    on_domain_exit: str = "drop",
) -> DeflatorStatistics:
    """Monte Carlo means of ``Z_T`` and ``Z_T mu_T^i`` from streamed chunks of weight paths."""
    _check_policy(on_domain_exit)
    config = replace(config, T=T, stride=1)

    def evaluate_chunk(bundle: PathBundle):
        deflator = deflator_path(params, bundle, on_domain_exit=on_domain_exit)
        return deflator.terminal(), bundle.weights[deflator.valid, -1], deflator.n_dropped

    chunks = map_weight_chunks(params, mu0, config, evaluate_chunk, description="deflator")
    Z = np.concatenate([c[0] for c in chunks])
    mu_T = np.concatenate([c[1] for c in chunks])
    dropped = sum(c[2] for c in chunks)
    return DeflatorStatistics(
        mean_Z=MonteCarloEstimate.from_samples(Z, dropped),
        deflated_weights=[MonteCarloEstimate.from_samples(Z * mu_T[:, i], dropped) for i in range(params.d)],
    )


def superhedge_price_mc(
    params: AdmissibleSimplexParameterSet,
    T: float,
    mu0: Sequence[float],
    config: PathConfig,
    on_domain_exit: str = "drop",
) -> MonteCarloEstimate:
    """Monte Carlo estimate of the superhedging price ``U_T = E[Z_T]`` of one unit of market wealth.

    The price is only meaningful for models with NUPBR and relative arbitrage. Otherwise the
    estimate is still computed and carries a ``caveat``.
    """
    caveat = None
    try:
        if not classify_nupbr_arbitrage(params):
            caveat = "the classifier reports no relative arbitrage; the estimate should be close to 1"
    except HypothesisError as e:
        caveat = f"cannot classify the model: {e.message}"
    if caveat is not None:
        logging.warning(f"Superhedging price: {caveat}")
    estimate = deflator_statistics(params, T, mu0, config, on_domain_exit).mean_Z
    return replace(estimate, caveat=caveat)
