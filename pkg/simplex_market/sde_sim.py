"""Monte Carlo simulation of market weights, total capitalization and asset paths.

Paths are simulated in chunks of ``PathConfig.paths_per_chunk`` paths. Every chunk draws
its normals from its own stream derived from ``(seed, stream, chunk index)``, so the
output does not depend on the number of threads.

The weight scheme clamps to [0, 1] and renormalizes after each Euler step. This keeps
the state on the simplex but is only first-order weak and biased close to the boundary:
a discretized path can touch a face that the continuous process never attains.
"""
from dataclasses import dataclass, field, replace
from typing import Any, Callable, List, Optional, Sequence
import logging
import math

import numpy as np

from .exceptions import ConfigError, DomainError, NonFiniteError
from .model_params import (
    AdmissibleSimplexParameterSet,
    JointModelSpec,
    TotalCapParams,
    VSMSpec,
    sigma_strictly_positive,
)
from .parallel import chunk_sizes, run_executor_with_progress
from .simplex_poly import SIMPLEX_TOL, check_simplex_points

SCHEMES = ("euler_project",)
SIGMA_FLOOR = 1e-12

WEIGHTS_STREAM = 0
TOTALCAP_STREAM = 1
ASSET_STREAM = 2


@dataclass(frozen=True)
class PathConfig:
    dt: float = 1e-3
    T: float = 1.0
    n_paths: int = 1000
    seed: int = 0
    scheme: str = "euler_project"
    stride: int = 1
    paths_per_chunk: int = 1000
    n_threads: int = 8
    max_values: float = 2e8
    progress: bool = True

    def __post_init__(self):
        if not (self.dt > 0 and self.T > 0):
            raise ConfigError(f"dt and T must be positive, got dt={self.dt}, T={self.T}")
        ratio = self.T / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise ConfigError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        if self.n_paths < 1 or self.paths_per_chunk < 1 or self.n_threads < 1:
            raise ConfigError("n_paths, paths_per_chunk and n_threads must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}, expected one of {SCHEMES}")
        if self.stride < 1 or self.n_steps % self.stride != 0:
            raise ConfigError(f"stride {self.stride} must divide the step count {self.n_steps}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def n_stored(self) -> int:
        return self.n_steps // self.stride + 1

    def times(self) -> np.ndarray:
        return np.arange(0, self.n_steps + 1, self.stride) * (self.T / self.n_steps)

    def check_memory(self, values_per_state: int):
        values = self.n_paths * self.n_stored * values_per_state
        if values > self.max_values:
            raise ConfigError(
                f"{values:.3g} stored values exceed the memory cap {self.max_values:.3g}; "
                "increase the stride or reduce the number of paths",
                {"values": values, "cap": self.max_values},
            )


def _chunk_rng(seed: int, stream: int, chunk_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream, chunk_index)))


@dataclass(eq=False)
class PathBundle:
    """Discretized paths; arrays are indexed (path, stored step[, component]).

    ``min_weight`` and ``min_sigma`` are running minima over every simulated step,
    including the ones not stored.
    """

    times: np.ndarray
    weights: Optional[np.ndarray] = None
    sigma: Optional[np.ndarray] = None
    caps: Optional[np.ndarray] = None
    min_weight: Optional[np.ndarray] = None
    min_sigma: Optional[np.ndarray] = None
    sigma_floor: float = SIGMA_FLOOR
    seed: Optional[int] = None
    aborted: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        self.check()

    def check(self):
        if self.weights is not None:
            w = self.weights
            if np.any(w < 0.0) or np.any(w > 1.0):
                raise DomainError("stored weights leave [0, 1]")
            if np.any(np.abs(w.sum(axis=-1) - 1.0) > SIMPLEX_TOL):
                raise DomainError("stored weights do not sum to 1")
        if self.sigma is not None:
            if np.any(self.sigma < self.sigma_floor) or (self.sigma_floor > 0 and np.any(self.sigma <= 0.0)):
                raise DomainError("stored total capitalization below its floor")
        if self.caps is not None and self.weights is not None and self.sigma is not None:
            if not np.allclose(self.caps, self.weights * self.sigma[..., None], rtol=1e-12, atol=0.0):
                raise DomainError("stored capitalizations differ from weights times total capitalization")

    @property
    def n_paths(self) -> int:
        for a in (self.weights, self.sigma, self.caps):
            if a is not None:
                return a.shape[0]
        return 0

    @property
    def d(self) -> int:
        return self.weights.shape[-1] if self.weights is not None else 0

    def terminal(self) -> np.ndarray:
        """The last stored weights, shape (n_paths, d); total capitalizations for sigma-only bundles."""
        if self.weights is None:
            return self.sigma[:, -1]
        return self.weights[:, -1, :]

    def hitting_fraction(self, level: float) -> float:
        """Fraction of paths whose smallest weight went below ``level`` at some step."""
        return float(np.mean(self.min_weight < level))

    def sigma_hitting_fraction(self, level: float) -> float:
        return float(np.mean(self.min_sigma < level))

    @staticmethod
    def concatenate(bundles: List["PathBundle"]) -> "PathBundle":
        def cat(name):
            arrays = [getattr(b, name) for b in bundles]
            return None if arrays[0] is None else np.concatenate(arrays, axis=0)

        offsets = np.cumsum([0] + [b.n_paths for b in bundles[:-1]])
        aborted = np.concatenate([b.aborted + o for b, o in zip(bundles, offsets)]).astype(int)
        return PathBundle(
            times=bundles[0].times,
            weights=cat("weights"),
            sigma=cat("sigma"),
            caps=cat("caps"),
            min_weight=cat("min_weight"),
            min_sigma=cat("min_sigma"),
            sigma_floor=bundles[0].sigma_floor,
            seed=bundles[0].seed,
            aborted=aborted,
        )


def _check_interior_start(mu0: Sequence[float], d: int) -> np.ndarray:
    mu0 = check_simplex_points(mu0, d)[0]
    if np.any(mu0 <= 0.0):
        raise DomainError("the initial weights must lie in the interior of the simplex")
    return mu0


def _project(proposal: np.ndarray) -> np.ndarray:
    proposal = np.clip(proposal, 0.0, 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return proposal / proposal.sum(axis=1, keepdims=True)


def _weight_chunk(
    params: AdmissibleSimplexParameterSet, mu0: np.ndarray, config: PathConfig, chunk_index: int, n: int
) -> PathBundle:
    rng = _chunk_rng(config.seed, WEIGHTS_STREAM, chunk_index)
    d = params.d
    dt = config.dt
    sqrt_dt = math.sqrt(dt)

    mu = np.tile(mu0, (n, 1))
    out = np.empty((n, config.n_stored, d))
    out[:, 0] = mu
    running_min = mu.min(axis=1)
    alive = np.ones(n, dtype=bool)

    for step in range(1, config.n_steps + 1):
        xi = rng.standard_normal((n, d))
        # c = L L^T with L from the eigendecomposition; c has rank d - 1
        eigenvalues, eigenvectors = np.linalg.eigh(params.diffusion_many(mu))
        L = eigenvectors * np.sqrt(np.maximum(eigenvalues, 0.0))[:, None, :]
        proposal = mu + params.drift_many(mu) * dt + np.einsum("mij,mj->mi", L, xi) * sqrt_dt
        proposal = _project(proposal)

        broken = alive & ~np.all(np.isfinite(proposal), axis=1)
        if broken.any():
            logging.warning(f"Aborting {broken.sum()} path(s) with a non-finite state at step {step}")
            alive &= ~broken
        mu = np.where(alive[:, None], proposal, mu)
        running_min = np.minimum(running_min, mu.min(axis=1))
        if step % config.stride == 0:
            out[:, step // config.stride] = mu

    return PathBundle(
        times=config.times(),
        weights=out,
        min_weight=running_min,
        seed=config.seed,
        aborted=np.flatnonzero(~alive),
    )


def _chunk_arguments(config: PathConfig, *leading) -> List[tuple]:
    sizes = chunk_sizes(config.n_paths, config.paths_per_chunk)
    return [(*leading, config, i, n) for i, n in enumerate(sizes)]


def map_weight_chunks(
    params: AdmissibleSimplexParameterSet,
    mu0: Sequence[float],
    config: PathConfig,
    func: Callable[[PathBundle], Any],
    description: str = "weights",
) -> List[Any]:
    """Simulates weight paths chunk by chunk and applies ``func`` to each chunk inside the
    worker, so only the reductions are kept in memory.

    Returns:
        List[Any]: ``func`` results in chunk order
    """
    mu0 = _check_interior_start(mu0, params.d)

    def task(params, mu0, config, chunk_index, n):
        return func(_weight_chunk(params, mu0, config, chunk_index, n))

    return run_executor_with_progress(
        task,
        _chunk_arguments(config, params, mu0),
        config.n_threads,
        progress=config.progress,
        description=description,
    )


def simulate_weights(params: AdmissibleSimplexParameterSet, mu0: Sequence[float], config: PathConfig) -> PathBundle:
    """Euler-Maruyama paths of the market weights, projected back onto the simplex after every step.

    Args:
        params (AdmissibleSimplexParameterSet): The model
        mu0 (Sequence[float]): Interior starting point
        config (PathConfig): Discretization and sampling configuration

    Returns:
        PathBundle: Bundle with ``weights`` of shape (n_paths, n_stored, d)
    """
    config.check_memory(params.d)
    logging.info(f"Simulating {config.n_paths} weight paths with {config.n_steps} steps...")
    chunks = map_weight_chunks(params, mu0, config, lambda bundle: bundle)
    bundle = PathBundle.concatenate(chunks)
    if bundle.aborted.size:
        logging.warning(f"{bundle.aborted.size} path(s) were aborted: {bundle.aborted.tolist()[:20]}")
    return bundle


def _total_cap_chunk(tc: TotalCapParams, sigma0: float, config: PathConfig, chunk_index: int, n: int) -> PathBundle:
    rng = _chunk_rng(config.seed, TOTALCAP_STREAM, chunk_index)
    dt = config.dt
    sqrt_dt = math.sqrt(dt)
    floor = SIGMA_FLOOR if sigma_strictly_positive(tc) else 0.0

    state = np.full(n, float(sigma0))
    out = np.empty((n, config.n_stored))
    out[:, 0] = state
    running_min = state.copy()
    for step in range(1, config.n_steps + 1):
        xi = rng.standard_normal(n)
        # full truncation: coefficients see the positive part only
        pos = np.maximum(state, 0.0)
        state = state + (tc.kappa + tc.lam * pos) * dt + np.sqrt(tc.phi * pos + tc.sigma ** 2 * pos ** 2) * sqrt_dt * xi
        state = np.maximum(state, floor)
        running_min = np.minimum(running_min, state)
        if step % config.stride == 0:
            out[:, step // config.stride] = state

    if not np.all(np.isfinite(out)):
        raise NonFiniteError("total capitalization path became non-finite")
    return PathBundle(times=config.times(), sigma=out, min_sigma=running_min, sigma_floor=floor, seed=config.seed)


def simulate_total_cap(tc: TotalCapParams, sigma0: float, config: PathConfig) -> PathBundle:
    """Full-truncation Euler paths of the total capitalization
    ``dSigma = (kappa + lambda Sigma) dt + sqrt(phi Sigma + sigma^2 Sigma^2) dW``.
    """
    if not sigma0 > 0:
        raise DomainError(f"initial total capitalization must be positive, got {sigma0}")
    tc.check().raise_if_invalid()
    config.check_memory(1)
    logging.info(f"Simulating {config.n_paths} total capitalization paths...")
    chunks = run_executor_with_progress(
        _total_cap_chunk,
        _chunk_arguments(config, tc, sigma0),
        config.n_threads,
        progress=config.progress,
        description="total cap",
    )
    return PathBundle.concatenate(chunks)


def simulate_joint(spec: JointModelSpec, mu0: Sequence[float], sigma0: float, config: PathConfig) -> PathBundle:
    """Independent weight and total capitalization paths with ``S = mu * Sigma``."""
    config.check_memory(2 * spec.simplex.d + 1)
    weights = simulate_weights(spec.simplex, mu0, config)
    totalcap = simulate_total_cap(spec.totalcap, sigma0, config)
    return PathBundle(
        times=weights.times,
        weights=weights.weights,
        sigma=totalcap.sigma,
        caps=weights.weights * totalcap.sigma[..., None],
        min_weight=weights.min_weight,
        min_sigma=totalcap.min_sigma,
        sigma_floor=totalcap.sigma_floor,
        seed=config.seed,
        aborted=weights.aborted,
    )


def _vsm_asset_chunk(spec: VSMSpec, S0: np.ndarray, config: PathConfig, chunk_index: int, n: int) -> PathBundle:
    rng = _chunk_rng(config.seed, ASSET_STREAM, chunk_index)
    dt = config.dt
    sqrt_dt = math.sqrt(dt)
    half = (1.0 + spec.alpha) / 2.0

    S = np.tile(S0, (n, 1))
    caps = np.empty((n, config.n_stored, spec.d))
    caps[:, 0] = S
    running_min = (S / S.sum(axis=1, keepdims=True)).min(axis=1)
    alive = np.ones(n, dtype=bool)
    for step in range(1, config.n_steps + 1):
        xi = rng.standard_normal((n, spec.d))
        pos = np.maximum(S, 0.0)
        total = pos.sum(axis=1, keepdims=True)
        proposal = np.maximum(S + half * total * dt + np.sqrt(pos * total) * sqrt_dt * xi, 0.0)

        # all capitalizations truncated to zero leave no weights to normalize
        broken = alive & ~(np.all(np.isfinite(proposal), axis=1) & (proposal.sum(axis=1) > 0.0))
        if broken.any():
            logging.warning(f"Aborting {broken.sum()} asset path(s) with a degenerate state at step {step}")
            alive &= ~broken
        S = np.where(alive[:, None], proposal, S)
        running_min = np.minimum(running_min, (S / S.sum(axis=1, keepdims=True)).min(axis=1))
        if step % config.stride == 0:
            caps[:, step // config.stride] = S

    sigma = caps.sum(axis=2)
    weights = caps / sigma[..., None]
    return PathBundle(
        times=config.times(),
        weights=weights,
        sigma=sigma,
        caps=weights * sigma[..., None],
        min_weight=running_min,
        min_sigma=sigma.min(axis=1),
        sigma_floor=0.0,
        seed=config.seed,
        aborted=np.flatnonzero(~alive),
    )


def simulate_vsm_assets(spec: VSMSpec, S0: Sequence[float], config: PathConfig) -> PathBundle:
    """Full-truncation Euler paths of the volatility stabilized asset dynamics
    ``dS_i = (1 + alpha) / 2 Sigma dt + sqrt(S_i Sigma) dW_i``; weights are derived by normalization.
    """
    S0 = np.asarray(S0, dtype=float)
    if S0.shape != (spec.d,) or np.any(S0 <= 0.0):
        raise DomainError(f"initial capitalizations must be {spec.d} positive numbers")
    if spec.alpha < 0:
        raise DomainError(f"alpha must be nonnegative, got {spec.alpha}")
    config.check_memory(2 * spec.d + 1)
    logging.info(f"Simulating {config.n_paths} volatility stabilized asset paths...")
    chunks = run_executor_with_progress(
        _vsm_asset_chunk,
        _chunk_arguments(config, spec, S0),
        config.n_threads,
        progress=config.progress,
        description="assets",
    )
    bundle = PathBundle.concatenate(chunks)
    if bundle.aborted.size:
        logging.warning(f"{bundle.aborted.size} asset path(s) were aborted: {bundle.aborted.tolist()[:20]}")
    return bundle


def with_full_resolution(config: PathConfig, T: float = None) -> PathConfig:
    """The same configuration storing every step (optionally with another horizon)."""
    return replace(config, stride=1, T=config.T if T is None else T)
