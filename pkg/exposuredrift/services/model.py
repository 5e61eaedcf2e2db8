"""Dirichlet latent-variable model: parameters, priors and full conditionals.

``log alpha_ij(t) = mu_t + theta_i + gamma_j`` with gamma_0 tied to
``-sum(gamma[1:])``. All densities are log densities with constants that do
not depend on a sampled parameter dropped; only differences are meaningful.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from ..config import Hyperparams
from ..exceptions import DataValidationError, NumericalAbort
from ..models import DynamicNetwork


ROW_SUM_TOLERANCE = 1e-10


def _frozen(values: Sequence[float] | np.ndarray) -> np.ndarray:
    array = np.array(values, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ModelParams:
    mu: np.ndarray
    theta: np.ndarray
    gamma: np.ndarray
    tau_eta: float = 1.0
    tau_theta: float = 1.0
    tau_gamma: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "mu", _frozen(self.mu))
        object.__setattr__(self, "theta", _frozen(self.theta))
        object.__setattr__(self, "gamma", _frozen(self.gamma))
        if self.theta.shape != self.gamma.shape:
            raise ValueError("theta and gamma must have the same length")
        if self.gamma.size and self.gamma[0] != -math.fsum(self.gamma[1:]):
            raise ValueError("gamma[0] must equal -sum(gamma[1:])")
        for name in ("tau_eta", "tau_theta", "tau_gamma"):
            value = float(getattr(self, name))
            if not value > 0 or not math.isfinite(value):
                raise ValueError(f"{name} must be positive and finite, got {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def from_free_gamma(
        cls,
        mu: Sequence[float] | np.ndarray,
        theta: Sequence[float] | np.ndarray,
        gamma_free: Sequence[float] | np.ndarray,
        *,
        tau_eta: float = 1.0,
        tau_theta: float = 1.0,
        tau_gamma: float = 1.0,
    ) -> "ModelParams":
        return cls(
            mu=mu,
            theta=theta,
            gamma=constrained_gamma(gamma_free),
            tau_eta=tau_eta,
            tau_theta=tau_theta,
            tau_gamma=tau_gamma,
        )

    @classmethod
    def zeros(cls, n_periods: int, n_nodes: int) -> "ModelParams":
        return cls(mu=np.zeros(n_periods), theta=np.zeros(n_nodes), gamma=np.zeros(n_nodes))

    @property
    def n_periods(self) -> int:
        return int(self.mu.size)

    @property
    def n_nodes(self) -> int:
        return int(self.theta.size)

    @property
    def gamma_free(self) -> np.ndarray:
        return self.gamma[1:]

    def gamma_sum(self) -> float:
        return float(self.gamma[0] + math.fsum(self.gamma[1:]))

    def with_mu(self, s: int, value: float) -> "ModelParams":
        mu = np.array(self.mu)
        mu[s] = value
        return self._replace(mu=mu)

    def with_theta(self, k: int, value: float) -> "ModelParams":
        theta = np.array(self.theta)
        theta[k] = value
        return self._replace(theta=theta)

    def with_gamma(self, l: int, value: float) -> "ModelParams":
        if l < 1:
            raise ValueError("gamma[0] is derived from the sum-to-zero constraint")
        free = np.array(self.gamma[1:])
        free[l - 1] = value
        return self._replace(gamma=constrained_gamma(free))

    def with_precisions(
        self, *, tau_eta: float | None = None, tau_theta: float | None = None, tau_gamma: float | None = None
    ) -> "ModelParams":
        return self._replace(
            tau_eta=self.tau_eta if tau_eta is None else tau_eta,
            tau_theta=self.tau_theta if tau_theta is None else tau_theta,
            tau_gamma=self.tau_gamma if tau_gamma is None else tau_gamma,
        )

    def _replace(self, **changes) -> "ModelParams":
        values = {
            "mu": self.mu,
            "theta": self.theta,
            "gamma": self.gamma,
            "tau_eta": self.tau_eta,
            "tau_theta": self.tau_theta,
            "tau_gamma": self.tau_gamma,
        }
        values.update(changes)
        return ModelParams(**values)

    def to_dict(self) -> dict:
        return {
            "mu": self.mu.tolist(),
            "theta": self.theta.tolist(),
            "gamma": self.gamma.tolist(),
            "tau_eta": self.tau_eta,
            "tau_theta": self.tau_theta,
            "tau_gamma": self.tau_gamma,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelParams":
        return cls.from_free_gamma(
            payload["mu"],
            payload["theta"],
            payload["gamma"][1:],
            tau_eta=payload.get("tau_eta", 1.0),
            tau_theta=payload.get("tau_theta", 1.0),
            tau_gamma=payload.get("tau_gamma", 1.0),
        )


def constrained_gamma(gamma_free: Sequence[float] | np.ndarray) -> np.ndarray:
    free = np.asarray(gamma_free, dtype=np.float64)
    return np.concatenate(([-math.fsum(free)], free))


def alpha(params: ModelParams, t: int, i: int, j: int) -> float:
    if i == j:
        raise ValueError("self-pairs have no Dirichlet parameter")
    return math.exp(params.mu[t] + params.theta[i] + params.gamma[j])


def alpha_matrix(params: ModelParams, t: int) -> np.ndarray:
    """Alpha for period t with a zero diagonal."""
    matrix = np.exp(params.mu[t] + params.theta[:, None] + params.gamma[None, :])
    np.fill_diagonal(matrix, 0.0)
    return matrix


def log_dirichlet_row(y_row: Sequence[float] | np.ndarray, alpha_row: Sequence[float] | np.ndarray) -> float:
    """Standard Dirichlet log density of ``y_row`` under ``Dir(alpha_row)``."""

    y = np.asarray(y_row, dtype=np.float64)
    a = np.asarray(alpha_row, dtype=np.float64)
    if y.shape != a.shape:
        raise ValueError("y_row and alpha_row must have the same shape")
    if np.any(y <= 0):
        raise DataValidationError("y entries must be strictly positive; apply the epsilon floor")
    if abs(float(np.sum(y)) - 1.0) > ROW_SUM_TOLERANCE:
        raise DataValidationError("y entries must sum to 1")
    if np.any(a <= 0):
        raise ValueError("alpha entries must be strictly positive")
    value = float(gammaln(np.sum(a)) - np.sum(gammaln(a)) + np.sum((a - 1.0) * np.log(y)))
    if not math.isfinite(value):
        raise NumericalAbort("non-finite Dirichlet log density")
    return value


@dataclass(frozen=True)
class PreparedData:
    """Relative exposures in the form every density consumes.

    ``log_y`` holds ``log y_ij`` for active rows and off-diagonal pairs and 0
    elsewhere; ``active`` is the complement of the zero-row mask.
    """

    log_y: np.ndarray
    active: np.ndarray
    off_diagonal: np.ndarray

    @property
    def n_periods(self) -> int:
        return int(self.log_y.shape[0])

    @property
    def n_nodes(self) -> int:
        return int(self.log_y.shape[1])

    @classmethod
    def from_network(cls, net: DynamicNetwork) -> "PreparedData":
        if net.provenance != "Y":
            raise DataValidationError(f"model data must be tagged 'Y', got {net.provenance!r}")
        n_nodes = net.n_nodes
        if n_nodes <= 2:
            raise DataValidationError("N must exceed 2")
        mask = net.mask if net.mask is not None else net.matrices.sum(axis=2) == 0
        active = ~mask
        off_diagonal = ~np.eye(n_nodes, dtype=bool)
        cells = active[:, :, None] & off_diagonal[None, :, :]
        values = net.matrices
        if np.any(values[cells] <= 0):
            raise DataValidationError(
                "active rows contain zero exposures; apply the epsilon floor before fitting"
            )
        sums = values.sum(axis=2)
        if np.any(np.abs(sums[active] - 1.0) > ROW_SUM_TOLERANCE):
            raise DataValidationError("active rows must sum to 1")
        log_y = np.zeros_like(values)
        log_y[cells] = np.log(values[cells])
        log_y.setflags(write=False)
        active.setflags(write=False)
        off_diagonal.setflags(write=False)
        return cls(log_y=log_y, active=active, off_diagonal=off_diagonal)


def _check_dims(params: ModelParams, data: PreparedData) -> None:
    if params.n_periods != data.n_periods or params.n_nodes != data.n_nodes:
        raise ValueError(
            f"parameter dimensions (T={params.n_periods}, N={params.n_nodes}) do not match "
            f"data (T={data.n_periods}, N={data.n_nodes})"
        )
    if data.n_nodes <= 2:
        raise DataValidationError("N must exceed 2")


def _row_terms(
    mu_t: float,
    theta_rows: np.ndarray,
    gamma: np.ndarray,
    log_y_rows: np.ndarray,
    off_rows: np.ndarray,
    active_rows: np.ndarray,
) -> float:
    alpha_rows = np.exp(mu_t + theta_rows[:, None] + gamma[None, :])
    alpha_off = np.where(off_rows, alpha_rows, 0.0)
    terms = (
        gammaln(alpha_off.sum(axis=1))
        - np.where(off_rows, gammaln(alpha_rows), 0.0).sum(axis=1)
        + ((alpha_off - 1.0) * log_y_rows).sum(axis=1)
    )
    return float(np.sum(np.where(active_rows, terms, 0.0)))


class LikelihoodEvaluator:
    """Evaluates per-period likelihood terms, optionally on a worker pool.

    Per-period sums land in an index-ordered buffer and are reduced in period
    order, so the value does not depend on the number of threads.
    """

    def __init__(self, data: PreparedData, threads: int = 1) -> None:
        self.data = data
        self.threads = max(1, int(threads))
        self._executor: ThreadPoolExecutor | None = None
        if self.threads > 1:
            self._executor = ThreadPoolExecutor(
                max_workers=self.threads, thread_name_prefix="likelihood"
            )

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __enter__(self) -> "LikelihoodEvaluator":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()

    def _period_term(self, t: int, mu_t: float, theta: np.ndarray, gamma: np.ndarray, rows: np.ndarray | None) -> float:
        data = self.data
        if rows is None:
            return _row_terms(mu_t, theta, gamma, data.log_y[t], data.off_diagonal, data.active[t])
        return _row_terms(
            mu_t,
            theta[rows],
            gamma,
            data.log_y[t, rows],
            data.off_diagonal[rows],
            data.active[t, rows],
        )

    def period_terms(
        self,
        mu: np.ndarray,
        theta: np.ndarray,
        gamma: np.ndarray,
        periods: Sequence[int] | None = None,
        rows: np.ndarray | None = None,
    ) -> np.ndarray:
        selected = list(range(self.data.n_periods)) if periods is None else list(periods)
        return self._fan_out(self._period_term, selected, mu, theta, gamma, rows)

    def _fan_out(self, term, selected: list[int], mu: np.ndarray, *args) -> np.ndarray:
        ordered = np.zeros(len(selected))
        if self._executor is None or len(selected) == 1:
            for position, t in enumerate(selected):
                ordered[position] = term(t, float(mu[t]), *args)
            return ordered
        futures = [self._executor.submit(term, t, float(mu[t]), *args) for t in selected]
        for position, future in enumerate(futures):
            ordered[position] = future.result()
        return ordered

    def total(
        self,
        mu: np.ndarray,
        theta: np.ndarray,
        gamma: np.ndarray,
        periods: Sequence[int] | None = None,
        rows: np.ndarray | None = None,
    ) -> float:
        return float(np.sum(self.period_terms(mu, theta, gamma, periods, rows)))

    def _column_term(
        self, t: int, mu_t: float, theta: np.ndarray, gamma: np.ndarray, columns: tuple[int, ...]
    ) -> float:
        data = self.data
        active = data.active[t]
        scale = np.exp(mu_t + theta)
        exp_gamma = np.exp(gamma)
        # row i's alpha total is scale_i * (sum_j exp(gamma_j) - exp(gamma_i))
        totals = scale * (exp_gamma.sum() - exp_gamma)
        value = float(np.sum(np.where(active, gammaln(totals), 0.0)))
        for j in columns:
            a = scale * exp_gamma[j]
            rows = active & data.off_diagonal[:, j]
            value += float(np.sum(np.where(rows, (a - 1.0) * data.log_y[t, :, j] - gammaln(a), 0.0)))
        return value

    def column_total(
        self, mu: np.ndarray, theta: np.ndarray, gamma: np.ndarray, columns: Sequence[int]
    ) -> float:
        """Likelihood up to the terms of columns outside ``columns``.

        Costs O(T N) instead of O(T N^2); differences in the given columns'
        gamma values match differences of the full likelihood.
        """
        selected = list(range(self.data.n_periods))
        return float(np.sum(self._fan_out(self._column_term, selected, mu, theta, gamma, tuple(columns))))


def _evaluator(data: PreparedData, evaluator: LikelihoodEvaluator | None) -> LikelihoodEvaluator:
    if evaluator is not None:
        return evaluator
    return LikelihoodEvaluator(data, threads=1)


def _finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NumericalAbort(f"non-finite {what}")
    return value


def log_likelihood(
    params: ModelParams, data: PreparedData, evaluator: LikelihoodEvaluator | None = None
) -> float:
    _check_dims(params, data)
    engine = _evaluator(data, evaluator)
    return _finite(engine.total(params.mu, params.theta, params.gamma), "log likelihood")


def log_prior(params: ModelParams, hyper: Hyperparams) -> float:
    mu, theta, gamma_free = params.mu, params.theta, params.gamma_free
    increments = np.diff(mu)
    value = -0.5 * hyper.tau_mu * mu[0] ** 2
    value += 0.5 * increments.size * math.log(params.tau_eta) - 0.5 * params.tau_eta * float(
        np.sum(increments**2)
    )
    value += 0.5 * theta.size * math.log(params.tau_theta) - 0.5 * params.tau_theta * float(
        np.sum(theta**2)
    )
    value += 0.5 * gamma_free.size * math.log(params.tau_gamma) - 0.5 * params.tau_gamma * float(
        np.sum(gamma_free**2)
    )
    for shape, rate, tau in (
        (hyper.a_eta, hyper.b_eta, params.tau_eta),
        (hyper.a_theta, hyper.b_theta, params.tau_theta),
        (hyper.a_gamma, hyper.b_gamma, params.tau_gamma),
    ):
        value += (shape - 1.0) * math.log(tau) - rate * tau
    return float(value)


def log_posterior(
    params: ModelParams,
    data: PreparedData,
    hyper: Hyperparams,
    evaluator: LikelihoodEvaluator | None = None,
) -> float:
    value = log_likelihood(params, data, evaluator) + log_prior(params, hyper)
    return _finite(value, "log posterior")


def logfc_mu(
    params: ModelParams,
    data: PreparedData,
    hyper: Hyperparams,
    s: int,
    proposal: float,
    evaluator: LikelihoodEvaluator | None = None,
) -> float:
    """Full conditional of mu_s; touches period s only."""

    _check_dims(params, data)
    n_periods = params.n_periods
    if not 0 <= s < n_periods:
        raise IndexError(f"period {s} out of range")
    engine = _evaluator(data, evaluator)
    mu = np.array(params.mu)
    mu[s] = proposal
    value = engine.total(mu, params.theta, params.gamma, periods=[s])
    if s == 0:
        value -= 0.5 * hyper.tau_mu * proposal**2
    if s > 0:
        value -= 0.5 * params.tau_eta * (proposal - params.mu[s - 1]) ** 2
    if s < n_periods - 1:
        value -= 0.5 * params.tau_eta * (params.mu[s + 1] - proposal) ** 2
    return _finite(value, f"full conditional of mu[{s}]")


def logfc_theta(
    params: ModelParams,
    data: PreparedData,
    hyper: Hyperparams,
    k: int,
    proposal: float,
    evaluator: LikelihoodEvaluator | None = None,
) -> float:
    """Full conditional of theta_k; touches row k in every period."""

    del hyper  # theta's prior precision is a sampled parameter
    _check_dims(params, data)
    if not 0 <= k < params.n_nodes:
        raise IndexError(f"node {k} out of range")
    engine = _evaluator(data, evaluator)
    theta = np.array(params.theta)
    theta[k] = proposal
    value = engine.total(params.mu, theta, params.gamma, rows=np.array([k]))
    value -= 0.5 * params.tau_theta * proposal**2
    return _finite(value, f"full conditional of theta[{k}]")


def logfc_gamma(
    params: ModelParams,
    data: PreparedData,
    hyper: Hyperparams,
    l: int,
    proposal: float,
    evaluator: LikelihoodEvaluator | None = None,
) -> float:
    """Full conditional of the free coordinate gamma_l (l >= 1).

    gamma_0 moves with gamma_l, so columns 0 and l change along with every
    row normalizer; the other columns are constant and left out.
    """

    del hyper
    _check_dims(params, data)
    if not 1 <= l < params.n_nodes:
        raise IndexError(f"gamma index {l} is not a free coordinate")
    engine = _evaluator(data, evaluator)
    free = np.array(params.gamma[1:])
    free[l - 1] = proposal
    gamma = constrained_gamma(free)
    value = engine.column_total(params.mu, params.theta, gamma, (0, l))
    value -= 0.5 * params.tau_gamma * proposal**2
    return _finite(value, f"full conditional of gamma[{l}]")


def conjugate_tau_eta(params: ModelParams, hyper: Hyperparams) -> tuple[float, float]:
    increments = np.diff(params.mu)
    shape = hyper.a_eta + 0.5 * increments.size
    rate = hyper.b_eta + 0.5 * float(np.sum(increments**2))
    return shape, rate


def conjugate_tau_theta(params: ModelParams, hyper: Hyperparams) -> tuple[float, float]:
    shape = hyper.a_theta + 0.5 * params.theta.size
    rate = hyper.b_theta + 0.5 * float(np.sum(params.theta**2))
    return shape, rate


def conjugate_tau_gamma(params: ModelParams, hyper: Hyperparams) -> tuple[float, float]:
    free = params.gamma_free
    shape = hyper.a_gamma + 0.5 * free.size
    rate = hyper.b_gamma + 0.5 * float(np.sum(free**2))
    return shape, rate


def _gamma_draw(shape: float, rate: float, rng: np.random.Generator) -> float:
    assert rate > 0, "conjugate rate must be positive"
    return float(rng.gamma(shape, 1.0 / rate))


def sample_tau_eta(params: ModelParams, hyper: Hyperparams, rng: np.random.Generator) -> float:
    return _gamma_draw(*conjugate_tau_eta(params, hyper), rng)


def sample_tau_theta(params: ModelParams, hyper: Hyperparams, rng: np.random.Generator) -> float:
    return _gamma_draw(*conjugate_tau_theta(params, hyper), rng)


def sample_tau_gamma(params: ModelParams, hyper: Hyperparams, rng: np.random.Generator) -> float:
    return _gamma_draw(*conjugate_tau_gamma(params, hyper), rng)


__all__ = [
    "LikelihoodEvaluator",
    "ModelParams",
    "PreparedData",
    "alpha",
    "alpha_matrix",
    "conjugate_tau_eta",
    "conjugate_tau_gamma",
    "conjugate_tau_theta",
    "constrained_gamma",
    "log_dirichlet_row",
    "log_likelihood",
    "log_posterior",
    "log_prior",
    "logfc_gamma",
    "logfc_mu",
    "logfc_theta",
    "sample_tau_eta",
    "sample_tau_gamma",
    "sample_tau_theta",
]
