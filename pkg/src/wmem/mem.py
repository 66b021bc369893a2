#!/usr/bin/env python3
"""
Maximum Entropy on the Mean for one time-frequency box.

Reference law: per parcel k an independent Bernoulli-Gaussian, i.e. with
probability alpha_k the parcel's amplitudes are N(mu_k, s_k^2 I), otherwise
they are exactly zero. Its log-partition is

    F*_k(u) = log[(1 - alpha_k) + alpha_k exp(u.mu_k + s_k^2 |u|^2 / 2)]

and the MEM solution maximizes the entropy relative to the reference subject
to explaining the data on average. It is found from the convex dual

    D(xi) = sum_k F*_k(G_k^T xi) + noise_var/2 |xi|^2 - xi.m

whose minimizer xi* gives E[w] = grad F*(G^T xi*).
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np
from loguru import logger
from scipy import linalg, optimize
from scipy.special import expit, logit

from ..errors import ConfigError, DimensionError, SolverError
from ..headmodel import GainMatrix
from .parcels import Parcellation


DEFAULT_ALPHA = 0.5
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 500
ARMIJO_C = 1e-4
VALUE_RTOL = 1e-10


# =============================================================================
# Reference law and solution
# =============================================================================

@dataclass
class MemReferenceLaw:
    """
    Bernoulli-Gaussian reference law over parcels.

    Attributes:
        parcellation: Source-to-parcel assignment
        alpha: (K,) activation probabilities in (0, 1)
        sigma2: (K,) active-state variances s_k^2 (Sigma_k = s_k^2 I)
        mu: (n_sources,) active-state means (default zeros)
    """

    parcellation: Parcellation
    alpha: np.ndarray
    sigma2: np.ndarray
    mu: Optional[np.ndarray] = None

    def __post_init__(self):
        K = self.parcellation.n_parcels
        self.alpha = np.broadcast_to(np.asarray(self.alpha, dtype=float), (K,)).copy()
        self.sigma2 = np.broadcast_to(np.asarray(self.sigma2, dtype=float), (K,)).copy()
        if self.mu is None:
            self.mu = np.zeros(self.parcellation.n_sources)
        self.mu = np.asarray(self.mu, dtype=float)
        if np.any(self.alpha <= 0) or np.any(self.alpha >= 1):
            raise ConfigError("alpha: activation probabilities must lie strictly in (0, 1)")
        if np.any(self.sigma2 <= 0) or not np.all(np.isfinite(self.sigma2)):
            raise ConfigError("reference covariance must be positive definite (sigma2 > 0)")
        if self.mu.shape != (self.parcellation.n_sources,):
            raise DimensionError("mu must have one entry per source")

    @property
    def n_parcels(self) -> int:
        return self.parcellation.n_parcels

    @classmethod
    def uniform(cls, parcellation: Parcellation, alpha: float = DEFAULT_ALPHA, sigma2: float = 1.0) -> "MemReferenceLaw":
        return cls(parcellation, alpha, sigma2)

    @classmethod
    def from_data(cls, parcellation: Parcellation, G: np.ndarray, m: np.ndarray, noise_var: float,
                  alpha: float = DEFAULT_ALPHA, floor: float = 1e-2) -> "MemReferenceLaw":
        """
        Scale s^2 so the reference explains the data energy above the noise floor:
        alpha s^2 |G|_F^2 = max(|m|^2 - n noise_var, floor n noise_var).
        """
        G = np.atleast_2d(np.asarray(G, dtype=float))
        n = G.shape[0]
        excess = max(float(m @ m) - n * noise_var, floor * n * noise_var)
        gain_energy = float(np.sum(G ** 2))
        if gain_energy <= 0:
            raise ConfigError("gain matrix is identically zero")
        return cls(parcellation, alpha, excess / (alpha * gain_energy))


@dataclass
class MemSolution:
    """
    MEM estimate for one box.

    Attributes:
        expected_sources: E_p[w] per gain column
        dual_point: xi at the optimum
        entropy_drop: KL divergence of the solution from the reference (>= 0)
        data_residual: |G E[w] - m|
        active_probability: Posterior activation probability per parcel
        iterations: Solver iterations used
        gradient_norm: Final |grad D|
    """

    expected_sources: np.ndarray
    dual_point: np.ndarray
    entropy_drop: float
    data_residual: float
    active_probability: np.ndarray
    iterations: int = 0
    gradient_norm: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "entropy_drop": self.entropy_drop,
            "data_residual": self.data_residual,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
        }


# =============================================================================
# Dual problem
# =============================================================================

class MemProblem:
    """
    MEM dual for a fixed gain matrix and noise level, reusable across boxes.

    Args:
        G: (n_sensors, n_columns) gain matrix (already whitened if needed)
        parcellation: Source parcels
        noise_var: Sensor noise variance (> 0)
        n_orient: Gain columns per source
    """

    def __init__(self, G: Any, parcellation: Parcellation, noise_var: float, n_orient: int = 1):
        self.G = np.atleast_2d(np.asarray(G.matrix if isinstance(G, GainMatrix) else G, dtype=float))
        if noise_var <= 0:
            raise ConfigError(f"noise_var: must be > 0, got {noise_var}")
        if self.G.shape[1] != parcellation.n_sources * n_orient:
            raise DimensionError(
                f"gain has {self.G.shape[1]} columns, parcellation covers {parcellation.n_sources} sources x {n_orient}"
            )
        self.parcellation = parcellation
        self.noise_var = float(noise_var)
        self.n_orient = n_orient
        self.column_parcel = np.repeat(parcellation.assignment, n_orient)
        self.onehot = np.zeros((self.G.shape[1], parcellation.n_parcels))
        self.onehot[np.arange(self.G.shape[1]), self.column_parcel] = 1.0

    @property
    def n_sensors(self) -> int:
        return self.G.shape[0]

    def _terms(self, xi: np.ndarray, law: MemReferenceLaw):
        u = self.G.T @ xi
        mu = np.repeat(law.mu, self.n_orient)
        s2 = law.sigma2[self.column_parcel]
        z = np.bincount(self.column_parcel, weights=u * mu + 0.5 * s2 * u * u,
                        minlength=law.n_parcels)
        log_partition = np.logaddexp(np.log1p(-law.alpha), np.log(law.alpha) + z)
        prob = expit(logit(law.alpha) + z)
        a = mu + s2 * u
        expected = prob[self.column_parcel] * a
        return u, log_partition, prob, a, expected

    def log_partition(self, u: np.ndarray, law: MemReferenceLaw) -> float:
        """F*(u) summed over parcels."""
        mu = np.repeat(law.mu, self.n_orient)
        s2 = law.sigma2[self.column_parcel]
        z = np.bincount(self.column_parcel, weights=u * mu + 0.5 * s2 * u * u, minlength=law.n_parcels)
        return float(np.sum(np.logaddexp(np.log1p(-law.alpha), np.log(law.alpha) + z)))

    def objective(self, xi: np.ndarray, m: np.ndarray, law: MemReferenceLaw) -> float:
        _, log_partition, _, _, _ = self._terms(xi, law)
        return float(np.sum(log_partition) + 0.5 * self.noise_var * xi @ xi - xi @ m)

    def gradient(self, xi: np.ndarray, m: np.ndarray, law: MemReferenceLaw) -> np.ndarray:
        _, _, _, _, expected = self._terms(xi, law)
        return self.G @ expected + self.noise_var * xi - m

    def objective_and_gradient(self, xi: np.ndarray, m: np.ndarray, law: MemReferenceLaw):
        _, log_partition, _, _, expected = self._terms(xi, law)
        value = float(np.sum(log_partition) + 0.5 * self.noise_var * xi @ xi - xi @ m)
        return value, self.G @ expected + self.noise_var * xi - m

    def hessian(self, xi: np.ndarray, law: MemReferenceLaw) -> np.ndarray:
        """G (blockdiag pi s^2 I + pi (1 - pi) a a^T) G^T + noise_var I."""
        _, _, prob, a, _ = self._terms(xi, law)
        diag = (prob * law.sigma2)[self.column_parcel]
        B = (self.G * a[None, :]) @ self.onehot
        H = (self.G * diag[None, :]) @ self.G.T + (B * (prob * (1.0 - prob))[None, :]) @ B.T
        H[np.diag_indices_from(H)] += self.noise_var
        return 0.5 * (H + H.T)

    def solution_at(self, xi: np.ndarray, m: np.ndarray, law: MemReferenceLaw,
                    iterations: int = 0) -> MemSolution:
        u, log_partition, prob, _, expected = self._terms(xi, law)
        grad = self.G @ expected + self.noise_var * xi - m
        entropy_drop = max(float(u @ expected - np.sum(log_partition)), 0.0)
        return MemSolution(
            expected_sources=expected,
            dual_point=xi,
            entropy_drop=entropy_drop,
            data_residual=float(np.linalg.norm(self.G @ expected - m)),
            active_probability=prob,
            iterations=iterations,
            gradient_norm=float(np.linalg.norm(grad)),
        )

    # -------------------------------------------------------------------------
    # Optimizers
    # -------------------------------------------------------------------------

    def solve(self, m: np.ndarray, law: MemReferenceLaw, max_iter: int = DEFAULT_MAX_ITER,
              tol: float = DEFAULT_TOL, method: str = "newton",
              xi0: Optional[np.ndarray] = None) -> MemSolution:
        """
        Minimize the dual D(xi).

        Args:
            m: Sensor coefficient vector of one box
            law: Reference law
            max_iter: Iteration budget
            tol: Convergence threshold on |grad D|
            method: 'newton' (damped Newton, Armijo backtracking) or 'bfgs' (scipy quasi-Newton)
            xi0: Starting point (zeros by default)

        Returns:
            MemSolution

        Raises:
            SolverError: |grad D| > tol after max_iter iterations
        """
        m = np.asarray(m, dtype=float)
        if m.shape != (self.n_sensors,):
            raise DimensionError(f"data vector must have {self.n_sensors} entries, got {m.shape}")
        if law.parcellation.n_sources != self.parcellation.n_sources:
            raise DimensionError("reference law parcels do not cover this source space")
        xi = np.zeros(self.n_sensors) if xi0 is None else np.array(xi0, dtype=float)
        if method == "newton":
            return self._newton(xi, m, law, max_iter, tol)
        if method == "bfgs":
            return self._bfgs(xi, m, law, max_iter, tol)
        raise ConfigError(f"optimizer: unknown method '{method}' (valid: newton, bfgs)")

    def _newton(self, xi: np.ndarray, m: np.ndarray, law: MemReferenceLaw, max_iter: int,
                tol: float) -> MemSolution:
        value, grad = self.objective_and_gradient(xi, m, law)
        grad_norm = float(np.linalg.norm(grad))
        for it in range(max_iter):
            if grad_norm <= tol:
                return self.solution_at(xi, m, law, it)
            H = self.hessian(xi, law)
            step = -linalg.cho_solve(linalg.cho_factor(H, lower=True), grad)
            slope = float(grad @ step)
            t = 1.0
            while True:
                candidate = xi + t * step
                new_value, new_grad = self.objective_and_gradient(candidate, m, law)
                if new_value <= value + ARMIJO_C * t * slope:
                    break
                # D is flat to rounding here; judge the step by the gradient instead
                if (new_value <= value + VALUE_RTOL * max(1.0, abs(value))
                        and np.linalg.norm(new_grad) < grad_norm):
                    break
                t *= 0.5
                if t < 1e-10:
                    raise SolverError(
                        f"line search failed at iteration {it} (|grad D| = {grad_norm:.3g})",
                        gradient_norm=grad_norm, iterations=it,
                    )
            xi, value, grad = candidate, new_value, new_grad
            grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= tol:
            return self.solution_at(xi, m, law, max_iter)
        raise SolverError(
            f"MEM dual did not converge in {max_iter} iterations (|grad D| = {grad_norm:.3g} > {tol:g})",
            gradient_norm=grad_norm, iterations=max_iter,
        )

    def _bfgs(self, xi: np.ndarray, m: np.ndarray, law: MemReferenceLaw, max_iter: int,
              tol: float) -> MemSolution:
        result = optimize.minimize(
            self.objective_and_gradient, xi, args=(m, law), jac=True, method="BFGS",
            options={"maxiter": max_iter, "gtol": tol},
        )
        grad_norm = float(np.linalg.norm(result.jac))
        if grad_norm > tol and not result.success:
            raise SolverError(
                f"BFGS stopped after {result.nit} iterations: {result.message} (|grad D| = {grad_norm:.3g})",
                gradient_norm=grad_norm, iterations=int(result.nit),
            )
        return self.solution_at(result.x, m, law, int(result.nit))


def mem_solve(m: np.ndarray, G: Any, law: MemReferenceLaw, noise_var: float,
              max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL, method: str = "newton") -> MemSolution:
    """
    Solve the MEM problem for one box.

    Args:
        m: Sensor coefficient vector
        G: GainMatrix or (n_sensors, n_columns) array
        law: Reference law whose parcels partition the sources
        noise_var: Sensor noise variance
        max_iter: Iteration budget
        tol: Convergence threshold on the dual gradient norm
        method: 'newton' or 'bfgs'

    Returns:
        MemSolution
    """
    n_orient = G.n_orient if isinstance(G, GainMatrix) else 1
    problem = MemProblem(G, law.parcellation, noise_var, n_orient)
    solution = problem.solve(m, law, max_iter, tol, method)
    logger.trace(f"MEM box solved in {solution.iterations} iterations, KL {solution.entropy_drop:.4g}")
    return solution
