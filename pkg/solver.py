#!/usr/bin/env python3
"""
ADMM solver for nonnegative, l1-penalized least squares with an optional
quadratic pull towards a prior:

    min_{X >= 0}  1/2 ||Y - A X||_F^2 + lambda ||X||_1 + beta/2 ||X_prior - X||_F^2

beta = 0 without a prior is the plain sparse unmixing problem (SUnSAL); the
coarse stage of the multiscale pipeline and the baseline both use it.
"""

import logging
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np
from scipy import linalg

import config
from datamodel import AbundanceMatrix, SpectralLibrary
from errors import InvalidParameter, NotPositiveDefinite, ShapeMismatch

logger = logging.getLogger(__name__)


def soft_threshold(y, tau):
    """sign(y) * max(|y| - tau, 0), element-wise for arrays"""
    if np.any(np.asarray(tau) < 0):
        raise InvalidParameter(f"soft threshold needs tau >= 0, got {tau}")
    return np.sign(y) * np.maximum(np.abs(y) - tau, 0.0)


@dataclass(frozen=True, eq=False)
class NormalFactor:
    """Cholesky factor of A^T A + shift * I, reused by every iteration"""
    library: Union[SpectralLibrary, np.ndarray]
    shift: float
    factor: tuple

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return linalg.cho_solve(self.factor, rhs, check_finite=False)

    def reconstruct(self) -> np.ndarray:
        """Rebuild A^T A + shift * I from the factor"""
        c, lower = self.factor
        tri = np.tril(c) if lower else np.triu(c)
        return tri @ tri.T if lower else tri.T @ tri


def factorize(library: Union[SpectralLibrary, np.ndarray], shift: float) -> NormalFactor:
    """
    Factor the P x P normal matrix A^T A + shift * I.

    Accepts a raw L x P matrix as well as a library, since the factor is
    well defined for matrices a SpectralLibrary rejects (an all-zero A).
    """
    if not shift > 0:
        raise InvalidParameter(f"shift must be > 0, got {shift}")
    if isinstance(library, SpectralLibrary):
        a = library.signatures
    else:
        a = np.asarray(library, dtype=np.float64)
        if a.ndim != 2:
            raise ShapeMismatch(f"expected an L x P matrix, got shape {a.shape}")
    gram = a.T @ a
    gram[np.diag_indices_from(gram)] += shift
    try:
        factor = linalg.cho_factor(gram, lower=True, check_finite=False)
    except linalg.LinAlgError as e:
        logger.error(f"Normal matrix factorization failed for shift={shift}: {e}")
        raise NotPositiveDefinite(f"A^T A + {shift} I is not numerically positive definite") from e
    return NormalFactor(library, float(shift), factor)


_factor_cache: "OrderedDict[tuple, NormalFactor]" = OrderedDict()
_factor_lock = threading.Lock()


def cached_factor(library: SpectralLibrary, shift: float) -> NormalFactor:
    """factorize(), memoized on (library contents, shift)"""
    key = (library.fingerprint, float(shift))
    with _factor_lock:
        hit = _factor_cache.get(key)
        if hit is not None:
            _factor_cache.move_to_end(key)
            return hit
    fresh = factorize(library, shift)
    with _factor_lock:
        _factor_cache[key] = fresh
        while len(_factor_cache) > max(config.FACTOR_CACHE_SIZE, 1):
            _factor_cache.popitem(last=False)
    return fresh


def clear_factor_cache() -> None:
    with _factor_lock:
        _factor_cache.clear()


@dataclass
class AdmmState:
    """Iterates of one ADMM run; U stays >= 0 after every update"""
    X: np.ndarray
    U: np.ndarray
    V: np.ndarray
    iter: int = 0
    primal_residual: float = float('inf')
    dual_residual: float = float('inf')


@dataclass(frozen=True, eq=False)
class SolveReport:
    abundances: AbundanceMatrix
    iterations: int
    final_primal_residual: float
    final_dual_residual: float
    objective: float
    wall_time: float
    converged: bool = False
    primal_history: List[float] = field(default_factory=list)
    final_mu: float = 0.0


def objective(Y: np.ndarray, library: SpectralLibrary, X: np.ndarray, lam: float,
              beta: float = 0.0, prior: Optional[np.ndarray] = None) -> float:
    """Value of the regularized objective; +inf when X has negative entries"""
    if np.any(X < 0):
        return float('inf')
    value = 0.5 * float(np.sum((Y - library.signatures @ X) ** 2)) + lam * float(np.sum(X))
    if beta > 0 and prior is not None:
        value += 0.5 * beta * float(np.sum((prior - X) ** 2))
    return value


def admm_solve(Y, library: SpectralLibrary, lam: float, beta: float = 0.0,
               prior: Optional[AbundanceMatrix] = None, mu: float = config.ADMM_MU,
               max_iters: int = config.ADMM_MAX_ITERS, tol: float = config.ADMM_TOL,
               adaptive_mu: bool = config.ADMM_ADAPTIVE_MU) -> SolveReport:
    """
    Run ADMM from U = V = 0:

        Omega   = A^T Y + mu (U + V) + beta X_prior
        X       = (A^T A + (mu + beta) I)^-1 Omega
        U       = max(0, soft(X - V, lambda / mu))
        V       = V - (X - U)

    until both ||X - U||_F and mu ||U - U_prev||_F drop to tol * sqrt(P N), or
    max_iters. Returns U, which is nonnegative by construction.

    With adaptive_mu, every config.ADMM_ADAPT_EVERY iterations mu is doubled
    when the primal residual is more than config.ADMM_ADAPT_RATIO times the
    dual one, and halved in the opposite case. V is a scaled dual, so it is
    rescaled by the inverse factor; each new mu + beta gets its own factor.
    """
    started = time.perf_counter()
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] != library.bands:
        raise ShapeMismatch(f"Y must be {library.bands} x N, got shape {Y.shape}")
    if not lam > 0:
        raise InvalidParameter(f"lambda must be > 0, got {lam}")
    if not beta >= 0:
        raise InvalidParameter(f"beta must be >= 0, got {beta}")
    if not mu > 0:
        raise InvalidParameter(f"mu must be > 0, got {mu}")
    if max_iters < 1 or not tol > 0:
        raise InvalidParameter(f"need max_iters >= 1 and tol > 0, got {max_iters}, {tol}")
    if (beta > 0) != (prior is not None):
        raise InvalidParameter("a prior must be given exactly when beta > 0")

    p, n = library.count, Y.shape[1]
    prior_values = None
    if prior is not None:
        prior_values = prior.values
        if prior_values.shape != (p, n):
            raise ShapeMismatch(f"prior must be {p} x {n}, got {prior_values.shape}")

    a = library.signatures
    factor = cached_factor(library, mu + beta)
    fixed = a.T @ Y
    if prior_values is not None:
        fixed = fixed + beta * prior_values

    state = AdmmState(X=np.zeros((p, n)), U=np.zeros((p, n)), V=np.zeros((p, n)))
    threshold = tol * np.sqrt(p * n)
    history = []
    converged = False
    for i in range(max_iters):
        omega = fixed + mu * (state.U + state.V)
        state.X = factor.solve(omega)
        u_prev = state.U
        state.U = np.maximum(0.0, soft_threshold(state.X - state.V, lam / mu))
        state.V = state.V - (state.X - state.U)
        state.iter = i + 1
        state.primal_residual = float(np.linalg.norm(state.X - state.U))
        state.dual_residual = float(mu * np.linalg.norm(state.U - u_prev))
        history.append(state.primal_residual)
        if i % 50 == 0:
            logger.debug(f"ADMM iter {state.iter}: primal {state.primal_residual:.3e}, dual {state.dual_residual:.3e}")
        if state.primal_residual <= threshold and state.dual_residual <= threshold:
            converged = True
            break
        if adaptive_mu and state.iter % config.ADMM_ADAPT_EVERY == 0:
            scale = 1.0
            if state.primal_residual > config.ADMM_ADAPT_RATIO * state.dual_residual:
                scale = 2.0
            elif state.dual_residual > config.ADMM_ADAPT_RATIO * state.primal_residual:
                scale = 0.5
            if scale != 1.0:
                mu *= scale
                state.V = state.V / scale
                factor = cached_factor(library, mu + beta)
                logger.debug(f"ADMM iter {state.iter}: mu -> {mu:g}")

    if not converged:
        logger.warning(
            f"ADMM stopped at max_iters={max_iters} (primal {state.primal_residual:.3e}, "
            f"dual {state.dual_residual:.3e}, target {threshold:.3e})"
        )

    elapsed = time.perf_counter() - started
    report = SolveReport(
        abundances=AbundanceMatrix(state.U),
        iterations=state.iter,
        final_primal_residual=state.primal_residual,
        final_dual_residual=state.dual_residual,
        objective=objective(Y, library, state.U, lam, beta, prior_values),
        wall_time=elapsed,
        converged=converged,
        primal_history=history,
        final_mu=mu,
    )
    logger.info(
        f"ADMM: P={p}, N={n}, lambda={lam:g}, beta={beta:g} -> {report.iterations} iterations, "
        f"objective {report.objective:.6g}, final mu {mu:g}, {elapsed:.2f}s"
    )
    return report
