"""Penalized maximum-likelihood GLMs (Gaussian, Poisson log-link, Bernoulli logit-link).

The fit returns the Laplace covariance, i.e. the inverse of the penalized
observed information at the optimum.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

FAMILIES = ("gaussian", "poisson", "bernoulli")


@dataclass
class GlmFit:
    coef: np.ndarray          # [intercept, weights...]
    cov: np.ndarray
    noise_sd: float | None
    converged: bool
    flags: list[str] = field(default_factory=list)


def _loglik(family: str, eta: np.ndarray, y: np.ndarray) -> float:
    if family == "poisson":
        return float(np.sum(y * eta - np.exp(eta)))
    # bernoulli: y*eta - log(1+e^eta)
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def fit_glm(X: np.ndarray, y: np.ndarray, family: str, ridge: float = 1e-4,
            penalize_intercept: bool = False, max_iter: int = 100, tol: float = 1e-10) -> GlmFit:
    """Fit ``y ~ family(b + X w)`` by (penalized) Newton / IRLS.

    ``ridge`` adds ``ridge/2 * ||w||^2`` to the negative log-likelihood; the
    intercept is only penalized when ``penalize_intercept`` is set.
    """
    X = np.asarray(X, float).reshape(len(y), -1)
    y = np.asarray(y, float)
    n, p = X.shape
    A = np.column_stack([np.ones(n), X])
    pen = np.full(p + 1, ridge)
    if not penalize_intercept:
        pen[0] = 0.0
    P = np.diag(pen)
    flags: list[str] = []

    if family == "gaussian":
        H = A.T @ A + P
        coef = np.linalg.solve(H, A.T @ y) if np.linalg.cond(H) < 1e14 else np.linalg.lstsq(H, A.T @ y, rcond=None)[0]
        resid = y - A @ coef
        sigma2 = float(resid @ resid / n)
        cov = sigma2 * np.linalg.pinv(H)
        return GlmFit(coef, cov, float(np.sqrt(sigma2)), True, flags)

    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")

    coef = np.zeros(p + 1)
    if family == "poisson":
        coef[0] = np.log(max(y.mean(), 1e-8))
    else:
        m = min(max(y.mean(), 1e-6), 1 - 1e-6)
        coef[0] = np.log(m / (1 - m))

    def objective(c):
        return -_loglik(family, A @ c, y) + 0.5 * c @ P @ c

    obj = objective(coef)
    converged = False
    for _ in range(max_iter):
        eta = np.clip(A @ coef, -700, 50 if family == "poisson" else 700)
        if family == "poisson":
            mu = np.exp(eta)
            w = mu
        else:
            mu = expit(eta)
            w = mu * (1 - mu)
        grad = A.T @ (y - mu) - P @ coef
        H = (A * w[:, None]).T @ A + P
        H += 1e-12 * np.eye(p + 1)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = coef + t * step
            new = objective(cand)
            if np.isfinite(new) and new <= obj + 1e-12:
                break
            t *= 0.5
            if t < 1e-10:
                cand, new = coef, obj
                break
        moved = np.max(np.abs(cand - coef))
        coef, obj = cand, new
        if moved < tol * (1 + np.max(np.abs(coef))) or np.max(np.abs(grad)) < 1e-9:
            converged = True
            break
    if not converged:
        flags.append("not_converged")

    eta = A @ coef
    w = np.exp(np.clip(eta, -700, 50)) if family == "poisson" else expit(eta) * (1 - expit(eta))
    H = (A * w[:, None]).T @ A + P
    cov = np.linalg.pinv(H)
    cov = 0.5 * (cov + cov.T)
    return GlmFit(coef, cov, None, converged, flags)


def separated(X: np.ndarray, y: np.ndarray, coef: np.ndarray) -> bool:
    """Heuristic check for (quasi-)complete separation in a logistic fit."""
    eta = coef[0] + np.asarray(X, float).reshape(len(y), -1) @ coef[1:]
    p = expit(eta)
    return bool(np.max(np.abs(coef)) > 15 or np.all((p > 0.5) == (y > 0.5)) and np.min(np.abs(eta)) > 5)
