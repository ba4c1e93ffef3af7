"""Closed-form stability values and generalization upper bounds.

All confidence terms share ``sqrt(ln(1/delta) / (2m))`` with the natural log.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import Dataset
from .learners import design_matrix

DEFAULT_DELTA = 0.05


class BoundError(ValueError):
    pass


class UnboundedStabilityError(BoundError):
    """Raised when the smallest Hessian eigenvalue is not positive."""

    def __init__(self, lambda_min: float):
        super().__init__(
            f"unbounded: Hessian not positive definite at theta-hat (lambda_min = {lambda_min:.3e})"
        )
        self.lambda_min = lambda_min


@dataclass
class BoundReport:
    algorithm: str
    stability_bound: float
    generalization_bound: float
    inputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _confidence(m: int, delta: float) -> float:
    if not 0.0 < delta < 1.0:
        raise BoundError(f"delta must lie in (0, 1), got {delta}")
    if m < 1:
        raise BoundError(f"m must be >= 1, got {m}")
    return math.sqrt(math.log(1.0 / delta) / (2.0 * m))


def knn_stability_bound(k: int, m: int) -> float:
    if not 1 <= k <= m:
        raise BoundError(f"need 1 <= k <= m, got k={k}, m={m}")
    return k / m


def dt_stability_bound(v: int) -> float:
    if v < 1:
        raise BoundError(f"v must be >= 1, got {v}")
    return 1.0 / v


def l2lr_stability_bound(rho: float, tau: float, lam: float, m: int, Q: float) -> float:
    """``2 rho tau Q / (lam m)``; hypothesis, pointwise and uniform alike."""
    if lam <= 0:
        raise BoundError("lambda must be > 0; use lr_stability_bound for the unregularized case")
    return 2.0 * rho * tau * Q / (lam * m)


def lr_stability_bound(rho: float, tau: float, m: int, lambda_min: float, Q: float) -> float:
    if lambda_min <= 0:
        raise UnboundedStabilityError(lambda_min)
    return 2.0 * rho * tau * Q / (m * lambda_min)


def gen_bound_dt(R_emp: float, v: int, m: int, tau: float, delta: float = DEFAULT_DELTA) -> float:
    if v < 1:
        raise BoundError(f"v must be >= 1, got {v}")
    return R_emp + 2.0 / v + (4.0 * m / v + tau) * _confidence(m, delta)


def gen_bound_lr(
    R_emp: float, rho: float, tau: float, lambda_min: float, m: int, delta: float = DEFAULT_DELTA
) -> float:
    if lambda_min <= 0:
        raise UnboundedStabilityError(lambda_min)
    return (
        R_emp
        + 4.0 * rho * tau / (m * lambda_min)
        + (8.0 * rho * tau / lambda_min + tau) * _confidence(m, delta)
    )


def gen_bound_l2lr(
    R_emp: float, rho: float, tau: float, lam: float, m: int, delta: float = DEFAULT_DELTA
) -> float:
    if lam <= 0:
        raise BoundError(f"lambda must be > 0, got {lam}")
    return R_emp + 4.0 * rho * tau / (lam * m) + (8.0 * rho * tau / lam + tau) * _confidence(m, delta)


def data_constants(D: Dataset, fit_bias: bool) -> dict:
    """Feature-norm bound Q and the cross-entropy Lipschitz constant rho.

    The per-example gradient ``(sigma(theta^T x) - y) x`` has norm at most
    ``||x||``, so rho defaults to Q.
    """
    if D.m < 1:
        raise BoundError("data constants of an empty dataset are undefined")
    Xa = design_matrix(D.X, fit_bias)
    Q = float(np.sqrt(np.max(np.einsum("ij,ij->i", Xa, Xa))))
    return {"Q": Q, "rho": Q}
