"""Loss functions and the empirical error."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

PROB_CLAMP = 1e-12


class LossName(str, Enum):
    CLASSIFICATION = "classification"
    GAMMA = "gamma"
    CROSS_ENTROPY = "cross_entropy"


@dataclass(frozen=True)
class LossKind:
    """Loss selector with its Lipschitz constant ``tau``.

    The 0-1 loss is not Lipschitz in the score; it carries ``tau = 1`` so that
    the Lipschitz-based bounds can be evaluated next to it.
    """

    kind: LossName = LossName.CLASSIFICATION
    gamma: float = 1.0
    tau: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", LossName(self.kind))
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.tau is None:
            tau = 1.0 / self.gamma if self.kind is LossName.GAMMA else 1.0
            object.__setattr__(self, "tau", tau)
        elif self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "gamma": self.gamma, "tau": self.tau}


def classification_loss(predicted_label: int, y: int) -> int:
    return int(predicted_label != y)


def gamma_loss(score: float, y: int, gamma: float) -> float:
    """Margin loss on ``y * score`` with ``y`` in {-1, +1}."""
    margin = y * score
    if margin < 0:
        return 1.0
    if margin <= gamma:
        return 1.0 - margin / gamma
    return 0.0


def cross_entropy_loss(p: float, y: int) -> float:
    return -(y * math.log(max(p, PROB_CLAMP)) + (1 - y) * math.log(max(1.0 - p, PROB_CLAMP)))


def to_sign(y):
    """Map labels {0, 1} to {-1, +1}."""
    return 2 * np.asarray(y) - 1


def signed_margin_score(score):
    """Map a score in [0, 1] to the signed output in [-1, 1] the gamma-loss expects."""
    return 2.0 * np.asarray(score, dtype=np.float64) - 1.0


def loss_values(loss: LossKind, labels, scores, y) -> np.ndarray:
    """Vectorised loss over arrays of predicted labels, scores in [0, 1] and labels.

    Broadcasts: ``labels`` and ``scores`` may carry leading model axes.
    """
    y = np.asarray(y)
    if loss.kind is LossName.CLASSIFICATION:
        return (np.asarray(labels) != y).astype(np.float64)
    if loss.kind is LossName.GAMMA:
        margin = to_sign(y) * signed_margin_score(scores)
        out = np.clip(1.0 - margin / loss.gamma, 0.0, 1.0)
        return np.where(margin < 0, 1.0, out)
    p = np.asarray(scores, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return -(
            y * np.log(np.maximum(p, PROB_CLAMP))
            + (1 - y) * np.log(np.maximum(1.0 - p, PROB_CLAMP))
        )


def empirical_error(model, D, loss: LossKind) -> float:
    if D.m < 1:
        raise ValueError("empirical error of an empty dataset is undefined")
    labels = model.predict_labels(D.X)
    scores = model.predict_scores(D.X)
    return float(np.mean(loss_values(loss, labels, scores, D.y)))
