"""Bootstrap estimates of hypothesis and pointwise hypothesis stability.

For every trial, B bootstrap replicates D_b are drawn; for each original
index i the learner is refit on D_b with every copy of z_i removed and the
loss differences are averaged over b (and over the evaluation set for the
hypothesis estimate). Per-trial values aggregate over i (max by default)
and the reported estimate is the mean over trials.

A trial is one unit of work with a fixed batch layout, so running trials on
several threads cannot change a single bit of the result.
"""
from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _rng
from .dataset import (
    Dataset,
    DatasetError,
    EmptyEvaluationSetError,
    EvalKind,
    EvalStrategy,
    bootstrap_indices,
    oos_split,
)
from .learners import (
    DecisionTree,
    Knn,
    LearnerConfig,
    LogisticRegression,
    TreeModel,
    fit_weighted,
)
from .linalg import cross_entropy_hessian, jacobi_eigenvalues
from .losses import LossKind, loss_values

THREADS_ENV = "STABILITY_LAB_THREADS"


class StabilityError(RuntimeError):
    pass


def derive_task_seed(master_seed: int, trial: int, b: int, i: int) -> int:
    """Mix (master_seed, trial, b, i) into a 64-bit seed.

    Coordinates are absorbed one at a time through the SplitMix64 finalizer;
    negative coordinates are taken modulo 2**64 and serve as sentinels.
    """
    h = _rng.mix64(master_seed + _rng.GOLDEN)
    for c in (trial, b, i):
        h = _rng.mix64((h ^ (c & _rng.MASK64)) + _rng.GOLDEN)
    return h


@dataclass(frozen=True)
class StabilityConfig:
    B: int = 30
    trials: int = 10
    strategy: EvalStrategy = field(default_factory=EvalStrategy)
    loss: LossKind = field(default_factory=LossKind)
    seed: int = 0
    aggregate_over_i: str = "max"

    def __post_init__(self):
        if self.B < 1:
            raise ValueError(f"B must be >= 1, got {self.B}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.aggregate_over_i not in ("max", "mean"):
            raise ValueError(f"aggregate_over_i must be 'max' or 'mean', got {self.aggregate_over_i!r}")

    def to_dict(self) -> dict:
        return {
            "B": self.B,
            "trials": self.trials,
            "strategy": {"kind": self.strategy.kind.value, "oos_fraction": self.strategy.oos_fraction},
            "loss": self.loss.to_dict(),
            "seed": self.seed,
            "aggregate_over_i": self.aggregate_over_i,
        }


def algorithm_name(config: LearnerConfig) -> str:
    if isinstance(config, LogisticRegression):
        return "l2lr" if config.lam > 0 else "lr"
    return config.tag


def primary_parameter(config: LearnerConfig) -> tuple[str, float]:
    if isinstance(config, DecisionTree):
        return "v", config.max_leaves
    if isinstance(config, LogisticRegression):
        return ("lambda", config.lam) if config.lam > 0 else ("T", config.iterations)
    if isinstance(config, Knn):
        return "k", config.k
    return "constant_label", config.constant_label


@dataclass
class StabilityReport:
    algorithm: str
    beta_h_hat: float | None
    beta_ph_hat: float | None
    per_trial_h: list | None
    per_trial_ph: list | None
    per_index_h: list | None
    per_index_ph: list | None
    argmax_h: int | None
    argmax_ph: int | None
    effective: dict
    skipped_samples: list
    eval_sizes: list
    config: dict

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @property
    def effective_value(self) -> float | None:
        for key in ("mean_leaf_count", "mean_lambda_min"):
            if key in self.effective:
                return self.effective[key]
        return None

    def csv_summary(self) -> str:
        name, value = self.config["parameter"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["algorithm", "parameter_name", "parameter_value", "beta_h_hat", "beta_ph_hat", "effective_value"])
        w.writerow([self.algorithm, name, value, _fmt(self.beta_h_hat), _fmt(self.beta_ph_hat), _fmt(self.effective_value)])
        return buf.getvalue()


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


@dataclass
class _TrialResult:
    h: np.ndarray | None
    ph: np.ndarray | None
    skipped: list
    eval_size: int
    leaf_counts: list
    lambda_mins: list


def _min_train_size(learner: LearnerConfig) -> int:
    return learner.k if isinstance(learner, Knn) else 1


def _run_trial(D: Dataset, learner: LearnerConfig, cfg: StabilityConfig, t: int, want_h: bool, want_ph: bool):
    m = D.m
    if cfg.strategy.kind is EvalKind.OOS:
        held_out, train_idx = oos_split(m, cfg.strategy.oos_fraction, derive_task_seed(cfg.seed, t, -1, -1))
    else:
        held_out, train_idx = None, np.arange(m)

    counts = []
    for b in range(cfg.B):
        draw = bootstrap_indices(train_idx.size, derive_task_seed(cfg.seed, t, b, -1))
        counts.append(np.bincount(train_idx[draw], minlength=m))
    counts = np.array(counts)

    eval_idx = None
    if want_h:
        if cfg.strategy.kind is EvalKind.ALL:
            eval_idx = np.arange(m)
        elif cfg.strategy.kind is EvalKind.OOB:
            eval_idx = np.flatnonzero(counts.sum(axis=0) == 0)
            if eval_idx.size == 0:
                raise EmptyEvaluationSetError(
                    f"trial {t}: out-of-bag set is empty, {cfg.B} bootstrap samples cover all {m} examples"
                )
        else:
            eval_idx = held_out

    # a replicate is unusable when dropping some present example leaves too little to train on
    need = _min_train_size(learner)
    skipped, kept = [], []
    for b in range(cfg.B):
        c = counts[b]
        present = np.flatnonzero(c)
        if present.size < 2 or (c.sum() - c[present]).min() < need:
            skipped.append([t, b])
        else:
            kept.append(b)
    if not kept:
        raise StabilityError(f"trial {t}: every bootstrap sample is degenerate")

    rows, layout = [], []
    for b in kept:
        c = counts[b]
        rows.append(c)
        present = np.flatnonzero(c)
        for i in present:
            r = c.copy()
            r[i] = 0
            rows.append(r)
        layout.append((b, present))
    models = fit_weighted(D, np.array(rows), learner)

    leaf_counts = [mod.leaf_count for mod in models if isinstance(mod, TreeModel)]
    lambda_mins = []
    if isinstance(learner, LogisticRegression):
        full_models, pos = [], 0
        for b, present in layout:
            full_models.append(models[pos])
            pos += 1 + present.size
        hess = [
            cross_entropy_hessian(D.subset(np.repeat(np.arange(m), counts[b])), mod.theta, learner.lam).to_dense()
            for (b, _), mod in zip(layout, full_models)
        ]
        lambda_mins = jacobi_eigenvalues(np.array(hess))[:, 0].tolist()

    losses = np.array([loss_values(cfg.loss, mod.predict_labels(D.X), mod.predict_scores(D.X), D.y) for mod in models])

    B_eff = len(kept)
    h = np.zeros(m) if want_h else None
    ph = np.zeros(m) if want_ph else None
    pos = 0
    for b, present in layout:
        full = losses[pos]
        minus = losses[pos + 1 : pos + 1 + present.size]
        pos += 1 + present.size
        diff = np.abs(minus - full)
        if want_h:
            h[present] += diff[:, eval_idx].sum(axis=1)
        if want_ph:
            ph[present] += diff[np.arange(present.size), present]
    if want_h:
        h /= B_eff * eval_idx.size
    if want_ph:
        ph /= B_eff
    return _TrialResult(h, ph, skipped, 0 if eval_idx is None else int(eval_idx.size), leaf_counts, lambda_mins)


def _workers(workers: int | None) -> int:
    if workers is not None:
        return max(1, int(workers))
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _aggregate(values: np.ndarray, how: str) -> float:
    return float(values.max() if how == "max" else values.mean())


def estimate_stability(
    D: Dataset,
    learner: LearnerConfig,
    cfg: StabilityConfig | None = None,
    stats: tuple[str, ...] = ("h", "ph"),
    workers: int | None = None,
) -> StabilityReport:
    """Estimate the requested statistics (``"h"``, ``"ph"``) from one set of fits."""
    cfg = cfg or StabilityConfig()
    want_h, want_ph = "h" in stats, "ph" in stats
    if not (want_h or want_ph):
        raise ValueError("request at least one of 'h', 'ph'")
    if D.m < 2:
        raise DatasetError(f"stability estimation needs m >= 2, got {D.m}")

    n_workers = min(_workers(workers), cfg.trials)
    if n_workers == 1:
        results = [_run_trial(D, learner, cfg, t, want_h, want_ph) for t in range(cfg.trials)]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            futures = [pool.submit(_run_trial, D, learner, cfg, t, want_h, want_ph) for t in range(cfg.trials)]
            results = [f.result() for f in futures]

    def summarize(key):
        per_i = np.array([getattr(r, key) for r in results])
        per_trial = [_aggregate(row, cfg.aggregate_over_i) for row in per_i]
        index_mean = per_i.mean(axis=0)
        return float(np.mean(per_trial)), per_trial, index_mean.tolist(), int(np.argmax(index_mean))

    h = summarize("h") if want_h else (None, None, None, None)
    ph = summarize("ph") if want_ph else (None, None, None, None)

    effective = {}
    leaf_counts = [v for r in results for v in r.leaf_counts]
    if leaf_counts:
        effective["mean_leaf_count"] = float(np.mean(leaf_counts))
        effective["max_leaf_count"] = int(max(leaf_counts))
    lambda_mins = [v for r in results for v in r.lambda_mins]
    if lambda_mins:
        effective["mean_lambda_min"] = float(np.mean(lambda_mins))
        effective["min_lambda_min"] = float(min(lambda_mins))

    name, value = primary_parameter(learner)
    return StabilityReport(
        algorithm=algorithm_name(learner),
        beta_h_hat=h[0],
        beta_ph_hat=ph[0],
        per_trial_h=h[1],
        per_trial_ph=ph[1],
        per_index_h=h[2],
        per_index_ph=ph[2],
        argmax_h=h[3],
        argmax_ph=ph[3],
        effective=effective,
        skipped_samples=[s for r in results for s in r.skipped],
        eval_sizes=[r.eval_size for r in results],
        config={
            "learner": learner.to_dict(),
            "parameter": [name, value],
            "stability": cfg.to_dict(),
            "stats": [s for s in ("h", "ph") if s in stats],
            "m": D.m,
            "d": D.d,
        },
    )


def estimate_hypothesis_stability(D, learner, cfg=None, workers=None) -> StabilityReport:
    return estimate_stability(D, learner, cfg, ("h",), workers)


def estimate_pointwise_hypothesis_stability(D, learner, cfg=None, workers=None) -> StabilityReport:
    return estimate_stability(D, learner, cfg, ("ph",), workers)
