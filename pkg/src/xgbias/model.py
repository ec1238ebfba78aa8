"""Reference xG model: feature extraction, L2-penalized logistic regression
fit with damped Newton steps, prediction, evaluation metrics, and goals
above expectation (GAX)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Provider coordinate frame and its metric equivalent. Raw coordinates stay
# in provider units as model inputs; distance and angle are computed after
# scaling to meters.
PITCH_X = 120.0
PITCH_Y = 80.0
PITCH_X_M = 105.0
PITCH_Y_M = 68.0
X_SCALE = PITCH_X_M / PITCH_X
Y_SCALE = PITCH_Y_M / PITCH_Y
GOAL_X_M = PITCH_X_M
GOAL_Y_M = PITCH_Y_M / 2.0

FEATURE_NAMES = ("start_x", "start_y", "distance", "angle",
                 "bodypart_head", "bodypart_other")
BODY_PARTS = ("foot", "head", "other")


class FeatureError(ValueError):
    """Raised for coordinates outside the provider frame or non-finite input."""


@dataclass(frozen=True)
class FeatureVector:
    """Per-shot model inputs, ordered as FEATURE_NAMES."""

    start_x: float
    start_y: float
    distance: float
    angle: float
    bodypart_head: int
    bodypart_other: int

    def to_array(self) -> np.ndarray:
        return np.array([self.start_x, self.start_y, self.distance,
                         self.angle, self.bodypart_head, self.bodypart_other])


def goal_geometry(x: float, y: float) -> tuple[float, float]:
    """Distance (m) and off-center angle (rad) to the goal center from a
    provider-frame location. The angle of a shot on the goal line is pi/2;
    a shot at the goal center itself gets angle 0."""
    xm = x * X_SCALE
    ym = y * Y_SCALE
    dx = GOAL_X_M - xm
    dy = GOAL_Y_M - ym
    distance = math.hypot(dx, dy)
    angle = 0.0 if distance == 0.0 else math.atan2(abs(dy), dx)
    return distance, angle


def build_features(x: float, y: float, body_part: str,
                   shot_id: str | None = None) -> FeatureVector:
    """Feature vector for a shot at provider coordinates (x, y)."""
    if not (math.isfinite(x) and math.isfinite(y)):
        raise FeatureError(f"non-finite coordinates ({x}, {y})"
                           + (f" for shot {shot_id}" if shot_id else ""))
    if not (0.0 <= x <= PITCH_X and 0.0 <= y <= PITCH_Y):
        raise FeatureError(f"coordinates ({x}, {y}) outside provider frame"
                           + (f" for shot {shot_id}" if shot_id else ""))
    if body_part not in BODY_PARTS:
        raise FeatureError(f"unknown body part {body_part!r}"
                           + (f" for shot {shot_id}" if shot_id else ""))
    distance, angle = goal_geometry(x, y)
    return FeatureVector(
        start_x=x,
        start_y=y,
        distance=distance,
        angle=angle,
        bodypart_head=int(body_part == "head"),
        bodypart_other=int(body_part == "other"),
    )


def extract_features(shot) -> FeatureVector:
    """Feature vector for a ShotRecord-like object (needs start_x, start_y,
    body_part, shot_id attributes)."""
    return build_features(shot.start_x, shot.start_y, shot.body_part,
                          shot_id=str(shot.shot_id))


def feature_matrix_from_locations(x: np.ndarray, y: np.ndarray,
                                  body_part_idx: np.ndarray) -> np.ndarray:
    """Vectorized feature construction. body_part_idx indexes BODY_PARTS."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any((x < 0) | (x > PITCH_X) | (y < 0) | (y > PITCH_Y)):
        bad = np.where((x < 0) | (x > PITCH_X) | (y < 0) | (y > PITCH_Y))[0]
        raise FeatureError(f"{bad.size} locations outside provider frame "
                           f"(first at index {bad[0]})")
    dx = GOAL_X_M - x * X_SCALE
    dy = GOAL_Y_M - y * Y_SCALE
    distance = np.hypot(dx, dy)
    angle = np.where(distance == 0.0, 0.0, np.arctan2(np.abs(dy), dx))
    return np.column_stack([
        x, y, distance, angle,
        (body_part_idx == 1).astype(float),
        (body_part_idx == 2).astype(float),
    ])


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, output kept in the open (0,1)."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    tiny = np.nextafter(0.0, 1.0)
    return np.clip(out, tiny, 1.0 - 1e-16)


@dataclass
class XgModel:
    """Fitted coefficients plus the feature recipe they apply to."""

    weights: np.ndarray
    intercept: float
    penalty_c: float = 1.0
    meta: dict = field(default_factory=dict)
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Goal probabilities for an (n, d) feature matrix."""
        X = np.asarray(X, dtype=float)
        if not np.all(np.isfinite(X)):
            raise FeatureError("non-finite feature value in prediction input")
        return sigmoid(X @ self.weights + self.intercept)

    def predict_one(self, features: FeatureVector) -> float:
        return float(self.predict(features.to_array()[None, :])[0])


def predict_xg(model: XgModel, features: FeatureVector) -> float:
    """Goal probability for a single shot."""
    return model.predict_one(features)


def loss_and_grad(X: np.ndarray, y: np.ndarray, weights: np.ndarray,
                  intercept: float, penalty_c: float = 1.0):
    """Penalized negative log-likelihood and its gradient.

    Objective: ||w||^2 / (2C) + sum_i logloss(y_i, sigmoid(b + w.x_i)),
    intercept unpenalized. The gradient vector has the intercept last.
    """
    z = X @ weights + intercept
    # logloss_i = log(1 + e^{z_i}) - y_i z_i, computed stably
    loss = float(np.sum(np.logaddexp(0.0, z) - y * z)
                 + weights @ weights / (2.0 * penalty_c))
    p = sigmoid(z)
    r = p - y
    grad_w = X.T @ r + weights / penalty_c
    grad_b = float(np.sum(r))
    return loss, np.append(grad_w, grad_b)


def train_logistic(X: np.ndarray, y: np.ndarray, penalty_c: float = 1.0,
                   tol: float = 1e-8, max_iter: int = 100) -> XgModel:
    """Fit the penalized logistic model with Newton iterations.

    Each step solves the Newton system via Cholesky factorization and is
    halved until the loss decreases (at most 30 halvings). Deterministic:
    no stochastic steps, initialization at zero.

    Raises ValueError if only one label class is present; a singular
    Hessian is retried with a boosted ridge before giving up.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be (n, d) with matching label vector")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature values in training data")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("training labels contain a single class; "
                         "cannot fit a classifier")

    n, d = X.shape
    A = np.column_stack([X, np.ones(n)])
    penalty_diag = np.append(np.full(d, 1.0 / penalty_c), 0.0)

    beta = np.zeros(d + 1)
    loss, grad = loss_and_grad(X, y, beta[:d], beta[d], penalty_c)
    history = [loss]
    iterations = 0
    converged = bool(np.max(np.abs(grad)) <= tol)

    while not converged and iterations < max_iter:
        p = sigmoid(A @ beta)
        w_diag = p * (1.0 - p)
        H = (A * w_diag[:, None]).T @ A
        H[np.diag_indices_from(H)] += penalty_diag
        step = _solve_newton(H, grad)

        # damped update: halve until the loss actually decreases
        scale = 1.0
        improved = False
        for _ in range(30):
            cand = beta - scale * step
            cand_loss, cand_grad = loss_and_grad(X, y, cand[:d], cand[d],
                                                 penalty_c)
            if cand_loss <= loss:
                improved = True
                break
            scale *= 0.5
        if not improved:
            break  # no decreasing step at any scale; numerically done
        beta, loss, grad = cand, cand_loss, cand_grad
        history.append(loss)
        iterations += 1
        converged = bool(np.max(np.abs(grad)) <= tol)

    return XgModel(
        weights=beta[:d].copy(),
        intercept=float(beta[d]),
        penalty_c=penalty_c,
        meta={
            "n_train": int(n),
            "converged": bool(converged),
            "iterations": int(iterations),
            "loss_history": [float(v) for v in history],
        },
    )


def _solve_newton(H: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Solve H s = grad by Cholesky, boosting the ridge on failure."""
    ridge = 0.0
    base = max(float(np.max(np.diag(H))), 1.0)
    for _ in range(8):
        try:
            L = np.linalg.cholesky(H + ridge * np.eye(H.shape[0]))
        except np.linalg.LinAlgError:
            ridge = base * 1e-12 if ridge == 0.0 else ridge * 100.0
            continue
        z = np.linalg.solve(L, grad)
        return np.linalg.solve(L.T, z)
    raise np.linalg.LinAlgError(
        "Hessian not positive definite even after ridge boosting")


def compute_gax(pairs) -> float:
    """Goals above expectation: sum of (goal - xG) over shots.

    `pairs` is an iterable of (xg, is_goal). Additive over disjoint shot
    sets; an empty input gives 0.
    """
    total = 0.0
    for xg, goal in pairs:
        total += float(goal) - float(xg)
    return total


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned their average rank."""
    values = np.asarray(values)
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    new_group = np.r_[True, sorted_vals[1:] != sorted_vals[:-1]]
    group_idx = np.cumsum(new_group) - 1
    counts = np.bincount(group_idx)
    starts = np.cumsum(np.r_[0, counts[:-1]]) + 1
    avg = starts + (counts - 1) / 2.0
    ranks = np.empty(values.shape[0])
    ranks[order] = avg[group_idx]
    return ranks


def auroc(scores: np.ndarray, labels: np.ndarray) -> float | None:
    """Area under the ROC curve by the rank statistic, ties averaged.

    Returns None when only one class is present (undefined).
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = average_ranks(scores)
    rank_sum = float(np.sum(ranks[labels == 1]))
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def brier(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean squared error between predicted probabilities and outcomes."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    return float(np.mean((scores - labels) ** 2))


@dataclass(frozen=True)
class EvalReport:
    auroc: float | None
    brier: float
    n_test: int


def evaluate(model: XgModel, X: np.ndarray, y: np.ndarray) -> EvalReport:
    """Held-out metrics: rank-based AUROC and Brier score."""
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("empty test set")
    p = model.predict(X)
    return EvalReport(auroc=auroc(p, y), brier=brier(p, y), n_test=int(y.size))


def save_model(model: XgModel, path: str | Path) -> None:
    doc = {
        "feature_names": list(model.feature_names),
        "weights": [float(w) for w in model.weights],
        "intercept": float(model.intercept),
        "penalty": float(model.penalty_c),
        "meta": model.meta,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> XgModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return XgModel(
        weights=np.array(doc["weights"], dtype=float),
        intercept=float(doc["intercept"]),
        penalty_c=float(doc.get("penalty", 1.0)),
        meta=doc.get("meta", {}),
        feature_names=tuple(doc["feature_names"]),
    )
