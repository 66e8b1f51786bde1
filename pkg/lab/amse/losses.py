"""Adaptive margin softmax over the seen-class classifier."""
import numpy as np

from dvbe_lab.exceptions import ValidationError
from numerics import Tensor, as_tensor, ops

from .models import AmseModel, MarginConfig, MarginMode


def adaptive_lambda(p_y, sigma: float):
    """exp(−(p_y − 1)² / σ²); accepts a scalar or an array of probabilities."""
    if sigma <= 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    p = np.asarray(p_y, dtype=np.float64)
    if np.any(p < 0) or np.any(p > 1):
        raise ValidationError("p_y must lie in [0, 1]")
    value = np.exp(-((p - 1.0) ** 2) / sigma ** 2)
    return float(value) if value.ndim == 0 else value


def logits(features, model: AmseModel) -> Tensor:
    """W·f for every seen class; features are D² (or B×D²)."""
    features = as_tensor(features)
    weights = ops.transpose(model.classifier)
    if features.ndim == 1:
        return ops.reshape(ops.matmul(ops.reshape(features, (1, -1)), weights), (-1,))
    return ops.matmul(features, weights)


def classify(features, model: AmseModel) -> Tensor:
    """Softmax probabilities over seen classes, in model.seen_classes order."""
    return ops.softmax(logits(features, model), axis=-1)


def margin_lambdas(raw_logits: np.ndarray, rows: np.ndarray, margin: MarginConfig) -> np.ndarray:
    """Per-sample λ; the adaptive mode reads p_y from the unscaled softmax."""
    if margin.mode is MarginMode.STANDARD:
        return np.ones(len(rows))
    if margin.mode is MarginMode.FIXED:
        return np.full(len(rows), margin.fixed_lambda)
    probs = ops.softmax(Tensor(raw_logits), axis=-1).data
    p_y = np.clip(probs[np.arange(len(rows)), rows], 0.0, 1.0)
    return adaptive_lambda(p_y, margin.sigma)


def ams_loss(features, labels, model: AmseModel, margin: MarginConfig) -> Tensor:
    """
    Mean over the batch of −log(e^{λ·z_y} / (e^{λ·z_y} + Σ_{j≠y} e^{z_j})).

    z are the classifier logits centered per sample (z − mean_j z), which
    leaves the softmax unchanged. A shift common to every logit therefore
    cannot move the loss, and λ < 1 only ever penalizes a target that beats
    the average. λ is a constant with respect to differentiation.
    """
    features = as_tensor(features)
    if features.ndim == 1:
        features = ops.reshape(features, (1, -1))
    rows = model.label_index(labels)
    if len(rows) != features.shape[0]:
        raise ValidationError(f"{len(rows)} labels for {features.shape[0]} feature vectors")

    z = logits(features, model)
    z = ops.sub(z, ops.mean(z, axis=-1, keepdims=True))
    onehot = np.zeros(z.shape)
    onehot[np.arange(len(rows)), rows] = 1.0
    lam = margin_lambdas(z.data, rows, margin)
    multiplier = 1.0 + (lam[:, None] - 1.0) * onehot
    picked = ops.sum(ops.mul(ops.log_softmax(ops.mul(z, multiplier), axis=-1), onehot), axis=-1)
    return ops.scale(ops.mean(picked), -1.0)
