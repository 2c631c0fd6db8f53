import logging
import time

import numpy as np

from qaconv.models.head import MODE_EVAL, HeadParams
from qaconv.models.memory import ClassMemory
from qaconv.services.augmentation_service import AugmentationService
from qaconv.services.matching_service import (
    MatchingService, head_forward, head_forward_train, update_running_stats
)
from qaconv.utils.exceptions import PreconditionError, ProfileMismatchError
from qaconv.utils.helpers import make_rng
from qaconv.utils.tensor_ops import normalize_array

logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-7

# (offset, weight) pairs of central difference stencils, divided by the step
STENCILS = {
    2: ((1, 0.5), (-1, -0.5)),
    4: ((2, -1 / 12), (1, 8 / 12), (-1, -8 / 12), (-2, 1 / 12)),
}


def _targets(labels, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    return labels[:, None] == np.arange(num_classes)[None, :]


def focal_bce_loss(probs, labels, gamma=2.0):
    """
    Focal-weighted binary cross entropy of every sample against every class

    loss = -(1/b) * sum_ij (1 - q_ij)^gamma * log(q_ij), where q_ij is p_ij
    for the sample's own class and 1 - p_ij otherwise. Probabilities are
    clamped to [1e-7, 1 - 1e-7] before the log.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ProfileMismatchError(f"Probabilities must be [b, c], got shape {probs.shape}")
    if gamma < 0:
        raise PreconditionError(f"gamma must be nonnegative, got {gamma}")
    b, c = probs.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (b,):
        raise PreconditionError(f"Expected {b} labels, got shape {labels.shape}")
    if b and (labels.min() < 0 or labels.max() >= c):
        raise PreconditionError(f"Labels must lie in [0, {c})")
    p = np.clip(probs, PROB_CLAMP, 1 - PROB_CLAMP)
    q = np.where(_targets(labels, c), p, 1 - p)
    return float(-np.sum((1 - q) ** gamma * np.log(q)) / b)


def _batch_norm_backward(d_out, x_hat, inv_std, weight):
    # Full BN backward with batch statistics treated as functions of the batch
    n = d_out.shape[0]
    d_weight = np.sum(d_out * x_hat, axis=0)
    d_bias = np.sum(d_out, axis=0)
    d_hat = d_out * weight
    d_in = inv_std / n * (n * d_hat - d_hat.sum(axis=0) - x_hat * np.sum(d_hat * x_hat, axis=0))
    return d_in, d_weight, d_bias


def head_backward(vectors, labels, params, gamma=2.0):
    """
    Analytic gradients of focal_bce_loss with respect to the trainable head fields

    Args:
        vectors: [b, c, 2hw] pooled vectors of every sample against every class
        labels: [b] class ids
        params: HeadParams (running statistics are not modified)
        gamma: focusing parameter

    Returns:
        dict: field name -> gradient array, plus 'loss', 'probs' ([b, c])
        and 'cache' (the forward cache, for running-statistics updates)
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 3:
        raise ProfileMismatchError(f"Vectors must be [b, c, 2hw], got shape {vectors.shape}")
    b, c, n_features = vectors.shape
    probs, cache = head_forward_train(vectors.reshape(b * c, n_features), params)
    probs = probs.reshape(b, c)
    loss = focal_bce_loss(probs, labels, gamma)

    targets = _targets(labels, c)
    inside = (probs > PROB_CLAMP) & (probs < 1 - PROB_CLAMP)
    p = np.clip(probs, PROB_CLAMP, 1 - PROB_CLAMP)
    q = np.where(targets, p, 1 - p)
    if gamma == 0:
        d_q = -1.0 / q
    else:
        d_q = gamma * (1 - q) ** (gamma - 1) * np.log(q) - (1 - q) ** gamma / q
    d_p = np.where(targets, d_q, -d_q) * inside / b
    d_y2 = (d_p * probs * (1 - probs)).ravel()

    z_hat, inv_std2, _, _ = cache["bn2"]
    d_z, d_bn2_weight, d_bn2_bias = _batch_norm_backward(d_y2, z_hat, inv_std2, params.bn2_weight[0])
    d_fc_weight = np.sum(cache["y1"] * d_z[:, None], axis=0)
    d_fc_bias = np.sum(d_z)
    d_y1 = d_z[:, None] * params.fc_weight[None, :]
    x_hat, inv_std1, _, _ = cache["bn1"]
    _, d_bn1_weight, d_bn1_bias = _batch_norm_backward(d_y1, x_hat, inv_std1, params.bn1_weight)

    return {
        "bn1_weight": d_bn1_weight,
        "bn1_bias": d_bn1_bias,
        "fc_weight": d_fc_weight,
        "fc_bias": np.atleast_1d(d_fc_bias),
        "bn2_weight": np.atleast_1d(d_bn2_weight),
        "bn2_bias": np.atleast_1d(d_bn2_bias),
        "loss": loss,
        "probs": probs,
        "cache": cache
    }


def head_loss(vectors, labels, params, gamma=2.0):
    """Train-mode loss of a [b, c, 2hw] batch without side effects"""
    vectors = np.asarray(vectors, dtype=np.float64)
    b, c, n_features = vectors.shape
    probs, _ = head_forward_train(vectors.reshape(b * c, n_features), params)
    return focal_bce_loss(probs.reshape(b, c), labels, gamma)


def finite_difference_gradients(vectors, labels, params, gamma=2.0, step=1e-4, order=4):
    """
    Central finite differences of head_loss for every trainable component

    order=2 is the three-point stencil (f(x+h) - f(x-h)) / 2h, order=4 the
    five-point stencil.
    """
    if order not in STENCILS:
        raise PreconditionError(f"Finite-difference order must be one of {sorted(STENCILS)}, got {order}")
    perturbed = params.copy()
    numeric = {}
    for name in HeadParams.TRAINABLE:
        values = getattr(perturbed, name)
        grad = np.zeros_like(values)
        for index in range(values.size):
            original = values[index]
            total = 0.0
            for offset, coefficient in STENCILS[order]:
                values[index] = original + offset * step
                total += coefficient * head_loss(vectors, labels, perturbed, gamma)
            values[index] = original
            grad[index] = total / step
        numeric[name] = grad
    return numeric


def gradient_check(vectors, labels, params, gamma=2.0, step=1e-4, floor=1e-6, order=4):
    """
    Max relative error between analytic and finite-difference gradients

    Relative error is |a - n| / max(|a|, |n|, floor) per component.

    Returns:
        dict: field name -> max relative error
    """
    analytic = head_backward(vectors, labels, params, gamma)
    numeric = finite_difference_gradients(vectors, labels, params, gamma, step, order)
    errors = {}
    for name in HeadParams.TRAINABLE:
        a, n = analytic[name], numeric[name]
        scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        errors[name] = float(np.max(np.abs(a - n) / scale))
    logger.debug(f"Gradient check errors: {errors}")
    return errors


class TrainingResult:
    """Trained head, final class memory and the per-epoch loss trace"""

    def __init__(self, params, memory, trace, accuracy):
        self.params = params
        self.memory = memory
        self.trace = list(trace)
        self.accuracy = float(accuracy)

    @property
    def final_loss(self):
        return self.trace[-1][1]

    def trace_lines(self):
        """Line-delimited epoch,loss pairs"""
        return "".join(f"{epoch},{loss:.10f}\n" for epoch, loss in self.trace)


class TrainingService:
    """Class-memory training of the similarity head on fixed feature maps"""

    def __init__(self, config, workers=1):
        self.config = config
        self.matcher = MatchingService(kernel_size=config.kernel_size, workers=workers)
        self.augmenter = AugmentationService()

    @staticmethod
    def memory_update(memory, batch, labels, mode='direct', ema_decay=0.5):
        """Write a batch into class memory; call only after the batch loss is computed"""
        return memory.update(batch, labels, mode=mode, ema_decay=ema_decay)

    def _augment(self, batch, rng):
        return np.stack([
            self.augmenter.augment_feature_map(sample, int(rng.integers(2 ** 32)))
            for sample in batch
        ])

    def training_accuracy(self, features, labels, memory, params):
        """Fraction of samples whose best-scoring memory class is their own"""
        vectors = self.matcher.raw_similarity_batch(features, memory.buffer)
        probs = head_forward(vectors, params.copy(mode=MODE_EVAL))
        return float(np.mean(np.argmax(probs, axis=1) == labels))

    def train_head(self, store, seed=0, num_classes=None, memory=None):
        """
        Train HeadParams with SGD against a class memory

        Each epoch shuffles the samples, and for every mini batch scores
        each sample against every memory class, computes the focal loss,
        takes one SGD step on the head, then writes the batch into memory.

        Args:
            store: GalleryStore whose record identities are class ids
            seed: seeds head initialization, shuffling and augmentation
            num_classes: memory size, defaults to max label + 1
            memory: optional pre-filled ClassMemory

        Returns:
            TrainingResult
        """
        cfg = self.config
        labels = store.identities()
        if len(store) == 0 or np.unique(labels).size < 2:
            raise PreconditionError("Head training needs samples from at least 2 classes")
        if labels.min() < 0:
            raise PreconditionError("Training labels must be nonnegative class ids")
        if num_classes is None:
            num_classes = memory.c if memory is not None else int(labels.max()) + 1
        if memory is None:
            memory = ClassMemory(num_classes, store.profile)
        elif memory.c != num_classes:
            raise ProfileMismatchError(f"Memory holds {memory.c} classes, training expects {num_classes}")
        memory.check_labels(labels)

        features = normalize_array(store.features)
        hw = store.profile[1] * store.profile[2]
        params = HeadParams.initialize(2 * hw, seed=seed, momentum=cfg.momentum)
        rng = make_rng(seed)

        started = time.perf_counter()
        logger.info(f"Training head on {len(store)} samples of {num_classes} classes for {cfg.epochs} epochs")
        trace = []
        for epoch in range(cfg.epochs):
            lr = cfg.learning_rate(epoch)
            order = rng.permutation(len(store))
            losses = []
            for start in range(0, len(order), cfg.batch_size):
                index = order[start:start + cfg.batch_size]
                batch = features[index]
                if cfg.augment:
                    batch = self._augment(batch, rng)
                vectors = self.matcher.raw_similarity_batch(batch, memory.buffer)
                result = head_backward(vectors, labels[index], params, cfg.gamma)
                losses.append(result["loss"])
                for name in HeadParams.TRAINABLE:
                    setattr(params, name, getattr(params, name) - lr * result[name])
                update_running_stats(params, result["cache"])
                self.memory_update(memory, batch, labels[index], cfg.update_mode, cfg.ema_decay)
            trace.append((epoch + 1, float(np.mean(losses))))
            logger.info(f"Epoch {epoch + 1}/{cfg.epochs}: loss={trace[-1][1]:.6f} lr={lr:g}")

        params.eval()
        accuracy = self.training_accuracy(features, labels, memory, params)
        logger.info(f"Training finished in {time.perf_counter() - started:.2f}s, accuracy={accuracy:.4f}")
        return TrainingResult(params, memory, trace, accuracy)
