"""A prototype classifier over the fixed point features.

Class scores are negative squared distances to per-class prototype
vectors, softmaxed with a temperature. Training is full-batch gradient
descent on cross-entropy, initialized at the class means, so it is
deterministic and finishes in milliseconds. Stochastic inference drops
feature dimensions (weight dropout on the distance terms) and applies a
fresh affine jitter to the coordinate features per pass.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import tensorio
from .noise import NoiseModel
from .scenes import FEATURE_DIM, STREAM_INFER, SyntheticScene, stream_rng

# Prototypes of classes absent from the training data are parked this far
# out along the first axis; their softmax mass underflows to zero, so they
# never win and receive no gradient pull.
_ABSENT_OFFSET = 1e6


@dataclass(frozen=True)
class LearnerConfig:
    temperature: float = 2.0
    dropout_rate: float = 0.25
    learning_rate: float = 0.5
    epochs: int = 60

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.temperature <= 0.0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")


@dataclass(frozen=True)
class ToyLearner:
    """Per-class prototypes plus the inference-time dropout rate."""

    prototypes: np.ndarray  # (C, D)
    temperature: float
    dropout_rate: float

    @property
    def num_classes(self) -> int:
        return self.prototypes.shape[0]

    def scores(self, features: np.ndarray, dim_mask: np.ndarray | None = None) -> np.ndarray:
        """Negative scaled squared distances, optionally over masked dims."""
        X = np.asarray(features, dtype=np.float64)
        mu = self.prototypes
        if dim_mask is None:
            sq = np.square(X).sum(axis=1)[:, None] + np.square(mu).sum(axis=1)[None, :]
            sq -= 2.0 * (X @ mu.T)
            return -sq / self.temperature
        keep = np.asarray(dim_mask, dtype=bool)
        if keep.shape != (X.shape[1],):
            raise ValueError(f"dim_mask shape {keep.shape} does not match {X.shape[1]} feature dims")
        if not keep.any():
            raise ValueError("dim_mask must keep at least one dimension")
        Xm, mm = X[:, keep], mu[:, keep]
        sq = np.square(Xm).sum(axis=1)[:, None] + np.square(mm).sum(axis=1)[None, :]
        sq -= 2.0 * (Xm @ mm.T)
        # inverted-dropout scaling keeps the expected distance magnitude
        scale = keep.shape[0] / keep.sum()
        return -sq * scale / self.temperature

    def predict_proba(self, features: np.ndarray, dim_mask: np.ndarray | None = None) -> np.ndarray:
        s = self.scores(features, dim_mask)
        s -= s.max(axis=1, keepdims=True)
        np.exp(s, out=s)
        s /= s.sum(axis=1, keepdims=True)
        return s

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(features), axis=1).astype(np.int64)


def _gather_training_set(features, labels, pseudo_features, pseudo_labels):
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"features {X.shape} and labels {y.shape} do not align")
    keep = y >= 0
    X, y = X[keep], y[keep]
    if pseudo_features is not None:
        Xp = np.asarray(pseudo_features, dtype=np.float64)
        yp = np.asarray(pseudo_labels, dtype=np.int64)
        if Xp.ndim != 2 or Xp.shape[0] != yp.shape[0]:
            raise ValueError(f"pseudo features {Xp.shape} and labels {yp.shape} do not align")
        keep = yp >= 0  # Ignore points are excluded from training
        if keep.any():
            X = np.concatenate([X, Xp[keep]])
            y = np.concatenate([y, yp[keep]])
    if X.shape[0] == 0:
        raise ValueError("no labeled points to train on")
    return X, y


def toy_train(
    features,
    labels,
    pseudo_features=None,
    pseudo_labels=None,
    config: LearnerConfig = LearnerConfig(),
    num_classes: int | None = None,
) -> ToyLearner:
    """Fit prototypes by full-batch cross-entropy descent.

    Points labeled -1 (Ignore) in the pseudo set contribute nothing, so an
    empty or all-Ignore pseudo set reproduces supervised-only training
    exactly.
    """
    X, y = _gather_training_set(features, labels, pseudo_features, pseudo_labels)
    C = int(num_classes) if num_classes is not None else int(y.max()) + 1
    if int(y.max()) >= C:
        raise ValueError(f"label {int(y.max())} outside [0, {C})")
    n, D = X.shape

    global_mean = X.mean(axis=0)
    protos = np.tile(global_mean, (C, 1))
    onehot = np.zeros((n, C))
    onehot[np.arange(n), y] = 1.0
    class_counts = onehot.sum(axis=0)
    present = class_counts > 0
    protos[present] = (onehot.T @ X)[present] / class_counts[present, None]
    absent = np.flatnonzero(~present)
    for j, c in enumerate(absent):
        protos[c, 0] += _ABSENT_OFFSET * (j + 1)

    T = config.temperature
    model = ToyLearner(prototypes=protos, temperature=T, dropout_rate=config.dropout_rate)
    for _ in range(config.epochs):
        p = model.predict_proba(X)
        W = (p - onehot) / n
        grad = (2.0 / T) * (W.T @ X - W.sum(axis=0)[:, None] * model.prototypes)
        protos = model.prototypes - config.learning_rate * grad
        model = ToyLearner(prototypes=protos, temperature=T, dropout_rate=config.dropout_rate)
    return model


def _jitter_features(features: np.ndarray, noise: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """Fresh affine transform of the geometric feature dims.

    Coordinates rotate about z, scale, and translate; centroid offsets are
    relative so they rotate and scale only. The noise channel is untouched.
    """
    theta = rng.uniform(-noise.rotation_range, noise.rotation_range)
    scale = rng.uniform(1.0 - noise.scale_range, 1.0 + noise.scale_range)
    shift = rng.normal(0.0, noise.translation_sigma, 3)
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    out = np.array(features, dtype=np.float64)
    out[:, :3] = scale * (out[:, :3] @ rot.T) + shift
    out[:, 3:6] = scale * (out[:, 3:6] @ rot.T)
    return out


def _dropout_mask(rng: np.random.Generator, n_dims: int, rate: float) -> np.ndarray:
    if rate == 0.0:
        return np.ones(n_dims, dtype=bool)
    while True:
        keep = rng.random(n_dims) >= rate
        if keep.any():
            return keep


def stochastic_infer(
    learner: ToyLearner,
    scene: SyntheticScene,
    K: int,
    noise: NoiseModel,
    seed: int,
    stream: tuple[int, ...] = (),
) -> np.ndarray:
    """K forward passes with independent dropout masks and affine jitter.

    Returns softmax rows of shape (K, N, C). Randomness comes from the
    named stream (seed, infer, *stream, k), so callers that pass distinct
    stream indices per round and scene get reproducible, order-independent
    draws.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    N = scene.n_points
    out = np.zeros((K, N, learner.num_classes))
    for k in range(K):
        rng = stream_rng(seed, STREAM_INFER, *stream, k)
        feats = _jitter_features(scene.features, noise, rng)
        keep = _dropout_mask(rng, FEATURE_DIM, learner.dropout_rate)
        out[k] = learner.predict_proba(feats, keep)
    return out


def stochastic_infer_manifest(
    learner: ToyLearner,
    scene: SyntheticScene,
    K: int,
    noise: NoiseModel,
    seed: int,
    out_dir,
    scene_id: str = "scene0000",
):
    """File-backed variant: writes pass tensors plus a semantic manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = stochastic_infer(learner, scene, K, noise, seed)
    names = []
    for k in range(K):
        name = f"{scene_id}_infer_pass{k}.bplt"
        tensorio.write_tensor(rows[k].astype(np.float32), out / name)
        names.append(name)
    path = out / f"{scene_id}_infer.json"
    tensorio.write_manifest(
        path, scene_id, tensorio.SEMANTIC, None, names, scene.n_points, learner.num_classes,
        {"scene_seed": str(scene.rng_seed)},
    )
    return path
