"""Synthetic clustered point-cloud scenes with full ground truth.

Scenes are small enough to regenerate on demand: a handful of Gaussian
blobs (instances) placed near per-class anchor positions, a fixed
7-dimensional feature map, and grounding utterances that reference
instances by index. Everything is a pure function of (config, seed).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FEATURE_DIM = 7

# Stream codes keep every random purpose on its own SeedSequence branch so
# adding draws to one consumer can never shift another's stream.
STREAM_DATASET = 1
STREAM_SCENE = 2
STREAM_STATE = 3
STREAM_SEMANTIC = 4
STREAM_INSTANCE_SEED = 5
STREAM_INSTANCE = 6
STREAM_GROUNDING_SEED = 7
STREAM_GROUNDING = 8
STREAM_SPLIT = 9
STREAM_INFER = 10


def stream_rng(seed: int, *path: int) -> np.random.Generator:
    """Named random stream: a fresh generator for (seed, purpose, indices)."""
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.default_rng(np.random.SeedSequence([seed, *[int(p) for p in path]]))


@dataclass(frozen=True)
class SceneConfig:
    """Geometry and label-distribution knobs for scene generation.

    anchor_jitter displaces each class anchor per scene, so prototype
    positions estimated from few scenes carry scene-level sampling error;
    center_spread and blob_sigma control instance placement and size.
    """

    n_points: int = 2000
    n_classes: int = 4
    n_instances: int = 8
    n_utterances: int | None = None  # default: one per instance
    class_weights: tuple[float, ...] | None = None
    class_separation: float = 6.0
    anchor_jitter: float = 0.0
    center_spread: float = 1.0
    blob_sigma: float = 0.4
    noise_channel_sigma: float = 0.5

    def __post_init__(self):
        if self.n_classes < 1:
            raise ValueError(f"n_classes must be >= 1, got {self.n_classes}")
        if self.n_instances < 1:
            raise ValueError(f"n_instances must be >= 1, got {self.n_instances}")
        if self.n_points < self.n_instances:
            raise ValueError(
                f"n_points ({self.n_points}) must cover one point per instance ({self.n_instances})"
            )
        if self.class_weights is not None:
            w = np.asarray(self.class_weights, dtype=np.float64)
            if w.shape != (self.n_classes,):
                raise ValueError(f"class_weights needs {self.n_classes} entries, got {w.shape}")
            if (w < 0).any() or w.sum() <= 0:
                raise ValueError("class_weights must be non-negative with positive sum")

    @property
    def num_utterances(self) -> int:
        return self.n_instances if self.n_utterances is None else self.n_utterances


@dataclass(frozen=True)
class SyntheticScene:
    """Generated points plus semantic, instance, and grounding ground truth."""

    points: np.ndarray  # (N, 3)
    features: np.ndarray  # (N, FEATURE_DIM)
    gt_semantic: np.ndarray  # (N,) int64 in [0, C)
    gt_instances: np.ndarray  # (M, N) bool, rows pairwise disjoint
    gt_grounding: np.ndarray  # (U,) int64 target instance indices
    instance_classes: np.ndarray  # (M,) int64
    instance_centroids: np.ndarray  # (M, 3)
    rng_seed: int
    config: SceneConfig

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def n_classes(self) -> int:
        return self.config.n_classes

    @property
    def n_instances(self) -> int:
        return self.gt_instances.shape[0]

    @property
    def n_utterances(self) -> int:
        return self.gt_grounding.shape[0]


def class_anchors(n_classes: int, separation: float) -> np.ndarray:
    """Deterministic, well-spread class centers: Fibonacci points on a sphere."""
    C = int(n_classes)
    if C == 1:
        return np.zeros((1, 3))
    idx = np.arange(C, dtype=np.float64)
    z = 1.0 - 2.0 * (idx + 0.5) / C
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    golden = math.pi * (3.0 - math.sqrt(5.0))
    theta = golden * idx
    anchors = np.column_stack([r * np.cos(theta), r * np.sin(theta), z])
    return anchors * float(separation)


def generate_scene(config: SceneConfig, seed: int) -> SyntheticScene:
    """Build one scene deterministically from (config, seed)."""
    rng = stream_rng(seed, STREAM_SCENE)
    C, M, N = config.n_classes, config.n_instances, config.n_points

    if config.class_weights is None:
        weights = np.full(C, 1.0 / C)
    else:
        weights = np.asarray(config.class_weights, dtype=np.float64)
        weights = weights / weights.sum()
    inst_classes = rng.choice(C, size=M, p=weights).astype(np.int64)

    counts = np.ones(M, dtype=np.int64)
    counts += rng.multinomial(N - M, np.full(M, 1.0 / M))

    anchors = class_anchors(C, config.class_separation)
    anchors = anchors + rng.normal(0.0, config.anchor_jitter, (C, 3))
    centers = anchors[inst_classes] + rng.normal(0.0, config.center_spread, (M, 3))

    blob = rng.normal(0.0, config.blob_sigma, (N, 3))
    raw_points = np.repeat(centers, counts, axis=0) + blob
    raw_instance = np.repeat(np.arange(M, dtype=np.int64), counts)

    perm = rng.permutation(N)
    points = raw_points[perm]
    instance_of = raw_instance[perm]
    gt_semantic = inst_classes[instance_of]
    gt_instances = instance_of == np.arange(M, dtype=np.int64)[:, None]

    centroids = np.zeros((M, 3))
    for m in range(M):
        centroids[m] = points[gt_instances[m]].mean(axis=0)
    offsets = points - centroids[instance_of]
    noise_channel = rng.normal(0.0, config.noise_channel_sigma, N)
    features = np.column_stack([points, offsets, noise_channel])

    U = config.num_utterances
    gt_grounding = rng.integers(0, M, size=U).astype(np.int64)

    return SyntheticScene(
        points=points,
        features=features,
        gt_semantic=gt_semantic,
        gt_instances=gt_instances,
        gt_grounding=gt_grounding,
        instance_classes=inst_classes,
        instance_centroids=centroids,
        rng_seed=int(seed),
        config=config,
    )
