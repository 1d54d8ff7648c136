"""Stochastic-prediction simulators for synthetic scenes.

Per-pass corruption (label flips) is independent across passes and points.
On top of that, a scene can carry persistent per-point state drawn once:
confused points that every pass labels with the same wrong class at
competitive confidence but wide support (the overconfidence failure mode),
ambiguous points that flip between two classes across passes, and halo
points that leak into instance masks with a persistent inclusion bias.
Softmax rows are Dirichlet draws around a peaked base distribution; a
sharpness of infinity emits the base exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import tensorio
from .scenes import (
    STREAM_GROUNDING,
    STREAM_GROUNDING_SEED,
    STREAM_INSTANCE,
    STREAM_INSTANCE_SEED,
    STREAM_SEMANTIC,
    STREAM_STATE,
    SyntheticScene,
    stream_rng,
)

_MEMBER_SCORE = (0.85, 1.0)
_HALO_SCORE = (0.55, 0.8)


@dataclass(frozen=True)
class NoiseModel:
    """Knobs for fabricating stochastic passes.

    flip_prob is the per-point, per-pass label corruption probability;
    dirichlet_sharpness concentrates softmax rows around their base
    distribution (math.inf emits the base exactly). The affine jitter
    fields only matter for learner-based inference. confusion_prob,
    ambiguous_prob, halo_fraction, and instance_drop_prob are persistent
    scene-state extensions, all off by default.
    """

    flip_prob: float = 0.1
    dirichlet_sharpness: float = 200.0
    rotation_range: float = 0.05  # radians about z, uniform +/-
    scale_range: float = 0.02  # uniform in 1 +/- range
    translation_sigma: float = 0.02
    confusion_prob: float = 0.0
    confused_sharpness: float = 30.0
    clean_peak: tuple[float, float] = (0.72, 0.995)
    confused_peak: tuple[float, float] = (0.72, 0.86)
    ambiguous_prob: float = 0.0
    ambiguous_flip: float = 0.55
    halo_fraction: float = 0.0
    halo_prob: tuple[float, float] = (0.5, 0.95)
    instance_drop_prob: float = 0.0
    member_miss_prob: float | None = None  # defaults to flip_prob

    def __post_init__(self):
        if not 0.0 <= self.flip_prob < 1.0:
            raise ValueError(f"flip_prob must lie in [0, 1), got {self.flip_prob}")
        for name in ("dirichlet_sharpness", "confused_sharpness"):
            val = getattr(self, name)
            if not val > 0.0:
                raise ValueError(f"{name} must be positive, got {val}")
        for name in ("confusion_prob", "ambiguous_prob", "ambiguous_flip", "halo_fraction", "instance_drop_prob"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {val}")
        if self.confusion_prob + self.ambiguous_prob > 1.0:
            raise ValueError("confusion_prob + ambiguous_prob must not exceed 1")
        for name in ("clean_peak", "confused_peak", "halo_prob"):
            lo, hi = getattr(self, name)
            if not 0.0 < lo <= hi <= 1.0:
                raise ValueError(f"{name} must satisfy 0 < lo <= hi <= 1, got ({lo}, {hi})")
        for name in ("rotation_range", "scale_range", "translation_sigma"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if self.member_miss_prob is not None and not 0.0 <= self.member_miss_prob < 1.0:
            raise ValueError(f"member_miss_prob must lie in [0, 1), got {self.member_miss_prob}")

    @property
    def miss_prob(self) -> float:
        return self.flip_prob if self.member_miss_prob is None else self.member_miss_prob


def noiseless() -> NoiseModel:
    """Every pass reproduces the ground truth exactly."""
    return NoiseModel(
        flip_prob=0.0,
        dirichlet_sharpness=math.inf,
        rotation_range=0.0,
        scale_range=0.0,
        translation_sigma=0.0,
    )


def mild() -> NoiseModel:
    """Independent flips and sharp rows; no persistent failure modes."""
    return NoiseModel()


def overconfident() -> NoiseModel:
    """Adds persistently confused, ambiguous, and halo points.

    Confused points vote the same wrong class in every pass with
    competitive max-softmax confidence but full-support rows, so their
    mean-distribution entropy sits strictly above the clean band while a
    confidence ranking cannot separate them.
    """
    return NoiseModel(
        confusion_prob=0.035,
        ambiguous_prob=0.02,
        halo_fraction=0.02,
        instance_drop_prob=0.02,
    )


@dataclass(frozen=True)
class _NoiseState:
    """Persistent per-scene draws shared by all passes."""

    clean_q: np.ndarray  # (N,) per-point peak for clean rows
    confused_q: np.ndarray  # (N,) peak used where confused
    confused: np.ndarray  # (N,) bool
    ambiguous: np.ndarray  # (N,) bool
    partner: np.ndarray  # (N,) the persistent wrong class
    grounding_q: np.ndarray  # (U,)
    halo_idx: tuple[np.ndarray, ...]  # per instance, candidate point indices
    halo_p: tuple[np.ndarray, ...]  # per instance, inclusion probabilities


def _noise_state(scene: SyntheticScene, noise: NoiseModel) -> _NoiseState:
    rng = stream_rng(scene.rng_seed, STREAM_STATE)
    N = scene.n_points
    C = scene.n_classes
    clean_q = rng.uniform(*noise.clean_peak, N)
    confused_q = rng.uniform(*noise.confused_peak, N)
    u = rng.random(N)
    confused = u < noise.confusion_prob
    ambiguous = (u >= noise.confusion_prob) & (u < noise.confusion_prob + noise.ambiguous_prob)
    if C < 2:
        confused = np.zeros(N, dtype=bool)
        ambiguous = np.zeros(N, dtype=bool)
    partner = (scene.gt_semantic + 1) % C
    grounding_q = rng.uniform(*noise.clean_peak, scene.n_utterances)

    halo_idx = []
    halo_p = []
    for m in range(scene.n_instances):
        members = scene.gt_instances[m]
        n_halo = int(round(noise.halo_fraction * int(members.sum())))
        outside = np.flatnonzero(~members)
        n_halo = min(n_halo, outside.size)
        if n_halo == 0:
            halo_idx.append(np.empty(0, dtype=np.int64))
            halo_p.append(np.empty(0))
            continue
        dist = np.linalg.norm(scene.points[outside] - scene.instance_centroids[m], axis=1)
        nearest = outside[np.argsort(dist, kind="stable")[:n_halo]]
        halo_idx.append(nearest.astype(np.int64))
        halo_p.append(rng.uniform(*noise.halo_prob, n_halo))
    return _NoiseState(
        clean_q=clean_q,
        confused_q=confused_q,
        confused=confused,
        ambiguous=ambiguous,
        partner=partner,
        grounding_q=grounding_q,
        halo_idx=tuple(halo_idx),
        halo_p=tuple(halo_p),
    )


def _binary_support_rows(labels, q, n_classes, alpha, rng):
    """Rows with mass q on the label and 1-q on the next class.

    With finite alpha the two masses are jittered by a 2-component
    Dirichlet draw (two gamma variates), leaving the support unchanged.
    """
    n = labels.shape[0]
    rows = np.zeros((n, n_classes))
    if n == 0:
        return rows
    partners = (labels + 1) % n_classes
    if math.isinf(alpha):
        a = np.asarray(q, dtype=np.float64)
    else:
        g1 = rng.gamma(alpha * q)
        g2 = rng.gamma(alpha * (1.0 - q))
        a = g1 / (g1 + g2)
    rows[np.arange(n), labels] = a
    # += so the degenerate single-class case folds both masses into one cell
    np.add.at(rows, (np.arange(n), partners), 1.0 - a)
    return rows


def draw_semantic_passes(scene: SyntheticScene, noise: NoiseModel, K: int):
    """Fabricate K softmax-row passes.

    Returns (passes, labels): passes has shape (K, N, C); labels[k] holds
    the class each row was concentrated on, which doubles as the
    corruption indicator labels[k] != gt for independence checks.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    state = _noise_state(scene, noise)
    N, C = scene.n_points, scene.n_classes
    gt = scene.gt_semantic
    clean = ~state.confused & ~state.ambiguous
    passes = np.zeros((K, N, C))
    all_labels = np.zeros((K, N), dtype=np.int64)
    for k in range(K):
        rng = stream_rng(scene.rng_seed, STREAM_SEMANTIC, k)
        labels = gt.copy()
        u_flip = rng.random(N)
        offsets = rng.integers(1, C, N) if C > 1 else np.zeros(N, dtype=np.int64)
        flipped = clean & (u_flip < noise.flip_prob)
        labels[flipped] = (gt[flipped] + offsets[flipped]) % C
        u_amb = rng.random(N)
        amb_flip = state.ambiguous & (u_amb < noise.ambiguous_flip)
        labels[amb_flip] = state.partner[amb_flip]
        labels[state.confused] = state.partner[state.confused]

        rows = np.zeros((N, C))
        if C == 1:
            rows[:] = 1.0
        else:
            plain = ~state.confused
            idx = np.flatnonzero(plain)
            rows[idx] = _binary_support_rows(
                labels[idx], state.clean_q[idx], C, noise.dirichlet_sharpness, rng
            )
            cidx = np.flatnonzero(state.confused)
            if cidx.size:
                qw = state.confused_q[cidx]
                base = np.full((cidx.size, C), 1.0, dtype=np.float64)
                base *= ((1.0 - qw) / (C - 1))[:, None]
                base[np.arange(cidx.size), labels[cidx]] = qw
                if math.isinf(noise.confused_sharpness):
                    rows[cidx] = base
                else:
                    g = rng.gamma(noise.confused_sharpness * base)
                    rows[cidx] = g / g.sum(axis=1, keepdims=True)
        passes[k] = rows
        all_labels[k] = labels
    return passes, all_labels


@dataclass(frozen=True)
class InstanceDraw:
    """Seed plus per-pass soft masks, with the true pass-to-seed order."""

    seed_soft: np.ndarray  # (M, N)
    passes: tuple[np.ndarray, ...]  # each (M_k, N)
    perms: tuple[np.ndarray, ...]  # pass row r predicts seed instance perms[k][r]


def _instance_soft_row(rng, members, scores_range, miss_prob, halo_idx, halo_p, n_points):
    row = np.zeros(n_points)
    n_m = members.size
    miss = rng.random(n_m) < miss_prob
    scores = rng.uniform(*scores_range, n_m)
    row[members[~miss]] = scores[~miss]
    if halo_idx.size:
        include = rng.random(halo_idx.size) < halo_p
        hscores = rng.uniform(*_HALO_SCORE, halo_idx.size)
        row[halo_idx[include]] = hscores[include]
    return row


def draw_instance_passes(scene: SyntheticScene, noise: NoiseModel, K: int) -> InstanceDraw:
    """Fabricate a seed prediction and K permuted, noisy instance passes.

    Passes may drop instances (never all of them) and always present the
    survivors in a random order; the IoU matching has to undo both.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    state = _noise_state(scene, noise)
    M, N = scene.n_instances, scene.n_points
    member_idx = [np.flatnonzero(scene.gt_instances[m]) for m in range(M)]

    rng = stream_rng(scene.rng_seed, STREAM_INSTANCE_SEED)
    seed_soft = np.zeros((M, N))
    for m in range(M):
        seed_soft[m] = _instance_soft_row(
            rng, member_idx[m], _MEMBER_SCORE, 0.0, state.halo_idx[m], state.halo_p[m], N
        )

    passes = []
    perms = []
    for k in range(K):
        rng = stream_rng(scene.rng_seed, STREAM_INSTANCE, k)
        keep = rng.random(M) >= noise.instance_drop_prob
        if not keep.any():
            keep[0] = True
        present = np.flatnonzero(keep)
        perm = rng.permutation(present).astype(np.int64)
        soft = np.zeros((perm.size, N))
        for r, m in enumerate(perm):
            soft[r] = _instance_soft_row(
                rng, member_idx[m], _MEMBER_SCORE, noise.miss_prob, state.halo_idx[m], state.halo_p[m], N
            )
        passes.append(soft)
        perms.append(perm)
    return InstanceDraw(seed_soft=seed_soft, passes=tuple(passes), perms=tuple(perms))


@dataclass(frozen=True)
class GroundingDraw:
    """Seed scores over seed candidates plus per-pass scores in pass order."""

    seed_scores: np.ndarray  # (U, M)
    passes: tuple[np.ndarray, ...]  # each (U, M_k)
    alignments: tuple[np.ndarray, ...]  # pass candidate r is seed candidate alignments[k][r]


def draw_grounding_passes(
    scene: SyntheticScene, noise: NoiseModel, K: int, instance_draw: InstanceDraw
) -> GroundingDraw:
    """Fabricate selection scores consistent with the instance passes.

    Pass k's candidate order is instance_draw.perms[k]. Scores concentrate
    on the (possibly corrupted) correct candidate; a dropped target is
    replaced by a uniformly chosen present candidate.
    """
    state = _noise_state(scene, noise)
    U, M = scene.n_utterances, scene.n_instances
    targets = scene.gt_grounding

    rng = stream_rng(scene.rng_seed, STREAM_GROUNDING_SEED)
    seed_scores = _binary_support_rows(targets, state.grounding_q, M, math.inf, rng)

    passes = []
    for k in range(K):
        rng = stream_rng(scene.rng_seed, STREAM_GROUNDING, k)
        perm = instance_draw.perms[k]
        M_k = perm.size
        inv = np.full(M, -1, dtype=np.int64)
        inv[perm] = np.arange(M_k, dtype=np.int64)
        cols = inv[targets]
        replacement = rng.integers(0, M_k, U)
        cols = np.where(cols < 0, replacement, cols)
        u_flip = rng.random(U)
        offsets = rng.integers(1, M_k, U) if M_k > 1 else np.zeros(U, dtype=np.int64)
        corrupt = u_flip < noise.flip_prob
        cols[corrupt] = (cols[corrupt] + offsets[corrupt]) % M_k
        passes.append(
            _binary_support_rows(cols, state.grounding_q, M_k, noise.dirichlet_sharpness, rng)
        )
    return GroundingDraw(seed_scores=seed_scores, passes=tuple(passes), alignments=instance_draw.perms)


ALL_KINDS = (tensorio.SEMANTIC, tensorio.INSTANCE, tensorio.GROUNDING)


def simulate_passes(
    scene: SyntheticScene,
    noise: NoiseModel,
    K: int,
    out_dir,
    kinds=ALL_KINDS,
    scene_id: str = "scene0000",
) -> dict:
    """Write manifests plus tensors for the requested kinds; returns their paths.

    Ground-truth tensors are always written so downstream evaluation never
    needs the generator. All draws are scene-seeded, so the same scene and
    noise yield byte-identical files regardless of which kinds are asked
    for.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for kind in kinds:
        if kind not in ALL_KINDS:
            raise ValueError(f"unknown kind {kind!r}, expected subset of {ALL_KINDS}")

    gt_sem = f"{scene_id}_gt_semantic.bplt"
    gt_inst = f"{scene_id}_gt_instances.bplt"
    gt_ground = f"{scene_id}_gt_grounding.bplt"
    tensorio.write_tensor(scene.gt_semantic.astype(np.int32), out / gt_sem)
    tensorio.write_tensor(scene.gt_instances.astype(np.uint8), out / gt_inst)
    tensorio.write_tensor(scene.gt_grounding.astype(np.int32), out / gt_ground)
    meta = {
        "gt_semantic": gt_sem,
        "gt_instances": gt_inst,
        "gt_grounding": gt_ground,
        "scene_seed": str(scene.rng_seed),
    }

    manifests: dict[str, Path] = {}
    if tensorio.SEMANTIC in kinds:
        rows, _ = draw_semantic_passes(scene, noise, K)
        names = []
        for k in range(K):
            name = f"{scene_id}_sem_pass{k}.bplt"
            tensorio.write_tensor(rows[k].astype(np.float32), out / name)
            names.append(name)
        path = out / f"{scene_id}_semantic.json"
        tensorio.write_manifest(
            path, scene_id, tensorio.SEMANTIC, None, names, scene.n_points, scene.n_classes, meta
        )
        manifests[tensorio.SEMANTIC] = path

    need_instances = tensorio.INSTANCE in kinds or tensorio.GROUNDING in kinds
    if need_instances:
        inst = draw_instance_passes(scene, noise, K)
    if tensorio.INSTANCE in kinds:
        seed_name = f"{scene_id}_inst_seed.bplt"
        tensorio.write_tensor(inst.seed_soft.astype(np.float32), out / seed_name)
        names = []
        for k in range(K):
            name = f"{scene_id}_inst_pass{k}.bplt"
            tensorio.write_tensor(inst.passes[k].astype(np.float32), out / name)
            names.append(name)
        path = out / f"{scene_id}_instance.json"
        tensorio.write_manifest(
            path, scene_id, tensorio.INSTANCE, seed_name, names, scene.n_points, None, meta
        )
        manifests[tensorio.INSTANCE] = path
    if tensorio.GROUNDING in kinds:
        ground = draw_grounding_passes(scene, noise, K, inst)
        seed_name = f"{scene_id}_ground_seed.bplt"
        tensorio.write_tensor(ground.seed_scores.astype(np.float32), out / seed_name)
        names = []
        for k in range(K):
            name = f"{scene_id}_ground_pass{k}.bplt"
            tensorio.write_tensor(ground.passes[k].astype(np.float32), out / name)
            names.append(name)
        gmeta = dict(meta)
        if tensorio.INSTANCE in manifests:
            gmeta["instance_manifest"] = manifests[tensorio.INSTANCE].name
        path = out / f"{scene_id}_grounding.json"
        tensorio.write_manifest(
            path, scene_id, tensorio.GROUNDING, seed_name, names, scene.n_utterances, None, gmeta
        )
        manifests[tensorio.GROUNDING] = path
    return manifests
