"""Two-step self-training loop and the seeded benchmark runners.

Round 0 trains on the labeled split alone. Each later round runs
stochastic inference on the unlabeled split, solves for pseudo-labels,
and retrains from scratch on the union. The benchmark runners drive the
selector and vote-threshold comparisons on a fixed synthetic
configuration so direction-of-effect results are reproducible per seed.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import semantic
from .learner import LearnerConfig, ToyLearner, stochastic_infer, toy_train
from .metrics import confusion_matrix, iou_from_confusion
from .noise import NoiseModel, draw_semantic_passes, overconfident
from .scenes import STREAM_DATASET, STREAM_SPLIT, SceneConfig, SyntheticScene, generate_scene, stream_rng

DEFAULT_K = 9
DEFAULT_P_TAU = 0.75


def make_dataset(config: SceneConfig, n_scenes: int, seed: int) -> list[SyntheticScene]:
    """n_scenes independent scenes with per-scene seeds derived from seed."""
    if n_scenes < 1:
        raise ValueError(f"n_scenes must be >= 1, got {n_scenes}")
    scene_seeds = stream_rng(seed, STREAM_DATASET).integers(0, 2**62, size=n_scenes)
    return [generate_scene(config, int(s)) for s in scene_seeds]


def _map_scenes(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class RoundMetrics:
    round_index: int
    miou: float | None
    accuracy: float
    per_class_iou: tuple
    pseudo_accuracy: float | None = None
    pseudo_labeled_fraction: float | None = None
    unlabeled_accuracy: float | None = None

    def as_dict(self) -> dict:
        return {
            "round": self.round_index,
            "miou": self.miou,
            "accuracy": self.accuracy,
            "per_class_iou": list(self.per_class_iou),
            "pseudo_accuracy": self.pseudo_accuracy,
            "pseudo_labeled_fraction": self.pseudo_labeled_fraction,
            "unlabeled_accuracy": self.unlabeled_accuracy,
        }


@dataclass(frozen=True)
class SelfTrainReport:
    rounds: tuple[RoundMetrics, ...]
    labeled_scenes: tuple[int, ...]
    n_scenes: int
    labeled_fraction: float
    p_tau: float
    K: int
    seed: int

    def as_dict(self) -> dict:
        return {
            "rounds": [r.as_dict() for r in self.rounds],
            "labeled_scenes": list(self.labeled_scenes),
            "n_scenes": self.n_scenes,
            "labeled_fraction": self.labeled_fraction,
            "p_tau": self.p_tau,
            "K": self.K,
            "seed": self.seed,
        }


def _evaluate_learner(learner: ToyLearner, scenes, num_classes: int, jobs: int):
    def one(scene):
        pred = learner.predict(scene.features)
        return confusion_matrix(pred, scene.gt_semantic, num_classes)

    conf = sum(_map_scenes(one, scenes, jobs))
    ious, miou = iou_from_confusion(conf)
    total = conf.sum()
    acc = float(np.diag(conf).sum() / total) if total else 0.0
    return miou, acc, ious


def self_train_loop(
    scenes: list[SyntheticScene],
    labeled_fraction: float,
    rounds: int = 1,
    p_tau: float = DEFAULT_P_TAU,
    K: int = DEFAULT_K,
    vote_threshold: int | None = None,
    noise: NoiseModel | None = None,
    learner_config: LearnerConfig = LearnerConfig(),
    seed: int = 0,
    jobs: int = 1,
) -> SelfTrainReport:
    """Run supervised round 0 plus `rounds` pseudo-label/retrain rounds.

    The scene split is drawn from a named stream of `seed`. Scenes whose
    stochastic passes reach no consensus contribute an empty pseudo set.
    A fully labeled split degenerates to supervised training each round.
    """
    if not scenes:
        raise ValueError("need at least one scene")
    if not 0.0 < labeled_fraction <= 1.0:
        raise ValueError(f"labeled_fraction must lie in (0, 1], got {labeled_fraction}")
    if rounds < 0:
        raise ValueError(f"rounds must be non-negative, got {rounds}")
    num_classes = scenes[0].n_classes
    if any(s.n_classes != num_classes for s in scenes):
        raise ValueError("scenes must share one class count")
    if noise is None:
        noise = NoiseModel()

    S = len(scenes)
    n_labeled = max(1, int(round(labeled_fraction * S)))
    order = stream_rng(seed, STREAM_SPLIT).permutation(S)
    labeled_idx = np.sort(order[:n_labeled])
    unlabeled_idx = np.sort(order[n_labeled:])

    lab_X = np.concatenate([scenes[i].features for i in labeled_idx])
    lab_y = np.concatenate([scenes[i].gt_semantic for i in labeled_idx])

    learner = toy_train(lab_X, lab_y, config=learner_config, num_classes=num_classes)
    miou, acc, ious = _evaluate_learner(learner, scenes, num_classes, jobs)
    history = [RoundMetrics(round_index=0, miou=miou, accuracy=acc, per_class_iou=ious)]

    for r in range(1, rounds + 1):
        if unlabeled_idx.size:

            def one(i, _round=r, _model=learner):
                scene = scenes[i]
                passes = stochastic_infer(_model, scene, K, noise, seed, stream=(_round, int(i)))
                est = semantic.mc_aggregate(passes, vote_threshold)
                if not est.consensus_mask().any():
                    labels = np.full(scene.n_points, semantic.IGNORE, dtype=np.int64)
                else:
                    labels = semantic.solve_pseudo_labels(est, p_tau).labels
                plain = _model.predict(scene.features)
                return labels, plain

            results = _map_scenes(one, list(unlabeled_idx), jobs)
            pseudo_X = np.concatenate([scenes[i].features for i in unlabeled_idx])
            pseudo_y = np.concatenate([labels for labels, _ in results])
            gt_y = np.concatenate([scenes[i].gt_semantic for i in unlabeled_idx])
            plain_y = np.concatenate([plain for _, plain in results])
            labeled_pts = pseudo_y != semantic.IGNORE
            n_pseudo = int(labeled_pts.sum())
            pseudo_acc = float((pseudo_y[labeled_pts] == gt_y[labeled_pts]).mean()) if n_pseudo else None
            pseudo_frac = n_pseudo / pseudo_y.shape[0]
            unlab_acc = float((plain_y == gt_y).mean())
        else:
            pseudo_X, pseudo_y = None, None
            pseudo_acc, pseudo_frac, unlab_acc = None, 0.0, None

        learner = toy_train(
            lab_X, lab_y, pseudo_X, pseudo_y, config=learner_config, num_classes=num_classes
        )
        miou, acc, ious = _evaluate_learner(learner, scenes, num_classes, jobs)
        history.append(
            RoundMetrics(
                round_index=r,
                miou=miou,
                accuracy=acc,
                per_class_iou=ious,
                pseudo_accuracy=pseudo_acc,
                pseudo_labeled_fraction=pseudo_frac,
                unlabeled_accuracy=unlab_acc,
            )
        )

    return SelfTrainReport(
        rounds=tuple(history),
        labeled_scenes=tuple(int(i) for i in labeled_idx),
        n_scenes=S,
        labeled_fraction=float(labeled_fraction),
        p_tau=float(p_tau),
        K=int(K),
        seed=int(seed),
    )


def overconfidence_benchmark_config() -> SceneConfig:
    """Imbalanced 8-class, 10k-point scene family for the selector benchmark."""
    weights = tuple(0.65**c for c in range(8))
    return SceneConfig(
        n_points=10000,
        n_classes=8,
        n_instances=12,
        class_weights=weights,
        class_separation=6.0,
        center_spread=1.0,
        blob_sigma=0.4,
    )


def selftrain_benchmark_config() -> SceneConfig:
    """Scene family where a handful of labeled scenes leaves prototype bias.

    Anchor jitter moves class anchors per scene, so prototypes fit on few
    scenes sit off-center and pseudo-labels from many more scenes help.
    """
    return SceneConfig(
        n_points=1500,
        n_classes=5,
        n_instances=8,
        class_separation=2.8,
        anchor_jitter=0.6,
        center_spread=0.8,
        blob_sigma=0.35,
    )


@dataclass(frozen=True)
class SelectorBenchmark:
    """Pooled pseudo-label accuracies of the competing selectors."""

    entropy_accuracy: float
    naive_accuracy: float
    unanimous_accuracy: float
    vote_accuracy: dict  # vote threshold -> accuracy at p_tau
    labeled_count: int
    consensus_count: int
    n_scenes: int

    def as_dict(self) -> dict:
        return {
            "entropy_accuracy": self.entropy_accuracy,
            "naive_accuracy": self.naive_accuracy,
            "unanimous_accuracy": self.unanimous_accuracy,
            "vote_accuracy": {str(t): a for t, a in self.vote_accuracy.items()},
            "labeled_count": self.labeled_count,
            "consensus_count": self.consensus_count,
            "n_scenes": self.n_scenes,
        }


def selector_benchmark(
    seed: int,
    n_scenes: int = 50,
    config: SceneConfig | None = None,
    noise: NoiseModel | None = None,
    K: int = DEFAULT_K,
    p_tau: float = DEFAULT_P_TAU,
    vote_thresholds: tuple[int, ...] = (5, 7, 9),
    jobs: int = 1,
) -> SelectorBenchmark:
    """Entropy vs naive-confidence vs unanimous-only, plus vote relaxation.

    Scenes are solved independently (per-scene tau, as the pipeline does)
    and correctness is pooled. Entropy and naive selections have equal
    labeled counts per scene by construction.
    """
    if config is None:
        config = overconfidence_benchmark_config()
    if noise is None:
        noise = overconfident()
    scenes = make_dataset(config, n_scenes, seed)

    def one(scene):
        passes, _ = draw_semantic_passes(scene, noise, K)
        gt = scene.gt_semantic
        counts = {}
        est = semantic.mc_aggregate(passes)
        if est.consensus_mask().any():
            ent = semantic.solve_pseudo_labels(est, p_tau).labels
            nai = semantic.naive_threshold_baseline(est, p_tau).labels
            una = semantic.solve_pseudo_labels(est, 1.0).labels
            counts["entropy"] = _count(ent, gt)
            counts["naive"] = _count(nai, gt)
            counts["unanimous"] = _count(una, gt)
        for t in vote_thresholds:
            est_t = est if t == K else semantic.mc_aggregate(passes, t)
            if est_t.consensus_mask().any():
                lab = semantic.solve_pseudo_labels(est_t, p_tau).labels
                counts[("vote", t)] = _count(lab, gt)
        return counts

    totals: dict = {}
    for counts in _map_scenes(one, scenes, jobs):
        for key, (correct, labeled) in counts.items():
            c0, l0 = totals.get(key, (0, 0))
            totals[key] = (c0 + correct, l0 + labeled)

    def acc(key):
        correct, labeled = totals.get(key, (0, 0))
        return correct / labeled if labeled else 0.0

    ent_correct, ent_labeled = totals.get("entropy", (0, 0))
    _, consensus = totals.get("unanimous", (0, 0))
    return SelectorBenchmark(
        entropy_accuracy=acc("entropy"),
        naive_accuracy=acc("naive"),
        unanimous_accuracy=acc("unanimous"),
        vote_accuracy={t: acc(("vote", t)) for t in vote_thresholds},
        labeled_count=ent_labeled,
        consensus_count=consensus,
        n_scenes=n_scenes,
    )


def _count(labels: np.ndarray, gt: np.ndarray):
    labeled = labels != semantic.IGNORE
    return int((labels[labeled] == gt[labeled]).sum()), int(labeled.sum())
