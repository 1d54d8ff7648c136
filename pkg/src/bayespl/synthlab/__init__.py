"""Synthetic laboratory: scenes, noise models, toy learner, loop, metrics."""
from .learner import LearnerConfig, ToyLearner, stochastic_infer, stochastic_infer_manifest, toy_train
from .loop import (
    RoundMetrics,
    SelectorBenchmark,
    SelfTrainReport,
    make_dataset,
    overconfidence_benchmark_config,
    selector_benchmark,
    selftrain_benchmark_config,
    self_train_loop,
)
from .metrics import (
    GroundingMetrics,
    InstanceMetrics,
    SemanticMetrics,
    confusion_matrix,
    evaluate,
    grounding_metrics,
    instance_metrics,
    iou_from_confusion,
    semantic_metrics,
)
from .noise import (
    GroundingDraw,
    InstanceDraw,
    NoiseModel,
    draw_grounding_passes,
    draw_instance_passes,
    draw_semantic_passes,
    mild,
    noiseless,
    overconfident,
    simulate_passes,
)
from .scenes import FEATURE_DIM, SceneConfig, SyntheticScene, class_anchors, generate_scene, stream_rng

__all__ = [
    "FEATURE_DIM",
    "GroundingDraw",
    "GroundingMetrics",
    "InstanceDraw",
    "InstanceMetrics",
    "LearnerConfig",
    "NoiseModel",
    "RoundMetrics",
    "SceneConfig",
    "SelectorBenchmark",
    "SelfTrainReport",
    "SemanticMetrics",
    "SyntheticScene",
    "ToyLearner",
    "class_anchors",
    "confusion_matrix",
    "draw_grounding_passes",
    "draw_instance_passes",
    "draw_semantic_passes",
    "evaluate",
    "generate_scene",
    "grounding_metrics",
    "instance_metrics",
    "iou_from_confusion",
    "make_dataset",
    "mild",
    "noiseless",
    "overconfidence_benchmark_config",
    "overconfident",
    "selector_benchmark",
    "selftrain_benchmark_config",
    "self_train_loop",
    "semantic_metrics",
    "simulate_passes",
    "stochastic_infer",
    "stochastic_infer_manifest",
    "stream_rng",
    "toy_train",
]
