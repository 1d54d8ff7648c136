"""Command-line interface: one executable exposing every pipeline.

Exit codes: 0 success, 1 validation error (bad flags, malformed inputs,
violated invariants), 2 I/O error. Diagnostics go to stderr; machine
output goes to the declared files, or stdout as JSON where no file flag
is given. Every tensor output gets a JSON sidecar recording the
thresholds actually used. All writes are atomic.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import assignment, grounding, instances, semantic, synthlab, tensorio

log = logging.getLogger("bayespl")

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}

_NOISE_PRESETS = {
    "noiseless": synthlab.noiseless,
    "mild": synthlab.mild,
    "overconfident": synthlab.overconfident,
}


@dataclass(frozen=True)
class RunConfig:
    """Audit record of one invocation, embedded in every sidecar."""

    subcommand: str
    p_tau: float | None = None
    mode: str | None = None
    min_iou: float | None = None
    mask_threshold: float | None = None
    vote_threshold: int | None = None
    seed: int | None = None

    def as_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


class _ParserExit(Exception):
    def __init__(self, message: str):
        super().__init__(message)


class _Parser(argparse.ArgumentParser):
    """argparse reports usage errors via exit(2); remap them to exit 1."""

    def error(self, message):
        raise _ParserExit(message)


class _StderrHandler(logging.StreamHandler):
    """Stream handler bound to whatever sys.stderr is at emit time."""

    def __init__(self):
        super().__init__(sys.stderr)

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


def _configure_logging() -> None:
    raw = os.environ.get("BAYESPL_LOG", "warn").strip().lower()
    level = _LOG_LEVELS.get(raw)
    if level is None:
        level = logging.WARNING
    if not log.handlers:
        handler = _StderrHandler()
        handler.setFormatter(logging.Formatter("bayespl %(levelname)s: %(message)s"))
        log.addHandler(handler)
    log.setLevel(level)
    if raw not in _LOG_LEVELS:
        log.warning("BAYESPL_LOG=%r not one of %s, using warn", raw, sorted(_LOG_LEVELS))


def build_parser():
    """Returns (parser, {subcommand: (subparser, config-eligible dests)})."""
    parser = _Parser(prog="bayespl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    commands: dict[str, tuple] = {}

    def register(name: str, help_text: str):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="JSON file holding flag defaults (flags win)")
        return p

    def finish(p, name):
        dests = {a.dest for a in p._actions if a.dest not in ("help", "config", "subcommand")}
        commands[name] = (p, dests)

    p = register("pl-semantic", "semantic pseudo-labels from a manifest of stochastic passes")
    p.add_argument("--manifest", required=True, help="semantic scene manifest JSON")
    p.add_argument("--p-tau", dest="p_tau", type=float, default=0.75)
    p.add_argument("--mode", choices=[semantic.GLOBAL, semantic.PER_CLASS], default=semantic.GLOBAL)
    p.add_argument("--vote-threshold", dest="vote_threshold", type=int, default=None,
                   help="votes required for consensus (default: all K passes)")
    p.add_argument("--out", required=True, help="output label tensor (.bplt); sidecar swaps to .json")
    finish(p, "pl-semantic")

    p = register("pl-instance", "instance pseudo-masks from a seed plus stochastic passes")
    p.add_argument("--manifest", required=True, help="instance scene manifest JSON")
    p.add_argument("--p-tau", dest="p_tau", type=float, default=0.75)
    p.add_argument("--min-iou", dest="min_iou", type=float, default=instances.DEFAULT_MIN_IOU)
    p.add_argument("--mask-threshold", dest="mask_threshold", type=float,
                   default=instances.DEFAULT_MASK_THRESHOLD)
    p.add_argument("--out", required=True, help="output mask tensor (.bplt); sidecar swaps to .json")
    finish(p, "pl-instance")

    p = register("pl-grounding", "grounding pseudo-labels via the instance matching")
    p.add_argument("--manifest", required=True, help="grounding scene manifest JSON")
    p.add_argument("--matching", required=True, help="sidecar JSON written by pl-instance")
    p.add_argument("--p-tau", dest="p_tau", type=float, default=0.75)
    p.add_argument("--out", required=True, help="output index tensor (.bplt); sidecar swaps to .json")
    finish(p, "pl-grounding")

    p = register("match", "solve one linear sum assignment from a cost tensor")
    p.add_argument("--cost", required=True, help="2-D cost tensor (.bplt)")
    p.add_argument("--out", default=None, help="output JSON (default: stdout)")
    finish(p, "match")

    p = register("simulate", "generate synthetic scenes and write pass manifests")
    p.add_argument("--scenes", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", dest="k", type=int, default=9, help="stochastic passes per scene")
    p.add_argument("--kinds", default="semantic,instance,grounding",
                   help="comma-separated subset of semantic,instance,grounding")
    p.add_argument("--noise", choices=sorted(_NOISE_PRESETS), default="mild")
    p.add_argument("--points", type=int, default=2000)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--instances", type=int, default=8)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    finish(p, "simulate")

    p = register("selftrain", "run the self-training loop on synthetic scenes")
    p.add_argument("--scenes", type=int, default=50)
    p.add_argument("--labeled", type=float, default=0.10, help="labeled scene fraction")
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--p-tau", dest="p_tau", type=float, default=0.75)
    p.add_argument("--k", dest="k", type=int, default=9)
    p.add_argument("--vote-threshold", dest="vote_threshold", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dropout", type=float, default=0.25)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--report", default=None, help="metrics JSON path (default: stdout)")
    finish(p, "selftrain")

    p = register("eval", "score a prediction tensor against ground truth")
    p.add_argument("--task", choices=["semantic", "instance", "grounding"], required=True)
    p.add_argument("--pred", required=True, help="prediction tensor (.bplt)")
    p.add_argument("--gt", required=True, help="ground-truth tensor (.bplt)")
    p.add_argument("--classes", type=int, default=None, help="class count (semantic only)")
    p.add_argument("--report", default=None, help="metrics JSON path (default: stdout)")
    finish(p, "eval")

    return parser, commands


def _merge_config(parser, commands, argv, args):
    """Apply --config JSON as defaults, keeping explicit flags dominant.

    Defaults must land on the subcommand parser: subparsers parse into a
    fresh namespace, so top-level set_defaults would be shadowed.
    """
    cfg_path = getattr(args, "config", None)
    if not cfg_path:
        return args
    with open(cfg_path, "r", encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{cfg_path}: not valid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ValueError(f"{cfg_path}: config must be a JSON object")
    subparser, allowed = commands[args.subcommand]
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ValueError(f"{cfg_path}: unknown config keys for {args.subcommand}: {', '.join(unknown)}")
    subparser.set_defaults(**cfg)
    return parser.parse_args(argv)


def _sidecar_path(out: Path) -> Path:
    if out.suffix == ".json":
        return out.with_name(out.name + ".sidecar.json")
    return out.with_suffix(".json")


def _tau_json(tau):
    if tau is None:
        return None
    if isinstance(tau, np.ndarray):
        return [None if math.isnan(float(t)) else float(t) for t in tau]
    return float(tau)


def _load_kind(path: str, kind: str) -> tensorio.SceneManifest:
    manifest = tensorio.load_manifest(path)
    if manifest.kind != kind:
        raise ValueError(f"{path}: manifest kind is {manifest.kind!r}, this command needs {kind!r}")
    return manifest


def _cmd_pl_semantic(args) -> int:
    manifest = _load_kind(args.manifest, tensorio.SEMANTIC)
    passes = np.stack([p.astype(np.float64) for p in manifest.load_passes()])
    est = semantic.mc_aggregate(passes, args.vote_threshold)
    sol = semantic.solve_pseudo_labels(est, args.p_tau, args.mode)
    out = Path(args.out)
    tensorio.write_tensor(sol.labels.astype(np.int32), out)
    labeled = int(sol.labeled_mask().sum())
    run = RunConfig(subcommand="pl-semantic", p_tau=args.p_tau, mode=args.mode,
                    vote_threshold=args.vote_threshold)
    tensorio.write_json(_sidecar_path(out), {
        "scene_id": manifest.scene_id,
        "config": run.as_dict(),
        "K": manifest.num_passes,
        "vote_threshold": args.vote_threshold if args.vote_threshold is not None else manifest.num_passes,
        "tau": _tau_json(sol.tau),
        "p_tau": sol.p_tau,
        "mode": sol.mode,
        "ranking": sol.ranking,
        "num_points": manifest.num_points,
        "consensus_count": int(est.consensus_mask().sum()),
        "labeled_count": labeled,
        "labeled_fraction": labeled / manifest.num_points,
    })
    log.info("pl-semantic: %d of %d points labeled", labeled, manifest.num_points)
    return 0


def _cmd_pl_instance(args) -> int:
    manifest = _load_kind(args.manifest, tensorio.INSTANCE)
    if manifest.seed_path is None:
        raise ValueError(f"{args.manifest}: instance manifests need a seed tensor")
    seed = instances.InstancePassOutput(manifest.load_seed().astype(np.float64), args.mask_threshold)
    passes = [instances.InstancePassOutput(p.astype(np.float64), args.mask_threshold)
              for p in manifest.load_passes()]
    res = instances.generate_instance_pseudo_labels(
        seed, passes, p_tau=args.p_tau, min_iou=args.min_iou, mask_threshold=args.mask_threshold
    )
    out = Path(args.out)
    tensorio.write_tensor(res.masks.astype(np.uint8), out)
    run = RunConfig(subcommand="pl-instance", p_tau=args.p_tau, min_iou=args.min_iou,
                    mask_threshold=args.mask_threshold)
    tensorio.write_json(_sidecar_path(out), {
        "scene_id": manifest.scene_id,
        "config": run.as_dict(),
        "K": manifest.num_passes,
        "tau": _tau_json(res.tau),
        "p_tau": args.p_tau,
        "min_iou": args.min_iou,
        "mask_threshold": args.mask_threshold,
        "num_instances": int(seed.num_instances),
        "kept_instances": list(res.kept_instances),
        "point_counts": [int(n) for n in res.masks.sum(axis=1)],
        "pass_matchings": [[[r, c, iou] for r, c, iou in pm] for pm in res.pass_matchings],
    })
    log.info("pl-instance: kept %d of %d instances", len(res.kept_instances), seed.num_instances)
    return 0


def _cmd_pl_grounding(args) -> int:
    manifest = _load_kind(args.manifest, tensorio.GROUNDING)
    if manifest.seed_path is None:
        raise ValueError(f"{args.manifest}: grounding manifests need a seed score tensor")
    with open(args.matching, "r", encoding="utf-8") as fh:
        try:
            matching = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{args.matching}: not valid JSON ({exc})") from exc
    for key in ("num_instances", "pass_matchings"):
        if key not in matching:
            raise ValueError(f"{args.matching}: missing key {key!r} (expected a pl-instance sidecar)")
    M = int(matching["num_instances"])
    pass_matchings = matching["pass_matchings"]
    seed_scores = manifest.load_seed().astype(np.float64)
    if seed_scores.shape[1] != M:
        raise ValueError(
            f"{args.manifest}: seed scores have {seed_scores.shape[1]} candidates, matching has {M}"
        )
    pass_arrays = [p.astype(np.float64) for p in manifest.load_passes()]
    if len(pass_arrays) != len(pass_matchings):
        raise ValueError(
            f"{args.manifest}: {len(pass_arrays)} passes vs {len(pass_matchings)} matchings"
        )
    reordered = []
    for k, (scores, pm) in enumerate(zip(pass_arrays, pass_matchings)):
        align = np.full(scores.shape[1], grounding.UNALIGNED, dtype=np.int64)
        for row, col, _iou in pm:
            if not 0 <= row < scores.shape[1]:
                raise ValueError(f"pass {k}: matched row {row} outside {scores.shape[1]} candidates")
            align[row] = col
        reordered.append(grounding.reorder_scores(grounding.GroundingPassScores(scores, align), M))
    sol = grounding.solve_grounding(seed_scores, reordered, args.p_tau)
    out = Path(args.out)
    tensorio.write_tensor(sol.indices.astype(np.int32), out)
    labeled = int((sol.indices != grounding.IGNORE).sum())
    run = RunConfig(subcommand="pl-grounding", p_tau=args.p_tau)
    tensorio.write_json(_sidecar_path(out), {
        "scene_id": manifest.scene_id,
        "config": run.as_dict(),
        "K": manifest.num_passes,
        "tau": _tau_json(sol.tau),
        "p_tau": sol.p_tau,
        "num_utterances": int(sol.indices.shape[0]),
        "labeled_count": labeled,
        "no_alignment_count": int(np.logical_or.reduce([r.no_alignment for r in reordered]).sum()),
    })
    log.info("pl-grounding: %d of %d utterances labeled", labeled, sol.indices.shape[0])
    return 0


def _cmd_match(args) -> int:
    cost = tensorio.read_tensor(args.cost).astype(np.float64)
    res = assignment.lsa(cost)
    doc = {"pairs": [[r, c] for r, c in res.pairs], "total_cost": float(res.total_cost)}
    if args.out:
        tensorio.write_json(args.out, doc)
    else:
        print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def _cmd_simulate(args) -> int:
    kinds = tuple(k.strip() for k in args.kinds.split(",") if k.strip())
    config = synthlab.SceneConfig(
        n_points=args.points, n_classes=args.classes, n_instances=args.instances
    )
    noise = _NOISE_PRESETS[args.noise]()
    scenes = synthlab.make_dataset(config, args.scenes, args.seed)
    out_dir = Path(args.out_dir)

    def one(i):
        scene_id = f"scene{i:04d}"
        manifests = synthlab.simulate_passes(scenes[i], noise, args.k, out_dir, kinds, scene_id)
        return scene_id, {kind: path.name for kind, path in manifests.items()}

    if args.jobs > 1 and len(scenes) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            entries = list(pool.map(one, range(len(scenes))))
    else:
        entries = [one(i) for i in range(len(scenes))]

    tensorio.write_json(out_dir / "dataset.json", {
        "scenes": [{"scene_id": sid, "manifests": m} for sid, m in entries],
        "seed": args.seed,
        "k": args.k,
        "kinds": list(kinds),
        "noise": args.noise,
        "config": {
            "n_points": config.n_points,
            "n_classes": config.n_classes,
            "n_instances": config.n_instances,
        },
    })
    log.info("simulate: wrote %d scenes to %s", len(scenes), out_dir)
    return 0


def _cmd_selftrain(args) -> int:
    config = synthlab.selftrain_benchmark_config()
    learner_config = synthlab.LearnerConfig(dropout_rate=args.dropout, epochs=args.epochs)
    scenes = synthlab.make_dataset(config, args.scenes, args.seed)
    report = synthlab.self_train_loop(
        scenes,
        labeled_fraction=args.labeled,
        rounds=args.rounds,
        p_tau=args.p_tau,
        K=args.k,
        vote_threshold=args.vote_threshold,
        learner_config=learner_config,
        seed=args.seed,
        jobs=args.jobs,
    )
    doc = report.as_dict()
    if args.report:
        tensorio.write_json(args.report, doc)
    else:
        print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def _cmd_eval(args) -> int:
    pred = tensorio.read_tensor(args.pred)
    gt = tensorio.read_tensor(args.gt)
    if args.task == "semantic":
        if args.classes is None:
            raise ValueError("eval --task semantic needs --classes")
        metrics = synthlab.semantic_metrics(pred, gt, args.classes)
    elif args.task == "instance":
        metrics = synthlab.instance_metrics(pred.astype(bool), gt.astype(bool))
    else:
        metrics = synthlab.grounding_metrics(pred, gt)
    doc = metrics.as_dict()
    if args.report:
        tensorio.write_json(args.report, doc)
    else:
        print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


_DISPATCH = {
    "pl-semantic": _cmd_pl_semantic,
    "pl-instance": _cmd_pl_instance,
    "pl-grounding": _cmd_pl_grounding,
    "match": _cmd_match,
    "simulate": _cmd_simulate,
    "selftrain": _cmd_selftrain,
    "eval": _cmd_eval,
}


def main(argv=None) -> int:
    _configure_logging()
    if argv is None:
        argv = sys.argv[1:]
    parser, commands = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _merge_config(parser, commands, argv, args)
        return _DISPATCH[args.subcommand](args)
    except _ParserExit as exc:
        log.error("%s", exc)
        return 1
    except SystemExit as exc:  # argparse --help
        code = exc.code
        return int(code) if isinstance(code, int) else 0
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return 2
    except (ValueError, KeyError) as exc:
        log.error("%s.%s: %s", type(exc).__module__, type(exc).__qualname__, exc)
        return 1
    except OSError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
