"""Command-line interface for the pose-distribution pipeline.

Subcommands: synth (dataset generation), train, infer (distribution CSV
from a cloud + initial pose), eval (coverage/precision report), bench
(per-stage runtime), simulate (bin-picking loop), plot (distribution SVG).

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every command that writes an output directory also drops a run_config.json
echoing its arguments so runs can be reproduced.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as pio
from .dataset import DatasetConfig, SceneConfig, generate_dataset, load_manifest
from .errors import DataError, EmptyCropError, NumericalError
from .estimator import PoseDistributionEstimator
from .evaluation import evaluate
from .benchmark import runtime_bench
from .meshes import ObjectSpec
from .scoring import PoseDistribution, normalize
from .simulate import SimConfig, simulate_bin_picking

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argparse that reports usage problems via exit code 1."""

    def error(self, message):
        raise _UsageError(message)


def parse_object_spec(text: str) -> ObjectSpec:
    """Parse 'kind[,key=value,...]' into an ObjectSpec.

    Example: cylinder_with_recess,radius=0.016,height=0.048,feature_size=0.004
    """
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise _UsageError("empty --object spec")
    kind = parts[0]
    kwargs = {}
    allowed = {"radius", "height", "feature_size", "feature_position"}
    for part in parts[1:]:
        if "=" not in part:
            raise _UsageError(f"bad --object field {part!r} (expected key=value)")
        key, value = part.split("=", 1)
        key = key.strip()
        if key not in allowed:
            raise _UsageError(f"unknown --object field {key!r}")
        try:
            kwargs[key] = float(value)
        except ValueError:
            raise _UsageError(f"--object field {key} needs a number, got {value!r}")
    try:
        return ObjectSpec(kind=kind, **kwargs)
    except ValueError as e:
        raise _UsageError(str(e))


def _write_run_config(out_dir: Path, command: str, args: argparse.Namespace) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"command": command}
    for k, v in sorted(vars(args).items()):
        if k == "func":
            continue
        payload[k] = str(v) if isinstance(v, Path) else v
    (out_dir / "run_config.json").write_text(
        json.dumps(payload, indent=1, sort_keys=True) + "\n"
    )


# -- subcommands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    config = DatasetConfig(
        object_spec=parse_object_spec(args.object),
        n_scenes=args.scenes,
        n_test_scenes=args.test_scenes,
        seed=args.seed,
        scene=SceneConfig(objects_per_scene=args.objects_per_scene),
    )
    out = Path(args.out)
    _write_run_config(out, "synth", args)
    manifest = generate_dataset(config, out)
    index = load_manifest(out)
    print(f"wrote {manifest} ({len(index.records)} instances)")
    return EXIT_OK


def _estimator_from_args(args) -> PoseDistributionEstimator:
    return PoseDistributionEstimator(
        n_revolution=args.grid_revolutions,
        ablation=args.ablation.replace("-", "_"),
        epochs=args.epochs,
        batches_per_epoch=args.batches_per_epoch,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        seed=args.seed,
        log_every=args.log_every,
        checkpoint_dir=args.checkpoint_dir,
        checkpoint_every=args.checkpoint_every,
    )


def cmd_train(args) -> int:
    est = _estimator_from_args(args)
    out = Path(args.out)
    _write_run_config(out.parent if out.suffix else out, "train", args)
    # epochs 0 skips the loop and writes an initialized (untrained) model
    est.fit(args.data)
    weights = out if out.suffix else out / "weights.opde"
    est.save(weights)
    if est.history_:
        last = est.history_[-1]
        print(f"trained {args.epochs} epochs; last loss {last['train_loss']:.4f}")
    print(f"wrote {weights}")
    return EXIT_OK


def _distribution_axes(n_revolution: int, n_reflections: int = 2):
    step = 360.0 / n_revolution
    reflections = np.repeat(np.arange(n_reflections), n_revolution)
    angles = np.tile(np.arange(n_revolution) * step, n_reflections)
    return reflections, angles


def cmd_infer(args) -> int:
    est = PoseDistributionEstimator.load(args.weights)
    cloud = pio.read_ply(args.cloud)
    t_init = pio.read_pose(args.pose)
    dist = est.predict_distribution(cloud, t_init)
    reflections, angles = _distribution_axes(est.n_revolution)
    pio.write_distribution_csv(args.out, reflections, angles, dist.probs)
    print(f"wrote {args.out}")
    if args.plot:
        from .plotting import plot_distribution

        plot_distribution(dist, args.plot)
        print(f"wrote {args.plot}")
    return EXIT_OK


def cmd_eval(args) -> int:
    est = PoseDistributionEstimator.load(args.weights)
    index = load_manifest(args.data)
    records = index.split(args.split)
    report = evaluate(
        est,
        records,
        cutoff=args.cutoff,
        window_deg=args.window_deg,
        object_name=index.config.object_spec.kind,
    )
    out = Path(args.out)
    _write_run_config(out, "eval", args)
    report.to_csv(out / "report.csv")
    print(report.format_table())
    print(f"wrote {out / 'report.csv'}")
    return EXIT_OK


def cmd_bench(args) -> int:
    est = PoseDistributionEstimator.load(args.weights)
    cloud = pio.read_ply(args.cloud)
    t_init = pio.read_pose(args.pose)
    report = runtime_bench(est, cloud, t_init, repeats=args.repeats)
    print(report.format_table())
    if args.out:
        payload = {
            "stage_ms": report.stage_ms,
            "grid_ms": report.grid_ms,
            "scoring_ms": report.scoring_ms(),
            "repeats": report.repeats,
        }
        Path(args.out).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    est = PoseDistributionEstimator.load(args.weights)
    config = SimConfig(
        cutoff=args.cutoff,
        window_deg=args.window_deg,
        max_steps=args.budget,
        grasp_unusable_prob=args.grasp_unusable_prob,
    )
    state = simulate_bin_picking(
        est,
        parse_object_spec(args.object),
        target_insertions=args.insertions,
        seed=args.seed,
        config=config,
    )
    print(
        f"grasps {state.grasps}: {state.flips} flips, {state.alignments} alignments, "
        f"{state.insertions} insertions ({state.incorrect_insertions} incorrect)"
    )
    if args.out:
        state.save_log(args.out)
        print(f"wrote {args.out}")
    return EXIT_OK if state.finished else EXIT_DATA


def cmd_plot(args) -> int:
    from .plotting import plot_distribution

    reflections, _, probs = pio.read_distribution_csv(args.dist)
    n_refl = int(reflections.max()) + 1
    if probs.size % n_refl != 0:
        raise DataError("distribution CSV rows are not an even grid")
    dist = PoseDistribution(
        probs=probs,
        log_scores=np.log(np.maximum(probs, 1e-300)),
        n_revolution=probs.size // n_refl,
    )
    plot_distribution(dist, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


# -- parser wiring -----------------------------------------------------------------


def build_parser() -> _Parser:
    p = _Parser(prog="posedist", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic dataset")
    sp.add_argument("--object", default="cylinder_with_recess",
                    help="object spec: kind[,radius=..,height=..,feature_size=..,feature_position=..]")
    sp.add_argument("--scenes", type=int, default=200)
    sp.add_argument("--test-scenes", type=int, default=20)
    sp.add_argument("--objects-per-scene", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)

    tp = sub.add_parser("train", help="train a model on a dataset")
    tp.add_argument("--data", required=True)
    tp.add_argument("--out", required=True, help="weight file or output directory")
    tp.add_argument("--epochs", type=int, default=200)
    tp.add_argument("--batches-per-epoch", type=int, default=100)
    tp.add_argument("--batch-size", type=int, default=1)
    tp.add_argument("--lr", type=float, default=1e-4)
    tp.add_argument("--seed", type=int, default=0)
    tp.add_argument("--grid-revolutions", type=int, default=360)
    tp.add_argument("--ablation", default="full",
                    choices=["full", "omit-spatial", "omit-features"])
    tp.add_argument("--log-every", type=int, default=0)
    tp.add_argument("--checkpoint-dir", default=None)
    tp.add_argument("--checkpoint-every", type=int, default=10)
    tp.set_defaults(func=cmd_train)

    ip = sub.add_parser("infer", help="score one cloud + initial pose")
    ip.add_argument("--weights", required=True)
    ip.add_argument("--cloud", required=True)
    ip.add_argument("--pose", required=True)
    ip.add_argument("--out", required=True, help="distribution CSV path")
    ip.add_argument("--plot", default=None, help="optional SVG path")
    ip.set_defaults(func=cmd_infer)

    ep = sub.add_parser("eval", help="coverage/precision report on a split")
    ep.add_argument("--weights", required=True)
    ep.add_argument("--data", required=True)
    ep.add_argument("--split", default="test", choices=["test", "train"])
    ep.add_argument("--cutoff", type=float, default=0.99)
    ep.add_argument("--window-deg", type=float, default=15.0)
    ep.add_argument("--out", required=True)
    ep.set_defaults(func=cmd_eval)

    bp = sub.add_parser("bench", help="per-stage runtime of one scoring pass")
    bp.add_argument("--weights", required=True)
    bp.add_argument("--cloud", required=True)
    bp.add_argument("--pose", required=True)
    bp.add_argument("--repeats", type=int, default=31)
    bp.add_argument("--out", default=None)
    bp.set_defaults(func=cmd_bench)

    mp = sub.add_parser("simulate", help="bin-picking decision loop")
    mp.add_argument("--weights", required=True)
    mp.add_argument("--object", default="cylinder_with_recess")
    mp.add_argument("--insertions", type=int, default=10)
    mp.add_argument("--budget", type=int, default=250)
    mp.add_argument("--grasp-unusable-prob", type=float, default=0.3)
    mp.add_argument("--cutoff", type=float, default=0.99)
    mp.add_argument("--window-deg", type=float, default=15.0)
    mp.add_argument("--seed", type=int, default=0)
    mp.add_argument("--out", default=None)
    mp.set_defaults(func=cmd_simulate)

    pp = sub.add_parser("plot", help="polar SVG from a distribution CSV")
    pp.add_argument("--dist", required=True)
    pp.add_argument("--out", required=True)
    pp.set_defaults(func=cmd_plot)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, EmptyCropError, FileNotFoundError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ArithmeticError) as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
