"""Command-line entry points for every pipeline stage.

Errors exit non-zero with a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import evaluation, generator, synth_bench
from .errors import PmcError
from .network import ModelConfig
from .primitives import (
    DEFAULT_LAMBDA,
    SegmentationConfig,
    execute_primitives,
    keypoint_difference,
    segment_primitives,
)
from .training import TrainedModel, TrainingConfig, describe, train
from .types import (
    atomic_write_json,
    load_pose_sequence,
    save_pose_sequence,
    save_primitive_sequence,
)


def _seg_config(args: argparse.Namespace) -> SegmentationConfig:
    return SegmentationConfig(
        lam=args.lam,
        min_segment_frames=args.min_seg,
        max_segment_frames=args.max_seg,
    )


def _add_seg_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA,
                   help="per-segment penalty (squared pixels)")
    p.add_argument("--min-seg", type=int, default=5, help="minimum segment frames")
    p.add_argument("--max-seg", type=int, default=None, help="maximum segment frames")


def cmd_gen_data(args: argparse.Namespace) -> int:
    cfg = synth_bench.DatasetConfig(
        sequences_per_concept=args.sequences_per_concept,
        min_reps=args.min_reps,
        max_reps=args.max_reps,
        noise_std=args.noise_std,
        duration_jitter=args.duration_jitter,
        amplitude_jitter=args.amplitude_jitter,
    )
    dataset = synth_bench.generate_dataset(cfg, seed=args.seed)
    synth_bench.save_dataset(dataset, args.out)
    print(json.dumps({
        "out": str(args.out),
        "sequences": len(dataset.items),
        "concepts": list(dataset.vocabulary.labels),
    }))
    return 0


def cmd_fit(args: argparse.Namespace) -> int:
    seq = load_pose_sequence(args.input)
    cfg = _seg_config(args)
    t0 = time.perf_counter()
    prims = segment_primitives(seq, cfg)
    elapsed = time.perf_counter() - t0
    recon = execute_primitives(prims, like=seq)
    kd = keypoint_difference(recon, seq)
    if args.output:
        save_primitive_sequence(prims, args.output)
    print(json.dumps({
        "segments": prims.K,
        "kd_percent": kd,
        "time_seconds": elapsed,
        "output": str(args.output) if args.output else None,
    }))
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    dataset = synth_bench.load_dataset(args.data)
    seg = _seg_config(args)
    model_cfg = ModelConfig(
        feature_dim=8 * dataset.sequences()[0].J + 1,
        num_classes=dataset.vocabulary.num_classes,
        hidden_dim=args.hidden,
        window_size=args.window,
        cell_kind=args.cell,
        seed=args.seed,
    )
    train_cfg = TrainingConfig(
        epochs=args.epochs,
        warmup_epochs=args.warmup,
        learning_rate=args.lr,
        final_learning_rate=args.final_lr,
        seed=args.seed,
    )
    model, history = train(
        dataset.sequences("train"),
        dataset.annotations("train"),
        dataset.vocabulary,
        seg,
        train_cfg,
        model_cfg,
        val_sequences=dataset.sequences("test") if args.validate else (),
        val_annotations=dataset.annotations("test") if args.validate else (),
        log_path=args.log,
    )
    model.save(args.out)
    print(json.dumps({
        "out": str(args.out),
        "epochs": len(history),
        "final_loss": history[-1]["total"],
    }))
    return 0


def cmd_describe(args: argparse.Namespace) -> int:
    model = TrainedModel.load(args.model)
    seq = load_pose_sequence(args.input)
    desc = describe(seq, model, beam_width=args.beam)
    payload = desc.to_json()
    if args.output:
        atomic_write_json(payload, args.output)
    print(json.dumps(payload))
    return 0


def cmd_extract(args: argparse.Namespace) -> int:
    dataset = synth_bench.load_dataset(args.data)
    model = TrainedModel.load(args.model, expect_vocabulary=dataset.vocabulary)
    models = generator.build_concept_models(
        dataset.sequences("train"),
        dataset.annotations("train"),
        model,
        cov_f=args.cov_f,
        threshold=args.filter_threshold,
    )
    generator.save_concept_models(models, args.out)
    print(json.dumps({
        "out": str(args.out),
        "concepts": {c: m.support_count for c, m in sorted(models.items())},
    }))
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    models = generator.load_concept_models(args.models)
    script = generator.load_script(args.script)
    poses = synthesize_with_meta(script, models, args)
    save_pose_sequence(poses, args.output)
    print(json.dumps({"output": str(args.output), "frames": poses.T}))
    return 0


def synthesize_with_meta(script, models, args):
    return generator.synthesize(
        script,
        models,
        fps=args.fps,
        width=args.width,
        height=args.height,
        joint_names=synth_bench.JOINT_NAMES if args.skeleton == "bench" else None,
    )


def cmd_eval(args: argparse.Namespace) -> int:
    dataset = synth_bench.load_dataset(args.data)
    model = TrainedModel.load(args.model, expect_vocabulary=dataset.vocabulary)
    models = generator.load_concept_models(args.models) if args.models else None
    report, runs = evaluate_dataset(
        dataset, model, models, seed=args.seed, runs=args.runs, beam=args.beam
    )
    atomic_write_json(report.to_json(), args.out)
    if args.runs_out and runs:
        with open(args.runs_out, "w", encoding="utf-8") as fh:
            for rec in runs:
                fh.write(json.dumps(rec) + "\n")
    print(json.dumps(report.to_json()))
    return 0


def evaluate_dataset(
    dataset: synth_bench.LoadedDataset,
    model: TrainedModel,
    concept_models: dict | None,
    seed: int = 0,
    runs: int = 20,
    beam: int = 32,
) -> tuple[evaluation.MetricsReport, list[dict]]:
    """Shared by `eval` and the service: description metrics on the test
    split, reconstruction KD, and (with concept models) generation metrics
    plus APE/AVE of script-conditioned synthesis against ground truth."""
    neds, preds, gts = [], [], []
    kds = []
    apes, aves = [], []
    for item in dataset.split("test"):
        seq = item.sequence
        desc = describe(seq, model, beam_width=beam)
        neds.append(
            evaluation.norm_edit_distance(
                desc.labels, tuple(c for c, _ in item.occurrences)
            )
        )
        for lab, iv, sc in zip(desc.labels, desc.intervals, desc.scores):
            if iv[1] > iv[0]:
                preds.append(evaluation.IntervalPrediction(lab, iv, sc))
        gts += [(c, iv) for c, iv in item.occurrences]
        prims = segment_primitives(seq, model.seg_config)
        kds.append(keypoint_difference(execute_primitives(prims, like=seq), seq))
        if concept_models:
            synth = generator.synthesize(item.script, concept_models, like=seq)
            apes.append(evaluation.ape(synth, seq))
            aves.append(evaluation.ave(synth, seq))

    fid = acc = div = mm = None
    per_run: list[dict] = []
    if concept_models:
        train_sequences = dataset.sequences("train")
        refs = generator.reference_occurrences(
            train_sequences, dataset.annotations("train"), model
        )
        examples = [
            (c, generator.occurrence_frames(o))
            for c, occs in sorted(refs.items())
            for o in occs
        ]
        classifier = evaluation.train_action_classifier(examples)
        real = [o for _, occs in sorted(refs.items()) for o in occs]
        gm = evaluation.gen_metrics(
            concept_models, real, classifier, seed=seed, runs=runs
        )
        fid, acc, div, mm = gm.fid, gm.acc, gm.div, gm.mm
        per_run = [dict(r) for r in gm.per_run]

    norm_ed = float(np.mean(neds))
    report = evaluation.MetricsReport(
        norm_ed=norm_ed,
        seq_acc=(1.0 - norm_ed) * 100.0,
        rep_map=evaluation.repetition_map(preds, gts) if gts else None,
        ape=float(np.mean(apes)) if apes else None,
        ave=float(np.mean(aves)) if aves else None,
        fid=fid,
        acc=acc,
        div=div,
        mm=mm,
        kd=float(np.mean(kds)) if kds else None,
    )
    return report, per_run


def resolve_project_dir(flag_value) -> str:
    """PMC_PROJECT overrides the --project flag when set."""
    import os

    project = os.environ.get("PMC_PROJECT") or flag_value
    if project is None:
        raise PmcError("provide --project or set PMC_PROJECT")
    return str(project)


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(resolve_project_dir(args.project))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmc", description="Motion-concept toolkit pipeline"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic benchmark dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sequences-per-concept", type=int, default=10)
    p.add_argument("--min-reps", type=int, default=5)
    p.add_argument("--max-reps", type=int, default=20)
    p.add_argument("--noise-std", type=float, default=1.0)
    p.add_argument("--duration-jitter", type=float, default=0.05)
    p.add_argument("--amplitude-jitter", type=float, default=0.1)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("fit", help="fit spline primitives to a pose sequence")
    p.add_argument("input", type=Path)
    p.add_argument("-o", "--output", type=Path, default=None)
    _add_seg_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("train", help="train the concept recognizer")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--warmup", type=int, default=None)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--final-lr", type=float, default=3e-4)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--window", type=int, default=13)
    p.add_argument("--cell", choices=("gru", "lstm"), default="gru")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log", type=Path, default=None, help="metrics JSON-lines path")
    p.add_argument("--validate", action="store_true",
                   help="report SeqAcc on the test split each epoch")
    _add_seg_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("describe", help="recognize and localize concepts")
    p.add_argument("input", type=Path)
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("-o", "--output", type=Path, default=None)
    p.add_argument("--beam", type=int, default=32)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("extract", help="extract occurrences and fit concept models")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--cov-f", type=float, default=generator.DEFAULT_COV_F)
    p.add_argument("--filter-threshold", type=float,
                   default=generator.DEFAULT_SIMILARITY_THRESHOLD)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("synth", help="synthesize poses from a motion script")
    p.add_argument("script", type=Path)
    p.add_argument("--models", required=True, type=Path)
    p.add_argument("-o", "--output", required=True, type=Path)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--skeleton", choices=("bench", "generic"), default="bench")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="compute the metrics report")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--models", type=Path, default=None,
                   help="concept model directory (enables generation metrics)")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--runs-out", type=Path, default=None,
                   help="per-run JSON-lines breakdown")
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beam", type=int, default=32)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the studio HTTP service")
    p.add_argument("--project", type=Path, default=None)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PmcError as exc:
        print(
            json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}),
            file=sys.stderr,
        )
        return 1
    except OSError as exc:
        print(
            json.dumps({"error": {"type": "OSError", "message": str(exc)}}),
            file=sys.stderr,
        )
        return 2


if __name__ == "__main__":
    sys.exit(main())
