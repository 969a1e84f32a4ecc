"""Command-line entry point: ``amcvad {synth,train,score,eval,viz}``.

Every command prints its resolved configuration as YAML on stdout. Failures
print one JSON line on stderr and exit with 2 (bad config), 3 (missing or
invalid data) or 4 (numeric failure).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from PIL import Image

from .config import PipelineConfig, load_config
from .data import read_events, read_flow, read_labels, load_dataset
from .errors import AMCError, CalibrationError, ConfigError, DataError
from .evaluation import event_report, frame_report, write_report
from .flowviz import flow_to_rgb
from .model import load_checkpoint, save_checkpoint
from .scoring import ScoreWeights, fit_score_weights, read_scores, score_dataset, write_scores
from .synthetic import generate_synthetic
from .training import seed_everything, train

log = logging.getLogger("amcvad")


def _echo(cfg: PipelineConfig) -> None:
    sys.stdout.write("# resolved config\n" + cfg.dump())
    sys.stdout.flush()


def _split_dir(root, split: str) -> Path:
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"data directory not found: {root}")
    return root / split if (root / split).is_dir() else root


def cmd_synth(args) -> None:
    cfg = load_config(args.config, args.set)
    _echo(cfg)
    train_ds, test_ds = generate_synthetic(cfg.synth, args.out)
    log.info("wrote %d train and %d test videos to %s", len(train_ds.videos), len(test_ds.videos), args.out)


def cmd_train(args) -> None:
    cfg = load_config(args.config, args.set)
    _echo(cfg)
    size = (cfg.model.height, cfg.model.width)
    dataset = load_dataset(_split_dir(args.data, "train"), role="train", frame_size=size)
    out = Path(args.out)
    log_path = Path(args.log) if args.log else out.with_suffix(".log.csv")
    result = train(
        dataset, cfg.train, cfg.model, cfg.loss, out_path=None, log_path=log_path,
        pipeline_config=cfg.to_dict(),
    )
    ckpt = result.checkpoint
    weights = fit_score_weights(ckpt.generator, dataset, cfg.score.patch, cfg.score.batch_size)
    ckpt.score_weights = (weights.w_f, weights.w_i)
    save_checkpoint(out, ckpt)
    log.info("checkpoint %s (w_F=%.6g, w_I=%.6g), epoch log %s", out, weights.w_f, weights.w_i, log_path)


def cmd_score(args) -> None:
    ckpt = load_checkpoint(args.ckpt)
    cfg = load_config(args.config, args.set, base=ckpt.config)
    if args.method:
        cfg.score.method = args.method
    _echo(cfg)
    # re-validate against the resolved model section
    ckpt = load_checkpoint(args.ckpt, expected=cfg.model)
    seed_everything(cfg.seed, cfg.train.threads)
    opts = cfg.score
    weights = None
    if opts.method != "ssim":
        if ckpt.score_weights is None:
            raise CalibrationError(f"checkpoint {args.ckpt} has no score weights; calibrate it first")
        weights = ScoreWeights(*ckpt.score_weights)
    size = (cfg.model.height, cfg.model.width)
    dataset = load_dataset(_split_dir(args.data, args.split), role="test", frame_size=size)
    records = score_dataset(
        ckpt.generator, weights, dataset, opts.method, opts.lambda_s, opts.normalization, opts.patch, opts.batch_size
    )
    write_scores(args.out, records)
    log.info("wrote %d scores to %s", len(records), args.out)


def cmd_eval(args) -> None:
    cfg = load_config(args.config, args.set)
    _echo(cfg)
    if args.mode == "event" and not args.events:
        raise ConfigError("--mode event requires --events")
    if args.mode != "event" and not args.labels:
        raise ConfigError(f"--mode {args.mode} requires --labels")
    records = read_scores(args.scores)
    if args.mode == "event":
        report = event_report(
            records, read_events(args.events), cfg.eval.persistence_threshold, cfg.eval.merge_distance
        )
    else:
        try:
            report = frame_report(records, read_labels(args.labels), args.mode)
        except ValueError as exc:
            raise DataError(str(exc)) from None
    write_report(args.out, report, curve_path=args.curve, plot_path=args.plot)
    sys.stdout.write("\n".join(report.lines()) + "\n")


def cmd_viz(args) -> None:
    flow = read_flow(args.flow)
    rgb = flow_to_rgb(flow, args.max_mag)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(rgb).save(args.out)
    sys.stdout.write(f"# resolved config\nflow: {args.flow}\nmax_mag: {args.max_mag}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amcvad", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="YAML pipeline config")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config value (repeatable)")
        return p

    p = with_config(sub.add_parser("synth", help="generate the synthetic moving-sprites dataset"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = with_config(sub.add_parser("train", help="train, then calibrate score weights"))
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="epoch log CSV (default: <out>.log.csv)")
    p.set_defaults(func=cmd_train)

    p = with_config(sub.add_parser("score", help="score frames of a dataset"))
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--method", choices=("patch", "motion", "appearance", "ssim"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = with_config(sub.add_parser("eval", help="frame- or event-level evaluation"))
    p.add_argument("--scores", required=True)
    p.add_argument("--labels")
    p.add_argument("--events")
    p.add_argument("--mode", choices=("frame-auc", "frame-ap", "event"), default="frame-auc")
    p.add_argument("--out", required=True)
    p.add_argument("--curve", help="write curve points CSV")
    p.add_argument("--plot", help="write curve plot image")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("viz", help="render a flow file with the direction colour wheel")
    p.add_argument("--flow", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-mag", type=float, default=None, help="magnitude at full saturation")
    p.set_defaults(func=cmd_viz)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        args.func(args)
    except AMCError as exc:
        _fail(exc.kind, str(exc), exc.exit_code)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError) as exc:
        _fail("missing-file", str(exc), DataError.exit_code)
        return DataError.exit_code
    return 0


def _fail(kind: str, message: str, code: int) -> None:
    sys.stderr.write(json.dumps({"error": kind, "exit_code": code, "message": message}) + "\n")


if __name__ == "__main__":
    sys.exit(main())
