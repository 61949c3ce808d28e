"""Command line front end: ``python -m drow <command> ...``.

Every option can also come from a JSON file given with ``--config``; keys are the
option names with dashes replaced by underscores, and flags on the command line win.
Failures print a single JSON object ``{"error": ..., "message": ...}`` on stderr and
exit with status 1.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .dataio import load_directory, load_scans, split, write_sequence
from .evaluation import (DEFAULT_THRESHOLDS, localization_error, pr_by_distance, pr_curves,
                         write_pr_csvs)
from .geometry import SensorConfig
from .nn.model import build_mlp_baseline, drow_cnn, load_checkpoint, save_checkpoint
from .pipeline import DrowDetector, PredictionCache, oracle_detector
from .preprocess import ABLATIONS
from .synthetic import SyntheticSceneConfig, synthesize
from .train import TrainConfig, build_windows, train
from .tune import TUNE_THRESHOLDS, SearchSpace, objective, random_search
from .vote import VoteConfig

log = logging.getLogger("drow")

SWEEP_RADII = (0.1, 0.3, 0.5, 0.7, 0.9)
DISTANCE_CUTOFFS = tuple(float(d) for d in np.arange(0.5, 30.01, 0.5))


class CliError(Exception):
    pass


def _frames(args, attr="data"):
    path = getattr(args, attr)
    if path is None:
        raise CliError(f"--{attr.replace('_', '-')} is required")
    frames = load_directory(path, SensorConfig())
    if not frames:
        raise CliError(f"no annotated scans found in {path}")
    return frames


def _vote_overrides(args, base: VoteConfig) -> VoteConfig:
    kw = {}
    if getattr(args, "threshold", None) is not None:
        kw["threshold"] = args.threshold
    if getattr(args, "resolution", None) is not None:
        kw["resolution"] = args.resolution
    if getattr(args, "sigma", None) is not None:
        kw["sigma"] = args.sigma
    if getattr(args, "class_weights", None) is not None:
        kw["class_weights"] = tuple(args.class_weights)
    return VoteConfig(**{**base.__dict__, **kw})


def _detector(args) -> DrowDetector:
    if not getattr(args, "checkpoint", None):
        raise CliError("--checkpoint is required")
    det = DrowDetector.from_checkpoint(args.checkpoint)
    det.vote = _vote_overrides(args, det.vote)
    return det


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


# -- commands ----------------------------------------------------------------

def cmd_synth(args):
    cfg = SyntheticSceneConfig(num_scans=args.num_scans, scans_per_scene=args.scans_per_scene,
                               seed=args.seed)
    frames = synthesize(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    by_seq = {}
    for f in frames:
        by_seq.setdefault(f.sequence, []).append(f)
    for name, fs in by_seq.items():
        write_sequence(fs, out / f"{name}.csv")
    _emit({"frames": len(frames), "sequences": len(by_seq), "out": str(out)})


def cmd_train(args):
    sensor = SensorConfig()
    if args.ablation not in ABLATIONS:
        raise CliError(f"unknown ablation {args.ablation!r}; choose from {sorted(ABLATIONS)}")
    pre = ABLATIONS[args.ablation]
    if args.window_length is not None:
        pre = type(pre)(**{**pre.to_dict(), "n": args.window_length})
    frames = _frames(args)
    if args.valid is not None:
        tr, va = frames, load_directory(args.valid, sensor)
    else:
        tr, va, _ = split(frames, (1 - args.valid_fraction, args.valid_fraction, 0.0), args.seed)
    spec = drow_cnn() if args.model == "cnn" else build_mlp_baseline()
    cfg = TrainConfig(epochs=args.epochs, batches_per_epoch=args.batches_per_epoch,
                      batch_size=args.batch_size, seed=args.seed, max_seconds=args.max_seconds)
    model, hist = train(build_windows(tr, pre, sensor), build_windows(va, pre, sensor), spec, cfg,
                        input_length=pre.n, offset_mode=pre.offset_mode)
    meta = {"sensor": sensor.to_dict(), "preprocess": pre.to_dict(),
            "vote": _vote_record(VoteConfig.for_sensor(sensor)),
            "train": {**cfg.to_dict(), "model": args.model, "ablation": args.ablation,
                      "frames": len(tr), "valid_frames": len(va)},
            "history": {"train_loss": hist.train_loss, "valid_loss": hist.valid_loss,
                        "best_epoch": hist.best_epoch}}
    save_checkpoint(model, args.out, meta)
    Path(args.out).with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    _emit({"checkpoint": str(args.out), "best_epoch": hist.best_epoch,
           "valid_loss": min(hist.valid_loss), "seconds": round(hist.seconds, 1)})


def _vote_record(v: VoteConfig) -> dict:
    d = dict(v.__dict__)
    d["class_weights"] = list(d["class_weights"])
    return d


def cmd_detect(args):
    det = _detector(args)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        out.write("seq,x,y,class,score\n")
        for scan in load_scans(args.scans, det.sensor):
            for d in det.detect(scan):
                out.write(f"{scan.seq_id},{d.position[0]:.4f},{d.position[1]:.4f},"
                          f"{d.klass.label},{d.score:.6f}\n")
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_eval(args):
    frames = _frames(args)
    thresholds = args.thresholds or DEFAULT_THRESHOLDS
    if args.oracle:
        run = oracle_detector
    else:
        det = _detector(args)
        run = PredictionCache(det, frames).for_vote(det.vote)
    out = Path(args.out)
    curves = pr_curves(frames, run, thresholds, args.radius)
    write_pr_csvs(out, curves)
    for r in SWEEP_RADII:
        write_pr_csvs(out, pr_curves(frames, run, thresholds, r), suffix=f"_r{r:.1f}")
    best, best_t = curves["agnostic"].best()
    dist = pr_by_distance(frames, run, best_t, DISTANCE_CUTOFFS, args.radius)
    with open(out / "pr_distance.csv", "w") as fh:
        fh.write("distance,precision,recall\n")
        for d, p, r in dist:
            fh.write(f"{d:.6g},{p:.6f},{r:.6f}\n")
    _emit({name: {"best_f1": c.best()[0], "threshold": c.best()[1]} for name, c in curves.items()}
          | {"localization_error": localization_error(frames, run, best_t, args.radius),
             "out": str(out)})


def cmd_tune(args):
    frames = _frames(args)
    det = _detector(args)
    cache = PredictionCache(det, frames)
    thresholds = args.thresholds or TUNE_THRESHOLDS
    best, trials = random_search(SearchSpace(), args.budget, args.seed,
                                 lambda c: objective(c, frames, cache.for_vote, thresholds),
                                 args.log, base=det.vote)
    if args.update_checkpoint:
        model, meta = load_checkpoint(args.checkpoint)
        meta["vote"] = _vote_record(best.config)
        save_checkpoint(model, args.checkpoint, meta)
    _emit(best.record() | {"trials": len(trials)})


def cmd_bench(args):
    det = _detector(args)
    if args.data:
        scans = [f.scan for f in load_directory(args.data, det.sensor)][: args.num_scans]
    else:
        scans = [f.scan for f in synthesize(SyntheticSceneConfig(num_scans=args.num_scans,
                                                                 seed=args.seed))]
    det.detect(scans[0])  # warm-up
    stages = {}
    t0 = time.perf_counter()
    for s in scans:
        _, st = det.detect_timed(s)
        for k, v in st.items():
            stages[k] = stages.get(k, 0.0) + v
    total = time.perf_counter() - t0
    _emit({"scans": len(scans), "seconds": round(total, 4),
           "scans_per_second": round(len(scans) / total, 2),
           "ms_per_scan": {k: round(1e3 * v / len(scans), 3) for k, v in stages.items()}})


def cmd_serve(args):
    from .server import DetectionServer
    det = _detector(args)
    try:
        server = DetectionServer(det, args.host, args.port)
    except OSError as e:
        raise CliError(f"cannot listen on {args.host}:{args.port}: {e.strerror}") from None
    log.info("listening on %s:%d", args.host, server.port)
    print(json.dumps({"listening": [args.host, server.port]}), flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


# -- parser ------------------------------------------------------------------

def _vote_flags(p):
    p.add_argument("--threshold", type=float)
    p.add_argument("--resolution", type=float, help="voting grid cell size in meters")
    p.add_argument("--sigma", type=float, help="blur standard deviation in cells")
    p.add_argument("--class-weights", type=float, nargs=3, metavar=("BG", "WC", "WA"))


def build_parser() -> argparse.ArgumentParser:
    parser = _JsonErrorParser(prog="drow", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with default option values")
    parser.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_JsonErrorParser)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--num-scans", type=int, default=200)
    p.add_argument("--scans-per-scene", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a checkpoint")
    p.add_argument("--data")
    p.add_argument("--valid", help="separate validation directory")
    p.add_argument("--valid-fraction", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.add_argument("--model", choices=("cnn", "mlp"), default="cnn")
    p.add_argument("--ablation", default="drow")
    p.add_argument("--window-length", type=int)
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--batches-per-epoch", type=int, default=TrainConfig.batches_per_epoch)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--max-seconds", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="detect objects in a scan file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scans", required=True)
    p.add_argument("--out")
    _vote_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="write PR curves as CSV")
    p.add_argument("--checkpoint")
    p.add_argument("--oracle", action="store_true", help="evaluate the annotations themselves")
    p.add_argument("--data")
    p.add_argument("--out", required=True)
    p.add_argument("--radius", type=float, default=0.5)
    p.add_argument("--thresholds", type=float, nargs="+")
    _vote_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("tune", help="random search over voting parameters")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--budget", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log", help="trial log (one JSON object per line)")
    p.add_argument("--thresholds", type=float, nargs="+")
    p.add_argument("--update-checkpoint", action="store_true",
                   help="store the best voting parameters in the checkpoint")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("bench", help="measure pipeline throughput")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--num-scans", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    _vote_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="run the TCP detection service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7878)
    _vote_flags(p)
    p.set_defaults(func=cmd_serve)
    return parser


class _JsonErrorParser(argparse.ArgumentParser):
    def error(self, message):
        _fail("UsageError", f"{self.prog}: {message}", status=2)


def _fail(kind: str, message: str, status: int = 1):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    sys.exit(status)


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        values = json.loads(Path(known.config).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise CliError(f"cannot read config {known.config}: {e}") from None
    if not isinstance(values, dict):
        raise CliError("config file must hold a JSON object")
    parser.set_defaults(**values)
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            sp.set_defaults(**values)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(asctime)s %(name)s %(message)s")
        with threadpool_limits(args.threads):
            args.func(args)
    except SystemExit:
        raise
    except Exception as e:  # report every failure as one parseable line
        _fail(type(e).__name__, str(e))
    return 0
