"""Command-line entry point: ``disentangle3d <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .exceptions import Disentangle3DError
from .grad import check_gradient, default_context, disentangled_objective, entangled_objective, sample_theta
from .geometry import lift

EXIT_FAILED_CHECK = 1
EXIT_ERROR = 3
EXIT_IO = 4


def _write_json(path, payload):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n")


def cmd_eval(args):
    from .evaluation.kitti import DIFFICULTIES, KittiEvaluator
    from .kitti_io import parse_detections, parse_labels, read_dataset

    gts = read_dataset(args.gt, parse_labels)
    if not gts:
        raise Disentangle3DError(f"no label files found in {args.gt}")
    dets = read_dataset(args.det, parse_detections, names=list(gts))
    grids = {"r11": ("R11",), "r40": ("R40",), "both": ("R11", "R40")}[args.grid]
    criteria = ("2d", "bev", "3d") if args.criterion == "all" else (args.criterion,)
    evaluator = KittiEvaluator(args.class_name, args.iou, criteria, grids, args.min_score)
    report = evaluator.evaluate(dets, gts)
    for task in criteria:
        for grid in grids:
            vals = "  ".join(f"{d}={report.ap(task, d, grid):.6f}" for d in DIFFICULTIES)
            print(f"{args.class_name} {task:>3} AP|{grid}: {vals}")
    if args.out:
        _write_json(args.out, report.to_dict())
    if args.curves_dir:
        out = Path(args.curves_dir)
        out.mkdir(parents=True, exist_ok=True)
        for task, diffs in report.curves.items():
            for diff, per in diffs.items():
                for grid, curve in per.items():
                    rows = ["recall,interpolated_precision"]
                    rows += [f"{r!r},{p!r}" for r, p in zip(curve.recall_grid, curve.interpolated)]
                    (out / f"{task}_{diff}_{grid}.csv").write_text("\n".join(rows) + "\n")
    return 0


def cmd_eval_nusc(args):
    from .evaluation.nuscenes import evaluate_nuscenes_car
    from .kitti_io import read_nusc_boxes

    gts = read_nusc_boxes(args.gt, with_score=False)
    dets = read_nusc_boxes(args.det, with_score=True)
    report = evaluate_nuscenes_car(dets, gts, min_precision=None if args.no_precision_floor else 0.1)
    for d, ap in report.ap.items():
        print(f"AP@{d:g}m = {ap:.6f}")
    print(f"mAP = {report.mAP:.6f}")
    for name, v in (("ATE", report.ate), ("ASE", report.ase), ("AOE", report.aoe)):
        print(f"{name} = {v:.6f}")
    if args.out:
        _write_json(args.out, report.to_dict())
    return 0


def cmd_toy(args):
    from .toyopt import MODES, SgdConfig, compare_runs, load_fixture, run_summary, run_toy

    fixture = load_fixture(args.fixture)
    cfg = SgdConfig(args.lr, args.momentum, args.weight_decay, args.iters)
    modes = MODES if args.mode == "both" else (args.mode,)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    logs = {}
    for mode in modes:
        log = run_toy(fixture.init_theta, fixture.gt, cfg, mode, raise_on_divergence=False)
        log.to_csv(out / f"trajectory_{mode}.csv", args.log_every)
        logs[mode] = log
        status = f"aborted ({log.message})" if log.aborted else "completed"
        print(f"{mode}: {status}, final entangled L3D = {log.losses[-1]:.6f}")
    if len(logs) == 2:
        summary = compare_runs(logs["entangled"], logs["disentangled"])
    else:
        summary = {m: run_summary(log) for m, log in logs.items()}
    _write_json(out / "summary.json", summary)
    return 0


def cmd_preprocess(args):
    from .kitti_io import PreprocessReport, preprocess_labels, read_label_rows, write_label_rows

    src, dst = Path(args.labels), Path(args.out)
    files = sorted(src.glob("*.txt"))
    if not files:
        raise Disentangle3DError(f"no label files found in {src}")
    dst.mkdir(parents=True, exist_ok=True)
    total = PreprocessReport()
    for path in files:
        rows, rep = preprocess_labels(read_label_rows(path), args.classes, args.dontcare_iou, args.coverage)
        write_label_rows(dst / path.name, rows)
        total += rep
    print(total.summary("/".join(args.classes)))
    return 0


def cmd_gradcheck(args):
    rng = np.random.default_rng(args.seed)
    ctx = default_context()
    worst = {"entangled": 0.0, "disentangled": 0.0}
    for _ in range(args.trials):
        theta = sample_theta(rng, ctx)
        gt = lift(sample_theta(rng, ctx))
        for name, fn in (("entangled", entangled_objective), ("disentangled", disentangled_objective)):
            worst[name] = max(worst[name], check_gradient(fn, theta, gt, args.step).max_rel_err)
    failed = False
    for name, err in worst.items():
        ok = err < args.tol
        failed |= not ok
        print(f"{name}: max_rel_err = {err:.6e} over {args.trials} trials [{'PASS' if ok else 'FAIL'}]")
    return EXIT_FAILED_CHECK if failed else 0


def cmd_ap_flaw_demo(args):
    from .evaluation.kitti import evaluate_kitti
    from .evaluation.synthetic import single_detection_scenario

    dets, gts = single_detection_scenario(args.gt_count)
    report = evaluate_kitti(dets, gts, "Car", criteria=("3d",))
    print(f"one correct detection per difficulty, {args.gt_count} ground-truth cars per difficulty")
    for diff, per in report.results["3d"].items():
        print(f"{diff:>8}: AP|R11 = {per['R11']:.6f}   AP|R40 = {per['R40']:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="disentangle3d", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="KITTI-style AP on 2D / BEV / 3D boxes")
    p.add_argument("--gt", required=True, help="directory of KITTI label files")
    p.add_argument("--det", required=True, help="directory of KITTI result files")
    p.add_argument("--class", dest="class_name", default="Car")
    p.add_argument("--grid", choices=("r11", "r40", "both"), default="both")
    p.add_argument("--criterion", choices=("2d", "bev", "3d", "all"), default="all")
    p.add_argument("--iou", type=float, default=None, help="IoU threshold (default: 0.7 car, 0.5 otherwise)")
    p.add_argument("--min-score", type=float, default=None, help="drop detections below this score")
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--curves-dir", help="write one CSV per PR curve here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("eval-nusc", help="center-distance AP and TP errors for cars")
    p.add_argument("--gt", required=True, help="CSV: sample,x,y,z,w,l,h,yaw")
    p.add_argument("--det", required=True, help="CSV: sample,x,y,z,w,l,h,yaw,score")
    p.add_argument("--no-precision-floor", action="store_true", help="do not clip precision below 10%%")
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=cmd_eval_nusc)

    p = sub.add_parser("toy", help="entangled vs disentangled single-box optimization")
    p.add_argument("--fixture", default=None, help="fixture file (default: packaged fixture)")
    p.add_argument("--mode", choices=("entangled", "disentangled", "both"), default="both")
    p.add_argument("--iters", type=int, default=3000)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--log-every", type=int, default=1)
    p.add_argument("--out-dir", default="toy_out")
    p.set_defaults(func=cmd_toy)

    p = sub.add_parser("preprocess", help="DontCare conversion and occlusion filtering of labels")
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classes", nargs="+", default=["Car"])
    p.add_argument("--dontcare-iou", type=float, default=0.5)
    p.add_argument("--coverage", type=float, default=0.95)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("gradcheck", help="compare exact gradients with central differences")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ap-flaw-demo", help="AP|R11 vs AP|R40 for a single correct detection")
    p.add_argument("--gt-count", type=int, default=100)
    p.set_defaults(func=cmd_ap_flaw_demo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (Disentangle3DError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
