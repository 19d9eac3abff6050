"""Command-line front end: ``rrnet {train,eval,gradcheck,sweep,synth}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config, resolve, sweep_cells, to_lines
from .errors import FormatError, NumericError, RRNetError
from .runner import evaluate_checkpoint, run_gradcheck, run_once, run_repeats, seeded

log = logging.getLogger("rrnet")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else resolve([])
    if getattr(args, "seed", None) is not None:
        cfg = seeded(cfg, args.seed)
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    return cfg


def cmd_train(args) -> int:
    cfg = _config(args)
    started = time.perf_counter()
    summary = run_repeats(cfg, Path(cfg.out_dir))
    for name, (mean, std) in summary.items():
        print(f"test {name}: {mean:.4f}" + (f" +/- {std:.4f}" if cfg.repeats > 1 else ""))
    print(f"wrote {cfg.out_dir} in {time.perf_counter() - started:.1f}s")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    for name, value in evaluate_checkpoint(cfg, args.checkpoint).items():
        print(f"test {name}: {value:.6f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    report = run_gradcheck(seed=seed, tolerance=args.tolerance)
    for line in report.lines():
        print(line)
    status = "PASS" if report.passed else "FAIL"
    print(f"{status}: worst relative error {report.worst:.3e} (tolerance {args.tolerance:g})")
    return EXIT_OK if report.passed else EXIT_FAIL


def _sweep_cell(item):
    assignment, cfg = item
    result = run_once(cfg)
    row = dict(assignment)
    row["final_loss"] = repr(result.report.losses[-1])
    for name, value in result.test.items():
        row[f"test_{name}"] = repr(value)
    return row


def cmd_sweep(args) -> int:
    cfg = _config(args)
    cells = sweep_cells(cfg)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.txt").write_text("\n".join(to_lines(cfg)) + "\n")
    path = out / "sweep.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {len(rows)} sweep rows to {path}")
    return EXIT_OK


def cmd_synth(args) -> int:
    """Write a synthetic mapping task as feature files plus a config that reads them."""
    from .data import gen_synthetic_task

    cfg = _config(args)
    s = cfg.synth
    ds = gen_synthetic_task(s.n, s.clusters, (s.dim1, s.dim2), s.noise, s.seed, s.latent_dim)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "features1.csv", ds.features1, delimiter=",", fmt="%.17g")
    np.savetxt(out / "features2.csv", ds.features2, delimiter=",", fmt="%.17g")
    np.savetxt(out / "confidence.csv", ds.confidence, delimiter=",", fmt="%.17g")
    (out / "truth.txt").write_text("".join(f"{i} {j}\n" for i, j in ds.records))
    files = {k: str((out / f"{k}.csv").resolve()) for k in ("features1", "features2", "confidence")}
    lines = [line for line in to_lines(cfg) if not line.startswith(("data.features", "data.confidence",
                                                                     "data.truth", "out_dir"))]
    lines += [f"data.{k}={v}" for k, v in files.items()]
    lines += [f"data.truth={(out / 'truth.txt').resolve()}", f"out_dir={(out / 'run').resolve()}"]
    (out / "task.cfg").write_text("\n".join(lines) + "\n")
    print(f"wrote synthetic task ({s.n} per modality, {s.clusters} clusters) to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rrnet", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="key=value config file")
        p.add_argument("--seed", type=int, help="override every seed in the config")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("train", help="build graphs, train, write metrics and checkpoint")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on the test split")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check on a tiny bundle")
    p.add_argument("--config", help="ignored; accepted for symmetry")
    p.add_argument("--seed", type=int)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("sweep", help="train every cell of the sweep axes")
    common(p)
    p.add_argument("--jobs", type=int, default=1, help="cells to run in parallel")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="write a synthetic task to disk")
    common(p, config_required=False)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, NumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except RRNetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
