"""Command-line entry point: ``moss pretrain|finetune|eval|stats|expert``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from moss import stats, train
from moss.config import PROFILES, RunConfig, make_config
from moss.errors import MossError

log = logging.getLogger("moss")


def _parse_sets(items: list[str]) -> dict[str, str]:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _seeds(args) -> list[int]:
    if getattr(args, "seeds", None):
        return [int(s) for s in args.seeds.split(",")]
    return [args.seed]


def _configs(args) -> list[RunConfig]:
    overrides = _parse_sets(args.set)
    base = make_config(args.profile, args.config, overrides)
    return [base.replace(seed=s) for s in _seeds(args)]


def _run_dir(args, cfg: RunConfig, multi: bool) -> Path:
    out = Path(args.out_dir)
    return out / f"seed_{cfg.seed}" if multi else out


def _map(fn, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *job) for job in jobs]
        return [f.result() for f in futures]


def _pretrain_job(cfg: RunConfig, out: Path) -> dict:
    res = train.pretrain(cfg, out)
    return {"seed": cfg.seed, "checkpoint": str(res.checkpoint), "seconds": round(res.seconds, 1),
            "mode_counts": res.mode_counts}


def _finetune_job(cfg: RunConfig, out: Path, checkpoint: str | None, force: bool) -> dict:
    res = train.finetune(cfg, out, checkpoint, force=force)
    return {"seed": cfg.seed, "task": cfg.task, "score": res.score, "skill_mode": res.skill_mode}


def _expert_job(cfg: RunConfig, out: Path) -> dict:
    res = train.expert(cfg, out)
    return {"seed": cfg.seed, "task": cfg.task, "score": res.score}


def cmd_pretrain(args) -> int:
    cfgs = _configs(args)
    multi = len(cfgs) > 1
    results = _map(_pretrain_job, [(c, _run_dir(args, c, multi)) for c in cfgs], args.workers)
    for r in results:
        print(json.dumps(r))
    return 0


def _checkpoint_for(args, cfg: RunConfig, multi: bool) -> str | None:
    if args.checkpoint is None:
        return None
    path = Path(args.checkpoint)
    if path.is_dir():
        path = path / f"seed_{cfg.seed}" / "checkpoint.bin" if multi else path / "checkpoint.bin"
    return str(path)


def cmd_finetune(args) -> int:
    cfgs = _configs(args)
    multi = len(cfgs) > 1
    jobs = [(c, _run_dir(args, c, multi), _checkpoint_for(args, c, multi), args.force) for c in cfgs]
    for r in _map(_finetune_job, jobs, args.workers):
        print(json.dumps(r))
    return 0


def cmd_expert(args) -> int:
    cfgs = _configs(args)
    tasks = args.tasks.split(",") if args.tasks else [cfgs[0].task]
    jobs = []
    for task in tasks:
        for c in cfgs:
            jobs.append((c.replace(task=task), Path(args.out_dir) / task / f"seed_{c.seed}"))
    results = _map(_expert_job, jobs, args.workers)
    by_task: dict[str, list[float]] = {}
    for r in results:
        by_task.setdefault(r["task"], []).append(r["score"])
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "expert.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("task", "score"))
        for task, scores in by_task.items():
            w.writerow((task, repr(sum(scores) / len(scores))))
    for r in results:
        print(json.dumps(r))
    return 0


def cmd_eval(args) -> int:
    cfg = _configs(args)[0]
    rows = []
    for mode in (0, 1) if args.mode == "both" else (int(args.mode),):
        rows += train.evaluate(cfg, args.checkpoint, mode, args.episodes, force=args.force)
    if args.output:
        with open(args.output, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=("episode", "mode", "return", "entropy_proxy", "state_entropy_proxy"))
            w.writeheader()
            w.writerows(rows)
    for row in rows:
        print(json.dumps(row))
    return 0


def cmd_stats(args) -> int:
    rows = stats.read_results(args.results)
    expert = stats.read_expert(args.expert)
    report = stats.summarize(stats.score_matrices(rows, expert), args.resamples, args.seed)
    if args.output:
        with open(args.output, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=stats.REPORT_FIELDS)
            w.writeheader()
            w.writerows(report)
    print(stats.format_table(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="moss", description="Mixture-of-surprises skill pretraining on a point mass.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def run_flags(sp, seeds=True):
        sp.add_argument("--profile", choices=sorted(PROFILES), default="desk")
        sp.add_argument("--config", help="YAML or JSON file with RunConfig keys")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
        sp.add_argument("--seed", type=int, default=0)
        if seeds:
            sp.add_argument("--seeds", help="comma-separated seeds, one run directory each")
            sp.add_argument("--workers", type=int, default=1, help="concurrent seed runs")
        sp.add_argument("--out-dir", default="runs")

    sp = sub.add_parser("pretrain", help="reward-free pretraining")
    run_flags(sp)
    sp.set_defaults(func=cmd_pretrain)

    sp = sub.add_parser("finetune", help="skill selection and finetuning on a task")
    run_flags(sp)
    sp.add_argument("--checkpoint", help="checkpoint file or pretrain output dir; omit to train from scratch")
    sp.add_argument("--force", action="store_true", help="load an incompatible checkpoint anyway")
    sp.set_defaults(func=cmd_finetune)

    sp = sub.add_parser("expert", help="from-scratch baseline for score normalization")
    run_flags(sp)
    sp.add_argument("--tasks", help="comma-separated task names (default: the config task)")
    sp.set_defaults(func=cmd_expert)

    sp = sub.add_parser("eval", help="zero-shot rollouts with skills from one mode")
    run_flags(sp, seeds=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--mode", choices=("0", "1", "both"), default="both")
    sp.add_argument("--episodes", type=int, default=10)
    sp.add_argument("--output", help="write per-episode rows to this CSV")
    sp.add_argument("--force", action="store_true")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("stats", help="aggregate results CSVs into IQM / optimality gap")
    sp.add_argument("results", nargs="+", help="results.csv files (method, task, seed, score)")
    sp.add_argument("--expert", required=True, help="expert.csv (task, score)")
    sp.add_argument("--resamples", type=int, default=2000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--output", help="write the report as CSV")
    sp.set_defaults(func=cmd_stats)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (MossError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
