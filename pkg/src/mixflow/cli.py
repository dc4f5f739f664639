"""Command-line entry points: ``train``, ``eval`` and ``sweep``.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .evaluate import POLICIES, evaluate, worker_count
from .metrics import ReportError, write_report
from .rl.c51 import NonFiniteLossError
from .rl.checkpoint import CheckpointError, save_checkpoint
from .rl.trainer import train
from .scenario import Scenario, ScenarioError, load_scenario, parse_config_label

log = logging.getLogger("mixflow")


class UsageError(Exception):
    pass


def _load(path: str, args: argparse.Namespace) -> Scenario:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"scenario file not found: {path}")
    scenario = load_scenario(p)
    if getattr(args, "config", None) and isinstance(args.config, str):
        scenario = scenario.with_config(args.config)
    if getattr(args, "rv_rate", None) is not None and not isinstance(args.rv_rate, list):
        scenario = scenario.with_rv_rate(args.rv_rate)
    if getattr(args, "horizon", None) is not None:
        scenario = scenario.with_sim(horizon=float(args.horizon))
    overrides = {}
    if getattr(args, "iterations", None) is not None:
        overrides["iterations"] = args.iterations
    if getattr(args, "seed", None) is not None and args.command == "train":
        overrides["seed"] = args.seed
    if getattr(args, "hidden", None):
        overrides["hidden"] = tuple(int(h) for h in args.hidden.split(","))
    if overrides:
        scenario = scenario.with_train(**overrides)
    return scenario


def _train_to(scenario: Scenario, out: Path, log_path: Optional[Path] = None) -> Path:
    result = train(scenario)
    out.parent.mkdir(parents=True, exist_ok=True)
    ck = result.checkpoint
    out.write_bytes(save_checkpoint(ck.net, ck.config, ck.rng_state, ck.provenance))
    log_path = log_path or out.with_name(out.name + ".log.csv")
    log_path.write_text(result.log_csv(), encoding="utf-8")
    return log_path


def cmd_train(args: argparse.Namespace) -> int:
    scenario = _load(args.scenario, args)
    out = Path(args.out)
    log_path = _train_to(scenario, out, Path(args.log) if args.log else None)
    print(f"checkpoint: {out}\ntraining log: {log_path}")
    return 0


def _read_checkpoint(path: Optional[str]) -> Optional[bytes]:
    if path is None:
        return None
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"checkpoint file not found: {path}")
    data = p.read_bytes()
    from .rl.checkpoint import load_checkpoint
    load_checkpoint(data)  # surface corruption before running anything
    return data


def cmd_eval(args: argparse.Namespace) -> int:
    scenario = _load(args.scenario, args)
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    data = _read_checkpoint(args.checkpoint)
    kind = args.policy
    if kind == "greedy" and data is None and scenario.control.x > 0:
        raise UsageError("--checkpoint is required for greedy evaluation")
    seeds = list(range(args.seed, args.seed + args.runs))
    results = evaluate(scenario, kind, data, seeds)
    out = Path(args.out)
    paths = write_report({scenario.control.label: [r.report for r in results]}, out)
    if args.dump_logs:
        for seed, r in zip(seeds, results):
            (out / f"events_{seed}.log").write_text(r.event_log(), encoding="utf-8")
            (out / f"decisions_{seed}.csv").write_text(r.trace_csv(), encoding="utf-8")
    for p in paths:
        print(p)
    return 0


def _split_list(values: Sequence[str]) -> List[str]:
    out: List[str] = []
    for v in values:
        out.extend(x.strip() for x in v.split(",") if x.strip())
    return out


def _sweep_member(template: Scenario, config: str, rate: float, ckpt_dir: Path, do_train: bool,
                  runs: int, seed: int, label: str) -> Tuple[str, list]:
    try:
        scenario = template.with_config(config).with_rv_rate(rate)
        data = None
        kind = "rule"
        if scenario.control.x > 0:
            path = ckpt_dir / f"{config}_rv{rate:.2f}.mfck"
            if not path.is_file():
                if not do_train:
                    raise UsageError(f"missing checkpoint {path} (pass --train to create it)")
                _train_to(scenario, path)
            data = path.read_bytes()
            kind = "greedy"
        results = evaluate(scenario, kind, data, list(range(seed, seed + runs)), workers=1)
        return label, [r.report for r in results]
    except Exception as exc:
        raise RuntimeError(f"sweep member {label} failed: {exc}") from exc


def cmd_sweep(args: argparse.Namespace) -> int:
    template = _load(args.scenario, args)
    configs = _split_list(args.config or [template.control.label])
    total = len(template.network.intersections)
    for c in configs:
        x, y = parse_config_label(c)
        if x + y != total:
            raise UsageError(f"configuration {c} does not partition {total} intersections")
    baseline = f"0U+{total}S"
    if not any(parse_config_label(c)[0] == 0 for c in configs):
        configs = [baseline] + configs
    rates = [float(r) for r in _split_list(args.rv_rate)] if args.rv_rate else [template.demand.rv_penetration]
    ckpt_dir = Path(args.checkpoint or "checkpoints")
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    # A single rate keeps plain configuration labels so the table matches eval output.
    members = [(c, r, c if len(rates) == 1 else f"{c}@{r:g}") for c in configs for r in rates]
    workers = worker_count()
    if workers > 1 and len(members) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(members))) as pool:
            futures = [pool.submit(_sweep_member, template, c, r, ckpt_dir, args.train, args.runs, args.seed, lab)
                       for c, r, lab in members]
            outputs = [f.result() for f in futures]
    else:
        outputs = [_sweep_member(template, c, r, ckpt_dir, args.train, args.runs, args.seed, lab)
                   for c, r, lab in members]
    columns: Dict[str, list] = dict(outputs)
    paths = write_report(columns, Path(args.out))
    for p in paths:
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixflow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--scenario", required=True, help="scenario JSON document")
        p.add_argument("--horizon", type=float, help="episode length override (s)")
        p.add_argument("--iterations", type=int, help="training iterations override")
        p.add_argument("--hidden", help="hidden layer sizes override, e.g. 64,64,64")

    t = sub.add_parser("train", help="train the shared RV policy")
    common(t)
    t.add_argument("--seed", type=int, help="training seed")
    t.add_argument("--rv-rate", type=float, help="RV penetration override")
    t.add_argument("--config", help="control configuration xU+yS")
    t.add_argument("--out", default="checkpoint.mfck", help="checkpoint path")
    t.add_argument("--log", help="training log CSV path (default: <out>.log.csv)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint over several seeds")
    common(e)
    e.add_argument("--checkpoint", help="checkpoint path")
    e.add_argument("--runs", type=int, default=1)
    e.add_argument("--seed", type=int, default=0, help="first episode seed")
    e.add_argument("--rv-rate", type=float)
    e.add_argument("--config")
    e.add_argument("--policy", choices=POLICIES, default="greedy")
    e.add_argument("--out", default="report")
    e.add_argument("--dump-logs", action="store_true", help="also write event logs and decision traces")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="evaluate xU+yS configurations across RV rates")
    common(s)
    s.add_argument("--config", action="append", help="xU+yS (repeatable or comma separated)")
    s.add_argument("--rv-rate", action="append", help="RV penetration (repeatable or comma separated)")
    s.add_argument("--checkpoint", help="checkpoint directory")
    s.add_argument("--train", action="store_true", help="train missing checkpoints")
    s.add_argument("--runs", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="sweep")
    s.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ScenarioError) as exc:
        print(f"mixflow: error: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, NonFiniteLossError, ReportError, RuntimeError, OSError, ValueError) as exc:
        print(f"mixflow: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
