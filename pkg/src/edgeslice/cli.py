"""Command line entry point: ``edgeslice {train,baseline,eval,simulate}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .config import ConfigError, ExperimentConfig, load_config
from .domain import PlanningDecision
from .env import SlicingEnv
from .kernels import BACKEND

log = logging.getLogger("edgeslice")


def balanced_plan(config: ExperimentConfig) -> PlanningDecision:
    """All stations on, capacity split evenly across slices, one cloud VM each."""
    sc = config.scenario
    topo, K = sc.topology, sc.n_slices
    b = np.tile(topo.subcarrier_caps // K, (K, 1))
    c = np.tile(topo.vm_caps // K, (K, 1))
    return PlanningDecision(np.ones(topo.n_small, dtype=np.int64), b, c, np.ones(K, dtype=np.int64))


def _config(args) -> ExperimentConfig:
    overrides = {}
    if args.seed is not None:
        overrides["training"] = {"seed": args.seed}
    if getattr(args, "episodes", None) is not None:
        overrides.setdefault("training", {})["episodes"] = args.episodes
    return load_config(args.config, overrides)


def _out(args, config: ExperimentConfig) -> Path:
    out = Path(args.out or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    config = _config(args)
    out = _out(args, config)

    def progress(rec):
        if args.verbose or (rec.index + 1) % 25 == 0:
            log.info("episode %d  cost %.3f  violations %d", rec.index, rec.total_cost, rec.violations)

    run = harness.run_training(config, progress=progress)
    harness.save_training(run, config, out)
    totals = run.metrics.totals
    if totals.size:
        print(f"trained {totals.size} episodes in {run.metrics.wall_clock:.1f}s; "
              f"first cost {totals[0]:.3f}, last cost {totals[-1]:.3f}")
    else:
        print("no episodes requested; wrote the initial checkpoint")
    print(f"outputs in {out}")
    return 0


def _write_baseline(out: Path, metrics: harness.RunMetrics, seeds, n_slices: int) -> None:
    with open(out / "episodes.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["seed", "total_cost", "phi_d", "phi_p", "phi_s", "phi_q", "sla_violations"])
        for s, e in zip(seeds, metrics.episodes):
            wr.writerow([s, repr(e.total_cost), *(repr(e.component(i)) for i in range(4)), e.violations])
    harness.write_windows_csv(out / "windows.csv",
                              (({"seed": s}, w) for s, e in zip(seeds, metrics.episodes)
                               for w in e.windows), n_slices)


def cmd_baseline(args) -> int:
    config = _config(args)
    out = _out(args, config)
    seeds = (args.seed,) if args.seed is not None else config.eval_seeds
    metrics = harness.run_baseline(config, seeds, args.arrival_rate)
    _write_baseline(out, metrics, seeds, config.scenario.n_slices)
    for s, e in zip(seeds, metrics.episodes):
        print(f"seed {s}: lifecycle cost {e.total_cost:.3f}, SLA violations {e.violations}")
    return 0


def cmd_eval(args) -> int:
    config = _config(args)
    out = _out(args, config)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "checkpoint.npz"
    seeds = (args.seed,) if args.seed is not None else None
    comp = harness.evaluate(ckpt, config, seeds)
    harness.write_compare_csv(out / "compare.csv", comp)
    harness.write_eval_episodes_csv(out / "eval_episodes.csv", comp)
    harness.write_windows_csv(out / "eval_windows.csv", comp.windows, config.scenario.n_slices)
    print(f"{'rate':>6} {'taws':>18} {'baseline':>18} {'gap %':>8}")
    for r in comp.rows:
        print(f"{r['arrival_rate']:6.2f} {r['taws_mean']:9.3f} ± {r['taws_std']:6.3f} "
              f"{r['baseline_mean']:9.3f} ± {r['baseline_std']:6.3f} {r['gap_pct']:8.2f}")
    return 0


def cmd_simulate(args) -> int:
    config = _config(args)
    sc = config.scenario
    if args.plan:
        plan = PlanningDecision.from_dict(json.loads(Path(args.plan).read_text(encoding="utf-8")))
    else:
        plan = balanced_plan(config)
    env = SlicingEnv(sc)
    env.reset(args.seed if args.seed is not None else config.seed)
    step = env.step_plan(plan)
    res = step.result
    print("slot slice has_tasks delay offload edge cloud")
    for t in range(res.delay.shape[0]):
        for k in range(sc.n_slices):
            print(f"{t:4d} {k:5d} {int(res.has_tasks[t, k]):9d} {res.delay[t, k]:.6f} "
                  f"{res.offload[t, k]:.6f} {res.edge[t, k]:.6f} {res.cloud[t, k]:.6f}")
    print("mean delay per slice: " + ", ".join(f"{d:.6f}" for d in step.mean_delay))
    c = step.cost
    print(f"cost: deployment {c.deployment:.4f} provisioning {c.provisioning:.4f} "
          f"adjustment {c.adjustment:.4f} revenue {c.sla_revenue:.4f} total {c.total:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edgeslice", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, episodes=False):
        sp.add_argument("--config", help="JSON config (defaults built in)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        if episodes:
            sp.add_argument("--episodes", type=int)

    sp = sub.add_parser("train", help="train the planning agent")
    common(sp, episodes=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("baseline", help="run the myopic planner")
    common(sp)
    sp.add_argument("--arrival-rate", type=float)
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("eval", help="compare a checkpoint against the myopic planner")
    common(sp)
    sp.add_argument("--checkpoint", help="defaults to <out>/checkpoint.npz")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("simulate", help="one plan, one window, per-slot delays")
    common(sp)
    sp.add_argument("--plan", help="plan JSON (default: balanced plan)")
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    log.debug("kernel backend: %s", BACKEND)
    try:
        return args.func(args)
    except (ConfigError, ValueError, harness.TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
