"""Experiment orchestration: training, baseline runs, evaluation and CSV output."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .baseline import SearchGrid, myopic_plan
from .config import ExperimentConfig, Scenario
from .ddpg import DdpgAgent, Transition
from .domain import PlanningDecision, validate_plan
from .env import SlicingEnv, StepResult

EPISODE_FIELDS = ["episode", "total_cost", "phi_d", "phi_p", "phi_s", "phi_q", "sla_violations",
                  "critic_loss", "actor_objective"]
COMPARE_FIELDS = ["arrival_rate", "n_seeds", "taws_mean", "taws_std", "baseline_mean",
                  "baseline_std", "gap_pct"]


class TrainingDiverged(RuntimeError):
    pass


def episode_seed(seed: int, episode: int) -> int:
    """Traffic seed of a training episode, derived from the run seed."""
    return int(np.random.SeedSequence([seed, episode]).generate_state(1)[0])


def moving_average(series: Sequence[float], window: int = 5) -> np.ndarray:
    """Centred moving average, truncated at the edges; keeps the length."""
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ValueError("moving_average of an empty series")
    if window < 1:
        raise ValueError("window must be >= 1")
    half = window // 2
    out = np.empty_like(x)
    for i in range(x.size):
        lo, hi = max(0, i - half), min(x.size, i + window - half)
        out[i] = x[lo:hi].mean()
    return out


@dataclass
class WindowRecord:
    window: int
    cost: tuple[float, float, float, float, float]  # phi_d, phi_p, phi_s, phi_q, total
    mean_delay: tuple[float, ...]
    violations: int
    plan: PlanningDecision


@dataclass
class EpisodeRecord:
    index: int
    windows: list[WindowRecord] = field(default_factory=list)
    critic_loss: float = float("nan")
    actor_objective: float = float("nan")

    @property
    def total_cost(self) -> float:
        total = 0.0
        for w in self.windows:
            total += w.cost[4]
        return total

    def component(self, i: int) -> float:
        total = 0.0
        for w in self.windows:
            total += w.cost[i]
        return total

    @property
    def violations(self) -> int:
        return sum(w.violations for w in self.windows)


def _record(step: StepResult, scenario: Scenario) -> WindowRecord:
    viol = sum(int(d > s.deadline) for d, s in zip(step.mean_delay, scenario.slices))
    return WindowRecord(step.window, tuple(step.cost.row()), tuple(float(d) for d in step.mean_delay),
                        viol, step.plan)


@dataclass
class RunMetrics:
    episodes: list[EpisodeRecord]
    wall_clock: float = 0.0

    @property
    def totals(self) -> np.ndarray:
        return np.array([e.total_cost for e in self.episodes])


@dataclass
class TrainingRun:
    metrics: RunMetrics
    agent: DdpgAgent


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_episodes_csv(path, metrics: RunMetrics) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(EPISODE_FIELDS)
        for e in metrics.episodes:
            wr.writerow([e.index, _fmt(e.total_cost), *(_fmt(e.component(i)) for i in range(4)),
                         e.violations, _fmt(e.critic_loss), _fmt(e.actor_objective)])


def write_windows_csv(path, rows: Iterable[tuple[dict, WindowRecord]], n_slices: int) -> None:
    """One row per window; ``rows`` pairs leading key columns with a record."""
    rows = list(rows)
    lead = list(rows[0][0].keys()) if rows else ["episode"]
    header = lead + ["window", "phi_d", "phi_p", "phi_s", "phi_q", "total"]
    header += [f"delay_{k}" for k in range(n_slices)] + ["sla_violations", "active_small", "plan"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for keys, rec in rows:
            wr.writerow([_fmt(keys[c]) if not isinstance(keys[c], str) else keys[c] for c in lead]
                        + [rec.window] + [_fmt(v) for v in rec.cost]
                        + [_fmt(d) for d in rec.mean_delay]
                        + [rec.violations, int(rec.plan.activation.sum()),
                           json.dumps(rec.plan.to_dict(), separators=(",", ":"))])


def run_training(config: ExperimentConfig, episodes: int | None = None, seed: int | None = None,
                 progress: Callable[[EpisodeRecord], None] | None = None) -> TrainingRun:
    """Alternate window rollouts and minibatch updates (one agent, one env)."""
    sc = config.scenario
    episodes = config.episodes if episodes is None else episodes
    seed = config.seed if seed is None else seed
    env = SlicingEnv(sc)
    agent = DdpgAgent(env.state_dim, env.action_dim, config.agent, seed=seed)
    cfg = config.agent
    records = []
    t0 = time.perf_counter()
    for ep in range(episodes):
        state = env.reset(episode_seed(seed, ep))
        rec = EpisodeRecord(ep)
        losses, objectives = [], []
        for _ in range(sc.windows):
            if ep < cfg.warmup_episodes:
                action = agent.random_action()
            else:
                action = agent.act(state)
            step = env.step(action)
            assert not validate_plan(step.plan, sc.topology, sc.n_slices)
            agent.buffer.push(Transition(state, action, step.reward * cfg.reward_scale, step.state))
            if len(agent.buffer) >= cfg.batch_size:
                for _ in range(cfg.updates_per_step):
                    stats = agent.train_step(agent.buffer.sample(cfg.batch_size, agent.rng))
                    if not (math.isfinite(stats.critic_loss) and math.isfinite(stats.actor_objective)):
                        raise TrainingDiverged(
                            f"non-finite loss at episode {ep}, window {step.window}: "
                            f"critic={stats.critic_loss} actor={stats.actor_objective}")
                    losses.append(stats.critic_loss)
                    objectives.append(stats.actor_objective)
            rec.windows.append(_record(step, sc))
            state = step.state
        agent.end_episode()
        if losses:
            rec.critic_loss = float(np.mean(losses))
            rec.actor_objective = float(np.mean(objectives))
        records.append(rec)
        if progress is not None:
            progress(rec)
    return TrainingRun(RunMetrics(records, time.perf_counter() - t0), agent)


def rollout_policy(agent: DdpgAgent, scenario: Scenario, seed: int) -> EpisodeRecord:
    """Deterministic (noise-free) lifecycle under the actor."""
    env = SlicingEnv(scenario)
    state = env.reset(seed)
    rec = EpisodeRecord(seed)
    for _ in range(scenario.windows):
        step = env.step(agent.act(state, explore=False))
        rec.windows.append(_record(step, scenario))
        state = step.state
    return rec


def rollout_baseline(scenario: Scenario, grid: SearchGrid, seed: int) -> EpisodeRecord:
    """Myopic planner over one lifecycle; realised costs include adjustment.

    The planner sees the window density and the current backlogs and plans on
    its own traffic sample drawn from that density.
    """
    env = SlicingEnv(scenario)
    env.reset(seed)
    plan_rng = np.random.default_rng([seed, 0xB5])
    rec = EpisodeRecord(seed)
    for _ in range(scenario.windows):
        sample = env.sample_traffic(env.density, plan_rng)
        plan = myopic_plan(scenario, sample, env.queues, grid).plan
        step = env.step_plan(plan)
        rec.windows.append(_record(step, scenario))
    return rec


def grid_from_config(config: ExperimentConfig) -> SearchGrid:
    b = config.baseline
    return SearchGrid(b.spectrum_step, b.compute_step, b.cloud_values)


def run_baseline(config: ExperimentConfig, seeds: Sequence[int] | None = None,
                 arrival_rate: float | None = None) -> RunMetrics:
    sc = config.scenario if arrival_rate is None else config.scenario.with_arrival_rate(arrival_rate)
    seeds = config.eval_seeds if seeds is None else seeds
    grid = grid_from_config(config)
    t0 = time.perf_counter()
    records = [rollout_baseline(sc, grid, s) for s in seeds]
    return RunMetrics(records, time.perf_counter() - t0)


@dataclass
class Comparison:
    rows: list[dict]
    windows: list[tuple[dict, WindowRecord]]
    episodes: list[dict]


def _mean_std(x: Sequence[float]) -> tuple[float, float]:
    a = np.asarray(x, dtype=float)
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0


def evaluate(agent: DdpgAgent | str | Path, config: ExperimentConfig, seeds: Sequence[int] | None = None,
             arrival_rates: Sequence[float] | None = None, baseline_agent: DdpgAgent | None = None
             ) -> Comparison:
    """TAWS (noise-free actor) vs the myopic planner on shared traffic seeds.

    ``baseline_agent`` replaces the myopic planner by a second policy, which is
    how a policy is compared against itself.
    """
    if not isinstance(agent, DdpgAgent):
        agent = DdpgAgent.load(agent)
    sc0 = config.scenario
    seeds = config.eval_seeds if seeds is None else tuple(seeds)
    rates = config.eval_arrival_rates if arrival_rates is None else tuple(arrival_rates)
    env = SlicingEnv(sc0)
    if (agent.state_dim, agent.action_dim) != (env.state_dim, env.action_dim):
        raise ValueError(f"checkpoint dims {(agent.state_dim, agent.action_dim)} do not match "
                         f"scenario dims {(env.state_dim, env.action_dim)}")
    grid = grid_from_config(config)
    rows, windows, episodes = [], [], []
    for rate in rates:
        sc = sc0.with_arrival_rate(rate)
        taws, base = [], []
        for s in seeds:
            t_rec = rollout_policy(agent, sc, s)
            b_rec = (rollout_policy(baseline_agent, sc, s) if baseline_agent is not None
                     else rollout_baseline(sc, grid, s))
            for scheme, rec in (("taws", t_rec), ("baseline", b_rec)):
                keys = {"scheme": scheme, "arrival_rate": float(rate), "seed": int(s)}
                windows += [(keys, w) for w in rec.windows]
                episodes.append({**keys, "total_cost": rec.total_cost})
            taws.append(t_rec.total_cost)
            base.append(b_rec.total_cost)
        tm, ts = _mean_std(taws)
        bm, bs = _mean_std(base)
        gap = 100.0 * (bm - tm) / abs(bm) if bm != 0 else float("nan")
        rows.append({"arrival_rate": float(rate), "n_seeds": len(seeds), "taws_mean": tm,
                     "taws_std": ts, "baseline_mean": bm, "baseline_std": bs, "gap_pct": gap})
    return Comparison(rows, windows, episodes)


def write_compare_csv(path, comp: Comparison) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(COMPARE_FIELDS)
        for r in comp.rows:
            wr.writerow([_fmt(r[c]) for c in COMPARE_FIELDS])


def write_eval_episodes_csv(path, comp: Comparison) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["scheme", "arrival_rate", "seed", "total_cost"])
        for e in comp.episodes:
            wr.writerow([e["scheme"], _fmt(e["arrival_rate"]), e["seed"], _fmt(e["total_cost"])])


def save_training(run: TrainingRun, config: ExperimentConfig, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_episodes_csv(out / "episodes.csv", run.metrics)
    write_windows_csv(out / "windows.csv",
                      (({"episode": e.index}, w) for e in run.metrics.episodes for w in e.windows),
                      config.scenario.n_slices)
    run.agent.save(out / "checkpoint.npz")
    (out / "config.json").write_text(config.to_json() + "\n", encoding="utf-8")
    (out / "run.json").write_text(json.dumps({"wall_clock_s": run.metrics.wall_clock,
                                              "episodes": len(run.metrics.episodes)}, indent=2) + "\n",
                                  encoding="utf-8")
    return out
