"""Training runs, greedy evaluation, demonstration files and ablation sweeps."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .agents import (AgentVariant, ExperienceTuple, QTable, ReplayBuffers, TabularAgent,
                     TieBreak, make_key, sample_batch, select_action)
from .errors import ConfigError
from .graph_builder import reward_machine_from_demos
from .gridworld import Demonstration, EnvConfig, ObservationMode, PickPlaceEnv, Task
from .rm_core import RewardMachine, abstraction_index, base_reward, shaped_reward

log = logging.getLogger(__name__)

CSV_COLUMNS = ("run_id", "variant", "seed", "episode", "batch_steps", "success_rate",
               "mean_return", "mean_shaped_return")
DEMO_FORMAT = "rmshaping-demos/1"

# independent random streams per run
ENV_STREAM, POLICY_STREAM, SAMPLING_STREAM, EVAL_STREAM = range(4)


def stream(seed: int, purpose: int, *extra: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=seed, spawn_key=(purpose, *extra))))


@dataclass(frozen=True)
class RunConfig:
    task: Task = Task.STACKING
    width: int = 4
    height: int = 4
    variant: AgentVariant = AgentVariant.QRM
    seed: int = 0
    episodes: int = 200
    epsilon: float = 0.3
    alpha: float = 0.1
    gamma: float = 0.7
    batch_size: int = 64
    train_every: int = 8
    train_cadence: str = "episode"
    demo_count: int = 0
    eval_every: int = 10
    eval_runs: int = 10
    observation_mode: ObservationMode = ObservationMode.FULL
    horizon: int = 8
    randomize_layout: bool = False
    buffer_capacity: int = 1000
    demo_seed: int = 1000
    tie_break: TieBreak = TieBreak.VISITED

    def __post_init__(self):
        try:
            object.__setattr__(self, "task", Task(self.task))
            object.__setattr__(self, "variant", AgentVariant(self.variant))
            object.__setattr__(self, "observation_mode", ObservationMode(self.observation_mode))
            object.__setattr__(self, "tie_break", TieBreak(self.tie_break))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        checks = [
            (0.0 <= self.epsilon <= 1.0, "epsilon must lie in [0, 1]"),
            (0.0 < self.alpha <= 1.0, "alpha must lie in (0, 1]"),
            (0.0 < self.gamma < 1.0, "gamma must lie in (0, 1)"),
            (self.batch_size >= 1, "batch_size must be positive"),
            (self.train_every >= 1, "train_every must be positive"),
            (self.train_cadence in ("episode", "steps"), "train_cadence is 'episode' or 'steps'"),
            (self.demo_count >= 0, "demo_count must be non-negative"),
            (self.episodes >= 0, "episodes must be non-negative"),
            (self.eval_every >= 1, "eval_every must be positive"),
            (self.eval_runs >= 1, "eval_runs must be positive"),
            (self.buffer_capacity >= 1, "buffer_capacity must be positive"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        self.env_config()  # validates grid/horizon

    def env_config(self) -> EnvConfig:
        return EnvConfig(self.task, self.width, self.height, self.horizon,
                         self.observation_mode, self.randomize_layout)

    @property
    def run_id(self) -> str:
        return f"{self.task.value}-{self.variant.value}-d{self.demo_count}-s{self.seed}"

    def to_dict(self) -> dict:
        doc = asdict(self)
        for k, v in doc.items():
            if hasattr(v, "value"):
                doc[k] = v.value
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class MetricsRow:
    run_id: str
    variant: str
    seed: int
    episode: int
    batch_steps: int
    success_rate: float
    mean_return: float
    mean_shaped_return: float

    def csv_fields(self) -> list[str]:
        return [self.run_id, self.variant, str(self.seed), str(self.episode),
                str(self.batch_steps), f"{self.success_rate:.6f}", f"{self.mean_return:.6f}",
                f"{self.mean_shaped_return:.6f}"]


@dataclass(frozen=True)
class EvalResult:
    success_rate: float
    mean_return: float
    mean_shaped_return: float


# -- demonstrations ---------------------------------------------------------------

def scripted_demos(env: PickPlaceEnv, count: int, seed: int) -> list[Demonstration]:
    return [env.scripted_demo(seed + i) for i in range(count)]


def generate_demos(task: Task | str, count: int, seed: int, out: str | Path | None = None,
                   config: EnvConfig | None = None) -> str:
    """Write ``count`` scripted demonstrations as JSON lines after a header line."""
    if count < 0:
        raise ConfigError("demo count must be non-negative")
    config = config or EnvConfig(Task(task))
    if config.task is not Task(task):
        raise ConfigError("task does not match environment config")
    env = PickPlaceEnv(config)
    header = {"header": {
        "format": DEMO_FORMAT, "task": config.task.value, "count": count, "seed": seed,
        "width": config.width, "height": config.height,
        "randomize_layout": config.randomize_layout, "horizon": config.episode_horizon,
    }}
    lines = [json.dumps(header, sort_keys=True)]
    lines += [json.dumps(d.to_dict(), sort_keys=True) for d in scripted_demos(env, count, seed)]
    text = "\n".join(lines) + "\n"
    if out is not None:
        Path(out).write_text(text)
    return text


def load_demos(path: str | Path) -> tuple[dict, list[Demonstration]]:
    header: dict = {}
    demos = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if "header" in doc:
                header = doc["header"]
            else:
                demos.append(Demonstration.from_dict(doc))
    return header, demos


def demo_experiences(env: PickPlaceEnv, demo: Demonstration) -> list[ExperienceTuple]:
    out = []
    for s, a, t in zip(demo.states, demo.actions, demo.states[1:]):
        out.append(ExperienceTuple(env.observe(s).key, env.action_index(a), env.observe(t).key,
                                   env.is_goal(t), env.features(s), env.features(t)))
    return out


def prepare_task(config: RunConfig, n_demos: int) -> tuple[RewardMachine, list[Demonstration]]:
    """Scripted demos for ``config``'s world and the reward machine built from them."""
    env = PickPlaceEnv(config.env_config())
    demos = scripted_demos(env, max(n_demos, 1), config.demo_seed)
    rm, _ = reward_machine_from_demos(env, demos, config.gamma)
    return rm, demos[:n_demos]


# -- training --------------------------------------------------------------------

def evaluate(qtable: QTable, variant: AgentVariant, rm: RewardMachine, env: PickPlaceEnv,
             n_runs: int, seed: int | np.random.Generator,
             tie_break: TieBreak = TieBreak.VISITED) -> EvalResult:
    """Greedy rollouts from fresh resets; success means reaching the goal within the horizon.

    Never touches the table or any replay buffer.
    """
    if n_runs < 1:
        raise ConfigError("n_runs must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, EVAL_STREAM)
    legal = list(range(env.n_actions))
    successes, returns, shaped_returns = 0, 0.0, 0.0
    for _ in range(n_runs):
        state = env.reset(int(rng.integers(2**31)))
        sigma = env.features(state)
        u = abstraction_index(rm, sigma)
        done, disc, ret, shaped = False, 1.0, 0.0, 0.0
        while not done:
            key = make_key(variant, env.observe(state), rm, sigma)
            action = select_action(qtable, key, legal, 0.0, rng, tie_break)
            state, done = env.step(state, action)
            sigma = env.features(state)
            u_next = abstraction_index(rm, sigma)
            ret += disc * base_reward(rm, u_next)
            shaped += disc * shaped_reward(rm, u, u_next)
            disc *= rm.gamma
            u = u_next
        successes += env.is_goal(state)
        returns += ret
        shaped_returns += shaped
    return EvalResult(successes / n_runs, returns / n_runs, shaped_returns / n_runs)


@dataclass
class RunResult:
    rows: list[MetricsRow]
    agent: TabularAgent
    buffers: ReplayBuffers
    batch_steps: int = 0
    table_writes: list[int] = field(default_factory=list)


def train_run(config: RunConfig, rm: RewardMachine | None = None,
              demos: Sequence[Demonstration] | None = None) -> list[MetricsRow]:
    return run_training(config, rm, demos).rows


def run_training(config: RunConfig, rm: RewardMachine | None = None,
                 demos: Sequence[Demonstration] | None = None) -> RunResult:
    """Full training run; a deterministic function of ``config`` and the inputs.

    ``rm`` may be omitted when ``demos`` are given, in which case the machine
    is built from all of them.  The first ``config.demo_count`` demos fill the
    demonstration buffer.
    """
    env = PickPlaceEnv(config.env_config())
    demos = list(demos or [])
    if rm is None:
        if not demos:
            raise ConfigError("training needs a reward machine or demonstrations to build one")
        rm, _ = reward_machine_from_demos(env, demos, config.gamma)
    if config.demo_count > len(demos):
        raise ConfigError(f"demo_count={config.demo_count} but only {len(demos)} demos supplied")
    if rm.catalog != env.catalog:
        raise ConfigError("reward machine propositions do not match the task's feature catalog")

    agent = TabularAgent(config.variant, rm, env.n_actions, config.alpha, config.gamma,
                         config.tie_break)
    buffers = ReplayBuffers(config.buffer_capacity, config.buffer_capacity)
    for d in demos[:config.demo_count]:
        env.replay(d)
        buffers.demo.extend(demo_experiences(env, d))

    env_rng = stream(config.seed, ENV_STREAM)
    policy_rng = stream(config.seed, POLICY_STREAM)
    sample_rng = stream(config.seed, SAMPLING_STREAM)
    result = RunResult([], agent, buffers)

    def train():
        if len(buffers) == 0:
            return
        batch = sample_batch(buffers, config.batch_size, sample_rng)
        result.table_writes.append(agent.train_batch(batch))
        result.batch_steps += 1

    total_steps = 0
    for episode in range(1, config.episodes + 1):
        state = env.reset(int(env_rng.integers(2**31)))
        obs, sigma = env.observe(state).key, env.features(state)
        done = False
        while not done:
            action = agent.act(obs, sigma, config.epsilon, policy_rng)
            nxt, done = env.step(state, action)
            next_obs, next_sigma = env.observe(nxt).key, env.features(nxt)
            buffers.exploration.append(ExperienceTuple(
                obs, action, next_obs, env.is_goal(nxt), sigma, next_sigma))
            state, obs, sigma = nxt, next_obs, next_sigma
            total_steps += 1
            if config.train_cadence == "steps" and total_steps % config.train_every == 0:
                train()
        if config.train_cadence == "episode":
            train()
        if episode % config.eval_every == 0:
            ev = evaluate(agent.qtable, config.variant, rm, env, config.eval_runs,
                          stream(config.seed, EVAL_STREAM, episode), config.tie_break)
            result.rows.append(MetricsRow(config.run_id, config.variant.value, config.seed,
                                          episode, result.batch_steps, ev.success_rate,
                                          ev.mean_return, ev.mean_shaped_return))
    return result


# -- CSV / ablation -----------------------------------------------------------------

def rows_to_csv(rows: Iterable[MetricsRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.csv_fields())
    return buf.getvalue()


def read_csv_rows(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def auc(rows: Iterable[MetricsRow]) -> float:
    """Area under the success curve: the sum of evaluated success rates."""
    return math.fsum(r.success_rate for r in rows)


@dataclass
class AblationResult:
    rows: list[MetricsRow]
    auc: dict[tuple[str, int, int], float]
    errors: list[dict] = field(default_factory=list)

    def summary_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("variant", "demo_count", "seed", "auc"))
        for (variant, demo_count, seed), value in sorted(self.auc.items()):
            writer.writerow((variant, demo_count, seed, f"{value:.6f}"))
        return buf.getvalue()


def _ablation_job(args):
    config, rm, demos = args
    return config, train_run(config, rm, demos)


def ablate(base_config: RunConfig, variants: Sequence[AgentVariant | str],
           demo_counts: Sequence[int], seeds: Sequence[int],
           out_dir: str | Path | None = None, workers: int = 1) -> AblationResult:
    """Every (variant, demo count, seed) combination of ``base_config``.

    One reward machine, built from the largest demo set, is shared by all
    runs.  Rows are sorted by ``(run_id, episode)`` before writing, so the
    output does not depend on ``workers``.  A failing run stops the sweep;
    whatever finished is still written, together with ``errors.json``.
    """
    if not variants or not demo_counts or not seeds:
        raise ConfigError("variants, demo_counts and seeds must all be non-empty")
    rm, demos = prepare_task(base_config, max(demo_counts))
    jobs = [(replace(base_config, variant=AgentVariant(v), demo_count=d, seed=s), rm, demos)
            for v in variants for d in demo_counts for s in seeds]
    rows: list[MetricsRow] = []
    aucs: dict[tuple[str, int, int], float] = {}
    errors: list[dict] = []

    def collect(config, run_rows):
        rows.extend(run_rows)
        aucs[(config.variant.value, config.demo_count, config.seed)] = auc(run_rows)

    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(_ablation_job, job) for job in jobs]
            for job, fut in zip(jobs, futures):
                try:
                    collect(*fut.result())
                except Exception as exc:  # noqa: BLE001 - recorded in the manifest
                    errors.append({"run_id": job[0].run_id, "error": repr(exc)})
                    for f in futures:
                        f.cancel()
                    break
    else:
        for job in jobs:
            try:
                collect(*_ablation_job(job))
            except Exception as exc:  # noqa: BLE001 - recorded in the manifest
                errors.append({"run_id": job[0].run_id, "error": repr(exc)})
                break
    rows.sort(key=lambda r: (r.run_id, r.episode))
    result = AblationResult(rows, aucs, errors)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(rows_to_csv(rows))
        (out / "summary.csv").write_text(result.summary_csv())
        if errors:
            (out / "errors.json").write_text(json.dumps(errors, indent=2))
    return result
