"""Training and evaluation harness.

Interleaves environment rollout under a joint epsilon-greedy policy with
replay training, pausing every ``eval_interval`` environment steps for a
greedy evaluation block. Metric rows are appended to a CSV per
(run, seed); wall-clock timing goes to a sidecar progress log so metric
files stay byte-identical across reruns of the same config and seed.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .comm import BatchedGraphs
from .config import TrainConfig
from .envs import make_env
from .learner import (
    EpisodeRecord,
    EpisodicReplayBuffer,
    Learner,
    LearnerConfig,
    TargetNetworkPair,
)
from .network import EpsilonSchedule, NetworkConfig, PolicyNetwork, joint_epsilon_greedy
from .params import ParameterStore

METRIC_FIELDS = [
    "run_id",
    "seed",
    "env_step",
    "win_rate",
    "mean_defeated_enemies",
    "mean_episode_reward",
    "loss",
    "epsilon",
]

_EP_SEED_STRIDE = 1_000_003
_EVAL_SEED_BASE = 500_000_000


class CheckpointMismatchError(RuntimeError):
    pass


def network_config(env, cfg: TrainConfig) -> NetworkConfig:
    return NetworkConfig(
        obs_width=env.obs_width,
        num_actions=env.num_actions,
        num_classes=env.num_classes,
        width=cfg.hidden_width,
        comm_kind=cfg.comm,
        comm_layers=cfg.comm_layers,
        rgcn_bases=cfg.rgcn_bases,
        gat_heads=cfg.gat_heads,
        leaky_relu_slope=cfg.leaky_relu_slope,
    )


def build_networks(env, cfg: TrainConfig, seed: int):
    """Online and target networks with identical initial values."""
    net_cfg = network_config(env, cfg)
    init_rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    online_store = ParameterStore(trainable=True)
    online_net = PolicyNetwork(online_store, net_cfg, init_rng)
    target_store = ParameterStore(trainable=False)
    target_net = PolicyNetwork(target_store, net_cfg, np.random.default_rng(0))
    pair = TargetNetworkPair(online_store, target_store, cfg.target_sync_interval)
    pair.sync()
    online_store.meta = {"train_config": cfg.to_dict()}
    return pair, online_net, target_net


def greedy_rollout(env, net: PolicyNetwork, seed: int) -> dict:
    """One greedy episode; returns its summary statistics."""
    res = env.reset(seed)
    state = net.initial_state(env.num_agents)
    total = 0.0
    with ad.no_grad():
        while True:
            q, state = net.step(res.observations, BatchedGraphs.single(res.graph), state)
            actions = joint_epsilon_greedy(q.data, res.masks, 0.0, _NULL_RNG)
            res = env.step(actions)
            total += res.reward
            if res.done:
                break
    return {
        "won": bool(res.info.get("won", False)),
        "dead_enemies": int(res.info.get("dead_enemies", 0)),
        "reward": total,
    }


_NULL_RNG = np.random.default_rng(0)  # greedy path never consumes randomness


def evaluate(env, net: PolicyNetwork, episodes: int, base_seed: int) -> dict:
    """Greedy policy for a block of episodes; aggregates plus raw rows."""
    if episodes <= 0:
        raise ValueError("eval episode count must be positive")
    rows = [greedy_rollout(env, net, base_seed + k) for k in range(episodes)]
    return {
        "win_rate": float(np.mean([r["won"] for r in rows])),
        "mean_defeated_enemies": float(np.mean([r["dead_enemies"] for r in rows])),
        "mean_episode_reward": float(np.mean([r["reward"] for r in rows])),
        "episodes": rows,
    }


@dataclass
class _EpisodeAccumulator:
    obs: list
    graphs: list
    masks: list
    actions: list
    rewards: list
    alive: list
    dones: list

    @classmethod
    def empty(cls):
        return cls([], [], [], [], [], [], [])

    def record(self) -> EpisodeRecord:
        return EpisodeRecord(
            np.stack(self.obs), self.graphs, np.stack(self.masks),
            np.stack(self.actions), np.array(self.rewards),
            np.stack(self.alive), np.array(self.dones),
        )


def train_single_seed(cfg: TrainConfig, seed: int, out_dir: str) -> dict:
    """Full training run for one seed; returns paths and final metrics."""
    os.makedirs(out_dir, exist_ok=True)
    run_id = f"{cfg.scenario}_{cfg.comm}_{cfg.mixer}"
    metrics_path = os.path.join(out_dir, "metrics.csv")
    checkpoint_path = os.path.join(out_dir, "checkpoint.npz")
    progress_path = os.path.join(out_dir, "progress.log")

    env = make_env(cfg.scenario, append_class_onehot=cfg.append_class_onehot)
    eval_env = make_env(cfg.scenario, append_class_onehot=cfg.append_class_onehot)
    pair, online_net, target_net = build_networks(env, cfg, seed)
    learner = Learner(
        pair, online_net, target_net,
        LearnerConfig(
            batch_size=cfg.batch_size, gamma=cfg.gamma, mixer=cfg.mixer, lr=cfg.lr,
            l2_coef=cfg.l2_coef, adam_beta1=cfg.adam_beta1, adam_beta2=cfg.adam_beta2,
            adam_eps=cfg.adam_eps, grad_clip_norm=cfg.grad_clip_norm,
            target_sync_interval=cfg.target_sync_interval,
        ),
        np.random.default_rng(np.random.SeedSequence([seed, 11])),
    )
    buffer = EpisodicReplayBuffer(cfg.buffer_capacity)
    schedule = EpsilonSchedule(cfg.eps_min, cfg.eps_max, cfg.eps_decay_steps)
    explore_rng = np.random.default_rng(np.random.SeedSequence([seed, 13]))

    start = time.monotonic()
    with open(metrics_path, "w", newline="") as f:
        csv.writer(f).writerow(METRIC_FIELDS)
    progress = open(progress_path, "w")

    episode_idx = 0
    res = env.reset(seed * _EP_SEED_STRIDE + episode_idx)
    state = online_net.initial_state(env.num_agents)
    acc = _EpisodeAccumulator.empty()
    last_loss = float("nan")
    last_eval = None

    for step in range(1, cfg.steps + 1):
        epsilon = schedule.value(step - 1)
        with ad.no_grad():
            q, state = online_net.step(
                res.observations, BatchedGraphs.single(res.graph), state
            )
        actions = joint_epsilon_greedy(q.data, res.masks, epsilon, explore_rng)
        acc.obs.append(res.observations)
        acc.graphs.append(res.graph)
        acc.masks.append(res.masks)
        acc.actions.append(actions)
        acc.alive.append(res.info["alive"])
        nxt = env.step(actions)
        acc.rewards.append(nxt.reward)
        acc.dones.append(nxt.done)
        if nxt.done:
            buffer.add(acc.record())
            acc = _EpisodeAccumulator.empty()
            episode_idx += 1
            res = env.reset(seed * _EP_SEED_STRIDE + episode_idx)
            state = online_net.initial_state(env.num_agents)
        else:
            res = nxt

        if step % cfg.train_every == 0:
            metrics = learner.train_step(buffer)
            if metrics is not None:
                last_loss = metrics["loss"]

        if step % cfg.eval_interval == 0:
            last_eval = evaluate(
                eval_env, online_net, cfg.eval_episodes,
                seed * _EP_SEED_STRIDE + _EVAL_SEED_BASE + step,
            )
            with open(metrics_path, "a", newline="") as f:
                csv.writer(f).writerow([
                    run_id, seed, step,
                    repr(last_eval["win_rate"]),
                    repr(last_eval["mean_defeated_enemies"]),
                    repr(last_eval["mean_episode_reward"]),
                    repr(float(last_loss)),
                    repr(float(epsilon)),
                ])
            progress.write(
                f"step {step} wall {time.monotonic() - start:.1f}s "
                f"win_rate {last_eval['win_rate']:.3f}\n"
            )
            progress.flush()

    pair.online.save(checkpoint_path)
    progress.write(f"done wall {time.monotonic() - start:.1f}s\n")
    progress.close()
    return {
        "metrics_path": metrics_path,
        "checkpoint_path": checkpoint_path,
        "final_eval": last_eval,
        "run_id": run_id,
    }


def run_train(cfg: TrainConfig, out_root: str) -> list[dict]:
    """Train every seed in the config; one output directory per seed."""
    run_id = f"{cfg.scenario}_{cfg.comm}_{cfg.mixer}"
    results = []
    for seed in cfg.seeds:
        out_dir = os.path.join(out_root, run_id, f"seed{seed}")
        os.makedirs(out_dir, exist_ok=True)
        cfg.save(os.path.join(out_dir, "config.json"))
        results.append(train_single_seed(cfg, seed, out_dir))
    return results


def load_policy(checkpoint_path: str, scenario: str | None = None):
    """Rebuild env and network from a checkpoint; verify dimensions."""
    store = ParameterStore.load(checkpoint_path, trainable=False)
    cfg = TrainConfig.from_dict(store.meta["train_config"])
    env = make_env(scenario or cfg.scenario, append_class_onehot=cfg.append_class_onehot)
    net_cfg = network_config(env, cfg)
    scratch = ParameterStore(trainable=False)
    PolicyNetwork(scratch, net_cfg, np.random.default_rng(0))
    bad = [
        f"{name}: checkpoint {store.params[name].shape} vs scenario {t.shape}"
        if name in store else f"{name}: missing from checkpoint"
        for name, t in scratch.params.items()
        if name not in store or store.params[name].shape != t.shape
    ]
    if bad:
        raise CheckpointMismatchError(
            "checkpoint incompatible with scenario dimensions: " + "; ".join(bad)
        )
    net = PolicyNetwork(store, net_cfg, np.random.default_rng(0))
    return env, net, cfg


def run_eval(checkpoint_path: str, scenario: str | None, episodes: int, seed: int = 0) -> dict:
    """Greedy evaluation of a checkpoint; returns aggregates and raw rows."""
    env, net, _ = load_policy(checkpoint_path, scenario)
    return evaluate(env, net, episodes, seed * _EP_SEED_STRIDE + _EVAL_SEED_BASE)
