"""Off-policy training: episodic replay, double-Q targets with IQL or VDN
mixing, masked TD loss and periodic target-network synchronization.

Replay batches are padded to the longest episode and pushed through the
network one time step at a time with all (episode, agent) rows stacked;
per-episode communication graphs become one block-diagonal structure.
Invalid (padding) steps, dead agents and actions outside an agent's class
action set contribute exactly zero to the loss and its gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .comm import BatchedGraphs
from .network import NEG_INF, PolicyNetwork
from .params import ParameterStore, adam_step


def vdn_mix(agent_q_values):
    """Additive team value: the exact sum of per-agent chosen Q values."""
    if isinstance(agent_q_values, Tensor):
        return ad.tensor_sum(agent_q_values)
    return float(np.sum(agent_q_values))


class EpisodeRecord:
    """One full episode: per-step observations, graphs, masks, joint action,
    shared reward and liveness. The terminal flag sits at the last step."""

    def __init__(self, obs, graphs, masks, actions, rewards, alive, dones):
        self.obs = np.asarray(obs, dtype=np.float64)  # (T, N, D)
        self.graphs = list(graphs)  # length T
        self.masks = np.asarray(masks, dtype=bool)  # (T, N, A)
        self.actions = np.asarray(actions, dtype=np.int64)  # (T, N)
        self.rewards = np.asarray(rewards, dtype=np.float64)  # (T,)
        self.alive = np.asarray(alive, dtype=bool)  # (T, N)
        dones = np.asarray(dones, dtype=bool)
        if not dones[-1] or dones[:-1].any():
            raise ValueError("episode must carry exactly one terminal flag, at the last step")
        self.length = len(self.rewards)
        counts = {g.num_nodes for g in self.graphs}
        if counts != {self.obs.shape[1]}:
            raise ValueError("graphs must reference the same agent count as the observations")


class EpisodicReplayBuffer:
    """Ring buffer of whole episodes; eviction is oldest-first."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._episodes: list[EpisodeRecord] = []
        self._next = 0
        self.insertions = 0

    def __len__(self):
        return len(self._episodes)

    def add(self, episode: EpisodeRecord):
        if len(self._episodes) < self.capacity:
            self._episodes.append(episode)
        else:
            self._episodes[self._next] = episode
            self._next = (self._next + 1) % self.capacity
        self.insertions += 1

    def sample(self, rng: np.random.Generator, k: int) -> list[EpisodeRecord]:
        if len(self._episodes) == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(len(self._episodes), size=k)
        return [self._episodes[i] for i in idx]


@dataclass
class EpisodeBatch:
    """Episodes padded to a common length, with per-step stacked rows."""

    num_episodes: int
    num_agents: int
    num_actions: int
    max_length: int
    obs: list[np.ndarray]  # per t: (B*N, D)
    graphs: list[BatchedGraphs]  # per t
    masks: list[np.ndarray]  # per t: (B*N, A)
    actions: list[np.ndarray]  # per t: (B*N,)
    rewards: np.ndarray  # (B, T)
    alive: list[np.ndarray]  # per t: (B*N,) float, 0 for dead agents
    valid: np.ndarray  # (B, T) bool, False on padding steps
    terminal: np.ndarray  # (B, T) bool, True at each episode's last step


def make_batch(episodes: list[EpisodeRecord]) -> EpisodeBatch:
    if not episodes:
        raise ValueError("empty episode batch")
    b = len(episodes)
    n = episodes[0].obs.shape[1]
    a = episodes[0].masks.shape[2]
    t_max = max(e.length for e in episodes)

    def step_of(e, t):
        return min(t, e.length - 1)  # padding repeats the last step

    obs, graphs, masks, actions, alive = [], [], [], [], []
    for t in range(t_max):
        obs.append(np.concatenate([e.obs[step_of(e, t)] for e in episodes], axis=0))
        graphs.append(BatchedGraphs([e.graphs[step_of(e, t)] for e in episodes]))
        masks.append(np.concatenate([e.masks[step_of(e, t)] for e in episodes], axis=0))
        actions.append(np.concatenate([e.actions[step_of(e, t)] for e in episodes]))
        alive.append(
            np.concatenate([e.alive[step_of(e, t)] for e in episodes]).astype(np.float64)
        )
    rewards = np.zeros((b, t_max))
    valid = np.zeros((b, t_max), dtype=bool)
    terminal = np.zeros((b, t_max), dtype=bool)
    for i, e in enumerate(episodes):
        rewards[i, : e.length] = e.rewards
        valid[i, : e.length] = True
        terminal[i, e.length - 1] = True
    return EpisodeBatch(b, n, a, t_max, obs, graphs, masks, actions, rewards, alive, valid, terminal)


def _unroll_data(net: PolicyNetwork, batch: EpisodeBatch) -> list[np.ndarray]:
    """Forward the whole batch without gradient tracking; returns per-step Q arrays."""
    out = []
    with ad.no_grad():
        state = net.initial_state(batch.num_episodes * batch.num_agents)
        for t in range(batch.max_length):
            q, state = net.step(batch.obs[t], batch.graphs[t], state)
            out.append(q.data)
    return out


def _targets_from_q(
    batch: EpisodeBatch,
    q_online: list[np.ndarray],
    q_target: list[np.ndarray],
    gamma: float,
    mixer: str,
) -> np.ndarray:
    """Double-Q targets: online argmax selects, target network evaluates.

    Returns (B, T) team targets under vdn, (B, T, N) per-agent targets
    under iql. Entries at invalid steps are zero.
    """
    b, n, t_max = batch.num_episodes, batch.num_agents, batch.max_length
    if mixer == "vdn":
        y = np.zeros((b, t_max))
    else:
        y = np.zeros((b, t_max, n))
    for t in range(t_max):
        r = batch.rewards[:, t]
        term = batch.terminal[:, t]
        if mixer == "vdn":
            y[:, t] = r
        else:
            y[:, t, :] = r[:, None]
        if t + 1 < t_max and not term.all():
            q_next = np.where(batch.masks[t + 1], q_online[t + 1], NEG_INF)
            a_star = q_next.argmax(axis=1)  # (B*N,)
            tval = q_target[t + 1][np.arange(b * n), a_star] * batch.alive[t + 1]
            tval = tval.reshape(b, n)
            cont = ~term
            if mixer == "vdn":
                y[cont, t] += gamma * tval.sum(axis=1)[cont]
            else:
                y[cont, t, :] += gamma * tval[cont]
    if mixer == "vdn":
        y *= batch.valid
    else:
        y *= batch.valid[:, :, None]
    return y


def double_q_targets(
    episodes: list[EpisodeRecord],
    online_net: PolicyNetwork,
    target_net: PolicyNetwork,
    gamma: float = 0.99,
    mixer: str = "vdn",
) -> np.ndarray:
    """Per-step targets for an episode batch (see :func:`_targets_from_q`)."""
    batch = make_batch(episodes)
    return _targets_from_q(
        batch, _unroll_data(online_net, batch), _unroll_data(target_net, batch), gamma, mixer
    )


def td_loss(
    episodes: list[EpisodeRecord],
    online_net: PolicyNetwork,
    target_net: PolicyNetwork,
    gamma: float = 0.99,
    mixer: str = "vdn",
) -> Tensor:
    """Mean squared TD error over valid steps with stop-gradient targets.

    Under vdn the error is per (episode, step) on the summed team value;
    under iql it is per (episode, step, living agent).
    """
    if mixer not in ("vdn", "iql"):
        raise ValueError(f"unknown mixer {mixer!r}")
    batch = make_batch(episodes)
    b, n, t_max = batch.num_episodes, batch.num_agents, batch.max_length

    q_target = _unroll_data(target_net, batch)
    state = online_net.initial_state(b * n)
    q_steps: list[Tensor] = []
    for t in range(t_max):
        q, state = online_net.step(batch.obs[t], batch.graphs[t], state)
        q_steps.append(q)
    y = _targets_from_q(batch, [q.data for q in q_steps], q_target, gamma, mixer)

    loss = None
    if mixer == "vdn":
        n_terms = float(batch.valid.sum())
    else:
        alive_valid = [batch.alive[t] * np.repeat(batch.valid[:, t], n) for t in range(t_max)]
        n_terms = float(sum(w.sum() for w in alive_valid))
    for t in range(t_max):
        onehot = np.zeros((b * n, batch.num_actions))
        onehot[np.arange(b * n), batch.actions[t]] = 1.0
        chosen = ad.tensor_sum(ad.mul(q_steps[t], Tensor(onehot)), axis=1)  # (B*N,)
        if mixer == "vdn":
            per_agent = ad.mul(chosen, Tensor(batch.alive[t]))
            team = ad.tensor_sum(per_agent.reshape((b, n)), axis=1)  # (B,)
            diff = ad.mul(ad.sub(team, Tensor(y[:, t])), Tensor(batch.valid[:, t].astype(float)))
        else:
            diff = ad.mul(ad.sub(chosen, Tensor(y[:, t].reshape(-1))), Tensor(alive_valid[t]))
        term = ad.tensor_sum(ad.square(diff))
        loss = term if loss is None else ad.add(loss, term)
    return ad.mul(loss, 1.0 / max(n_terms, 1.0))


@dataclass
class TargetNetworkPair:
    """Online parameters plus a frozen copy refreshed every sync_interval
    optimizer steps."""

    online: ParameterStore
    target: ParameterStore
    sync_interval: int = 250

    def sync(self):
        self.target.copy_values_from(self.online)

    def maybe_sync(self) -> bool:
        if self.online.step_count % self.sync_interval == 0:
            self.sync()
            return True
        return False


@dataclass
class LearnerConfig:
    batch_size: int = 32
    gamma: float = 0.99
    mixer: str = "vdn"
    lr: float = 2.5e-4
    l2_coef: float = 1e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip_norm: float | None = None
    target_sync_interval: int = 250


class Learner:
    """Owns the train step: sample, loss, backward, optimize, sync."""

    def __init__(
        self,
        networks: TargetNetworkPair,
        online_net: PolicyNetwork,
        target_net: PolicyNetwork,
        config: LearnerConfig,
        rng: np.random.Generator,
    ):
        self.networks = networks
        self.networks.sync_interval = config.target_sync_interval
        self.online_net = online_net
        self.target_net = target_net
        self.config = config
        self.rng = rng

    def train_step(self, buffer: EpisodicReplayBuffer) -> dict | None:
        """One optimizer step on a uniformly sampled episode batch.

        Returns None (skip signal) while the buffer holds fewer episodes
        than the batch size.
        """
        cfg = self.config
        if len(buffer) < cfg.batch_size:
            return None
        episodes = buffer.sample(self.rng, cfg.batch_size)
        loss = td_loss(episodes, self.online_net, self.target_net, cfg.gamma, cfg.mixer)
        store = self.networks.online
        store.zero_grads()
        loss.backward()
        grad_norm = store.grad_norm()
        adam_step(
            store, cfg.lr, cfg.l2_coef, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps,
            cfg.grad_clip_norm,
        )
        synced = self.networks.maybe_sync()
        return {
            "loss": float(loss.data),
            "grad_norm": grad_norm,
            "optimizer_steps": store.step_count,
            "synced": synced,
        }
