"""Shared encoder, recurrent dueling Q-heads, observation padding and the
joint epsilon-greedy action rule.

One set of parameters serves every agent regardless of class: observations
are zero-padded to a common width (optionally with an appended class
one-hot), the network maps each agent row identically, and per-class action
sets are enforced through boolean masks at selection and training time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .comm import BatchedGraphs, CommStack
from .params import ParameterStore, uniform_fan_in

NEG_INF = -1e30


class ObservationPadder:
    """Zero-pads per-class observations to a fixed width, optionally
    appending the agent-class one-hot block."""

    def __init__(self, class_widths: list[int], num_classes: int, append_class_onehot: bool = True):
        self.class_widths = list(class_widths)
        self.num_classes = num_classes
        self.append_class_onehot = append_class_onehot
        self.pad_width = max(class_widths)
        self.width = self.pad_width + (num_classes if append_class_onehot else 0)

    def pad(self, raw: np.ndarray, agent_class: int) -> np.ndarray:
        raw = np.asarray(raw, dtype=np.float64).reshape(-1)
        expected = self.class_widths[agent_class]
        if len(raw) != expected:
            raise ShapeError("pad", raw.shape, (expected,))
        out = np.zeros(self.width)
        out[: len(raw)] = raw
        if self.append_class_onehot:
            out[self.pad_width + agent_class] = 1.0
        return out

    def pad_all(self, raws: list[np.ndarray], agent_classes) -> np.ndarray:
        return np.stack([self.pad(r, int(c)) for r, c in zip(raws, agent_classes)])


@dataclass
class EpsilonSchedule:
    """Linear decay from eps_max to eps_min over decay_steps environment steps."""

    eps_min: float = 0.1
    eps_max: float = 0.95
    decay_steps: int = 50000

    def value(self, step: int) -> float:
        if step >= self.decay_steps:
            return self.eps_min
        frac = step / self.decay_steps
        return self.eps_max * (1.0 - frac) + self.eps_min * frac


@dataclass
class RecurrentState:
    """Per-agent hidden and cell rows of the recurrent unit."""

    hidden: Tensor
    cell: Tensor

    def detached(self) -> "RecurrentState":
        return RecurrentState(Tensor(self.hidden.data.copy()), Tensor(self.cell.data.copy()))


@dataclass
class NetworkConfig:
    obs_width: int
    num_actions: int
    num_classes: int
    width: int = 96
    comm_kind: str = "rgcn"
    comm_layers: int = 2
    rgcn_bases: int = 2
    gat_heads: int = 3
    leaky_relu_slope: float = 0.01


class PolicyNetwork:
    """Encoder -> communication stack -> LSTM cell -> dueling Q-heads.

    Forward passes treat agent rows as a batch; the same parameters apply
    to every agent. ``step`` advances one environment time step.
    """

    def __init__(self, store: ParameterStore, cfg: NetworkConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.store = store
        w = cfg.width
        self.enc_weight = store.get_or_create(
            "encoder.weight", lambda: uniform_fan_in(rng, (cfg.obs_width, w))
        )
        self.enc_bias = store.get_or_create(
            "encoder.bias", lambda: uniform_fan_in(rng, (w,), fan_in=cfg.obs_width)
        )
        self.comm = CommStack(
            store, cfg.comm_kind, cfg.comm_layers, w, cfg.num_classes,
            cfg.rgcn_bases, cfg.gat_heads, cfg.leaky_relu_slope, rng,
        )
        self.rnn_wx = store.get_or_create("rnn.weight_x", lambda: uniform_fan_in(rng, (w, 4 * w)))
        self.rnn_wh = store.get_or_create("rnn.weight_h", lambda: uniform_fan_in(rng, (w, 4 * w)))

        def _rnn_bias():
            b = uniform_fan_in(rng, (4 * w,), fan_in=w)
            b[w : 2 * w] = 1.0  # forget gate bias
            return b

        self.rnn_bias = store.get_or_create("rnn.bias", _rnn_bias)
        self.value_weight = store.get_or_create(
            "dueling.value.weight", lambda: uniform_fan_in(rng, (w, 1))
        )
        self.value_bias = store.get_or_create(
            "dueling.value.bias", lambda: uniform_fan_in(rng, (1,), fan_in=w)
        )
        self.adv_weight = store.get_or_create(
            "dueling.advantage.weight", lambda: uniform_fan_in(rng, (w, cfg.num_actions))
        )
        self.adv_bias = store.get_or_create(
            "dueling.advantage.bias", lambda: uniform_fan_in(rng, (cfg.num_actions,), fan_in=w)
        )

    def initial_state(self, rows: int) -> RecurrentState:
        w = self.cfg.width
        return RecurrentState(Tensor(np.zeros((rows, w))), Tensor(np.zeros((rows, w))))

    def encode(self, obs: Tensor | np.ndarray) -> Tensor:
        obs = ad.as_tensor(obs)
        if obs.shape[1] != self.cfg.obs_width:
            raise ShapeError("encode", obs.shape, (self.cfg.obs_width,))
        return ad.tanh(ad.add(ad.matmul(obs, self.enc_weight), self.enc_bias))

    def _lstm(self, x: Tensor, state: RecurrentState) -> RecurrentState:
        w = self.cfg.width
        gates = ad.add(
            ad.add(ad.matmul(x, self.rnn_wx), ad.matmul(state.hidden, self.rnn_wh)),
            self.rnn_bias,
        )
        i = ad.sigmoid(gates[:, 0:w])
        f = ad.sigmoid(gates[:, w : 2 * w])
        g = ad.tanh(gates[:, 2 * w : 3 * w])
        o = ad.sigmoid(gates[:, 3 * w : 4 * w])
        cell = ad.add(ad.mul(f, state.cell), ad.mul(i, g))
        hidden = ad.mul(o, ad.tanh(cell))
        return RecurrentState(hidden, cell)

    def _dueling(self, h: Tensor) -> Tensor:
        value = ad.add(ad.matmul(h, self.value_weight), self.value_bias)  # (n, 1)
        adv = ad.add(ad.matmul(h, self.adv_weight), self.adv_bias)  # (n, A)
        return ad.add(value, ad.sub(adv, ad.tensor_mean(adv, axis=1, keepdims=True)))

    def step(
        self, obs: np.ndarray, graphs: BatchedGraphs, state: RecurrentState
    ) -> tuple[Tensor, RecurrentState]:
        """One time step for all agent rows: returns Q over the joint action
        set and the advanced recurrent state."""
        emb = self.encode(obs)
        comm_out = self.comm.forward(graphs, emb)
        new_state = self._lstm(comm_out, state)
        return self._dueling(new_state.hidden), new_state


def masked_argmax(q_values: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Greedy action per agent over legal entries only."""
    if not masks.any(axis=1).all():
        raise ValueError("an agent has no legal action")
    q = np.where(masks, q_values, NEG_INF)
    return q.argmax(axis=1)


def joint_epsilon_greedy(
    q_values: np.ndarray,
    masks: np.ndarray,
    epsilon: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """One exploration coin per step: all agents explore together or all
    act greedily. Exploration samples uniformly over each agent's legal set."""
    if not masks.any(axis=1).all():
        raise ValueError("an agent has no legal action")
    if rng.random() < epsilon:
        actions = np.empty(len(masks), dtype=np.int64)
        for i, m in enumerate(masks):
            legal = np.flatnonzero(m)
            actions[i] = legal[rng.integers(len(legal))]
        return actions
    return masked_argmax(q_values, masks)
