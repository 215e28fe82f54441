"""Self-contained invariant checks backing the ``smoke`` CLI verb.

These are quick, desk-scale probes: finite-difference gradients through the
full network, action-mask soundness under random legal play, and
determinism of a short training run.
"""

from __future__ import annotations

import numpy as np

from .comm import BatchedGraphs
from .config import TrainConfig
from .envs import make_env
from .graph import build_graph
from .harness import build_networks, train_single_seed
from .learner import vdn_mix


def finite_difference_check(
    loss_fn, params, h: float = 1e-3, rel_tol: float = 1e-4, denom_floor: float = 1e-6
) -> float:
    """Backward gradients vs central differences; returns the worst relative
    error over every element of every parameter."""
    loss = loss_fn()
    for p in params:
        p.grad = np.zeros_like(p.data)
    loss.backward()
    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        gflat = p.grad.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = loss_fn().item()
            flat[k] = orig - h
            down = loss_fn().item()
            flat[k] = orig
            fd = (up - down) / (2 * h)
            rel = abs(gflat[k] - fd) / max(abs(fd), abs(gflat[k]), denom_floor)
            worst = max(worst, rel)
    if worst > rel_tol:
        raise AssertionError(f"gradient check failed: worst relative error {worst:.3e}")
    return worst


def smoke_network_gradients() -> float:
    """Finite-difference check of encoder + comm + recurrent + dueling on a
    3-agent, 2-step instance."""
    cfg = TrainConfig(
        scenario="m3", comm="rgcn", hidden_width=8, comm_layers=2, rgcn_bases=2,
        seeds=[0],
    )
    env = make_env("m3")
    rng = np.random.default_rng(3)
    pair, net, _ = build_networks(env, cfg, seed=1)
    graph = build_graph([0, 0, 0], [(0, 1), (1, 2), (2, 0)], 1)
    obs = [rng.normal(size=(3, env.obs_width)) for _ in range(2)]

    def loss_fn():
        state = net.initial_state(3)
        total = None
        for t in range(2):
            q, state = net.step(obs[t], BatchedGraphs.single(graph), state)
            sq = (q * q).sum()
            total = sq if total is None else total + sq
        return total

    return finite_difference_check(loss_fn, list(pair.online.params.values()))


def smoke_mask_soundness(scenario: str = "s3z5", episodes: int = 3) -> int:
    """Random legal play never raises; returns steps executed."""
    env = make_env(scenario)
    rng = np.random.default_rng(0)
    steps = 0
    for ep in range(episodes):
        res = env.reset(ep)
        while not res.done:
            actions = [
                np.flatnonzero(m)[rng.integers(m.sum())] for m in res.masks
            ]
            res = env.step(actions)
            steps += 1
    return steps


def smoke_determinism() -> bool:
    """Two short identical runs produce byte-identical metric files."""
    import tempfile

    cfg = TrainConfig(
        scenario="m3", comm="rgcn", mixer="vdn", steps=120, eval_interval=60,
        eval_episodes=2, seeds=[0], hidden_width=8, batch_size=2,
        buffer_capacity=8, eps_decay_steps=100,
    )
    contents = []
    for _ in range(2):
        with tempfile.TemporaryDirectory() as tmp:
            out = train_single_seed(cfg, 0, tmp)
            with open(out["metrics_path"], "rb") as f:
                contents.append(f.read())
    return contents[0] == contents[1]


def run_smoke(print_fn=print) -> bool:
    ok = True
    checks = [
        ("vdn additivity", lambda: abs(vdn_mix([1.0, 2.0, -0.5]) - 2.5) < 1e-15),
        ("network gradients", lambda: smoke_network_gradients() >= 0.0),
        ("mask soundness", lambda: smoke_mask_soundness() > 0),
        ("determinism", smoke_determinism),
    ]
    for name, fn in checks:
        try:
            result = fn()
            passed = bool(result)
        except Exception as e:  # pragma: no cover - reported, not raised
            passed = False
            print_fn(f"FAIL {name}: {e}")
        if passed:
            print_fn(f"PASS {name}")
        else:
            ok = False
    return ok
