"""Acceptance gate: ten numbered criteria, one printed pass/fail line each.

Criteria 7 and 8 train real configurations and dominate the runtime of the
whole suite (roughly two minutes and under two hours respectively on one
CPU core); everything else completes in seconds.
"""

import csv
import os
import time

import numpy as np
import pytest

from hetcomm import autodiff as ad
from hetcomm.autodiff import Tensor
from hetcomm.comm import BatchedGraphs, GatLayer, RgcnLayer
from hetcomm.config import TrainConfig
from hetcomm.envs import make_env
from hetcomm.envs.toy import two_state_optimal_q
from hetcomm.graph import build_graph
from hetcomm.harness import (
    _EP_SEED_STRIDE,
    _EVAL_SEED_BASE,
    evaluate,
    load_policy,
    run_train,
    train_single_seed,
)
from hetcomm.learner import EpisodeRecord, td_loss, vdn_mix
from hetcomm.network import (
    EpsilonSchedule,
    NetworkConfig,
    PolicyNetwork,
    joint_epsilon_greedy,
)
from hetcomm.params import ParameterStore, adam_step

from helpers import assert_grads_close, naive_rgcn_forward, random_graph


def report(capsys, num, desc, ok, detail=""):
    suffix = f" ({detail})" if detail else ""
    with capsys.disabled():
        print(f"\n[criterion {num:02d}] {'PASS' if ok else 'FAIL'}: {desc}{suffix}")
    assert ok, f"criterion {num}: {desc}{suffix}"


def small_net(seed, comm_kind, width=4, obs_width=3, num_actions=3, num_classes=2):
    store = ParameterStore()
    cfg = NetworkConfig(obs_width=obs_width, num_actions=num_actions,
                        num_classes=num_classes, width=width, comm_kind=comm_kind,
                        comm_layers=1, gat_heads=2)
    return store, PolicyNetwork(store, cfg, np.random.default_rng(seed))


def test_criterion_01_gradient_correctness(capsys):
    start = time.monotonic()
    instances = 0
    rng = np.random.default_rng(101)

    # encoder alone
    for k in range(4):
        store, net = small_net(1000 + k, "none")
        x = rng.normal(size=(3, 3))
        assert_grads_close(
            lambda: ad.tensor_sum(ad.square(net.encode(x))),
            [net.enc_weight, net.enc_bias],
        )
        instances += 1

    # single communication layers over random graphs
    for k in range(4):
        g = random_graph(rng, max_nodes=5, max_classes=2, max_arcs=8)
        batched = BatchedGraphs.single(g)
        feats = rng.normal(size=(g.num_nodes, 3))
        store = ParameterStore()
        layer = RgcnLayer(store, "l", 3, 3, g.num_classes**2,
                          min(2, g.num_classes**2), 0.01,
                          np.random.default_rng(2000 + k))
        assert_grads_close(
            lambda: ad.tensor_sum(ad.square(layer.forward(batched, Tensor(feats)))),
            list(store.params.values()),
        )
        instances += 1
    for k in range(4):
        g = random_graph(rng, max_nodes=5, max_classes=2, max_arcs=8)
        batched = BatchedGraphs.single(g)
        feats = rng.normal(size=(g.num_nodes, 3))
        store = ParameterStore()
        layer = GatLayer(store, "l", 3, 4, 2, 0.01, np.random.default_rng(3000 + k))
        assert_grads_close(
            lambda: ad.tensor_sum(ad.square(layer.forward(batched, Tensor(feats)))),
            list(store.params.values()),
        )
        instances += 1

    # recurrent cell + dueling heads (comm disabled isolates them)
    for k in range(4):
        store, net = small_net(4000 + k, "none")
        g = BatchedGraphs.single(build_graph([0, 1], [], 2))
        obs = rng.normal(size=(2, 2, 3))

        def loss_fn():
            state = net.initial_state(2)
            total = None
            for t in range(2):
                q, state = net.step(obs[t], g, state)
                term = ad.tensor_sum(ad.square(q))
                total = term if total is None else ad.add(total, term)
            return total

        assert_grads_close(loss_fn, [net.rnn_wx, net.rnn_wh, net.rnn_bias,
                                     net.value_weight, net.value_bias,
                                     net.adv_weight, net.adv_bias])
        instances += 1

    # composed network, every communication kind, multi-step unroll; the
    # instance seeds keep every pre-activation away from the leaky-relu kink,
    # where central differences with h=1e-3 are meaningless
    composed = {"rgcn": (6000, 6001), "gat": (6001, 6002), "none": (6000, 6002)}
    for kind, seeds in composed.items():
        for seed in seeds:
            store, net = small_net(seed, kind)
            g = BatchedGraphs.single(build_graph([0, 1, 1], [(0, 1), (2, 0)], 2))
            obs = np.random.default_rng(seed + 500).normal(size=(2, 3, 3))

            def loss_fn():
                state = net.initial_state(3)
                total = None
                for t in range(2):
                    q, state = net.step(obs[t], g, state)
                    term = ad.tensor_sum(ad.square(q))
                    total = term if total is None else ad.add(total, term)
                return total

            assert_grads_close(loss_fn, list(store.params.values()))
            instances += 1

    elapsed = time.monotonic() - start
    report(capsys, 1,
           "analytic gradients match central differences (h=1e-3, rel 1e-4)",
           instances >= 20 and elapsed < 60.0,
           f"{instances} instances in {elapsed:.1f}s")


def test_criterion_02_graph_convolution_oracle(capsys):
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(100):
        g = random_graph(rng, max_nodes=6, max_classes=3, max_arcs=12)
        width = int(rng.integers(2, 5))
        store = ParameterStore()
        r = g.num_classes**2
        layer = RgcnLayer(store, "l", width, width, r,
                          int(rng.integers(1, r + 1)), 0.01,
                          np.random.default_rng(int(rng.integers(2**31))))
        feats = rng.normal(size=(g.num_nodes, width))
        fast = layer.forward(BatchedGraphs.single(g), Tensor(feats)).data
        naive = naive_rgcn_forward(
            g, feats, [layer.relation_weight(rr).data for rr in range(r)],
            layer.self_weight.data, slope=0.01,
        )
        worst = max(worst, float(np.abs(fast - naive).max()))
    report(capsys, 2,
           "vectorized graph convolution matches triple-loop oracle on 100 graphs",
           worst <= 1e-10, f"max abs diff {worst:.2e}")


def test_criterion_03_relation_specialization(capsys):
    rng = np.random.default_rng(303)
    violations = 0
    for _ in range(50):
        g = random_graph(rng, max_nodes=6, max_classes=3, max_arcs=12)
        r = g.num_classes**2
        store = ParameterStore()
        layer = RgcnLayer(store, "l", 3, 3, r, min(2, r), 0.01,
                          np.random.default_rng(int(rng.integers(2**31))))
        feats = Tensor(rng.normal(size=(g.num_nodes, 3)))
        batched = BatchedGraphs.single(g)
        base = layer.forward(batched, feats, activate=False).data.copy()
        for rel in range(r):
            saved = layer.coeffs.data.copy()
            layer.coeffs.data = saved.copy()
            layer.coeffs.data[rel] += rng.normal(size=layer.num_bases)
            diff = layer.forward(batched, feats, activate=False).data - base
            layer.coeffs.data = saved
            for node in range(g.num_nodes):
                if g.degree_normalizer(node, rel) == 0 and np.abs(diff[node]).max() != 0.0:
                    violations += 1
    report(capsys, 3,
           "perturbing one relation changes only nodes with that relation's in-arcs",
           violations == 0, f"{violations} exactness violations over 50 graphs")


def test_criterion_04_vdn_additivity_and_masking(capsys):
    # additivity
    ok_sum = vdn_mix(np.array([1.0, 2.0, -0.5])) == 2.5

    # exact-zero TD-loss gradient at every illegal Q output
    rng = np.random.default_rng(404)
    store, online = small_net(44, "none", num_classes=1)
    _, target = small_net(45, "none", num_classes=1)
    g = build_graph([0, 0], [], 1)
    masks = np.zeros((3, 2, 3), dtype=bool)
    masks[:, 0, :2] = True  # agent 0 may not take action 2
    masks[:, 1, 1:] = True  # agent 1 may not take action 0
    actions = np.array([[0, 1], [1, 2], [0, 2]])
    episode = EpisodeRecord(
        rng.normal(size=(3, 2, 3)), [g] * 3, masks, actions,
        rng.normal(size=3), np.ones((3, 2), dtype=bool), [False, False, True],
    )
    short = EpisodeRecord(
        rng.normal(size=(1, 2, 3)), [g], masks[:1], actions[:1],
        rng.normal(size=1), np.ones((1, 2), dtype=bool), [True],
    )

    captured = []
    original_step = online.step

    def spy(obs, graphs, state):
        q, s = original_step(obs, graphs, state)
        captured.append(q)
        return q, s

    online.step = spy
    loss = td_loss([episode, short], online, target, mixer="vdn")
    store.zero_grads()
    loss.backward()
    illegal_grads = []
    batch_masks = [np.concatenate([episode.masks[t], short.masks[min(t, 0)]])
                   for t in range(3)]
    for q, mask in zip(captured, batch_masks):
        illegal_grads.append(np.abs(q.grad[~mask]).max() if (~mask).any() else 0.0)
    # rows of the short episode beyond its length are padding: exact zero too
    padding_grads = [np.abs(captured[t].grad[2:]).max() for t in (1, 2)]
    ok_grad = max(illegal_grads) == 0.0 and max(padding_grads) == 0.0

    # 10^4 epsilon-greedy draws never pick an illegal action
    draw_rng = np.random.default_rng(405)
    ok_draws = True
    for k in range(10000):
        m = np.zeros((2, 5), dtype=bool)
        m[0, draw_rng.choice(5, size=2, replace=False)] = True
        m[1, draw_rng.choice(5, size=3, replace=False)] = True
        a = joint_epsilon_greedy(draw_rng.normal(size=(2, 5)), m,
                                 float(draw_rng.random()), draw_rng)
        if not m[np.arange(2), a].all():
            ok_draws = False
            break

    report(capsys, 4,
           "additive mixing exact; illegal Q outputs get exactly zero gradient;"
           " 10^4 greedy draws all legal",
           ok_sum and ok_grad and ok_draws,
           f"max illegal grad {max(illegal_grads):.1e}")


def test_criterion_05_schedule_and_sync_contracts(capsys):
    sched = EpsilonSchedule(eps_min=0.1, eps_max=0.95, decay_steps=50000)
    ok_eps = (
        sched.value(0) == 0.95
        and sched.value(25000) == 0.525
        and sched.value(50000) == 0.10
        and sched.value(120000) == 0.10
    )

    # target parameters bit-identical at optimizer steps 250, 500, 750 and
    # untouched in between
    from hetcomm.learner import TargetNetworkPair

    store, net = small_net(55, "none")
    target_store, _ = small_net(55, "none")
    pair = TargetNetworkPair(store, target_store, sync_interval=250)
    pair.sync()
    rng = np.random.default_rng(56)
    ok_sync = True
    snapshot = {n: target_store[n].data.copy() for n in target_store.names()}
    for step in range(1, 751):
        store.zero_grads()
        x = Tensor(rng.normal(size=(2, 3)))
        ad.tensor_sum(ad.square(net.encode(x))).backward()
        adam_step(store, lr=1e-3)
        synced = pair.maybe_sync()
        if step % 250 == 0:
            if not synced:
                ok_sync = False
            for n in store.names():
                if not np.array_equal(target_store[n].data, store[n].data):
                    ok_sync = False
            snapshot = {n: target_store[n].data.copy() for n in target_store.names()}
        else:
            if synced:
                ok_sync = False
            for n in store.names():
                if not np.array_equal(target_store[n].data, snapshot[n]):
                    ok_sync = False
    report(capsys, 5,
           "epsilon schedule values exact; target net bit-identical at every"
           " 250th optimizer step and frozen between",
           ok_eps and ok_sync)


def test_criterion_06_tabular_oracle_convergence(capsys, tmp_path):
    cfg = TrainConfig(
        scenario="two_state", comm="none", mixer="vdn", steps=5000,
        eval_interval=5000, eval_episodes=4, seeds=[0],
        lr=2e-3, gamma=0.99, target_sync_interval=100,
        eps_min=0.3, eps_max=0.95, eps_decay_steps=2000,
        buffer_capacity=500, batch_size=16, train_every=1,
        hidden_width=32, comm_layers=0,
    )
    result = train_single_seed(cfg, 0, str(tmp_path))
    env, net, _ = load_policy(result["checkpoint_path"])
    optimal = two_state_optimal_q(cfg.gamma)
    worst = 0.0
    for first_action in (0, 1):
        res = env.reset(0)
        gb = BatchedGraphs.single(res.graph)
        state = net.initial_state(1)
        with ad.no_grad():
            q1, state = net.step(res.observations, gb, state)
            worst = max(worst, float(np.abs(q1.data[0] - optimal[(0, 1)]).max()))
            res = env.step([first_action])
            q2, state = net.step(res.observations, gb, state)
            worst = max(worst, float(np.abs(q2.data[0] - optimal[(env.state, 2)]).max()))
    report(capsys, 6,
           "learned Q within 1e-2 of backward-induction optimum in <= 5k steps",
           worst <= 1e-2, f"max abs Q error {worst:.4f}")


def _final_metric(out_root, run_id, seed, column):
    path = os.path.join(out_root, run_id, f"seed{seed}", "metrics.csv")
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return float(rows[-1][column])


def test_criterion_07_communication_necessity(capsys, tmp_path):
    seeds = [0, 1, 2, 3, 4]
    base = TrainConfig(
        scenario="signal", mixer="vdn", steps=20000,
        eval_interval=20000, eval_episodes=32, seeds=seeds,
        lr=1e-3, gamma=0.99, target_sync_interval=250,
        eps_min=0.1, eps_max=0.95, eps_decay_steps=10000,
        buffer_capacity=2000, batch_size=32, train_every=4,
        hidden_width=32, comm_layers=1, comm="rgcn",
    )
    medians = {}
    for comm in ("rgcn", "none"):
        cfg = base.replace(comm=comm)
        run_train(cfg, str(tmp_path))
        returns = [
            _final_metric(str(tmp_path), f"signal_{comm}_vdn", s,
                          "mean_episode_reward")
            for s in seeds
        ]
        medians[comm] = float(np.median(returns))
    ok = medians["rgcn"] >= 0.95 and medians["none"] <= 0.80
    report(capsys, 7,
           "signal game: median return rgcn >= 0.95 and none <= 0.80 at 20k steps",
           ok, f"median rgcn {medians['rgcn']:.3f}, none {medians['none']:.3f}")


def test_criterion_08_heterogeneous_trend(capsys, tmp_path):
    start = time.monotonic()
    seeds = [0, 1, 2, 3, 4]
    base = TrainConfig(
        scenario="s3z5", mixer="vdn", steps=200000,
        eval_interval=50000, eval_episodes=32,
        lr=2.5e-4, gamma=0.99, target_sync_interval=250,
        eps_min=0.1, eps_max=0.95, eps_decay_steps=50000,
        buffer_capacity=2000, batch_size=8, train_every=40,
        comm_layers=2, comm="rgcn", hidden_width=32,
    )
    variants = {
        "rgcn": (base.replace(comm="rgcn", seeds=seeds), seeds),
        "none": (base.replace(comm="none", seeds=seeds), seeds),
        # attention variant is reported, not asserted; fewer seeds keep the
        # whole criterion inside its runtime budget
        "gat": (base.replace(comm="gat", hidden_width=30, seeds=seeds[:3]),
                seeds[:3]),
    }
    medians = {}
    for comm, (cfg, seed_list) in variants.items():
        run_train(cfg, str(tmp_path))
        kills = [
            _final_metric(str(tmp_path), f"s3z5_{comm}_vdn", s,
                          "mean_defeated_enemies")
            for s in seed_list
        ]
        medians[comm] = float(np.median(kills))
    elapsed = (time.monotonic() - start) / 60
    detail = (f"median defeated enemies at 200k steps: rgcn {medians['rgcn']:.2f}, "
              f"none {medians['none']:.2f}; reported only: gat {medians['gat']:.2f}"
              f" [3 seeds]; {elapsed:.0f} min")
    report(capsys, 8,
           "s3z5 trend: median defeated enemies rgcn >= none over 5 seeds",
           medians["rgcn"] >= medians["none"], detail)


def test_criterion_09_determinism(capsys, tmp_path):
    cfg = TrainConfig(
        scenario="m3", comm="rgcn", mixer="vdn", steps=600,
        eval_interval=300, eval_episodes=4, seeds=[0],
        buffer_capacity=50, batch_size=4, train_every=10,
        hidden_width=16, comm_layers=1,
    )
    blobs = []
    for name in ("first", "second"):
        out = tmp_path / name
        result = train_single_seed(cfg, 0, str(out))
        blobs.append(open(result["metrics_path"], "rb").read())
    report(capsys, 9,
           "identical config and seed give byte-identical metric files",
           blobs[0] == blobs[1], f"{len(blobs[0])} bytes compared")


def test_criterion_10_checkpoint_round_trip(capsys, tmp_path):
    cfg = TrainConfig(
        scenario="m3", comm="rgcn", mixer="vdn", steps=400,
        eval_interval=400, eval_episodes=4, seeds=[0],
        buffer_capacity=50, batch_size=4, train_every=10,
        hidden_width=16, comm_layers=1,
    )
    result = train_single_seed(cfg, 0, str(tmp_path))
    before = result["final_eval"]  # computed in memory just before the save
    env, net, _ = load_policy(result["checkpoint_path"])
    after = evaluate(env, net, cfg.eval_episodes,
                     0 * _EP_SEED_STRIDE + _EVAL_SEED_BASE + cfg.steps)
    report(capsys, 10,
           "evaluation before save equals evaluation after load, bit-exact",
           before == after,
           f"win_rate {after['win_rate']:.3f}")
