"""Shared test oracles, kept independent of the library's own fast paths."""

import numpy as np

from hetcomm.graph import build_graph


def fd_gradients(loss_fn, param, h=1e-3):
    """Central finite differences of a scalar-valued loss w.r.t. one tensor."""
    flat = param.data.reshape(-1)
    out = np.zeros_like(flat)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        up = loss_fn().item()
        flat[k] = orig - h
        down = loss_fn().item()
        flat[k] = orig
        out[k] = (up - down) / (2 * h)
    return out.reshape(param.data.shape)


def assert_grads_close(loss_fn, params, h=1e-3, rel_tol=1e-4, denom_floor=1e-6):
    """Backward gradients must match central differences elementwise."""
    loss = loss_fn()
    for p in params:
        p.grad = np.zeros_like(p.data)
    loss.backward()
    for p in params:
        fd = fd_gradients(loss_fn, p, h=h)
        denom = np.maximum(np.maximum(np.abs(fd), np.abs(p.grad)), denom_floor)
        rel = np.abs(p.grad - fd) / denom
        assert rel.max() <= rel_tol, f"relative error {rel.max():.3e} exceeds {rel_tol}"


def random_graph(rng, max_nodes=6, max_classes=3, max_arcs=12):
    """A random directed labeled graph (no duplicates, no self-arcs)."""
    n = int(rng.integers(1, max_nodes + 1))
    c = int(rng.integers(1, max_classes + 1))
    classes = rng.integers(0, c, size=n)
    candidates = [(i, j) for i in range(n) for j in range(n) if i != j]
    rng.shuffle(candidates)
    k = int(rng.integers(0, min(max_arcs, len(candidates)) + 1))
    return build_graph(classes, candidates[:k], c)


def naive_rgcn_forward(graph, features, relation_weights, self_weight, slope=None):
    """Triple-loop evaluation of the relational graph convolution.

    For each node i, each relation r and each incoming neighbor j under r,
    accumulate relation_weights[r] @ v_j divided by the in-degree of i
    under r, plus self_weight @ v_i, then optionally apply LeakyReLU.
    """
    n, _ = features.shape
    num_relations = graph.num_classes**2
    out = np.zeros((n, relation_weights[0].shape[1]))
    for i in range(n):
        acc = self_weight.T @ features[i]
        for r in range(num_relations):
            nbrs = graph.neighbors_by_relation(i, r)
            if len(nbrs) == 0:
                continue
            c = graph.degree_normalizer(i, r)
            for j in nbrs:
                acc = acc + (relation_weights[r].T @ features[j]) / c
        out[i] = acc
    if slope is not None:
        out = np.where(out > 0, out, slope * out)
    return out
