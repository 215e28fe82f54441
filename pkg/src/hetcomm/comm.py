"""Inter-agent communication layers: relation-specialized graph convolutions
with basis decomposition, a multi-head graph attention variant, and an
identity (no communication) variant.

All layers operate on a :class:`BatchedGraphs` view, which exposes one or
more agent graphs as a single block-diagonal structure so a whole replay
batch can be pushed through the network one time step at a time.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .graph import AgentGraph
from .params import ParameterStore, uniform_fan_in


class BatchedGraphs:
    """Block-diagonal union of agent graphs for batched message passing."""

    def __init__(self, graphs: list[AgentGraph]):
        self.graphs = graphs
        self.num_classes = graphs[0].num_classes
        sizes = [g.num_nodes for g in graphs]
        self.num_nodes = int(sum(sizes))
        offsets = np.cumsum([0] + sizes[:-1])

        # per-relation block-diagonal aggregation matrices
        agg: dict[int, np.ndarray] = {}
        for g, off in zip(graphs, offsets):
            for rel, mat in g.aggregation_matrices().items():
                full = agg.setdefault(rel, np.zeros((self.num_nodes, self.num_nodes)))
                n = g.num_nodes
                full[off : off + n, off : off + n] = mat
        self.aggregation = agg

        # arc lists with self-loops appended, for attention neighborhoods
        srcs, dsts = [], []
        for g, off in zip(graphs, offsets):
            if len(g.arcs):
                srcs.append(g.arcs[:, 0] + off)
                dsts.append(g.arcs[:, 1] + off)
            loop = np.arange(g.num_nodes) + off
            srcs.append(loop)
            dsts.append(loop)
        self.att_src = np.concatenate(srcs)
        self.att_dst = np.concatenate(dsts)
        # scatter matrix: (nodes, arcs), rows sum arc values into destinations
        m = len(self.att_src)
        scatter = np.zeros((self.num_nodes, m))
        scatter[self.att_dst, np.arange(m)] = 1.0
        self.att_scatter = scatter

    @classmethod
    def single(cls, graph: AgentGraph) -> "BatchedGraphs":
        cached = getattr(graph, "_single_batch", None)
        if cached is None:
            cached = cls([graph])
            graph._single_batch = cached
        return cached


class RgcnLayer:
    """One relation-specialized graph convolution layer (basis decomposition).

    Output row i is
    ``act( sum_r sum_{j in N_i^r} W_r v_j / |N_i^r| + W_self v_i )``
    with ``W_r = sum_b coeffs[r, b] * basis_b``. Relations with no incoming
    arcs at a node contribute exactly nothing to that node.
    """

    def __init__(
        self,
        store: ParameterStore,
        prefix: str,
        in_width: int,
        out_width: int,
        num_relations: int,
        num_bases: int,
        slope: float,
        rng: np.random.Generator,
    ):
        if num_bases > num_relations:
            raise ValueError(
                f"num_bases ({num_bases}) must not exceed num_relations ({num_relations})"
            )
        self.in_width = in_width
        self.out_width = out_width
        self.num_relations = num_relations
        self.num_bases = num_bases
        self.slope = slope
        self.bases = [
            store.get_or_create(
                f"{prefix}.basis{b}", lambda: uniform_fan_in(rng, (in_width, out_width))
            )
            for b in range(num_bases)
        ]
        self.coeffs = store.get_or_create(
            f"{prefix}.coeffs",
            lambda: uniform_fan_in(rng, (num_relations, num_bases), fan_in=num_bases),
        )
        self.self_weight = store.get_or_create(
            f"{prefix}.self_weight", lambda: uniform_fan_in(rng, (in_width, out_width))
        )

    def relation_weight(self, rel: int) -> Tensor:
        w = ad.mul(self.coeffs[rel, 0], self.bases[0])
        for b in range(1, self.num_bases):
            w = ad.add(w, ad.mul(self.coeffs[rel, b], self.bases[b]))
        return w

    def forward(self, graphs: BatchedGraphs, features: Tensor, activate: bool = True) -> Tensor:
        if features.shape[1] != self.in_width:
            raise ShapeError("rgcn_forward", features.shape, (self.in_width,))
        if features.shape[0] != graphs.num_nodes:
            raise ShapeError("rgcn_forward", features.shape, (graphs.num_nodes,))
        pre = ad.matmul(features, self.self_weight)
        for rel, agg in graphs.aggregation.items():
            pooled = ad.matmul(Tensor(agg), features)
            pre = ad.add(pre, ad.matmul(pooled, self.relation_weight(rel)))
        return ad.leaky_relu(pre, self.slope) if activate else pre


class GatLayer:
    """Multi-head graph attention over in-neighborhoods plus self.

    Per head, attention logits are a learned linear function of the
    transformed (destination, source) feature pair passed through a
    LeakyReLU (slope 0.2), softmax-normalized over each destination's
    neighborhood. Head outputs are concatenated, then activated.
    """

    ATTENTION_SLOPE = 0.2

    def __init__(
        self,
        store: ParameterStore,
        prefix: str,
        in_width: int,
        out_width: int,
        num_heads: int,
        slope: float,
        rng: np.random.Generator,
    ):
        if out_width % num_heads != 0:
            raise ShapeError("gat_layer", (out_width,), (num_heads,))
        self.in_width = in_width
        self.out_width = out_width
        self.num_heads = num_heads
        self.head_width = out_width // num_heads
        self.slope = slope
        self.heads = []
        for h in range(num_heads):
            self.heads.append(
                (
                    store.get_or_create(
                        f"{prefix}.head{h}.weight",
                        lambda: uniform_fan_in(rng, (in_width, self.head_width)),
                    ),
                    store.get_or_create(
                        f"{prefix}.head{h}.att_dst",
                        lambda: uniform_fan_in(rng, (self.head_width,)),
                    ),
                    store.get_or_create(
                        f"{prefix}.head{h}.att_src",
                        lambda: uniform_fan_in(rng, (self.head_width,)),
                    ),
                )
            )

    def forward(self, graphs: BatchedGraphs, features: Tensor, activate: bool = True) -> Tensor:
        if features.shape[1] != self.in_width:
            raise ShapeError("gat_forward", features.shape, (self.in_width,))
        src, dst = graphs.att_src, graphs.att_dst
        scatter = Tensor(graphs.att_scatter)
        outs = []
        for weight, att_dst, att_src in self.heads:
            z = ad.matmul(features, weight)  # (n, dh)
            s_dst = ad.matmul(z, att_dst)  # (n,)
            s_src = ad.matmul(z, att_src)
            logits = ad.leaky_relu(
                ad.add(s_src[src], s_dst[dst]), self.ATTENTION_SLOPE
            )  # (m,)
            shifted = ad.sub(logits, float(logits.data.max()))
            w = ad.exp(shifted)
            denom = ad.matmul(scatter, w)  # (n,)
            alpha = ad.div(w, denom[dst])
            msgs = ad.mul(alpha.reshape((-1, 1)), z[src])  # (m, dh)
            outs.append(ad.matmul(scatter, msgs))  # (n, dh)
        combined = ad.concat(outs, axis=1)
        return ad.leaky_relu(combined, self.slope) if activate else combined

    def attention_weights(self, graphs: BatchedGraphs, features: Tensor) -> list[np.ndarray]:
        """Per-head attention coefficients over the arc list (diagnostics)."""
        src, dst = graphs.att_src, graphs.att_dst
        out = []
        with ad.no_grad():
            for weight, att_dst, att_src in self.heads:
                z = ad.matmul(features, weight)
                s_dst = ad.matmul(z, att_dst).data
                s_src = ad.matmul(z, att_src).data
                logits = s_src[src] + s_dst[dst]
                logits = np.where(logits > 0, logits, self.ATTENTION_SLOPE * logits)
                e = np.exp(logits - logits.max())
                denom = graphs.att_scatter @ e
                out.append(e / denom[dst])
        return out


class CommStack:
    """K communication layers of one kind: ``rgcn``, ``gat`` or ``none``."""

    def __init__(
        self,
        store: ParameterStore,
        kind: str,
        num_layers: int,
        width: int,
        num_classes: int,
        num_bases: int,
        num_heads: int,
        slope: float,
        rng: np.random.Generator,
        prefix: str = "comm",
    ):
        if kind not in ("rgcn", "gat", "none"):
            raise ValueError(f"unknown communication kind {kind!r}")
        self.kind = kind
        self.width = width
        self.layers = []
        if kind == "rgcn":
            num_relations = num_classes * num_classes
            # the basis decomposition cannot exceed the relation count
            effective_bases = min(num_bases, num_relations)
            for k in range(num_layers):
                self.layers.append(
                    RgcnLayer(
                        store, f"{prefix}.layer{k}", width, width,
                        num_relations, effective_bases, slope, rng,
                    )
                )
        elif kind == "gat":
            for k in range(num_layers):
                self.layers.append(
                    GatLayer(store, f"{prefix}.layer{k}", width, width, num_heads, slope, rng)
                )

    def forward(self, graphs: BatchedGraphs, features: Tensor) -> Tensor:
        if self.kind == "none":
            return features
        out = features
        for layer in self.layers:
            out = layer.forward(graphs, out)
        return out
