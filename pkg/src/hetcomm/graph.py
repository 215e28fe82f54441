"""Directed labeled heterogeneous agent communication graphs.

Nodes are agents, node labels are agent classes, and each arc carries a
relation index determined by the ordered pair of endpoint classes:
``relation = class(src) * num_classes + class(dst)``. Arcs are one-way;
self-arcs are rejected (an agent's own features enter through the
self-weight term of the graph convolution, not through an arc).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class RelationIndex:
    num_classes: int

    @property
    def num_relations(self) -> int:
        return self.num_classes * self.num_classes

    def relation(self, src_class: int, dst_class: int) -> int:
        return src_class * self.num_classes + dst_class


class AgentGraph:
    """Immutable directed labeled graph over agents.

    Built through :func:`build_graph`; all queries are pure functions of
    the construction inputs, so instances are safe to share across readers.
    """

    def __init__(self, node_class: np.ndarray, arcs: np.ndarray, num_classes: int):
        self.node_class = node_class  # (n,) int
        self.arcs = arcs  # (m, 2) int, [src, dst]
        self.num_classes = num_classes
        self.num_nodes = len(node_class)
        self.relations = RelationIndex(num_classes)
        if len(arcs):
            self.relation_of_arc = (
                node_class[arcs[:, 0]] * num_classes + node_class[arcs[:, 1]]
            )
        else:
            self.relation_of_arc = np.zeros(0, dtype=np.int64)
        # in-neighbor lists per (node, relation), ascending order
        self._in_nbrs: dict[tuple[int, int], np.ndarray] = {}
        for k in range(len(arcs)):
            key = (int(arcs[k, 1]), int(self.relation_of_arc[k]))
            self._in_nbrs.setdefault(key, []).append(int(arcs[k, 0]))
        self._in_nbrs = {
            key: np.array(sorted(v), dtype=np.int64) for key, v in self._in_nbrs.items()
        }
        self._agg_cache: dict[int, np.ndarray] | None = None

    def neighbors_by_relation(self, node: int, relation: int) -> np.ndarray:
        """Sources j of arcs (j, node) labeled with ``relation``, ascending."""
        if not 0 <= node < self.num_nodes:
            raise GraphError(f"node {node} out of range [0, {self.num_nodes})")
        if not 0 <= relation < self.relations.num_relations:
            raise GraphError(
                f"relation {relation} out of range [0, {self.relations.num_relations})"
            )
        return self._in_nbrs.get((node, relation), np.zeros(0, dtype=np.int64))

    def degree_normalizer(self, node: int, relation: int) -> int:
        """In-degree of ``node`` under ``relation``; 0 means the term is skipped."""
        return len(self.neighbors_by_relation(node, relation))

    def relations_in_use(self) -> np.ndarray:
        return np.unique(self.relation_of_arc)

    def aggregation_matrices(self) -> dict[int, np.ndarray]:
        """Per-relation matrices A_r with A_r[i, j] = 1/|N_i^r| for j in N_i^r.

        Only relations with at least one arc appear. Cached; the matrices
        are constants (no gradient flows through them).
        """
        if self._agg_cache is None:
            out: dict[int, np.ndarray] = {}
            for (node, rel), nbrs in self._in_nbrs.items():
                mat = out.setdefault(rel, np.zeros((self.num_nodes, self.num_nodes)))
                mat[node, nbrs] = 1.0 / len(nbrs)
            self._agg_cache = out
        return self._agg_cache

    def dump(self) -> str:
        """Textual dump: one line per node, one per arc."""
        lines = [f"node {i} class {int(c)}" for i, c in enumerate(self.node_class)]
        for k in range(len(self.arcs)):
            lines.append(
                f"arc {int(self.arcs[k, 0])} {int(self.arcs[k, 1])} rel {int(self.relation_of_arc[k])}"
            )
        return "\n".join(lines)


def build_graph(node_classes, arcs, num_classes: int | None = None) -> AgentGraph:
    """Validate and freeze a heterogeneous agent graph.

    ``arcs`` is a sequence of (src, dst) node index pairs. Endpoints must be
    valid, arcs unique and never self-referential.
    """
    node_class = np.asarray(node_classes, dtype=np.int64)
    if node_class.ndim != 1 or len(node_class) == 0:
        raise GraphError("node_classes must be a non-empty 1-d sequence")
    if num_classes is None:
        num_classes = int(node_class.max()) + 1
    if node_class.min() < 0 or node_class.max() >= num_classes:
        raise GraphError(f"node classes must lie in [0, {num_classes})")

    arc_arr = np.asarray(list(arcs), dtype=np.int64).reshape(-1, 2)
    n = len(node_class)
    seen = set()
    for src, dst in arc_arr:
        src, dst = int(src), int(dst)
        if not (0 <= src < n and 0 <= dst < n):
            raise GraphError(f"arc ({src}, {dst}) has an endpoint outside [0, {n})")
        if src == dst:
            raise GraphError(f"self-arc ({src}, {dst}) is not allowed")
        if (src, dst) in seen:
            raise GraphError(f"duplicate arc ({src}, {dst})")
        seen.add((src, dst))
    return AgentGraph(node_class, arc_arr, num_classes)
