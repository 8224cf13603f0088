"""Factor graphs over discrete labels and the index layout used by the solvers."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class FactorGraph:
    """Bipartite graph of label vertices and factors (ordered vertex subsets).

    ``cards[v]`` is the number of labels of vertex ``v``.  ``shape`` is set for
    grids built by :func:`build_grid` and is only used for book-keeping.
    """

    cards: tuple[int, ...]
    factors: tuple[tuple[int, ...], ...] = ()
    max_arity: int = 2
    shape: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "cards", tuple(int(c) for c in self.cards))
        object.__setattr__(self, "factors", tuple(tuple(int(u) for u in f) for f in self.factors))
        n = len(self.cards)
        for c in self.cards:
            if c < 2:
                raise ValueError(f"every vertex needs at least 2 labels, got {c}")
        for f in self.factors:
            if not f:
                raise ValueError("empty factor")
            if len(f) > self.max_arity:
                raise ValueError(f"factor {f} exceeds the arity bound {self.max_arity}")
            if len(set(f)) != len(f):
                raise ValueError(f"factor {f} repeats a vertex")
            if min(f) < 0 or max(f) >= n:
                raise ValueError(f"factor {f} references a vertex outside 0..{n - 1}")

    @property
    def n_vertices(self) -> int:
        return len(self.cards)

    @property
    def n_factors(self) -> int:
        return len(self.factors)

    @cached_property
    def vertex_factors(self) -> tuple[tuple[int, ...], ...]:
        """N(v): indices of the factors containing each vertex."""
        nbrs: list[list[int]] = [[] for _ in self.cards]
        for a, f in enumerate(self.factors):
            for v in f:
                nbrs[v].append(a)
        return tuple(tuple(x) for x in nbrs)

    def degree(self, v: int) -> int:
        return len(self.vertex_factors[v])

    def factor_card(self, a: int) -> int:
        return int(np.prod([self.cards[v] for v in self.factors[a]]))

    @cached_property
    def layout(self) -> "Layout":
        return Layout(self)


def build_grid(height: int, width: int, labels: int = 2) -> FactorGraph:
    """4-connected grid, row-major vertices; horizontal edges of a row come
    before its vertical edges to the next row."""
    if height < 1 or width < 1:
        raise ValueError(f"grid dimensions must be positive, got {height}x{width}")
    if labels < 2:
        raise ValueError("labels must be >= 2")
    factors = []
    for r in range(height):
        for c in range(width):
            v = r * width + c
            if c + 1 < width:
                factors.append((v, v + 1))
            if r + 1 < height:
                factors.append((v, v + width))
    return FactorGraph((labels,) * (height * width), tuple(factors), shape=(height, width))


def build_chain(n: int, labels: int = 2) -> FactorGraph:
    return FactorGraph((labels,) * n, tuple((v, v + 1) for v in range(n - 1)))


def is_acyclic(g: FactorGraph) -> bool:
    """True iff the bipartite vertex/factor graph is a forest.

    A graph is a forest exactly when ``#edges == #nodes - #components``;
    components are counted by breadth-first search.
    """
    n, nf = g.n_vertices, g.n_factors
    adj: list[list[int]] = [[] for _ in range(n + nf)]
    n_edges = 0
    for a, f in enumerate(g.factors):
        for v in f:
            adj[v].append(n + a)
            adj[n + a].append(v)
            n_edges += 1
    seen = [False] * (n + nf)
    components = 0
    for s in range(n + nf):
        if seen[s]:
            continue
        components += 1
        seen[s] = True
        queue = [s]
        while queue:
            u = queue.pop()
            for w in adj[u]:
                if not seen[w]:
                    seen[w] = True
                    queue.append(w)
    return n_edges == n + nf - components


def greedy_coloring(g: FactorGraph) -> list[np.ndarray]:
    """Partition vertices into classes whose members share no factor.

    Greedy in vertex order; a 4-connected grid gets the two checkerboard
    classes.  Vertices of one class can have their blocks updated together.
    """
    color = [-1] * g.n_vertices
    for v in range(g.n_vertices):
        used = {color[u] for a in g.vertex_factors[v] for u in g.factors[a] if u != v}
        c = 0
        while c in used:
            c += 1
        color[v] = c
    n_colors = max(color, default=-1) + 1
    return [np.array([v for v in range(g.n_vertices) if color[v] == c], dtype=np.intp)
            for c in range(n_colors)]


@dataclass(frozen=True)
class FactorGroup:
    """All factors of one arity, stacked.  ``vertices[i, j]`` is the j-th vertex
    of the i-th factor in the group and ``edges[i, j]`` the matching edge id."""

    arity: int
    factor_ids: np.ndarray
    vertices: np.ndarray
    edges: np.ndarray
    valid: np.ndarray  # (F_k,) + (L,)*k, False on padded label combinations


class Block:
    """A set of vertices sharing no factor, prepared for a joint block update.

    ``pieces`` lists ``(group index, position, rows, edge ids)``; the edges of
    all pieces are concatenated in ``edge_ids`` and summed per vertex by
    ``incidence`` (local vertex x block edge).
    """

    def __init__(self, layout: "Layout", vertices):
        vertices = np.unique(np.asarray(vertices, dtype=np.intp))
        member = np.zeros(layout.n_vertices, dtype=bool)
        member[vertices] = True
        self.vertices = vertices
        self.pieces = []
        edge_chunks = []
        for gi, grp in enumerate(layout.groups):
            for j in range(grp.arity):
                rows = np.nonzero(member[grp.vertices[:, j]])[0]
                if rows.size:
                    eids = grp.edges[rows, j]
                    self.pieces.append((gi, j, rows, eids))
                    edge_chunks.append(eids)
        self.edge_ids = np.concatenate(edge_chunks) if edge_chunks else np.zeros(0, dtype=np.intp)
        local = np.full(layout.n_vertices, -1, dtype=np.intp)
        local[vertices] = np.arange(vertices.size)
        self.edge_local_vertex = local[layout.edge_vertex[self.edge_ids]]
        if np.unique(layout.edge_factor[self.edge_ids]).size != self.edge_ids.size:
            raise ValueError("block vertices must not share a factor")
        self.incidence = sp.csr_matrix(
            (np.ones(self.edge_ids.size), (self.edge_local_vertex, np.arange(self.edge_ids.size))),
            shape=(vertices.size, self.edge_ids.size),
        )


class Layout:
    """Dense, padded index arrays for vectorized message passing.

    Labels are padded to ``L = max(cards)``; ``valid`` marks real labels.  An
    edge is one (vertex, factor) incidence.  Arrays indexed by graph elements
    put the element axis first and the example axis second.
    """

    def __init__(self, g: FactorGraph):
        self.graph = g
        self.n_vertices = g.n_vertices
        self.n_labels = max(g.cards) if g.cards else 2
        L = self.n_labels
        cards = np.array(g.cards, dtype=np.intp)
        self.cards = cards
        self.valid = np.arange(L)[None, :] < cards[:, None]
        self.padded = bool(np.any(cards != L))

        ev, ef, ep = [], [], []
        for a, f in enumerate(g.factors):
            for j, v in enumerate(f):
                ev.append(v)
                ef.append(a)
                ep.append(j)
        self.edge_vertex = np.array(ev, dtype=np.intp)
        self.edge_factor = np.array(ef, dtype=np.intp)
        self.edge_pos = np.array(ep, dtype=np.intp)
        self.n_edges = len(ev)
        first_edge = np.zeros(g.n_factors + 1, dtype=np.intp)
        first_edge[1:] = np.cumsum([len(f) for f in g.factors])

        self.groups: list[FactorGroup] = []
        self.factor_group = np.zeros(g.n_factors, dtype=np.intp)
        self.factor_row = np.zeros(g.n_factors, dtype=np.intp)
        for k in sorted({len(f) for f in g.factors}):
            ids = np.array([a for a, f in enumerate(g.factors) if len(f) == k], dtype=np.intp)
            verts = np.array([g.factors[a] for a in ids], dtype=np.intp).reshape(len(ids), k)
            edges = first_edge[ids][:, None] + np.arange(k)[None, :]
            valid = np.ones((len(ids),) + (L,) * k, dtype=bool)
            for j in range(k):
                shape = [len(ids)] + [1] * k
                shape[1 + j] = L
                valid &= self.valid[verts[:, j]].reshape(shape)
            self.factor_group[ids] = len(self.groups)
            self.factor_row[ids] = np.arange(len(ids))
            self.groups.append(FactorGroup(k, ids, verts, edges, valid))

        self.incidence = sp.csr_matrix(
            (np.ones(self.n_edges), (self.edge_vertex, np.arange(self.n_edges))),
            shape=(self.n_vertices, self.n_edges),
        )
        self.degrees = np.array([g.degree(v) for v in range(g.n_vertices)], dtype=np.intp)
        self.edge_valid = self.valid[self.edge_vertex]

    @cached_property
    def color_blocks(self) -> list[Block]:
        return [Block(self, cls) for cls in greedy_coloring(self.graph)]

    def block(self, vertices) -> Block:
        return Block(self, vertices)
