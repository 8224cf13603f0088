"""Vectorized block updates shared by inference and learning.

The learner's multipliers ``lam[v->a]`` and the norm-product messages
``ln n[v->a]`` are the same object; ``mu[a->v]`` equals ``ln m[a->v]``.
All arrays are edge-major: ``lam.shape == (n_edges, n_examples, L)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Block, FactorGraph, Layout
from .numerics import scaled_lse, scaled_softmax


@dataclass
class Weights:
    """Entropy weights prepared for one value of epsilon."""

    c_node: np.ndarray
    c_factor: np.ndarray
    epsilon: float

    def __post_init__(self):
        self.c_node = np.asarray(self.c_node, dtype=float)
        self.c_factor = np.asarray(self.c_factor, dtype=float)

    @property
    def node_scale(self) -> np.ndarray:
        return self.epsilon * self.c_node

    @property
    def factor_scale(self) -> np.ndarray:
        return self.epsilon * self.c_factor

    def c_hat(self, layout: Layout) -> np.ndarray:
        """``c_v + sum_{a in N(v)} c_a``."""
        return self.c_node + np.bincount(layout.edge_vertex, weights=self.c_factor[layout.edge_factor],
                                         minlength=layout.n_vertices)

    def edge_ratio(self, layout: Layout) -> np.ndarray:
        """``c_a / c_hat_v`` per edge, the share of ``phi_v + sum mu`` given to ``a``.

        Zero weights are kept: a zero ``c_a`` next to a positive ``c_hat_v``
        gets share 0, which ties its max term.  Where ``c_v`` and every
        incident ``c_a`` vanish all terms at ``v`` are maxima and any positive
        split is optimal; the factors then share equally.
        """
        c_hat = self.c_hat(layout)
        deg = layout.degrees
        all_max = (self.c_node == 0) & (c_hat == 0) & (deg > 0)
        if np.any(all_max):
            all_max &= np.bincount(layout.edge_vertex, weights=self.c_factor[layout.edge_factor] != 0,
                                   minlength=layout.n_vertices) == 0
        bad = np.nonzero((deg > 0) & (c_hat == 0) & ~all_max)[0]
        if bad.size:
            raise ValueError(f"c_v + sum_a c_a vanishes at vertices {bad[:5].tolist()}")
        ev = layout.edge_vertex
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = self.c_factor[layout.edge_factor] / c_hat[ev]
        return np.where(all_max[ev], 1.0 / np.maximum(deg[ev], 1), ratio)


def check_weights(graph: FactorGraph, c_node, c_factor):
    c_node = np.asarray(c_node, dtype=float)
    c_factor = np.asarray(c_factor, dtype=float)
    if c_node.shape != (graph.n_vertices,) or c_factor.shape != (graph.n_factors,):
        raise ValueError("entropy weights must have one entry per vertex / factor")
    if np.any(c_factor < 0):
        raise ValueError("factor entropy weights must be non-negative")
    return c_node, c_factor


def _expand_edge(lam_j, arity, j, L):
    r, E = lam_j.shape[:2]
    shape = [r, E] + [1] * arity
    shape[2 + j] = L
    return lam_j.reshape(shape)


def factor_args(pot_g, lam, grp, rows=None, skip=None):
    """``phi_a + sum_{u in a, u != skip} lam[u->a]`` for a factor group."""
    L = lam.shape[2]
    T = pot_g if rows is None else pot_g[rows]
    edges = grp.edges if rows is None else grp.edges[rows]
    for i in range(grp.arity):
        if i != skip:
            T = T + _expand_edge(lam[edges[:, i]], grp.arity, i, L)
    return T


def node_args(pot_node, lam, layout):
    """``phi_v - sum_{a in N(v)} lam[v->a]``."""
    n, E, L = pot_node.shape
    if layout.n_edges == 0:
        return pot_node.copy()
    total = layout.incidence @ lam.reshape(layout.n_edges, E * L)
    return pot_node - np.asarray(total).reshape(n, E, L)


def mu_piece(pot_g, lam, grp, rows, j, scale_rows):
    T = factor_args(pot_g, lam, grp, rows=rows, skip=j)
    axes = tuple(2 + i for i in range(grp.arity) if i != j)
    return scaled_lse(T, scale_rows[:, None, None], axis=axes)


def all_mu(pot, lam, layout: Layout, w: Weights):
    """``mu[a->v]`` for every edge from the current multipliers."""
    mu = np.empty_like(lam)
    s_f = w.factor_scale
    for gi, grp in enumerate(layout.groups):
        rows = np.arange(len(grp.factor_ids))
        for j in range(grp.arity):
            mu[grp.edges[:, j]] = mu_piece(pot.factor[gi], lam, grp, rows, j, s_f[grp.factor_ids])
    return mu


def update_block(lam, mu, pot, layout: Layout, block: Block, w: Weights, ratio) -> float:
    """Closed-form optimal multipliers for every vertex of ``block`` (in place).

    Returns the largest absolute change of a multiplier entry.
    """
    if block.edge_ids.size == 0:
        return 0.0
    E, L = lam.shape[1], lam.shape[2]
    s_f = w.factor_scale
    mu_cat = np.concatenate([
        mu_piece(pot.factor[gi], lam, layout.groups[gi], rows, j,
                 s_f[layout.groups[gi].factor_ids[rows]])
        for gi, j, rows, _ in block.pieces
    ])
    b = block.edge_ids.size
    msum = np.asarray(block.incidence @ mu_cat.reshape(b, E * L)).reshape(-1, E, L)
    A = pot.node[block.vertices] + msum
    eids = block.edge_ids
    with np.errstate(invalid="ignore"):
        new = ratio[eids][:, None, None] * A[block.edge_local_vertex] - mu_cat
    if layout.padded:
        valid = layout.edge_valid[eids][:, None, :]
        new = np.where(valid, new, 0.0)
        new -= (np.sum(new, axis=-1, keepdims=True) / layout.cards[layout.edge_vertex[eids]][:, None, None])
        new = np.where(valid, new, 0.0)
    else:
        new -= np.mean(new, axis=-1, keepdims=True)
    change = float(np.max(np.abs(new - lam[eids])))
    lam[eids] = new
    mu[eids] = mu_cat
    return change


def sweep(lam, mu, pot, layout: Layout, w: Weights, ratio, blocks=None) -> float:
    change = 0.0
    for block in (layout.color_blocks if blocks is None else blocks):
        change = max(change, update_block(lam, mu, pot, layout, block, w, ratio))
    return change


def primal_terms(pot, lam, layout: Layout, w: Weights):
    """Per-example sums of the local soft-max terms, shape ``(E,)``."""
    total = np.zeros(pot.n_examples)
    if layout.n_vertices:
        s_v = w.node_scale
        masked = layout.padded and bool(np.any(s_v < 0))
        total += np.sum(scaled_lse(node_args(pot.node, lam, layout), s_v[:, None], axis=-1,
                                   masked=masked), axis=0)
    s_f = w.factor_scale
    for gi, grp in enumerate(layout.groups):
        T = factor_args(pot.factor[gi], lam, grp)
        axes = tuple(range(2, 2 + grp.arity))
        total += np.sum(scaled_lse(T, s_f[grp.factor_ids][:, None], axis=axes), axis=0)
    return total


def factor_beliefs(pot, lam, layout: Layout, w: Weights):
    s_f = w.factor_scale
    out = []
    for gi, grp in enumerate(layout.groups):
        T = factor_args(pot.factor[gi], lam, grp)
        axes = tuple(range(2, 2 + grp.arity))
        out.append(scaled_softmax(T, s_f[grp.factor_ids][:, None], axis=axes))
    return out


def factor_marginals(layout: Layout, fb):
    """``sum_{y_a \\ y_v} b_a`` for every edge, shape ``(n_edges, E, L)``."""
    E, L = (fb[0].shape[1], layout.n_labels) if fb else (0, layout.n_labels)
    out = np.zeros((layout.n_edges, E, L))
    for grp, b in zip(layout.groups, fb):
        for j in range(grp.arity):
            axes = tuple(2 + i for i in range(grp.arity) if i != j)
            out[grp.edges[:, j]] = np.sum(b, axis=axes) if axes else b
    return out
