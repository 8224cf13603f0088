"""Norm-product message passing for fixed potentials.

Messages live in the log domain.  One sweep visits the vertex colour classes
in order; for each class it recomputes all factor-to-vertex messages
``ln m[a->v]`` into the class and then all vertex-to-factor messages
``ln n[v->a]`` out of it.  Each ``ln n`` vector is shifted to sum to zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernel as K
from .model import PotentialSet
from .numerics import scaled_softmax


@dataclass
class InferenceMessages:
    log_n: np.ndarray  # (n_edges, E, L)
    log_m: np.ndarray  # (n_edges, E, L)
    sweeps: int = 0
    residual: float = 0.0


@dataclass
class BeliefSet:
    """Node beliefs ``(n, E, L)`` and per-arity-group factor beliefs
    ``(F_k, E, L, ..., L)``; padded entries are zero."""

    graph: object
    node: np.ndarray
    factor: list

    def example(self, e: int):
        g, lay = self.graph, self.graph.layout
        nodes = [self.node[v, e, : g.cards[v]] for v in range(g.n_vertices)]
        facs = []
        for a, verts in enumerate(g.factors):
            t = self.factor[lay.factor_group[a]][lay.factor_row[a], e]
            facs.append(t[tuple(slice(0, g.cards[v]) for v in verts)])
        return nodes, facs


def run_norm_product(pot: PotentialSet, c_node, c_factor, epsilon: float,
                     tol: float = 1e-8, max_sweeps: int = 1000, init=None):
    """Iterate the message updates until the largest log-message change in a
    sweep drops below ``tol``.  Returns ``(messages, converged)``.

    Convergence is expected for positive weights; with negative vertex weights
    (e.g. Bethe weights on loopy graphs) the flag may stay ``False``.
    """
    g = pot.graph
    lay = g.layout
    c_node, c_factor = K.check_weights(g, c_node, c_factor)
    w = K.Weights(c_node, c_factor, float(epsilon))
    ratio = w.edge_ratio(lay)
    E, L = pot.n_examples, lay.n_labels
    lam = np.zeros((lay.n_edges, E, L)) if init is None else np.array(init.log_n, dtype=float)
    mu = np.zeros_like(lam)
    converged = lay.n_edges == 0
    residual = 0.0
    sweeps = 0
    while not converged and sweeps < max_sweeps:
        residual = K.sweep(lam, mu, pot, lay, w, ratio)
        sweeps += 1
        converged = residual < tol
    log_m = K.all_mu(pot, lam, lay, w)
    return InferenceMessages(lam, log_m, sweeps, residual), converged


def _weights(pot, c_node, c_factor, epsilon):
    c_node, c_factor = K.check_weights(pot.graph, c_node, c_factor)
    return K.Weights(c_node, c_factor, float(epsilon))


def extract_beliefs(msgs: InferenceMessages, pot: PotentialSet, c_node, c_factor,
                    epsilon: float) -> BeliefSet:
    """``b_v ∝ exp((phi_v + sum_a ln m[a->v]) / (eps * c_hat_v))`` and
    ``b_a ∝ exp((phi_a + sum_v ln n[v->a]) / (eps * c_a))``, with the
    uniform-over-maximizers rule at zero scale."""
    lay = pot.graph.layout
    w = _weights(pot, c_node, c_factor, epsilon)
    n, E, L = pot.node.shape
    incoming = pot.node.copy()
    if lay.n_edges:
        incoming = incoming + np.asarray(
            lay.incidence @ msgs.log_m.reshape(lay.n_edges, E * L)).reshape(n, E, L)
    scale_v = w.epsilon * w.c_hat(lay)
    node = scaled_softmax(incoming, scale_v[:, None], axis=-1)
    return BeliefSet(pot.graph, node, K.factor_beliefs(pot, msgs.log_n, lay, w))


def approx_soft_max(msgs: InferenceMessages, pot: PotentialSet, c_node, c_factor,
                    epsilon: float) -> np.ndarray:
    """Local soft-max estimate of ``ln Z_eps`` per example, shape ``(E,)``.

    Sums the eps*c-scaled soft-max of every vertex table
    ``phi_v - sum ln n[v->a]`` and every factor table
    ``phi_a + sum ln n[v->a]``; exact on trees with Bethe weights.
    """
    w = _weights(pot, c_node, c_factor, epsilon)
    return K.primal_terms(pot, msgs.log_n, pot.graph.layout, w)


def predict(pot: PotentialSet, c_node, c_factor, epsilon: float,
            tol: float = 1e-8, max_sweeps: int = 1000) -> np.ndarray:
    """Per-vertex argmax of the node beliefs, ties to the lowest label.

    Returns labels of shape ``(E, n)``.
    """
    msgs, _ = run_norm_product(pot, c_node, c_factor, epsilon, tol=tol, max_sweeps=max_sweeps)
    beliefs = extract_beliefs(msgs, pot, c_node, c_factor, epsilon)
    return np.argmax(beliefs.node, axis=-1).T.astype(np.intp)
