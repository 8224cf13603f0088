"""Exact computations by enumerating every joint labeling.

The score of a labeling is the sum of its node and factor table entries.
Labelings are enumerated row-major over vertices with the label index
varying fastest in the last vertex, i.e. the joint is a C-ordered array of
shape ``cards``.  Inputs with more than ``MAX_STATES`` labelings are refused.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .inference import BeliefSet
from .model import TrainConfig, regularizer, regularizer_grad
from .numerics import scaled_lse, scaled_softmax

MAX_STATES = 2 ** 20


class StateSpaceTooLarge(ValueError):
    pass


@dataclass
class ExactSummary:
    log_partition: float
    joint: np.ndarray
    node_marginals: list
    factor_marginals: list
    map_labeling: np.ndarray


def _check_size(graph):
    total = 1
    for c in graph.cards:
        total *= int(c)
        if total > MAX_STATES:
            raise StateSpaceTooLarge(f"more than {MAX_STATES} joint labelings")
    return total


def score_tensor(pot, example: int = 0, prior=None) -> np.ndarray:
    """Joint score of every labeling as an array of shape ``cards``."""
    g = pot.graph
    _check_size(g)
    n = g.n_vertices
    nodes, facs = pot.example(example)
    cards = tuple(int(c) for c in g.cards)
    S = np.zeros(cards)
    for v, t in enumerate(nodes):
        if prior is not None:
            t = t + np.asarray(prior[v], dtype=float)[: cards[v]]
        shape = [1] * n
        shape[v] = cards[v]
        S = S + t.reshape(shape)
    for verts, t in zip(g.factors, facs):
        order = np.argsort(verts)
        t = np.transpose(t, order)
        shape = [1] * n
        for v in verts:
            shape[v] = cards[v]
        S = S + t.reshape(shape)
    return S


def exact_soft_max(pot, epsilon: float, example: int = 0, prior=None) -> float:
    """``eps * ln sum_y exp(score(y) / eps)``; the max score at ``eps = 0``."""
    S = score_tensor(pot, example, prior)
    return float(scaled_lse(S.ravel(), epsilon, axis=0))


def exact_marginals(pot, epsilon: float, example: int = 0, prior=None) -> ExactSummary:
    """Joint ``p_eps(y) ∝ exp(score(y) / eps)`` (uniform over maximizers at
    ``eps = 0``) and its vertex and factor marginals."""
    g = pot.graph
    S = score_tensor(pot, example, prior)
    flat = S.ravel()
    logz = float(scaled_lse(flat, epsilon, axis=0))
    joint = scaled_softmax(flat, epsilon, axis=0).reshape(S.shape)
    n = g.n_vertices
    nodes = [joint.sum(axis=tuple(u for u in range(n) if u != v)) for v in range(n)]
    facs = []
    for verts in g.factors:
        m = joint.sum(axis=tuple(u for u in range(n) if u not in verts))
        # summed axes leave the factor's vertices in increasing order
        facs.append(np.transpose(m, np.argsort(np.argsort(verts))))
    map_labeling = np.array(np.unravel_index(int(np.argmax(flat)), S.shape), dtype=np.intp)
    return ExactSummary(logz, joint, nodes, facs, map_labeling)


def _padded_beliefs(graph, summaries) -> BeliefSet:
    lay = graph.layout
    E, L = len(summaries), lay.n_labels
    node = np.zeros((graph.n_vertices, E, L))
    factor = [np.zeros((len(grp.factor_ids), E) + (L,) * grp.arity) for grp in lay.groups]
    for e, s in enumerate(summaries):
        for v, m in enumerate(s.node_marginals):
            node[v, e, : m.size] = m
        for a, m in enumerate(s.factor_marginals):
            sl = tuple(slice(0, c) for c in m.shape)
            factor[lay.factor_group[a]][(lay.factor_row[a], e) + sl] = m
    return BeliefSet(graph, node, factor)


def exact_sp_objective_and_gradient(data, theta, config: TrainConfig):
    """``sum ln Z_eps - d.theta + (C/p)||theta||_p^p`` and its gradient
    ``sum E_p[Phi] - d + C |theta|^(p-1) sign(theta)``."""
    from .learner import moments

    theta = np.asarray(theta, dtype=float)
    pot = data.potentials(theta)
    summaries = [exact_marginals(pot, config.epsilon, e) for e in range(data.n_examples)]
    value = sum(s.log_partition for s in summaries) - data.means @ theta
    value += regularizer(theta, config.C, config.p)
    beliefs = _padded_beliefs(data.graph, summaries)
    grad = moments(beliefs, data.features) - data.means + regularizer_grad(theta, config.C, config.p)
    return float(value), grad


def exact_losses(data, theta, example: int = 0):
    """Structured hinge ``max_y (e(y*, y) + theta.Phi(y)) - theta.Phi(y*)`` and
    negative log-likelihood ``ln Z(x, y*) - theta.Phi(y*)`` for one example,
    both with the example's loss prior inside the maximization / sum."""
    from .model import assemble_potentials

    theta = np.asarray(theta, dtype=float)
    plain = assemble_potentials(theta, data.features)
    prior = data.prior[:, example, :]
    S = score_tensor(plain, example)
    truth = float(S[tuple(data.labels[example])])
    augmented = score_tensor(plain, example, prior).ravel()
    hinge = float(scaled_lse(augmented, 0.0, axis=0)) - truth
    loglik = float(scaled_lse(augmented, 1.0, axis=0)) - truth
    return hinge, loglik
