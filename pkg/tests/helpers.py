"""Shared builders for the test-suite: random graphs, potentials, models."""

import numpy as np

from approxsp.graph import FactorGraph, build_grid
from approxsp.learner import TrainingSet
from approxsp.model import FeatureSet, PotentialSet


def random_forest(rng, n_vertices, max_labels=3, keep=0.85, unary=0.2):
    """Random acyclic factor graph: random parent links (some dropped), random
    vertex order inside factors, and a few unary factors."""
    cards = tuple(int(c) for c in rng.integers(2, max_labels + 1, size=n_vertices))
    factors = []
    for v in range(1, n_vertices):
        if rng.random() < keep:
            u = int(rng.integers(0, v))
            factors.append((u, v) if rng.random() < 0.5 else (v, u))
    for v in range(n_vertices):
        if rng.random() < unary:
            factors.append((v,))
    order = rng.permutation(len(factors))
    return FactorGraph(cards, tuple(factors[i] for i in order))


def random_potentials(g, rng, n_examples=1, scale=1.0):
    """Gaussian tables in the padded layout, one set per example."""
    lay = g.layout
    L = lay.n_labels
    node = rng.normal(scale=scale, size=(g.n_vertices, n_examples, L))
    node = np.where(lay.valid[:, None, :], node, -np.inf)
    factor = []
    for grp in lay.groups:
        t = rng.normal(scale=scale, size=(len(grp.factor_ids), n_examples) + (L,) * grp.arity)
        factor.append(np.where(np.expand_dims(grp.valid, 1), t, -np.inf))
    return PotentialSet(g, node, factor)


def random_features(g, rng, n_examples, dim, density=0.6):
    """Random dense-ish feature tables for every (example, parameter, element)."""
    node_terms, factor_terms = [], []
    for e in range(n_examples):
        for r in range(dim):
            for v in range(g.n_vertices):
                if rng.random() < density:
                    node_terms.append((e, r, v, rng.normal(size=g.cards[v])))
            for a, f in enumerate(g.factors):
                if rng.random() < density:
                    shape = tuple(g.cards[u] for u in f)
                    factor_terms.append((e, r, a, rng.normal(size=shape)))
    return FeatureSet.from_tables(g, n_examples, dim, node_terms, factor_terms)


def random_training_set(g, rng, n_examples=2, dim=3):
    feats = random_features(g, rng, n_examples, dim)
    labels = np.stack([[rng.integers(0, c) for c in g.cards] for _ in range(n_examples)])
    return TrainingSet(feats, labels)


def union_find_acyclic(n_vertices, factors):
    """Independent cycle detector on the bipartite vertex/factor graph."""
    parent = list(range(n_vertices + len(factors)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, f in enumerate(factors):
        for v in f:
            ra, rv = find(n_vertices + a), find(v)
            if ra == rv:
                return False
            parent[ra] = rv
    return True


def toy_grid(h=2, w=2, labels=2):
    return build_grid(h, w, labels)
