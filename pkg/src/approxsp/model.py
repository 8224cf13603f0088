"""Features, parameters, loss priors and theta-weighted potentials.

Array layout: everything indexed by a graph element puts that element first
and the training example second, e.g. node tables are ``(n_vertices,
n_examples, L)`` and factor tables of arity ``k`` are ``(F_k, n_examples,
L, ..., L)``, with labels padded to ``L = max(cards)``.  Padded entries of
potentials hold ``-inf``.

A feature map is stored as one sparse matrix per table family whose rows are
the flattened table entries in that layout and whose columns are the
parameters, so potentials are a single sparse mat-vec and gradients its
transpose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import FactorGraph

MODEL_FORMAT = "approxsp-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class FeatureSet:
    """Local feature tables ``phi_{r,v}(x, y_v)`` and ``phi_{r,a}(x, y_a)``.

    ``node`` has ``n * E * L`` rows, ``factor[g]`` has ``F_g * E * L**k_g``
    rows (see the module docstring for the ordering).
    """

    graph: FactorGraph
    n_examples: int
    node: sp.csr_matrix
    factor: tuple[sp.csr_matrix, ...]

    def __post_init__(self):
        lay = self.graph.layout
        E, L = self.n_examples, lay.n_labels
        if self.node.shape[0] != lay.n_vertices * E * L:
            raise ValueError("node feature matrix has the wrong number of rows")
        if len(self.factor) != len(lay.groups):
            raise ValueError("one factor feature matrix per arity group is required")
        for grp, mat in zip(lay.groups, self.factor):
            if mat.shape[0] != len(grp.factor_ids) * E * L ** grp.arity:
                raise ValueError(f"arity-{grp.arity} feature matrix has the wrong number of rows")
            if mat.shape[1] != self.node.shape[1]:
                raise ValueError("feature matrices disagree on the parameter dimension")
        for mat in (self.node, *self.factor):
            if mat.nnz and not np.all(np.isfinite(mat.data)):
                raise ValueError("feature tables must be finite")

    @property
    def dim(self) -> int:
        return self.node.shape[1]

    @classmethod
    def from_tables(cls, graph: FactorGraph, n_examples: int, dim: int,
                    node_terms=(), factor_terms=()) -> "FeatureSet":
        """Build from explicit tables.

        ``node_terms`` yields ``(example, r, v, table)`` with ``len(table) ==
        cards[v]``; ``factor_terms`` yields ``(example, r, a, table)`` with
        ``table.shape`` equal to the cards of factor ``a``'s vertices in order.
        Repeated ``(example, r, element)`` entries are summed.
        """
        lay = graph.layout
        E, L = n_examples, lay.n_labels
        rows, cols, vals = [], [], []
        for e, r, v, table in node_terms:
            t = np.asarray(table, dtype=float).ravel()
            if t.size != graph.cards[v]:
                raise ValueError(f"node table for vertex {v} must have {graph.cards[v]} entries")
            base = (v * E + e) * L
            rows.extend(base + np.arange(t.size))
            cols.extend([r] * t.size)
            vals.extend(t)
        node = sp.csr_matrix((vals, (rows, cols)), shape=(lay.n_vertices * E * L, dim))

        per_group = [([], [], []) for _ in lay.groups]
        for e, r, a, table in factor_terms:
            verts = graph.factors[a]
            t = np.asarray(table, dtype=float)
            want = tuple(graph.cards[v] for v in verts)
            if t.shape != want:
                raise ValueError(f"factor table for factor {a} must have shape {want}")
            gi, i = lay.factor_group[a], lay.factor_row[a]
            k = len(verts)
            padded = np.zeros((L,) * k)
            padded[tuple(slice(0, c) for c in want)] = t
            mask = np.zeros((L,) * k, dtype=bool)
            mask[tuple(slice(0, c) for c in want)] = True
            flat = np.nonzero(mask.ravel())[0]
            base = (i * E + e) * L ** k
            rr, cc, vv = per_group[gi]
            rr.extend(base + flat)
            cc.extend([r] * flat.size)
            vv.extend(padded.ravel()[flat])
        factor = tuple(
            sp.csr_matrix((vv, (rr, cc)), shape=(len(grp.factor_ids) * E * L ** grp.arity, dim))
            for grp, (rr, cc, vv) in zip(lay.groups, per_group)
        )
        return cls(graph, E, node, factor)


@dataclass
class PotentialSet:
    """``node[v, e, y] = e_{y,v} + sum_r theta_r phi_{r,v}`` and
    ``factor[g][i, e, y_1..y_k] = sum_r theta_r phi_{r,a}``."""

    graph: FactorGraph
    node: np.ndarray
    factor: list[np.ndarray]

    @property
    def n_examples(self) -> int:
        return self.node.shape[1]

    def example(self, e: int):
        """Unpadded per-example tables: ``(node list, factor list)`` in graph order."""
        g, lay = self.graph, self.graph.layout
        nodes = [self.node[v, e, : g.cards[v]].copy() for v in range(g.n_vertices)]
        facs = []
        for a, verts in enumerate(g.factors):
            t = self.factor[lay.factor_group[a]][lay.factor_row[a], e]
            facs.append(t[tuple(slice(0, g.cards[v]) for v in verts)].copy())
        return nodes, facs

    @classmethod
    def from_tables(cls, graph: FactorGraph, node_tables, factor_tables) -> "PotentialSet":
        """Single-example potentials from unpadded per-vertex / per-factor tables."""
        lay = graph.layout
        L = lay.n_labels
        node = np.full((graph.n_vertices, 1, L), -np.inf)
        for v, t in enumerate(node_tables):
            node[v, 0, : graph.cards[v]] = np.asarray(t, dtype=float)
        factor = [np.full((len(grp.factor_ids), 1) + (L,) * grp.arity, -np.inf) for grp in lay.groups]
        for a, t in enumerate(factor_tables):
            t = np.asarray(t, dtype=float)
            sl = tuple(slice(0, graph.cards[v]) for v in graph.factors[a])
            factor[lay.factor_group[a]][(lay.factor_row[a], 0) + sl] = t
        return cls(graph, node, factor)


def assemble_potentials(theta, features: FeatureSet, prior=None) -> PotentialSet:
    """theta-weighted potentials; the loss prior enters node tables only."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (features.dim,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({features.dim},)")
    lay = features.graph.layout
    E, L = features.n_examples, lay.n_labels
    node = (features.node @ theta).reshape(lay.n_vertices, E, L)
    if prior is not None:
        prior = np.asarray(prior, dtype=float)
        if prior.shape != node.shape:
            raise ValueError(f"prior has shape {prior.shape}, expected {node.shape}")
        node = node + prior
    if lay.padded:
        node = np.where(lay.valid[:, None, :], node, -np.inf)
    factor = []
    for grp, mat in zip(lay.groups, features.factor):
        t = (mat @ theta).reshape((len(grp.factor_ids), E) + (L,) * grp.arity)
        if lay.padded:
            t = np.where(np.expand_dims(grp.valid, 1), t, -np.inf)
        factor.append(t)
    return PotentialSet(features.graph, node, factor)


def label_indicators(graph: FactorGraph, labels):
    """One-hot tables of a labeling ``(E, n)`` in the padded layout:
    ``(n, E, L)`` for nodes and ``(F_k, E, L**k)`` per factor group."""
    lay = graph.layout
    Y = np.atleast_2d(np.asarray(labels, dtype=np.intp))
    E, L = Y.shape[0], lay.n_labels
    if Y.shape[1] != graph.n_vertices:
        raise ValueError("labeling length does not match the graph")
    if np.any(Y < 0) or np.any(Y >= lay.cards[None, :]):
        raise ValueError("label out of range")
    node = np.zeros((graph.n_vertices, E, L))
    node[np.arange(graph.n_vertices)[:, None], np.arange(E)[None, :], Y.T] = 1.0
    factor = []
    for grp in lay.groups:
        flat = np.zeros((len(grp.factor_ids), E), dtype=np.intp)
        for j in range(grp.arity):
            flat = flat * L + Y[:, grp.vertices[:, j]].T
        t = np.zeros((len(grp.factor_ids), E, L ** grp.arity))
        t[np.arange(len(grp.factor_ids))[:, None], np.arange(E)[None, :], flat] = 1.0
        factor.append(t)
    return node, factor


def empirical_means(features: FeatureSet, labels) -> np.ndarray:
    """``d = sum_(x,y) Phi(x, y)`` with ``labels`` of shape ``(E, n)``."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return np.zeros(features.dim)
    node, factor = label_indicators(features.graph, labels)
    if node.shape[1] != features.n_examples:
        raise ValueError("one labeling per example is required")
    d = features.node.T @ node.ravel()
    for mat, t in zip(features.factor, factor):
        d = d + mat.T @ t.ravel()
    return np.asarray(d, dtype=float)


def hamming_prior(graph: FactorGraph, labels) -> np.ndarray:
    """Per-vertex Hamming loss ``e_{y,v}(y') = [y' != y_v]``.

    A single labeling ``(n,)`` gives ``(n, L)``; a stack ``(E, n)`` gives
    ``(n, E, L)``.  Padded labels get 0.
    """
    lay = graph.layout
    Y = np.asarray(labels, dtype=np.intp)
    single = Y.ndim == 1
    Y = np.atleast_2d(Y)
    prior = (np.arange(lay.n_labels)[None, None, :] != Y.T[:, :, None]).astype(float)
    prior = np.where(lay.valid[:, None, :], prior, 0.0)
    return prior[:, 0, :] if single else prior


def bethe_weights(graph: FactorGraph):
    """``c_a = 1`` and ``c_v = 1 - |N(v)|``."""
    c_factor = np.ones(graph.n_factors)
    c_node = 1.0 - graph.layout.degrees.astype(float)
    return c_node, c_factor


@dataclass
class TrainConfig:
    epsilon: float = 1.0
    C: float = 1.0
    p: int = 2
    c_node: float | np.ndarray = 1.0
    c_factor: float | np.ndarray = 1.0
    nonconvex: bool = False
    max_iter: int = 2000
    gap_tol: float = 1e-5
    grad_tol: float = 1e-6
    stop_on_gap: bool = True
    inner_sweeps: int = 1
    eta0: float = 1.0
    eta_growth: float = 2.0
    backtrack: float = 0.5
    armijo: float = 1e-4
    eta_min: float = 1e-12
    n_jobs: int = 1
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be a finite non-negative number, got {self.epsilon}")
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if self.p not in (1, 2):
            raise ValueError(f"p must be 1 or 2, got {self.p}")
        if np.any(np.asarray(self.c_factor) < 0):
            raise ValueError("factor entropy weights must be non-negative")
        if np.any(np.asarray(self.c_node) < 0) and not self.nonconvex:
            raise ValueError("negative vertex entropy weights need nonconvex=True")
        if self.inner_sweeps < 1 or self.max_iter < 0 or self.n_jobs < 1:
            raise ValueError("inner_sweeps and n_jobs must be >= 1 and max_iter >= 0")

    @property
    def q(self) -> float:
        return math.inf if self.p == 1 else self.p / (self.p - 1)

    def weights(self, graph: FactorGraph):
        """Per-vertex and per-factor entropy weights as arrays."""
        c_node = np.broadcast_to(np.asarray(self.c_node, dtype=float), (graph.n_vertices,)).copy()
        c_factor = np.broadcast_to(np.asarray(self.c_factor, dtype=float), (graph.n_factors,)).copy()
        return c_node, c_factor


def regularizer(theta, C: float, p: int) -> float:
    return C / p * float(np.sum(np.abs(theta) ** p))


def regularizer_grad(theta, C: float, p: int) -> np.ndarray:
    return C * np.abs(theta) ** (p - 1) * np.sign(theta)


# --- denoising parameterizations ---------------------------------------------

def denoising_dim(graph: FactorGraph, mode: str) -> int:
    L = graph.layout.n_labels
    if mode == "full":
        return 2 * graph.n_vertices * L + graph.n_factors * L * L
    if mode == "shared":
        return 2 * (L - 1) + 2
    raise ValueError(f"unknown parameter mode {mode!r}")


def denoising_features(graph: FactorGraph, observations, mode: str = "full") -> FeatureSet:
    """Features for grid denoising from observed pixel values ``(E, n)``.

    ``full``: per vertex and label a bias and a pixel-value indicator
    (``x_v [y_v = k]``), and one indicator per pairwise factor entry.
    ``shared``: one bias and one pixel weight per non-zero label for all
    vertices, plus an Ising table ``[1, -1; -1, 1]`` and its contrast-scaled
    copy ``|x_u - x_v| * Ising`` for all edges.
    """
    lay = graph.layout
    if any(len(f) != 2 for f in graph.factors):
        raise ValueError("denoising features expect a pairwise graph")
    X = np.atleast_2d(np.asarray(observations, dtype=float))
    E, n = X.shape
    if n != graph.n_vertices:
        raise ValueError("observation size does not match the graph")
    L = lay.n_labels
    F = graph.n_factors
    dim = denoising_dim(graph, mode)
    v_idx, e_idx, k_idx = np.meshgrid(np.arange(n), np.arange(E), np.arange(L), indexing="ij")
    node_row = ((v_idx * E + e_idx) * L + k_idx).ravel()
    xv = X.T[:, :, None] * np.ones(L)
    valid = np.broadcast_to(lay.valid[:, None, :], (n, E, L)).ravel()
    groups = [grp for grp in lay.groups if grp.arity == 2]
    grp = groups[0] if groups else None
    n_rows_f = F * E * L * L

    if mode == "full":
        bias_col = (v_idx * L + k_idx).ravel()
        pix_col = n * L + bias_col
        rows = np.concatenate([node_row[valid], node_row[valid]])
        cols = np.concatenate([bias_col[valid], pix_col[valid]])
        vals = np.concatenate([np.ones(valid.sum()), xv.ravel()[valid]])
        node = sp.csr_matrix((vals, (rows, cols)), shape=(n * E * L, dim))
        if grp is None:
            return FeatureSet(graph, E, node, ())
        i_idx, e2, c_idx = np.meshgrid(np.arange(F), np.arange(E), np.arange(L * L), indexing="ij")
        fvalid = np.broadcast_to(grp.valid.reshape(F, 1, L * L), (F, E, L * L)).ravel()
        frow = ((i_idx * E + e2) * L * L + c_idx).ravel()[fvalid]
        fcol = (2 * n * L + grp.factor_ids[i_idx] * L * L + c_idx).ravel()[fvalid]
        factor = sp.csr_matrix((np.ones(frow.size), (frow, fcol)), shape=(n_rows_f, dim))
        return FeatureSet(graph, E, node, (factor,))

    if mode == "shared":
        sel = valid & (k_idx.ravel() > 0)
        bias_col = (k_idx.ravel() - 1)
        pix_col = (L - 1) + bias_col
        rows = np.concatenate([node_row[sel], node_row[sel]])
        cols = np.concatenate([bias_col[sel], pix_col[sel]])
        vals = np.concatenate([np.ones(sel.sum()), xv.ravel()[sel]])
        node = sp.csr_matrix((vals, (rows, cols)), shape=(n * E * L, dim))
        if grp is None:
            return FeatureSet(graph, E, node, ())
        ising = np.where(np.eye(L, dtype=bool), 1.0, -1.0).ravel()
        i_idx, e2, c_idx = np.meshgrid(np.arange(F), np.arange(E), np.arange(L * L), indexing="ij")
        fvalid = np.broadcast_to(grp.valid.reshape(F, 1, L * L), (F, E, L * L)).ravel()
        frow = ((i_idx * E + e2) * L * L + c_idx).ravel()[fvalid]
        contrast = np.abs(X[:, grp.vertices[:, 0]] - X[:, grp.vertices[:, 1]]).T  # (F, E)
        base = ising[c_idx].ravel()[fvalid]
        scaled = (ising[c_idx] * contrast[:, :, None]).ravel()[fvalid]
        rows = np.concatenate([frow, frow])
        cols = np.concatenate([np.full(frow.size, 2 * (L - 1)), np.full(frow.size, 2 * (L - 1) + 1)])
        factor = sp.csr_matrix((np.concatenate([base, scaled]), (rows, cols)), shape=(n_rows_f, dim))
        return FeatureSet(graph, E, node, (factor,))

    raise ValueError(f"unknown parameter mode {mode!r}")


# --- model files ---------------------------------------------------------------

def save_model(path, theta, meta: dict | None = None) -> None:
    """Versioned text model: header lines, ``end``, then one theta per line.

    Header order: format name, ``version``, ``dim``, ``graph`` (height width
    labels), then any extra ``key value`` pairs.  Floats use ``repr`` so the
    file round-trips exactly.
    """
    theta = np.asarray(theta, dtype=float)
    meta = dict(meta or {})
    graph_dims = meta.pop("graph", (0, 0, 0))
    lines = [MODEL_FORMAT, f"version {MODEL_VERSION}", f"dim {theta.size}",
             "graph " + " ".join(str(int(x)) for x in graph_dims)]
    for key, value in meta.items():
        if any(ch.isspace() for ch in str(key)):
            raise ValueError(f"model metadata key {key!r} contains whitespace")
        lines.append(f"{key} {value!r}" if isinstance(value, float) else f"{key} {value}")
    lines.append("end")
    lines.extend(repr(float(t)) for t in theta)
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path):
    """Inverse of :func:`save_model`; returns ``(theta, meta)``."""
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != MODEL_FORMAT:
        raise ValueError(f"{path}: not an {MODEL_FORMAT} file")
    meta: dict = {}
    i = 1
    while i < len(text) and text[i].strip() != "end":
        key, _, value = text[i].partition(" ")
        meta[key] = value.strip()
        i += 1
    if i == len(text):
        raise ValueError(f"{path}: missing 'end' line")
    version = int(meta.pop("version", "-1"))
    if version != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    dim = int(meta.pop("dim"))
    meta["graph"] = tuple(int(x) for x in meta.get("graph", "0 0 0").split())
    theta = np.array([float(s) for s in text[i + 1:] if s.strip()], dtype=float)
    if theta.size != dim:
        raise ValueError(f"{path}: header says dim {dim} but {theta.size} values follow")
    return theta, meta
