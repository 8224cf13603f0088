"""Block coordinate descent for approximated structured prediction.

The primal variables are the multipliers ``lam[x,y,v->a](y_v)`` (one table
per training example and vertex/factor incidence) and the parameters
``theta``.  The primal objective is

    sum_{x,y} [ sum_v eps c_v lse_{eps c_v}(phi_v - sum_a lam[v->a])
              + sum_a eps c_a lse_{eps c_a}(phi_a + sum_v lam[v->a]) ]
    - d.theta + (C/p) ||theta||_p^p

where ``lse_s(t) = s ln sum exp(t / s)`` (``max`` at ``s = 0``).  Each outer
iteration minimizes it exactly over the multipliers of every vertex block in
turn, then takes one gradient step in ``theta`` with a line search.  The dual
(local entropies, loss prior and an ``l_q^q`` moment-matching penalty over
locally consistent beliefs) certifies the gap.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernel as K
from .inference import BeliefSet
from .model import (FeatureSet, PotentialSet, TrainConfig, assemble_potentials, empirical_means,
                    hamming_prior, regularizer, regularizer_grad)
from .numerics import _tie_mask, entropy, scaled_softmax


@dataclass
class TrainingSet:
    """Features of ``E`` examples with their true labelings ``(E, n)``.

    ``prior`` defaults to the per-vertex Hamming loss of ``labels``.
    """

    features: FeatureSet
    labels: np.ndarray
    prior: np.ndarray | None = None

    def __post_init__(self):
        self.labels = np.atleast_2d(np.asarray(self.labels, dtype=np.intp))
        if self.labels.shape != (self.features.n_examples, self.features.graph.n_vertices):
            raise ValueError(f"labels must have shape (n_examples, n_vertices), got {self.labels.shape}")
        if self.prior is None:
            self.prior = hamming_prior(self.features.graph, self.labels)

    @property
    def graph(self):
        return self.features.graph

    @property
    def n_examples(self) -> int:
        return self.features.n_examples

    @cached_property
    def means(self) -> np.ndarray:
        return empirical_means(self.features, self.labels)

    def potentials(self, theta) -> PotentialSet:
        return assemble_potentials(theta, self.features, self.prior)


@dataclass
class MessageState:
    """Multipliers ``lam`` and the last computed ``mu`` tables, both
    ``(n_edges, E, L)``.  Each ``lam`` table sums to zero over real labels."""

    lam: np.ndarray
    mu: np.ndarray

    @classmethod
    def zeros(cls, data: TrainingSet) -> "MessageState":
        lay = data.graph.layout
        shape = (lay.n_edges, data.n_examples, lay.n_labels)
        return cls(np.zeros(shape), np.zeros(shape))

    def copy(self) -> "MessageState":
        return MessageState(self.lam.copy(), self.mu.copy())


@dataclass
class TrainTrace:
    rows: list = field(default_factory=list)

    COLUMNS = ("iter", "primal", "dual", "gap", "grad_norm", "eta", "seconds")

    def append(self, **row):
        self.rows.append(row)

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def __len__(self):
        return len(self.rows)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            for r in self.rows:
                writer.writerow([r["iter"]] + [repr(float(r[c])) for c in self.COLUMNS[1:]])


@dataclass
class TrainResult:
    theta: np.ndarray
    state: MessageState
    trace: TrainTrace
    status: str
    best_primal: float
    best_dual: float

    @property
    def gap(self) -> float:
        return self.best_primal - self.best_dual

    @property
    def relative_gap(self) -> float:
        return self.gap / (1.0 + abs(self.best_primal))

    @property
    def iterations(self) -> int:
        return len(self.trace)


def _weights(data: TrainingSet, config: TrainConfig) -> K.Weights:
    c_node, c_factor = config.weights(data.graph)
    return K.Weights(c_node, c_factor, config.epsilon)


def _example_slices(E: int, n_jobs: int):
    n_jobs = max(1, min(n_jobs, E))
    bounds = np.linspace(0, E, n_jobs + 1).astype(int)
    return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _sub_potentials(pot: PotentialSet, sl: slice) -> PotentialSet:
    return PotentialSet(pot.graph, pot.node[:, sl], [f[:, sl] for f in pot.factor])


def lambda_sweep(state: MessageState, pot: PotentialSet, config: TrainConfig, blocks=None) -> float:
    """One pass of block updates over all vertices of all examples.

    Examples are independent, so with ``n_jobs > 1`` they are split into
    contiguous chunks handled by worker threads; results do not depend on the
    chunking.
    """
    lay = pot.graph.layout
    w = K.Weights(*config.weights(pot.graph), config.epsilon)
    ratio = w.edge_ratio(lay)
    slices = _example_slices(pot.n_examples, config.n_jobs)
    if len(slices) == 1:
        return K.sweep(state.lam, state.mu, pot, lay, w, ratio, blocks)

    def run(sl):
        lam, mu = state.lam[:, sl], state.mu[:, sl]
        return K.sweep(lam, mu, _sub_potentials(pot, sl), lay, w, ratio, blocks)

    with ThreadPoolExecutor(max_workers=len(slices)) as pool:
        return max(pool.map(run, slices))


def lambda_block_update(state: MessageState, data: TrainingSet, theta, config: TrainConfig,
                        v: int, example: int | None = None) -> float:
    """Optimal multipliers ``lam[v->a]`` for all ``a in N(v)`` given the rest.

    Updates every example, or only ``example`` when given.  Returns the
    largest change of an entry.
    """
    lay = data.graph.layout
    w = _weights(data, config)
    ratio = w.edge_ratio(lay)
    block = lay.block([v])
    pot = data.potentials(theta)
    if example is None:
        return K.update_block(state.lam, state.mu, pot, lay, block, w, ratio)
    sl = slice(example, example + 1)
    return K.update_block(state.lam[:, sl], state.mu[:, sl], _sub_potentials(pot, sl), lay,
                          block, w, ratio)


def _node_beliefs(state, pot, lay, w):
    arg = K.node_args(pot.node, state.lam, lay)
    s_v = w.node_scale
    masked = lay.padded and bool(np.any(s_v < 0))
    b = scaled_softmax(arg, s_v[:, None], axis=-1, masked=masked)
    # eps > 0 with c_v = 0: the vertex term is a max, any distribution on its
    # maximizers is a subgradient; pick the one the factors agree on at
    # stationarity.
    flat = np.nonzero((s_v == 0) & (w.epsilon > 0) & (lay.degrees > 0))[0]
    if flat.size:
        mu = K.all_mu(pot, state.lam, lay, w)
        n, E, L = pot.node.shape
        incoming = pot.node + np.asarray(
            lay.incidence @ mu.reshape(lay.n_edges, E * L)).reshape(n, E, L)
        scale = w.epsilon * w.c_hat(lay)[flat]
        soft = scaled_softmax(incoming[flat], scale[:, None], axis=-1)
        soft = soft * _tie_mask(arg[flat], (2,))
        b[flat] = soft / np.sum(soft, axis=-1, keepdims=True)
    return b


def beliefs_from_state(state: MessageState, data: TrainingSet, theta, config: TrainConfig,
                       pot: PotentialSet | None = None) -> BeliefSet:
    """Beliefs maximizing the Lagrangian at ``(lam, theta)``:
    ``b_v ∝ exp((phi_v - sum_a lam[v->a]) / (eps c_v))`` and
    ``b_a ∝ exp((phi_a + sum_v lam[v->a]) / (eps c_a))``."""
    pot = data.potentials(theta) if pot is None else pot
    lay = data.graph.layout
    w = _weights(data, config)
    return BeliefSet(data.graph, _node_beliefs(state, pot, lay, w),
                     K.factor_beliefs(pot, state.lam, lay, w))


def moments(beliefs: BeliefSet, features: FeatureSet) -> np.ndarray:
    """Belief-averaged feature sums ``sum b_v phi_{r,v} + sum b_a phi_{r,a}``."""
    z = features.node.T @ beliefs.node.ravel()
    for mat, b in zip(features.factor, beliefs.factor):
        z = z + mat.T @ b.ravel()
    return np.asarray(z, dtype=float)


def theta_gradient(state: MessageState, data: TrainingSet, theta, config: TrainConfig,
                   beliefs: BeliefSet | None = None) -> np.ndarray:
    """Gradient of the primal in ``theta`` (a subgradient at ``eps = 0``)."""
    theta = np.asarray(theta, dtype=float)
    if beliefs is None:
        beliefs = beliefs_from_state(state, data, theta, config)
    return moments(beliefs, data.features) - data.means + regularizer_grad(theta, config.C, config.p)


def primal_objective(state: MessageState, data: TrainingSet, theta, config: TrainConfig,
                     pot: PotentialSet | None = None) -> float:
    theta = np.asarray(theta, dtype=float)
    pot = data.potentials(theta) if pot is None else pot
    local = K.primal_terms(pot, state.lam, data.graph.layout, _weights(data, config))
    return float(np.sum(local) - data.means @ theta + regularizer(theta, config.C, config.p))


_PROJECTION_ROUNDOFF = 1e-14


def project_beliefs(beliefs: BeliefSet) -> BeliefSet:
    """A locally consistent belief set built from possibly inconsistent beliefs.

    Vertex beliefs become the average of the factor marginals over ``N(v)``
    (isolated vertices keep theirs).  Each factor belief is then shifted
    additively so its marginals equal those vertex beliefs, and mixed with
    the product of its vertex beliefs just enough to stay non-negative.
    """
    g = beliefs.graph
    lay = g.layout
    L = lay.n_labels
    fm = K.factor_marginals(lay, beliefs.factor)
    n, E, _ = beliefs.node.shape
    node = beliefs.node.copy()
    if lay.n_edges:
        summed = np.asarray(lay.incidence @ fm.reshape(lay.n_edges, E * L)).reshape(n, E, L)
        has = lay.degrees > 0
        node[has] = summed[has] / lay.degrees[has][:, None, None]
    factor = []
    for grp, b in zip(lay.groups, beliefs.factor):
        k = grp.arity
        new = b.copy()
        product = np.ones_like(b)
        for j in range(k):
            target = node[grp.vertices[:, j]]
            delta = target - fm[grp.edges[:, j]]
            spread = np.ones((len(grp.factor_ids),) + (1,) * (k + 1))
            denom = np.ones(len(grp.factor_ids))
            for i in range(k):
                if i != j:
                    vi = lay.valid[grp.vertices[:, i]].astype(float)
                    spread = spread * K._expand_edge(vi[:, None, :], k, i, L)
                    denom *= lay.cards[grp.vertices[:, i]]
            new = new + K._expand_edge(delta, k, j, L) * spread / denom.reshape((-1,) + (1,) * (k + 1))
            product = product * K._expand_edge(target, k, j, L)
        axes = tuple(range(2, 2 + k))
        # negatives at roundoff level are clipped below instead of mixed away:
        # next to a near-zero product entry they would force gamma towards 1
        with np.errstate(divide="ignore", invalid="ignore"):
            need = np.where(new < -_PROJECTION_ROUNDOFF, -new / (product - new), 0.0)
        gamma = np.clip(np.max(need, axis=axes, keepdims=True), 0.0, 1.0)
        new = (1 - gamma) * new + gamma * product
        factor.append(np.where(np.expand_dims(grp.valid, 1), np.maximum(new, 0.0), 0.0))
    return BeliefSet(g, node, factor)


def dual_objective(beliefs: BeliefSet, data: TrainingSet, config: TrainConfig,
                   project: bool = True) -> float:
    """Approximated dual at locally consistent beliefs (a lower bound on the
    primal for non-negative weights).  Requires a finite ``q`` (``p = 2``)."""
    if not math.isfinite(config.q):
        raise ValueError("the dual needs a finite conjugate exponent q; use p = 2")
    lay = data.graph.layout
    if project:
        beliefs = project_beliefs(beliefs)
    else:
        fm = K.factor_marginals(lay, beliefs.factor)
        if lay.n_edges and not np.allclose(fm, beliefs.node[lay.edge_vertex], atol=1e-8):
            raise ValueError("beliefs violate the marginalization constraints")
    c_node, c_factor = config.weights(data.graph)
    eps = config.epsilon
    value = 0.0
    if eps > 0:
        value += eps * float(np.sum(c_node[:, None] * entropy(beliefs.node, axis=-1)))
        for grp, b in zip(lay.groups, beliefs.factor):
            axes = tuple(range(2, 2 + grp.arity))
            value += eps * float(np.sum(c_factor[grp.factor_ids][:, None] * entropy(b, axis=axes)))
    value += float(np.sum(beliefs.node * data.prior))
    gap = moments(beliefs, data.features) - data.means
    q = config.q
    value -= config.C ** (1 - q) / q * float(np.sum(np.abs(gap) ** q))
    return value


def line_search(theta, grad, state: MessageState, data: TrainingSet, f0: float,
                config: TrainConfig, eta0: float, refresh: int = 0):
    """Backtracking ``eta0 * beta**k`` until the Armijo condition holds.

    The objective is the primal at the current multipliers, or, with
    ``refresh > 0``, after that many multiplier sweeps at the trial theta
    (used with non-convex weights, where the primal at fixed multipliers is
    not a smooth function of theta).  The refreshed multipliers of an
    accepted step are written back into ``state``.

    Returns ``(eta, theta_new, f_new, stalled)``; on a stall ``theta`` is
    returned unchanged.
    """
    theta = np.asarray(theta, dtype=float)
    g2 = float(grad @ grad)
    if g2 == 0.0:
        return 0.0, theta.copy(), f0, True
    eta = eta0
    while eta >= config.eta_min:
        cand = theta - eta * grad
        trial = state
        pot = data.potentials(cand)
        if refresh:
            trial = state.copy()
            for _ in range(refresh):
                lambda_sweep(trial, pot, config)
        f = primal_objective(trial, data, cand, config, pot=pot)
        if f <= f0 - config.armijo * eta * g2:
            if refresh:
                state.lam[...] = trial.lam
                state.mu[...] = trial.mu
            return eta, cand, f, False
        eta *= config.backtrack
    return 0.0, theta.copy(), f0, True


def train(data: TrainingSet, config: TrainConfig, callback=None) -> TrainResult:
    """Alternate full multiplier sweeps with one theta step.

    Smooth mode (``eps > 0``) uses an Armijo line search whose first trial
    step is the last accepted step times ``eta_growth``.  At ``eps = 0`` the
    step is ``eta0 / (1 + t)`` without a decrease test and the best iterate
    is returned.  With negative vertex weights the line search re-sweeps the
    multipliers at every trial step (see :func:`line_search`); no gap is
    certified then.  Stops on relative gap
    ``(best primal - best dual) / (1 + |best primal|) <= gap_tol``, on
    ``||grad||_inf <= grad_tol``, on a line-search stall, or after
    ``max_iter`` iterations.  With ``stop_on_gap=False`` only the budget
    ends the run (a stalled step leaves theta unchanged), which gives equal
    iteration counts across settings.
    """
    smooth = config.epsilon > 0
    concave = not np.any(config.weights(data.graph)[0] < 0)
    has_dual = math.isfinite(config.q) and concave
    refresh = 0 if concave else config.inner_sweeps
    theta = np.zeros(data.features.dim)
    state = MessageState.zeros(data)
    trace = TrainTrace()
    best = (math.inf, theta.copy(), state.copy())
    best_dual = -math.inf
    eta_prev = config.eta0 / config.eta_growth
    status = "budget"
    start = time.perf_counter()
    pot = data.potentials(theta)
    for t in range(config.max_iter):
        for _ in range(config.inner_sweeps):
            lambda_sweep(state, pot, config)
        f = primal_objective(state, data, theta, config, pot=pot)
        beliefs = beliefs_from_state(state, data, theta, config, pot=pot)
        grad = moments(beliefs, data.features) - data.means + regularizer_grad(theta, config.C, config.p)
        dual = dual_objective(beliefs, data, config) if has_dual else math.nan
        if f < best[0]:
            best = (f, theta.copy(), None if smooth else state.copy())
        if has_dual:
            best_dual = max(best_dual, dual)
        grad_norm = float(np.max(np.abs(grad))) if grad.size else 0.0

        stop = None
        if has_dual and (best[0] - best_dual) <= config.gap_tol * (1.0 + abs(best[0])):
            stop = "gap"
        elif grad_norm <= config.grad_tol:
            stop = "grad"
        if stop is not None and not config.stop_on_gap:
            stop = None
        eta, theta_new = 0.0, theta
        if stop is None:
            if smooth:
                eta, theta_new, _, stalled = line_search(
                    theta, grad, state, data, f, config, eta_prev * config.eta_growth, refresh)
                if not stalled:
                    eta_prev = eta
                elif config.stop_on_gap:
                    stop = "stall"
            else:
                eta = config.eta0 / (1.0 + t)
                theta_new = theta - eta * grad
        trace.append(iter=t, primal=f, dual=dual, gap=f - dual, grad_norm=grad_norm, eta=eta,
                     seconds=time.perf_counter() - start)
        if callback is not None:
            callback(t, trace.rows[-1])
        if stop is not None:
            status = stop
            break
        theta = theta_new
        pot = data.potentials(theta)

    if smooth:
        theta_out, state_out, best_primal = theta, state, best[0]
    else:
        best_primal, theta_out, state_out = best
    return TrainResult(theta_out, state_out, trace, status, best_primal, best_dual)
