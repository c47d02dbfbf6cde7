"""Metric pairwise MRF over a case base and inference engines.

States are the adaptation levels ``1..l``. Every edge ``(n, m)`` carries the
weight ``s = sim_s(n, m)`` and the potential ``exp(-s |i - j|)``. There are no
unary potentials; evidence is imposed by clamping nodes to point masses.

All engines work one connected component at a time, so running inference on
the whole graph and concatenating per-component results are the same thing.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping

import numpy as np
from numba import njit
from scipy import sparse
from scipy.sparse.csgraph import connected_components as _cc
from scipy.special import logsumexp

from .dataset import CaseBase
from .model import local_distance_column

log = logging.getLogger(__name__)

Evidence = Mapping[int, int]

MAX_EXACT_NODES = 16
MAX_EXACT_STATES = 2**22


@dataclass(frozen=True)
class MetricMrf:
    """Undirected metric MRF.

    ``edges`` holds node-id pairs with ``n < m``, ``weights`` the matching
    solution similarities.
    """

    node_ids: np.ndarray
    num_states: int
    edges: np.ndarray
    weights: np.ndarray
    st: float = 0.0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.num_states < 2:
            raise ValueError("need at least two states")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self-edges are not allowed")
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(edges) or np.any(w <= 0):
            raise ValueError("edge weights must be positive, one per edge")
        lo, hi = edges.min(axis=1), edges.max(axis=1)
        order = np.lexsort((hi, lo))
        object.__setattr__(self, "edges", np.column_stack([lo, hi])[order])
        object.__setattr__(self, "weights", w[order])
        object.__setattr__(self, "node_ids", np.sort(np.asarray(self.node_ids, dtype=np.int64)))
        missing = np.setdiff1d(self.edges.ravel(), self.node_ids)
        if len(missing):
            raise ValueError(f"edges reference unknown nodes {missing[:5].tolist()}")

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    @cached_property
    def index(self) -> dict[int, int]:
        return {int(n): i for i, n in enumerate(self.node_ids)}

    @cached_property
    def edge_index(self) -> np.ndarray:
        """Edges as positions into ``node_ids``."""
        return np.searchsorted(self.node_ids, self.edges)

    @cached_property
    def state_distance(self) -> np.ndarray:
        states = np.arange(self.num_states)
        return np.abs(states[:, None] - states[None, :]).astype(float)

    def potential(self, s: float) -> np.ndarray:
        """Table ``exp(-s |i - j|)`` over state pairs."""
        return np.exp(-s * self.state_distance)

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        n = self.num_nodes
        ei = self.edge_index
        rows = np.concatenate([ei[:, 0], ei[:, 1]])
        cols = np.concatenate([ei[:, 1], ei[:, 0]])
        return sparse.csr_matrix((np.concatenate([self.weights, self.weights]), (rows, cols)),
                                 shape=(n, n))

    @cached_property
    def component_labels(self) -> np.ndarray:
        _, labels = _cc(self.adjacency, directed=False)
        return labels

    def component_of(self, node_id: int) -> np.ndarray:
        """Positions (into ``node_ids``) of the component containing ``node_id``."""
        label = self.component_labels[self.index[node_id]]
        return np.flatnonzero(self.component_labels == label)


def build_mrf(cb: CaseBase, st: float, num_states: int) -> MetricMrf:
    """Connect every pair of cases whose solution similarity exceeds ``st``."""
    if not 0 < st:
        raise ValueError(f"st must be positive, got {st}")
    if st >= 1:
        log.warning("st=%s >= 1: the MRF has no edges", st)
    schema, stats = cb.schema, cb.stats
    w = {k: v for k, v in schema.weights_solution.items() if v > 0}
    wsum = sum(w.values())
    cols = cb.columns
    n = len(cb)
    pairs, sims = [], []
    for i in range(n - 1):
        d = np.zeros(n - i - 1)
        for name, wf in w.items():
            col = cols[name]
            d += wf * local_distance_column(schema.feature(name).kind, col[i], col[i + 1:],
                                            stats.sigma.get(name), stats.maxd[name])
        s = 1.0 / (1.0 + d / wsum)
        hit = np.flatnonzero(s > st)
        if len(hit):
            pairs.append(np.column_stack([np.full(len(hit), i), hit + i + 1]))
            sims.append(s[hit])
    if pairs:
        idx = np.concatenate(pairs)
        edges, weights = cb.ids[idx], np.concatenate(sims)
    else:
        edges, weights = np.empty((0, 2), dtype=np.int64), np.empty(0)
    return MetricMrf(cb.ids.copy(), num_states, edges, weights, st)


def connected_components(mrf: MetricMrf) -> list[list[int]]:
    """Node-id sets of the connected components, ordered by smallest id."""
    groups: dict[int, list[int]] = {}
    for nid, label in zip(mrf.node_ids.tolist(), mrf.component_labels):
        groups.setdefault(int(label), []).append(nid)
    return sorted(groups.values(), key=lambda g: g[0])


# ---------------------------------------------------------------------------
# beliefs
# ---------------------------------------------------------------------------

@dataclass
class Beliefs:
    """Per-node posterior over states; row ``i`` belongs to ``node_ids[i]``."""

    node_ids: np.ndarray
    probs: np.ndarray
    converged: bool = True
    iterations: int = 0

    def __getitem__(self, node_id: int) -> np.ndarray:
        i = int(np.searchsorted(self.node_ids, node_id))
        if i >= len(self.node_ids) or self.node_ids[i] != node_id:
            raise KeyError(node_id)
        return self.probs[i]


def _check_evidence(mrf: MetricMrf, evidence: Evidence) -> dict[int, int]:
    out = {}
    for nid, state in evidence.items():
        if int(nid) not in mrf.index:
            raise KeyError(f"evidence on unknown node {nid}")
        if not 1 <= state <= mrf.num_states:
            raise ValueError(f"evidence state {state} outside 1..{mrf.num_states}")
        out[mrf.index[int(nid)]] = int(state) - 1
    return out


def _component_arrays(mrf: MetricMrf, members: np.ndarray):
    """Dense weight matrix of one component (members are sorted positions)."""
    key = ("dense", members.tobytes())
    if key not in mrf._cache:
        mrf._cache[key] = mrf.adjacency[members][:, members].toarray()
    return mrf._cache[key]


def _groups(mrf: MetricMrf, components) -> list[np.ndarray]:
    if components is None:
        labels = mrf.component_labels
        order = np.argsort(labels, kind="stable")
        splits = np.flatnonzero(np.diff(labels[order])) + 1
        return np.split(order, splits)
    return [np.sort(np.asarray(c, dtype=np.int64)) for c in components]


def _run(mrf: MetricMrf, evidence: Evidence, solver, components=None) -> Beliefs:
    ev = _check_evidence(mrf, evidence)
    probs = np.full((mrf.num_nodes, mrf.num_states), 1.0 / mrf.num_states)
    converged, iters = True, 0
    for members in _groups(mrf, components):
        local_ev = {k: ev[p] for k, p in enumerate(members) if p in ev}
        b, ok, it = solver(mrf, members, local_ev)
        probs[members] = b
        converged &= ok
        iters = max(iters, it)
    return Beliefs(mrf.node_ids, probs, converged, iters)


# ---------------------------------------------------------------------------
# exact enumeration
# ---------------------------------------------------------------------------

def joint_unnormalized(mrf: MetricMrf, assignment: Mapping[int, int]) -> float:
    """Product of all edge potentials for a full assignment (states 1..l)."""
    x = np.array([assignment[int(n)] for n in mrf.node_ids])
    ei = mrf.edge_index
    return float(np.exp(-np.sum(mrf.weights * np.abs(x[ei[:, 0]] - x[ei[:, 1]]))))


def _exact_component(mrf: MetricMrf, members: np.ndarray, ev: dict[int, int]):
    l = mrf.num_states
    m = len(members)
    free = [k for k in range(m) if k not in ev]
    if len(free) > MAX_EXACT_NODES or l ** len(free) > MAX_EXACT_STATES:
        raise ValueError(f"component with {len(free)} free nodes is too large to enumerate")
    W = _component_arrays(mrf, members)
    a, b = np.nonzero(np.triu(W))
    x = np.empty((l ** len(free), m), dtype=np.int64)
    if free:
        x[:, free] = np.array(list(itertools.product(range(l), repeat=len(free))))
    for k, state in ev.items():
        x[:, k] = state
    logp = -(np.abs(x[:, a] - x[:, b]) * W[a, b]).sum(axis=1)
    p = np.exp(logp - logp.max())
    p /= p.sum()
    out = np.zeros((m, l))
    for k in range(m):
        out[k] = np.bincount(x[:, k], weights=p, minlength=l)
    return out, True, 1


def exact_marginals(mrf: MetricMrf, evidence: Evidence | None = None,
                    components=None) -> Beliefs:
    """Posterior marginals by full enumeration of every component."""
    return _run(mrf, evidence or {}, _exact_component, components)


# ---------------------------------------------------------------------------
# mean field
# ---------------------------------------------------------------------------

@njit(cache=True)
def _mean_field_sweeps(indptr, indices, weights, D, B, free, tol, max_iter, damping):
    l = B.shape[1]
    avg = np.empty(l)
    field_ = np.empty(l)
    for it in range(1, max_iter + 1):
        delta = 0.0
        for k in free:
            avg[:] = 0.0
            for p in range(indptr[k], indptr[k + 1]):
                j, w = indices[p], weights[p]
                for y in range(l):
                    avg[y] += w * B[j, y]
            # expected log-potential under neighbour beliefs
            top = -np.inf
            for x in range(l):
                f = 0.0
                for y in range(l):
                    f -= avg[y] * D[y, x]
                field_[x] = f
                top = max(top, f)
            total = 0.0
            for x in range(l):
                field_[x] = np.exp(field_[x] - top)
                total += field_[x]
            for x in range(l):
                new = field_[x] / total
                if damping > 0.0:
                    new = (1.0 - damping) * new + damping * B[k, x]
                delta = max(delta, abs(new - B[k, x]))
                B[k, x] = new
        if delta < tol:
            return it, True
    return max_iter, False


def _component_csr(mrf: MetricMrf, members: np.ndarray):
    key = ("csr", members.tobytes())
    if key not in mrf._cache:
        sub = mrf.adjacency[members][:, members].tocsr()
        sub.sort_indices()
        mrf._cache[key] = (sub.indptr.astype(np.int64), sub.indices.astype(np.int64),
                           sub.data.astype(float))
    return mrf._cache[key]


def _mean_field_component(mrf, members, ev, tol=1e-6, max_iter=200, damping=0.0):
    l = mrf.num_states
    m = len(members)
    B = np.full((m, l), 1.0 / l)
    for k, state in ev.items():
        B[k] = 0.0
        B[k, state] = 1.0
    free = np.array([k for k in range(m) if k not in ev], dtype=np.int64)
    if len(free) == 0:
        return B, True, 1
    indptr, indices, weights = _component_csr(mrf, members)
    it, ok = _mean_field_sweeps(indptr, indices, weights, mrf.state_distance, B, free,
                                float(tol), int(max_iter), float(damping))
    return B, ok, it


def mean_field(mrf: MetricMrf, evidence: Evidence | None = None, tol: float = 1e-6,
               max_iter: int = 200, damping: float = 0.0, components=None) -> Beliefs:
    """Naive mean-field with Gauss-Seidel sweeps in ascending node id.

    ``components`` optionally restricts inference to the given groups of node
    positions; nodes outside them keep uniform beliefs.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must lie in [0, 1)")

    def solver(mrf, members, ev):
        return _mean_field_component(mrf, members, ev, tol, max_iter, damping)

    return _run(mrf, evidence or {}, solver, components)


# ---------------------------------------------------------------------------
# loopy belief propagation
# ---------------------------------------------------------------------------

def _bp_component(mrf, members, ev, tol=1e-6, max_iter=200):
    l = mrf.num_states
    m = len(members)
    log_unary = np.zeros((m, l))
    for k, state in ev.items():
        log_unary[k] = -np.inf
        log_unary[k, state] = 0.0
    W = _component_arrays(mrf, members)
    a, b = np.nonzero(np.triu(W))
    if len(a) == 0:
        probs = np.exp(log_unary - logsumexp(log_unary, axis=1, keepdims=True))
        return probs, True, 1
    # directed edges: src -> dst, reverse[e] is the opposite direction
    src = np.concatenate([a, b])
    dst = np.concatenate([b, a])
    reverse = np.concatenate([np.arange(len(a)) + len(a), np.arange(len(a))])
    log_pot = -W[src, dst][:, None, None] * mrf.state_distance[None]
    msgs = np.full((len(src), l), -np.log(l))
    for it in range(1, max_iter + 1):
        incoming = log_unary.copy()
        np.add.at(incoming, dst, msgs)
        cavity = incoming[src] - msgs[reverse]
        new = logsumexp(cavity[:, :, None] + log_pot, axis=1)
        new -= logsumexp(new, axis=1, keepdims=True)
        delta = float(np.abs(np.exp(new) - np.exp(msgs)).max())
        msgs = new
        if delta < tol:
            break
    else:
        it = max_iter
    incoming = log_unary.copy()
    np.add.at(incoming, dst, msgs)
    probs = np.exp(incoming - logsumexp(incoming, axis=1, keepdims=True))
    return probs, delta < tol, it


def loopy_bp(mrf: MetricMrf, evidence: Evidence | None = None, tol: float = 1e-6,
             max_iter: int = 200, components=None) -> Beliefs:
    """Synchronous sum-product message passing in the log domain."""
    if not tol > 0:
        raise ValueError("tol must be positive")

    def solver(mrf, members, ev):
        return _bp_component(mrf, members, ev, tol, max_iter)

    return _run(mrf, evidence or {}, solver, components)


ENGINES = {"mean_field": mean_field, "loopy_bp": loopy_bp, "exact": exact_marginals}


# ---------------------------------------------------------------------------
# edge-list serialisation
# ---------------------------------------------------------------------------

def dump_edge_list(mrf: MetricMrf, path: str | Path | None = None) -> str:
    """Text form: two header lines (``l``/``st``, node ids) then ``n m s`` per edge."""
    lines = [f"# metric-mrf l={mrf.num_states} st={mrf.st!r} nodes={mrf.num_nodes} "
             f"edges={len(mrf.edges)}",
             "# node_ids " + " ".join(map(str, mrf.node_ids.tolist()))]
    lines += [f"{n} {m} {s!r}" for (n, m), s in zip(mrf.edges.tolist(), mrf.weights.tolist())]
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def load_edge_list(text: str) -> MetricMrf:
    lines = text.splitlines()
    header = dict(tok.split("=", 1) for tok in lines[0].split()[2:])
    nodes = [int(t) for t in lines[1].split()[2:]]
    rows = [ln.split() for ln in lines[2:] if ln.strip()]
    edges = np.array([[int(r[0]), int(r[1])] for r in rows], dtype=np.int64).reshape(-1, 2)
    weights = np.array([float(r[2]) for r in rows])
    return MetricMrf(np.array(nodes), int(header["l"]), edges, weights, float(header["st"]))
