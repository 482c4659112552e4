"""Discrete pairwise Markov random fields with three inference backends.

The joint density is the canonical exponential family over vertex and
edge factors: ``p(x) = exp(<theta, phi(x)>) / Z`` where ``phi`` one-hot
encodes each vertex state and each edge state pair.  The weight vector
concatenates one block per vertex (length = state count) followed by one
row-major block per edge (length = product of endpoint state counts).

Backends:

* brute force -- streaming enumeration of the joint space, exact,
  guarded to small models; the reference everything else is tested against.
* junction tree -- min-fill triangulation, maximum-weight spanning clique
  tree, two-pass sum-product calibration in the log domain; exact on any
  connected graph that fits the memory budget.
* loopy belief propagation -- synchronous flooding message schedule in
  the log domain with optional damping; approximate on loopy graphs.

All arithmetic is carried in the log domain to avoid overflow.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .rng import SplitRng

JOINT_SPACE_GUARD = 1 << 24
DEFAULT_JT_BUDGET_BYTES = 2 << 30

_ENUM_CHUNK = 1 << 18


def logsumexp(a: np.ndarray, axis=None, keepdims: bool = False):
    """log(sum(exp(a))) with the max trick; tolerates -inf entries.

    Leaner than the scipy equivalent (no dtype conversion round trips),
    which matters because calibration calls this on every clique table.
    """
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True) if a.size else np.float64(-np.inf)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    if keepdims:
        return out
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


class StateSpaceError(Exception):
    """Joint state space exceeds the brute-force guard."""


class MemoryBudgetError(Exception):
    """Junction-tree clique tables would exceed the configured budget."""


class GraphStructureError(Exception):
    """Graph violates a structural precondition (e.g. not connected)."""


class DataError(Exception):
    """Training data contains an invalid assignment."""


@dataclass(frozen=True)
class FactorGraph:
    """Pairwise factor graph: vertex state counts plus undirected edges."""

    state_counts: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    kind: str = "general"
    grid_shape: tuple[int, int] | None = None

    def __post_init__(self):
        n = len(self.state_counts)
        if n == 0:
            raise GraphStructureError("graph needs at least one vertex")
        if any(k < 2 for k in self.state_counts):
            raise GraphStructureError("every vertex needs at least 2 states")
        seen = set()
        for u, v in self.edges:
            if u == v:
                raise GraphStructureError(f"self-loop at vertex {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise GraphStructureError(f"edge ({u},{v}) references unknown vertex")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise GraphStructureError(f"duplicate edge ({u},{v})")
            seen.add(key)
        if self.grid_shape is not None:
            w, h = self.grid_shape
            if n != w * h or len(self.edges) != w * (h - 1) + h * (w - 1):
                raise GraphStructureError("grid shape inconsistent with graph")

    @classmethod
    def grid(cls, w: int, h: int, states: int = 2) -> "FactorGraph":
        """w x h lattice; horizontal edge then vertical edge per vertex."""
        if w < 1 or h < 1:
            raise GraphStructureError("grid dimensions must be positive")
        edges = []
        for y in range(h):
            for x in range(w):
                v = y * w + x
                if x + 1 < w:
                    edges.append((v, v + 1))
                if y + 1 < h:
                    edges.append((v, v + w))
        return cls(tuple([states] * (w * h)), tuple(edges), "grid", (w, h))

    @classmethod
    def chain(cls, n: int, states: int = 2) -> "FactorGraph":
        return cls(
            tuple([states] * n), tuple((i, i + 1) for i in range(n - 1)), "chain"
        )

    @property
    def num_vertices(self) -> int:
        return len(self.state_counts)

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        adj: list[list[int]] = [[] for _ in range(self.num_vertices)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return tuple(tuple(sorted(a)) for a in adj)

    @cached_property
    def vertex_offsets(self) -> tuple[int, ...]:
        off, out = 0, []
        for k in self.state_counts:
            out.append(off)
            off += k
        return tuple(out)

    @cached_property
    def edge_offsets(self) -> tuple[int, ...]:
        off = sum(self.state_counts)
        out = []
        for u, v in self.edges:
            out.append(off)
            off += self.state_counts[u] * self.state_counts[v]
        return tuple(out)

    @property
    def theta_size(self) -> int:
        return sum(self.state_counts) + sum(
            self.state_counts[u] * self.state_counts[v] for u, v in self.edges
        )

    @property
    def joint_size(self) -> int:
        size = 1
        for k in self.state_counts:
            size *= k
        return size

    def is_connected(self) -> bool:
        if self.num_vertices == 1:
            return True
        seen = {0}
        stack = [0]
        while stack:
            for w in self.neighbors[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.num_vertices


@dataclass(frozen=True, eq=False)
class MrfModel:
    """Factor graph plus its exponential-family weight vector."""

    graph: FactorGraph
    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        object.__setattr__(self, "theta", theta)
        if theta.shape != (self.graph.theta_size,):
            raise ValueError(
                f"theta length {theta.shape} does not match graph "
                f"(expected {self.graph.theta_size})"
            )
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta must be finite")

    def vertex_block(self, v: int) -> np.ndarray:
        off = self.graph.vertex_offsets[v]
        return self.theta[off : off + self.graph.state_counts[v]]

    def edge_block(self, i: int) -> np.ndarray:
        u, v = self.graph.edges[i]
        off = self.graph.edge_offsets[i]
        ku, kv = self.graph.state_counts[u], self.graph.state_counts[v]
        return self.theta[off : off + ku * kv].reshape(ku, kv)


@dataclass
class MarginalTable:
    """Per-vertex distributions, optional per-edge joints, and log Z.

    ``log_z`` is exact for the brute-force and junction-tree backends and
    the Bethe approximation for loopy belief propagation.
    """

    vertex: tuple[np.ndarray, ...]
    edge: tuple[np.ndarray, ...] | None = None
    log_z: float | None = None


@dataclass(frozen=True)
class LbpOptions:
    max_iters: int = 100
    tol: float = 1e-6
    damping: float = 0.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")


@dataclass(frozen=True)
class InferenceBackend:
    """Backend selector: brute-force, junction-tree, or loopy-bp."""

    kind: str
    lbp_options: LbpOptions = field(default_factory=LbpOptions)

    _KINDS = ("brute-force", "junction-tree", "loopy-bp")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown backend {self.kind!r}")


@dataclass
class LbpResult:
    marginals: MarginalTable
    converged: bool
    iters: int


@dataclass
class TrainResult:
    model: MrfModel
    nll_history: list[float]
    final_nll: float


# ---------------------------------------------------------------------------
# brute-force enumeration
# ---------------------------------------------------------------------------


def _check_guard(graph: FactorGraph) -> None:
    if graph.joint_size > JOINT_SPACE_GUARD:
        raise StateSpaceError(
            f"joint space {graph.joint_size} exceeds guard {JOINT_SPACE_GUARD}"
        )


def _chunk_energies(model: MrfModel, idx: np.ndarray) -> np.ndarray:
    """Log scores for the flat joint indices in ``idx``.

    Flat indexing is mixed-radix with vertex 0 most significant.
    """
    graph = model.graph
    counts = graph.state_counts
    strides = np.empty(len(counts), dtype=np.int64)
    s = 1
    for v in range(len(counts) - 1, -1, -1):
        strides[v] = s
        s *= counts[v]
    states = [(idx // strides[v]) % counts[v] for v in range(len(counts))]
    energy = np.zeros(len(idx))
    for v in range(len(counts)):
        energy += model.vertex_block(v)[states[v]]
    for i, (u, v) in enumerate(graph.edges):
        flat = states[u] * counts[v] + states[v]
        energy += model.edge_block(i).ravel()[flat]
    return energy


def partition_function_bruteforce(model: MrfModel) -> float:
    """log Z by streaming log-sum-exp over the full joint space."""
    _check_guard(model.graph)
    size = model.graph.joint_size
    log_z = -np.inf
    for start in range(0, size, _ENUM_CHUNK):
        idx = np.arange(start, min(start + _ENUM_CHUNK, size), dtype=np.int64)
        log_z = np.logaddexp(log_z, logsumexp(_chunk_energies(model, idx)))
    return float(log_z)


def marginals_bruteforce(model: MrfModel, with_edges: bool = True) -> MarginalTable:
    """Exact marginals by enumeration; two streaming passes."""
    _check_guard(model.graph)
    graph = model.graph
    counts = graph.state_counts
    log_z = partition_function_bruteforce(model)
    size = graph.joint_size
    vertex_acc = [np.zeros(k) for k in counts]
    edge_acc = (
        [np.zeros(counts[u] * counts[v]) for u, v in graph.edges]
        if with_edges
        else None
    )
    strides = np.empty(len(counts), dtype=np.int64)
    s = 1
    for v in range(len(counts) - 1, -1, -1):
        strides[v] = s
        s *= counts[v]
    for start in range(0, size, _ENUM_CHUNK):
        idx = np.arange(start, min(start + _ENUM_CHUNK, size), dtype=np.int64)
        prob = np.exp(_chunk_energies(model, idx) - log_z)
        states = [(idx // strides[v]) % counts[v] for v in range(len(counts))]
        for v in range(len(counts)):
            vertex_acc[v] += np.bincount(states[v], weights=prob, minlength=counts[v])
        if edge_acc is not None:
            for i, (u, v) in enumerate(graph.edges):
                flat = states[u] * counts[v] + states[v]
                edge_acc[i] += np.bincount(
                    flat, weights=prob, minlength=counts[u] * counts[v]
                )
    vertex = tuple(a / a.sum() for a in vertex_acc)
    edge = None
    if edge_acc is not None:
        edge = tuple(
            (a / a.sum()).reshape(counts[u], counts[v])
            for a, (u, v) in zip(edge_acc, graph.edges)
        )
    return MarginalTable(vertex=vertex, edge=edge, log_z=log_z)


# ---------------------------------------------------------------------------
# junction tree
# ---------------------------------------------------------------------------


def _min_fill_cliques(graph: FactorGraph) -> list[frozenset[int]]:
    """Elimination cliques from min-fill triangulation (deterministic ties)."""
    adj = [set(nb) for nb in graph.neighbors]
    alive = set(range(graph.num_vertices))
    fill: dict[int, int] = {}

    def fill_count(v: int) -> int:
        nb = [w for w in adj[v] if w in alive]
        missing = 0
        for i in range(len(nb)):
            for j in range(i + 1, len(nb)):
                if nb[j] not in adj[nb[i]]:
                    missing += 1
        return missing

    for v in alive:
        fill[v] = fill_count(v)
    cliques: list[frozenset[int]] = []
    while alive:
        v = min(alive, key=lambda u: (fill[u], u))
        nb = {w for w in adj[v] if w in alive}
        cliques.append(frozenset(nb | {v}))
        dirty = set(nb)
        nb_list = sorted(nb)
        for i in range(len(nb_list)):
            for j in range(i + 1, len(nb_list)):
                a, b = nb_list[i], nb_list[j]
                if b not in adj[a]:
                    adj[a].add(b)
                    adj[b].add(a)
                    dirty.update(w for w in adj[a] if w in alive)
                    dirty.update(w for w in adj[b] if w in alive)
        alive.remove(v)
        dirty.discard(v)
        for u in dirty:
            fill[u] = fill_count(u)
    return cliques


def _maximal_cliques(cliques: list[frozenset[int]]) -> list[tuple[int, ...]]:
    maximal = [
        c for c in cliques if not any(c < other for other in cliques if other != c)
    ]
    out = sorted({tuple(sorted(c)) for c in maximal})
    return out


def _spanning_clique_tree(cliques: list[tuple[int, ...]]) -> list[tuple[int, int]]:
    """Maximum-weight spanning tree over sepset sizes (Kruskal)."""
    candidates = []
    sets = [set(c) for c in cliques]
    for i in range(len(cliques)):
        for j in range(i + 1, len(cliques)):
            w = len(sets[i] & sets[j])
            if w > 0:
                candidates.append((-w, i, j))
    candidates.sort()
    parent = list(range(len(cliques)))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    tree = []
    for _, i, j in candidates:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            tree.append((i, j))
    return tree


def _lse_keep(
    table: np.ndarray, table_vars: tuple[int, ...], keep_vars: tuple[int, ...]
) -> np.ndarray:
    """Sum out (log domain) all vars not kept; axes reordered to keep_vars."""
    keep = set(keep_vars)
    axes = tuple(i for i, v in enumerate(table_vars) if v not in keep)
    out = logsumexp(table, axis=axes) if axes else table
    remaining = [v for v in table_vars if v in keep]
    perm = [remaining.index(v) for v in keep_vars]
    if perm != list(range(len(perm))):
        out = np.transpose(out, perm)
    return out


def _expand_to(
    msg: np.ndarray, msg_vars: tuple[int, ...], dst_vars: tuple[int, ...]
) -> np.ndarray:
    """Reshape a message so it broadcasts against a destination table."""
    order = sorted(range(len(msg_vars)), key=lambda i: dst_vars.index(msg_vars[i]))
    aligned = np.transpose(msg, order) if order != list(range(len(order))) else msg
    shape = [1] * len(dst_vars)
    src = set(msg_vars)
    it = iter(aligned.shape)
    for i, v in enumerate(dst_vars):
        if v in src:
            shape[i] = next(it)
    return aligned.reshape(shape)


class _CalibratedTree:
    """Clique tree after two-pass calibration; serves marginal queries."""

    def __init__(self, model: MrfModel, memory_budget_bytes: int):
        graph = model.graph
        if not graph.is_connected():
            raise GraphStructureError("junction tree requires a connected graph")
        cliques = _maximal_cliques(_min_fill_cliques(graph))
        counts = graph.state_counts
        table_bytes = sum(
            8 * int(np.prod([counts[v] for v in c])) for c in cliques
        )
        if table_bytes > memory_budget_bytes:
            largest = max(len(c) for c in cliques)
            raise MemoryBudgetError(
                f"clique tables need {table_bytes} bytes "
                f"(budget {memory_budget_bytes}); largest clique has "
                f"{largest} vertices"
            )
        self.cliques = cliques
        self.graph = graph

        # Assign each factor to the first clique covering its scope.
        tables = [
            np.zeros([counts[v] for v in c], dtype=float) for c in cliques
        ]
        clique_sets = [set(c) for c in cliques]
        for v in range(graph.num_vertices):
            ci = next(i for i, cs in enumerate(clique_sets) if v in cs)
            tables[ci] += _expand_to(model.vertex_block(v), (v,), cliques[ci])
        for ei, (u, v) in enumerate(graph.edges):
            ci = next(i for i, cs in enumerate(clique_sets) if u in cs and v in cs)
            tables[ci] += _expand_to(model.edge_block(ei), (u, v), cliques[ci])

        adj: list[list[int]] = [[] for _ in cliques]
        for i, j in _spanning_clique_tree(cliques):
            adj[i].append(j)
            adj[j].append(i)

        # BFS order from clique 0; upward pass in reverse, downward in order.
        parent = [-1] * len(cliques)
        order = [0]
        seen = {0}
        for c in order:
            for d in adj[c]:
                if d not in seen:
                    seen.add(d)
                    parent[d] = c
                    order.append(d)

        sepset = {}
        for c in order[1:]:
            p = parent[c]
            sepset[c] = tuple(v for v in cliques[c] if v in clique_sets[p])

        up: dict[int, np.ndarray] = {}
        for c in reversed(order[1:]):
            msg = tables[c].copy()
            for d in adj[c]:
                if parent[d] == c:
                    msg += _expand_to(up[d], sepset[d], cliques[c])
            up[c] = _lse_keep(msg, cliques[c], sepset[c])

        down: dict[int, np.ndarray] = {}
        for c in order:
            for d in adj[c]:
                if parent[d] != c:
                    continue
                msg = tables[c].copy()
                if parent[c] >= 0:
                    msg += _expand_to(down[c], sepset[c], cliques[c])
                for e in adj[c]:
                    if parent[e] == c and e != d:
                        msg += _expand_to(up[e], sepset[e], cliques[c])
                down[d] = _lse_keep(msg, cliques[c], sepset[d])

        self.beliefs = []
        for c in range(len(cliques)):
            b = tables[c].copy()
            if parent[c] >= 0:
                b += _expand_to(down[c], sepset[c], cliques[c])
            for d in adj[c]:
                if parent[d] == c:
                    b += _expand_to(up[d], sepset[d], cliques[c])
            self.beliefs.append(b)
        self.log_z = float(logsumexp(self.beliefs[0]))
        self._clique_sets = clique_sets

    def marginal(self, vars_: tuple[int, ...]) -> np.ndarray:
        scope = set(vars_)
        covering = [
            i for i, cs in enumerate(self._clique_sets) if scope <= cs
        ]
        ci = min(covering, key=lambda i: self.beliefs[i].size)
        log_m = _lse_keep(self.beliefs[ci], self.cliques[ci], vars_)
        log_m = log_m - logsumexp(log_m)
        return np.exp(log_m)


def infer_jt(
    model: MrfModel, memory_budget_bytes: int = DEFAULT_JT_BUDGET_BYTES
) -> MarginalTable:
    """Exact marginals via a calibrated junction tree."""
    tree = _CalibratedTree(model, memory_budget_bytes)
    vertex = tuple(tree.marginal((v,)) for v in range(model.graph.num_vertices))
    edge = tuple(tree.marginal((u, v)) for u, v in model.graph.edges)
    return MarginalTable(vertex=vertex, edge=edge, log_z=tree.log_z)


# ---------------------------------------------------------------------------
# loopy belief propagation
# ---------------------------------------------------------------------------


def _bethe_log_z(model: MrfModel, vertex, edge) -> float:
    """Bethe free energy estimate of log Z from calibrated beliefs."""

    def entropy(p: np.ndarray) -> float:
        p = p[p > 0]
        return float(-(p * np.log(p)).sum())

    energy = 0.0
    for v in range(model.graph.num_vertices):
        energy += float(model.vertex_block(v) @ vertex[v])
    for ei in range(len(model.graph.edges)):
        energy += float((model.edge_block(ei) * edge[ei]).sum())
    h = sum(entropy(edge[ei]) for ei in range(len(model.graph.edges)))
    for v in range(model.graph.num_vertices):
        h -= (len(model.graph.neighbors[v]) - 1) * entropy(vertex[v])
    return energy + h


def infer_lbp(model: MrfModel, options: LbpOptions = LbpOptions()) -> LbpResult:
    """Synchronous flooding LBP; exact on trees, approximate on loops.

    Vectorized over directed edges: state axes are padded to the largest
    state count with -inf weights (zero probability mass), so one update
    is a handful of array operations regardless of graph size.
    """
    graph = model.graph
    if not graph.is_connected():
        raise GraphStructureError("loopy BP requires a connected graph")
    nv = graph.num_vertices
    kmax = max(graph.state_counts)
    counts = np.array(graph.state_counts)

    theta_v = np.full((nv, kmax), -np.inf)
    for v in range(nv):
        theta_v[v, : counts[v]] = model.vertex_block(v)

    ne = len(graph.edges)
    src = np.empty(2 * ne, dtype=np.int64)
    dst = np.empty(2 * ne, dtype=np.int64)
    coupling = np.full((2 * ne, kmax, kmax), -np.inf)  # [edge, src state, dst state]
    for ei, (u, v) in enumerate(graph.edges):
        block = model.edge_block(ei)
        src[2 * ei], dst[2 * ei] = u, v
        coupling[2 * ei, : counts[u], : counts[v]] = block
        src[2 * ei + 1], dst[2 * ei + 1] = v, u
        coupling[2 * ei + 1, : counts[v], : counts[u]] = block.T
    reverse = np.arange(2 * ne) ^ 1  # partner of each directed edge
    if ne:
        valid_dst = np.arange(kmax) < counts[dst][:, None]
        valid_src = np.arange(kmax) < counts[src][:, None]
        msgs = np.where(valid_dst, -np.log(counts[dst])[:, None], -np.inf)
    else:
        msgs = np.zeros((0, kmax))

    def sum_incoming() -> np.ndarray:
        total = theta_v.copy()
        np.add.at(total, dst, msgs)
        return total

    def presums(incoming: np.ndarray) -> np.ndarray:
        # All incoming at the source vertex minus the reverse message;
        # masked so padded -inf entries never hit -inf minus -inf.
        out = np.full_like(msgs, -np.inf)
        np.subtract(incoming[src], msgs[reverse], out=out, where=valid_src)
        return out

    converged = False
    iters = 0
    for iters in range(1, options.max_iters + 1):
        if ne == 0:
            converged = True
            break
        pre = presums(sum_incoming())
        new = logsumexp(coupling + pre[:, :, None], axis=1)
        new = new - logsumexp(new, axis=1, keepdims=True)
        if options.damping > 0.0:
            new = np.where(
                valid_dst,
                options.damping * msgs + (1.0 - options.damping) * new,
                -np.inf,
            )
        change = np.zeros_like(msgs)
        np.subtract(new, msgs, out=change, where=valid_dst)
        delta = float(np.max(np.abs(change)))
        msgs = new
        if delta < options.tol:
            converged = True
            break

    belief = theta_v.copy()
    if ne:
        np.add.at(belief, dst, msgs)
    belief = belief - logsumexp(belief, axis=1, keepdims=True)
    vertex = tuple(np.exp(belief[v, : counts[v]]) for v in range(nv))

    edge = []
    if ne:
        pre_all = presums(sum_incoming())
        for ei, (u, v) in enumerate(graph.edges):
            b = (
                coupling[2 * ei, : counts[u], : counts[v]]
                + pre_all[2 * ei, : counts[u], None]
                + pre_all[2 * ei + 1, None, : counts[v]]
            )
            b -= logsumexp(b)
            edge.append(np.exp(b))
    edge = tuple(edge)
    log_z = _bethe_log_z(model, vertex, edge)
    table = MarginalTable(vertex=vertex, edge=edge, log_z=log_z)
    return LbpResult(marginals=table, converged=converged, iters=iters)


def run_inference(model: MrfModel, backend: InferenceBackend) -> MarginalTable:
    """Dispatch to the selected backend; always includes edge joints."""
    if backend.kind == "brute-force":
        return marginals_bruteforce(model)
    if backend.kind == "junction-tree":
        return infer_jt(model)
    return infer_lbp(model, backend.lbp_options).marginals


# ---------------------------------------------------------------------------
# maximum-likelihood training
# ---------------------------------------------------------------------------


def empirical_statistics(graph: FactorGraph, data: np.ndarray) -> np.ndarray:
    """Average one-hot sufficient statistics of complete assignments."""
    data = np.asarray(data, dtype=np.int64)
    if data.ndim != 2 or data.shape[1] != graph.num_vertices:
        raise DataError(
            f"data must be (n, {graph.num_vertices}) assignments, "
            f"got shape {data.shape}"
        )
    for v in range(graph.num_vertices):
        bad = np.nonzero(
            (data[:, v] < 0) | (data[:, v] >= graph.state_counts[v])
        )[0]
        if bad.size:
            raise DataError(
                f"row {int(bad[0])}: state {int(data[bad[0], v])} invalid "
                f"for vertex {v}"
            )
    n = data.shape[0]
    stats = np.zeros(graph.theta_size)
    for v in range(graph.num_vertices):
        off = graph.vertex_offsets[v]
        counts = np.bincount(data[:, v], minlength=graph.state_counts[v])
        stats[off : off + graph.state_counts[v]] = counts / n
    for i, (u, v) in enumerate(graph.edges):
        off = graph.edge_offsets[i]
        kv = graph.state_counts[v]
        flat = data[:, u] * kv + data[:, v]
        counts = np.bincount(flat, minlength=graph.state_counts[u] * kv)
        stats[off : off + counts.size] = counts / n
    return stats


def statistics_from_marginals(graph: FactorGraph, table: MarginalTable) -> np.ndarray:
    """Expected sufficient statistics (marginal means) in theta layout."""
    if table.edge is None:
        raise ValueError("marginal table lacks edge joints")
    stats = np.zeros(graph.theta_size)
    for v in range(graph.num_vertices):
        off = graph.vertex_offsets[v]
        stats[off : off + graph.state_counts[v]] = table.vertex[v]
    for i in range(len(graph.edges)):
        off = graph.edge_offsets[i]
        block = table.edge[i].ravel()
        stats[off : off + block.size] = block
    return stats


def train_mle(
    graph: FactorGraph,
    data: np.ndarray,
    step_size: float = 0.5,
    iters: int = 100,
    backend: InferenceBackend = InferenceBackend("junction-tree"),
) -> TrainResult:
    """Gradient ascent on the average log-likelihood.

    The gradient is the empirical sufficient statistics minus the model's
    expected statistics under the chosen inference backend.
    """
    if iters < 1:
        raise ValueError("iters must be at least 1")
    empirical = empirical_statistics(graph, data)
    theta = np.zeros(graph.theta_size)
    nll_history = []
    for _ in range(iters):
        model = MrfModel(graph, theta)
        table = run_inference(model, backend)
        nll_history.append(float(table.log_z - theta @ empirical))
        grad = empirical - statistics_from_marginals(graph, table)
        theta = theta + step_size * grad
    model = MrfModel(graph, theta)
    final_nll = float(
        run_inference(model, backend).log_z - theta @ empirical
    )
    return TrainResult(model=model, nll_history=nll_history, final_nll=final_nll)


# ---------------------------------------------------------------------------
# seeded model generators
# ---------------------------------------------------------------------------


def _draw_theta(graph: FactorGraph, rng: SplitRng, scale: float) -> np.ndarray:
    # Uniform in [-scale, scale): exact products in binary floating point,
    # so fixtures are bitwise stable.
    return np.array(
        [scale * rng.uniform_signed() for _ in range(graph.theta_size)]
    )


def make_grid_model(w: int, h: int, seed: int, coupling_scale: float) -> MrfModel:
    """Binary w x h grid with weights drawn uniformly in +-coupling_scale."""
    if w < 2 or h < 2:
        raise GraphStructureError("grid model needs w, h >= 2")
    graph = FactorGraph.grid(w, h)
    rng = SplitRng(seed).split("grid-model", w, h)
    return MrfModel(graph, _draw_theta(graph, rng, coupling_scale))


def make_chain_model(n: int, seed: int, coupling_scale: float) -> MrfModel:
    """Binary chain with seeded uniform weights."""
    graph = FactorGraph.chain(n)
    rng = SplitRng(seed).split("chain-model", n)
    return MrfModel(graph, _draw_theta(graph, rng, coupling_scale))


def make_tree_model(
    n: int, seed: int, coupling_scale: float, max_states: int = 2
) -> MrfModel:
    """Random tree via seeded parent attachment; state counts in [2, max_states]."""
    rng = SplitRng(seed).split("tree-model", n)
    edges = tuple((rng.randint(v), v) for v in range(1, n))
    states = tuple(2 + rng.randint(max_states - 1) if max_states > 2 else 2
                   for _ in range(n))
    graph = FactorGraph(states, edges, "tree")
    return MrfModel(graph, _draw_theta(graph, rng, coupling_scale))
