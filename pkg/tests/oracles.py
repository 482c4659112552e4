"""Independent oracles used to derive frozen test expectations.

Everything here deliberately avoids the library's vectorized code paths:
plain itertools enumeration, pure-Python ``math.fsum`` accumulation, and
per-coordinate finite differences.  Expected values asserted in the test
suite were computed through these routines and frozen, so the production
implementations are checked against a second, independent derivation.
"""

from __future__ import annotations

import itertools
import math


def assignment_log_score(state_counts, edges, theta, x):
    """Sum of vertex and edge weights selected by assignment ``x``.

    Weight layout: one block per vertex in vertex order, then one
    row-major block per edge in edge order.
    """
    s = 0.0
    off = 0
    for v, k in enumerate(state_counts):
        s += theta[off + x[v]]
        off += k
    for u, v in edges:
        kv = state_counts[v]
        s += theta[off + x[u] * kv + x[v]]
        off += state_counts[u] * kv
    return s


def _all_assignments(state_counts):
    return itertools.product(*[range(k) for k in state_counts])


def enum_log_partition(state_counts, edges, theta):
    """log sum of exponentiated scores over the full joint space."""
    scores = [
        assignment_log_score(state_counts, edges, theta, x)
        for x in _all_assignments(state_counts)
    ]
    m = max(scores)
    return m + math.log(math.fsum(math.exp(s - m) for s in scores))


def enum_vertex_marginals(state_counts, edges, theta):
    """Exact vertex marginals by full enumeration."""
    log_z = enum_log_partition(state_counts, edges, theta)
    marg = [[0.0] * k for k in state_counts]
    for x in _all_assignments(state_counts):
        p = math.exp(assignment_log_score(state_counts, edges, theta, x) - log_z)
        for v, s in enumerate(x):
            marg[v][s] += p
    return marg


def enum_edge_marginals(state_counts, edges, theta):
    """Exact pairwise joint tables, keyed by edge index."""
    log_z = enum_log_partition(state_counts, edges, theta)
    joints = [
        [[0.0] * state_counts[v] for _ in range(state_counts[u])] for u, v in edges
    ]
    for x in _all_assignments(state_counts):
        p = math.exp(assignment_log_score(state_counts, edges, theta, x) - log_z)
        for i, (u, v) in enumerate(edges):
            joints[i][x[u]][x[v]] += p
    return joints


def enum_avg_log_likelihood(state_counts, edges, theta, data):
    """Average log-likelihood of complete assignments under the model."""
    log_z = enum_log_partition(state_counts, edges, theta)
    total = math.fsum(
        assignment_log_score(state_counts, edges, theta, x) for x in data
    )
    return total / len(data) - log_z


def central_difference(f, x0, h=1e-5):
    """Per-coordinate central finite differences of a scalar function."""
    grad = []
    for i in range(len(x0)):
        hi = list(x0)
        lo = list(x0)
        hi[i] += h
        lo[i] -= h
        grad.append((f(hi) - f(lo)) / (2.0 * h))
    return grad


def max_kl(p, q, floor=1e-300):
    """max over rows of KL(p_row || q_row) for lists of distributions."""
    worst = 0.0
    for pr, qr in zip(p, q):
        kl = math.fsum(
            pi * (math.log(pi) - math.log(max(qi, floor)))
            for pi, qi in zip(pr, qr)
            if pi > 0.0
        )
        worst = max(worst, kl)
    return worst
