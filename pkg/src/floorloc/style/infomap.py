"""Two-level InfoMap on weighted undirected graphs.

Node visit rates come from a random walk that follows an edge with
probability ``1 - teleport`` (proportionally to its weight) and otherwise
jumps to a uniformly random node; nodes without edges always jump.  A
module's exit rate counts both walk steps leaving it and jumps landing
outside it.  The partition minimises the map equation

    L = q H(Q) + sum_m p_m H(P_m)

by greedy node moves, aggregation of modules into super-nodes, and repeated
fine-tuning from the best partition found, over several seeded trials.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import EmptyGraph, ValidationError

_EPS = 1e-12
_ALL_MODULES_LIMIT = 32


def plogp(x: float) -> float:
    return x * math.log2(x) if x > 0 else 0.0


class Flow:
    """Stationary visit rates and link flows of the teleporting walk."""

    def __init__(self, W: np.ndarray, teleport: float):
        W = np.asarray(W, dtype=np.float64)
        n = W.shape[0]
        if W.ndim != 2 or W.shape[1] != n:
            raise ValidationError("weight matrix must be square")
        if n == 0:
            raise EmptyGraph("graph has no nodes")
        if not 0 < teleport < 1:
            raise ValidationError(f"teleport must lie in (0, 1), got {teleport}")
        if np.any(W < 0) or not np.all(np.isfinite(W)):
            raise ValidationError("edge weights must be finite and >= 0")
        W = W.copy()
        np.fill_diagonal(W, 0.0)
        self.n = n
        self.teleport = teleport
        strength = W.sum(axis=1)
        dangling = strength <= 0
        T = np.zeros_like(W)
        T[~dangling] = W[~dangling] / strength[~dangling, None]
        tel = np.where(dangling, 1.0, teleport)
        p = np.full(n, 1.0 / n)
        for _ in range(100000):
            nxt = ((1.0 - tel) * p) @ T + (tel * p).sum() / n
            nxt /= nxt.sum()
            done = np.abs(nxt - p).sum() < 1e-15
            p = nxt
            if done:
                break
        self.p = p
        self.tel = tel * p  # per-node teleport flow
        self.link = ((1.0 - tel) * p)[:, None] * T  # flow along i -> j
        self.node_entropy_term = sum(plogp(v) for v in p)


def map_equation(flow: Flow, labels) -> float:
    """Codelength (bits) of a partition given as one label per node."""
    labels = np.asarray(labels)
    n = flow.n
    mods = {}
    for i, m in enumerate(labels.tolist()):
        mods.setdefault(m, []).append(i)
    sum_q = 0.0
    q_terms = 0.0
    pq_terms = 0.0
    inside = np.zeros(n, dtype=bool)
    for members in mods.values():
        inside[:] = False
        inside[members] = True
        nm = len(members)
        exit_flow = flow.tel[inside].sum() * (n - nm) / n + flow.link[inside][:, ~inside].sum()
        pm = flow.p[inside].sum()
        sum_q += exit_flow
        q_terms += plogp(exit_flow)
        pq_terms += plogp(exit_flow + pm)
    return plogp(sum_q) - 2.0 * q_terms - flow.node_entropy_term + pq_terms


class _Level:
    """Super-node graph used by the greedy optimiser."""

    def __init__(self, size, p, tel, out, inn, n_total, node_term):
        self.size = size
        self.p = p
        self.tel = tel
        self.out = out  # list of {neighbour: flow}
        self.inn = inn
        self.N = n_total
        self.node_term = node_term
        self.k = len(size)

    @classmethod
    def from_flow(cls, flow: Flow) -> "_Level":
        n = flow.n
        out = [dict() for _ in range(n)]
        inn = [dict() for _ in range(n)]
        rows, cols = np.nonzero(flow.link)
        for a, b in zip(rows.tolist(), cols.tolist()):
            f = float(flow.link[a, b])
            out[a][b] = f
            inn[b][a] = f
        return cls([1] * n, flow.p.tolist(), flow.tel.tolist(), out, inn, n,
                   flow.node_entropy_term)

    def aggregate(self, labels: list[int]) -> "_Level":
        k = max(labels) + 1
        size = [0] * k
        p = [0.0] * k
        tel = [0.0] * k
        out = [dict() for _ in range(k)]
        inn = [dict() for _ in range(k)]
        for a in range(self.k):
            m = labels[a]
            size[m] += self.size[a]
            p[m] += self.p[a]
            tel[m] += self.tel[a]
            for b, f in self.out[a].items():
                mb = labels[b]
                if mb != m:
                    out[m][mb] = out[m].get(mb, 0.0) + f
                    inn[mb][m] = inn[mb].get(m, 0.0) + f
        return _Level(size, p, tel, out, inn, self.N, self.node_term)


class _Partition:
    """Module bookkeeping with O(degree) move evaluation."""

    def __init__(self, level: _Level, labels: list[int]):
        self.g = level
        self.mod = list(labels)
        k = level.k
        self.n = [0] * k
        self.p = [0.0] * k
        self.t = [0.0] * k
        self.F = [0.0] * k
        self.members = [0] * k
        for a in range(k):
            m = self.mod[a]
            self.n[m] += level.size[a]
            self.p[m] += level.p[a]
            self.t[m] += level.tel[a]
            self.members[m] += 1
            for b, f in level.out[a].items():
                if self.mod[b] != m:
                    self.F[m] += f
        self.sum_q = 0.0
        self.q_terms = 0.0
        self.pq_terms = 0.0
        for m in range(k):
            if self.members[m]:
                q = self._q(m)
                self.sum_q += q
                self.q_terms += plogp(q)
                self.pq_terms += plogp(q + self.p[m])

    def _q(self, m):
        return self.t[m] * (self.g.N - self.n[m]) / self.g.N + self.F[m]

    def codelength(self) -> float:
        return plogp(self.sum_q) - 2.0 * self.q_terms - self.g.node_term + self.pq_terms

    def _moved(self, a, m, out_to, in_from, joining):
        g = self.g
        out_total = sum(g.out[a].values())
        if joining:
            n = self.n[m] + g.size[a]
            p = self.p[m] + g.p[a]
            t = self.t[m] + g.tel[a]
            F = self.F[m] + (out_total - out_to) - in_from
        else:
            n = self.n[m] - g.size[a]
            p = self.p[m] - g.p[a]
            t = self.t[m] - g.tel[a]
            F = self.F[m] - (out_total - out_to) + in_from
        F = max(F, 0.0)
        q = t * (g.N - n) / g.N + F if n > 0 else 0.0
        return n, p, t, F, q

    def move_delta(self, a, old, new, flows):
        """Codelength change and new module stats for moving ``a``."""
        out_old, in_old = flows.get(old, (0.0, 0.0))
        out_new, in_new = flows.get(new, (0.0, 0.0))
        so = self._moved(a, old, out_old, in_old, joining=False)
        sn = self._moved(a, new, out_new, in_new, joining=True)
        q_old, q_new = self._q(old), self._q(new) if self.members[new] else 0.0
        sum_q = self.sum_q - q_old - q_new + so[4] + sn[4]
        q_terms = self.q_terms - plogp(q_old) - plogp(q_new) + plogp(so[4]) + plogp(sn[4])
        pq_terms = (self.pq_terms - plogp(q_old + self.p[old])
                    - (plogp(q_new + self.p[new]) if self.members[new] else 0.0)
                    + (plogp(so[4] + so[1]) if so[0] > 0 else 0.0) + plogp(sn[4] + sn[1]))
        new_len = plogp(sum_q) - 2.0 * q_terms - self.g.node_term + pq_terms
        return new_len - self.codelength(), (so, sn, sum_q, q_terms, pq_terms)

    def apply(self, a, old, new, stats):
        so, sn, self.sum_q, self.q_terms, self.pq_terms = stats
        self.n[old], self.p[old], self.t[old], self.F[old] = so[:4]
        self.n[new], self.p[new], self.t[new], self.F[new] = sn[:4]
        self.members[old] -= 1
        self.members[new] += 1
        self.mod[a] = new

    def flows_of(self, a):
        g = self.g
        acc = {}
        for b, f in g.out[a].items():
            m = self.mod[b]
            o, i = acc.get(m, (0.0, 0.0))
            acc[m] = (o + f, i)
        for b, f in g.inn[a].items():
            m = self.mod[b]
            o, i = acc.get(m, (0.0, 0.0))
            acc[m] = (o, i + f)
        return acc

    def sweep_until_stable(self, rng, max_sweeps=200) -> bool:
        moved_any = False
        k = self.g.k
        for _ in range(max_sweeps):
            moved = False
            for a in rng.permutation(k).tolist():
                old = self.mod[a]
                flows = self.flows_of(a)
                live = [m for m in range(k) if self.members[m]]
                if len(live) <= _ALL_MODULES_LIMIT:
                    cands = [m for m in live if m != old]
                else:
                    cands = sorted(m for m in flows if m != old)
                if self.members[old] > 1:
                    empty = next((m for m in range(k) if not self.members[m]), None)
                    if empty is not None:
                        cands.append(empty)
                best, best_delta, best_stats = None, -_EPS, None
                for m in cands:
                    d, stats = self.move_delta(a, old, m, flows)
                    if d < best_delta:
                        best, best_delta, best_stats = m, d, stats
                if best is not None:
                    self.apply(a, old, best, best_stats)
                    moved = True
            if not moved:
                break
            moved_any = True
        return moved_any

    def labels(self) -> list[int]:
        return _relabel(self.mod)


def _relabel(labels) -> list[int]:
    mapping = {}
    out = []
    for m in labels:
        if m not in mapping:
            mapping[m] = len(mapping)
        out.append(mapping[m])
    return out


def _optimise(base: _Level, start: list[int], rng) -> list[int]:
    """Node moves from ``start``, then repeated aggregation until stable."""
    part = _Partition(base, start)
    part.sweep_until_stable(rng)
    labels = part.labels()
    while True:
        level = base.aggregate(labels)
        if level.k == 1:
            return labels
        cpart = _Partition(level, list(range(level.k)))
        if not cpart.sweep_until_stable(rng):
            return labels
        merged = cpart.labels()
        labels = _relabel([merged[m] for m in labels])


def infomap(W, teleport: float = 0.15, seed: int = 0, trials: int = 8) -> np.ndarray:
    """Labels (contiguous from 0) minimising the two-level map equation."""
    flow = Flow(W, teleport)
    n = flow.n
    if n == 1:
        return np.zeros(1, dtype=np.int64)
    base = _Level.from_flow(flow)
    best, best_len = None, math.inf
    ss = np.random.SeedSequence(seed)
    for child in ss.spawn(max(1, trials)):
        rng = np.random.default_rng(child)
        labels = _optimise(base, list(range(n)), rng)
        length = map_equation(flow, labels)
        # fine-tune from the current solution until it stops improving
        for _ in range(50):
            tuned = _optimise(base, labels, rng)
            tuned_len = map_equation(flow, tuned)
            if tuned_len < length - _EPS:
                labels, length = tuned, tuned_len
            else:
                break
        if length < best_len - _EPS:
            best, best_len = labels, length
    for trivial in (list(range(n)), [0] * n):
        length = map_equation(flow, trivial)
        if length < best_len - _EPS:
            best, best_len = trivial, length
    return np.asarray(_relabel(best), dtype=np.int64)


def similarity_graph(refined: np.ndarray, knn: int) -> np.ndarray:
    """Mutual-kNN graph with weights clamp(1 - refined, 0, 1)."""
    R = np.asarray(refined, dtype=np.float64)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValidationError("refined matrix must be square")
    if knn < 1:
        raise ValidationError("knn must be >= 1")
    n = R.shape[0]
    S = np.clip(1.0 - (R + R.T) / 2.0, 0.0, 1.0)
    np.fill_diagonal(S, 0.0)
    near = np.zeros((n, n), dtype=bool)
    for i in range(n):
        order = [j for j in np.argsort(-S[i], kind="stable").tolist() if j != i]
        near[i, order[:knn]] = True
    keep = near & near.T & (S > 0)
    return np.where(keep, S, 0.0)


def infomap_cluster(refined, knn: int = 10, teleport: float = 0.15, seed: int = 0,
                    trials: int = 8) -> np.ndarray:
    R = np.asarray(refined, dtype=np.float64)
    if R.size == 0:
        raise EmptyGraph("no nodes to cluster")
    if not 0 < teleport < 1:
        raise ValidationError(f"teleport must lie in (0, 1), got {teleport}")
    return infomap(similarity_graph(R, knn), teleport, seed, trials)
