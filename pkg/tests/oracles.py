"""Independent reference implementations used as test oracles.

They are deliberately slow and direct: dense matrices, brute-force
enumeration and fine-step sampling.
"""
from __future__ import annotations

import math

import numpy as np


# -- ray casting ----------------------------------------------------------------

def march_depths(cells, resolution, origin, xs, ys, bearings, max_range, step_frac=1e-3,
                 block=4096):
    """Fine-step ray marcher: first sample (step res*step_frac) inside a wall.

    A step shorter than a cell can only skip a cell by passing diagonally
    through a corner; such steps also test the side cell the segment crosses,
    so no occupied cell is stepped over.  Leaving the grid counts as no hit
    and reports ``max_range``.
    """
    cells = np.asarray(cells)
    h, w = cells.shape
    step = resolution * step_frac
    n_total = int(math.ceil(max_range / step))
    out = np.full(len(xs), float(max_range))
    for n in range(len(xs)):
        x0 = (xs[n] - origin[0]) / resolution
        y0 = (ys[n] - origin[1]) / resolution
        ux, uy = math.cos(bearings[n]), math.sin(bearings[n])
        prev_r, prev_c = math.floor(y0), math.floor(x0)
        for k0 in range(1, n_total + 1, block):
            k = np.arange(k0, min(k0 + block, n_total + 1))
            t = k * step_frac  # in cells
            c = np.floor(x0 + t * ux).astype(np.int64)
            r = np.floor(y0 + t * uy).astype(np.int64)
            pr = np.concatenate([[prev_r], r[:-1]])
            pc = np.concatenate([[prev_c], c[:-1]])
            prev_r, prev_c = int(r[-1]), int(c[-1])
            # diagonal moves: which side cell did the segment cross?
            diag = (r != pr) & (c != pc)
            xc = np.where(c > pc, c, pc).astype(np.float64)
            yc = np.where(r > pr, r, pr).astype(np.float64)
            with np.errstate(divide="ignore", invalid="ignore"):
                tx = (xc - x0) / ux
                ty = (yc - y0) / uy
            mid_r = np.where(tx < ty, pr, r)
            mid_c = np.where(tx < ty, c, pc)

            def blocked(rr, cc):
                outside = (cc < 0) | (cc >= w) | (rr < 0) | (rr >= h)
                occ = np.zeros_like(outside)
                occ[~outside] = cells[rr[~outside], cc[~outside]] == 1
                return outside, occ

            out_e, occ_e = blocked(r, c)
            out_m, occ_m = blocked(mid_r, mid_c)
            out_m &= diag
            occ_m &= diag
            occ_any = occ_e | occ_m
            out_any = (out_e | out_m) & ~occ_m
            if occ_any.any() or out_any.any():
                i_occ = int(occ_any.argmax()) if occ_any.any() else len(k)
                i_out = int(out_any.argmax()) if out_any.any() else len(k)
                if i_occ <= i_out:
                    out[n] = min(k[i_occ] * step, max_range)
                break
    return out


# -- map equation ----------------------------------------------------------------

def stationary_flow(W, teleport):
    """Visit rates of the teleporting walk from the dense eigenproblem.

    Returns (p, teleport_flow, link_flow).
    """
    W = np.array(W, dtype=np.float64)
    np.fill_diagonal(W, 0.0)
    n = W.shape[0]
    s = W.sum(axis=1)
    tel = np.where(s > 0, teleport, 1.0)
    P = np.zeros((n, n))
    for i in range(n):
        if s[i] > 0:
            P[i] = (1 - tel[i]) * W[i] / s[i]
        P[i] += tel[i] / n
    vals, vecs = np.linalg.eig(P.T)
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
    p = v / v.sum()
    link = np.zeros((n, n))
    for i in range(n):
        if s[i] > 0:
            link[i] = p[i] * (1 - tel[i]) * W[i] / s[i]
    return p, tel * p, link


def _h(probs):
    probs = [x for x in probs if x > 0]
    tot = sum(probs)
    return -sum(x / tot * math.log2(x / tot) for x in probs)


def codelength(W, teleport, labels, flow=None):
    """Two-level map equation in the textbook q H(Q) + sum p_m H(P_m) form."""
    p, tel, link = stationary_flow(W, teleport) if flow is None else flow
    n = len(p)
    labels = np.asarray(labels)
    exits, book = [], []
    for m in np.unique(labels):
        inside = labels == m
        q = tel[inside].sum() * (n - inside.sum()) / n + link[np.ix_(inside, ~inside)].sum()
        exits.append(q)
        book.append([q] + list(p[inside]))
    q_tot = sum(exits)
    L = q_tot * _h(exits) if q_tot > 0 else 0.0
    for b in book:
        L += sum(b) * _h(b)
    return L


def exhaustive_minimum(W, teleport):
    """(minimum codelength, a minimising partition) over all set partitions."""
    flow = stationary_flow(W, teleport)
    best, arg = math.inf, None
    for labels in set_partitions(len(W)):
        L = codelength(W, teleport, labels, flow)
        if L < best:
            best, arg = L, labels
    return best, arg


def random_graph(rng, n):
    """Symmetric non-negative weights with random sparsity, zero diagonal."""
    dens = rng.uniform(0.2, 1.0)
    A = rng.random((n, n)) * (rng.random((n, n)) < dens)
    W = np.triu(A, 1)
    return W + W.T


def set_partitions(n):
    """All set partitions of range(n) as restricted-growth label lists."""
    def rec(i, labels, k):
        if i == n:
            yield list(labels)
            return
        for m in range(k + 1):
            labels.append(m)
            yield from rec(i + 1, labels, max(k, m + 1))
            labels.pop()
    yield from rec(0, [], 0)


def same_partition(a, b):
    a, b = list(a), list(b)
    return all((a[i] == a[j]) == (b[i] == b[j]) for i in range(len(a)) for j in range(len(a)))


# -- histogram filter --------------------------------------------------------------

def _gauss(sigma):
    if sigma <= 0:
        return {0: 1.0}
    r = int(math.ceil(3 * sigma))
    raw = {d: math.exp(-d * d / (2 * sigma * sigma)) for d in range(-r, r + 1)}
    z = sum(raw.values())
    return {d: v / z for d, v in raw.items()}


def _lin(shift):
    lo = math.floor(shift)
    a = shift - lo
    return {lo: 1 - a, lo + 1: a} if a > 1e-12 else {lo: 1.0}


def transition_matrix(h, w, o, cell, dx, dy, dtheta, sig_t, sig_r):
    """Dense (n x n) transition matrix, built one source pose at a time.

    Column ``src`` holds where the unit mass at ``src`` ends up (before
    clipping to the grid and to free cells).
    """
    n = h * w * o
    T = np.zeros((n, n))
    gs = _gauss(sig_t / cell)
    gr = _gauss(sig_r / (2 * math.pi / o))
    bins = _lin(dtheta / (2 * math.pi / o))
    for i in range(h):
        for j in range(w):
            for k in range(o):
                th = 2 * math.pi * k / o
                sx = (dx * math.cos(th) - dy * math.sin(th)) / cell
                sy = (dx * math.sin(th) + dy * math.cos(th)) / cell
                src = (i * w + j) * o + k
                for dr, wr in _lin(sy).items():
                    for dc, wc in _lin(sx).items():
                        for dk, wk in bins.items():
                            for br, g1 in gs.items():
                                ii = i + dr + br
                                if not 0 <= ii < h:
                                    continue
                                for bc, g2 in gs.items():
                                    jj = j + dc + bc
                                    if not 0 <= jj < w:
                                        continue
                                    for bk, g3 in gr.items():
                                        kk = (k + dk + bk) % o
                                        dst = (ii * w + jj) * o + kk
                                        T[dst, src] += wr * wc * wk * g1 * g2 * g3
    return T


def predict_oracle(values, free, cell, dx, dy, dtheta, sig_t, sig_r):
    h, w, o = values.shape
    T = transition_matrix(h, w, o, cell, dx, dy, dtheta, sig_t, sig_r)
    out = (T @ values.reshape(-1)).reshape(h, w, o) * free[:, :, None]
    return out * (values.sum() / out.sum())
