"""Naive reference implementations used only by the tests.

Written straight from the method definitions with plain Python loops, so they
share no code (and hopefully no bugs) with the vectorized versions.
"""

from __future__ import annotations

import math
from fractions import Fraction
from itertools import combinations


def argmax(row):
    best = 0
    for i, v in enumerate(row):
        if v > row[best]:
            best = i
    return best


def knn(X_ref, x, k):
    d = [(math.sqrt(sum((a - b) ** 2 for a, b in zip(r, x))), i) for i, r in enumerate(X_ref)]
    d.sort()
    return [i for _, i in d[:k]], [v for v, _ in d[:k]]


def fuse_rows(rows, weights):
    C = len(rows[0])
    out = [sum(w * r[c] for w, r in zip(weights, rows)) for c in range(C)]
    s = sum(out)
    return [v / s for v in out]


def average_of(rows, chosen):
    K = len(rows)
    w = [1.0 if k in chosen else 0.0 for k in range(K)]
    return fuse_rows(rows, [v / sum(w) for v in w])


def _preds(ref_out):
    return [[argmax(row) for row in model] for model in ref_out]


def lca(ref_out, y_ref, roc, x_rows):
    preds = _preds(ref_out)
    comp = []
    for k, row in enumerate(x_rows):
        c = argmax(row)
        assigned = [i for i in roc if preds[k][i] == c]
        good = [i for i in assigned if y_ref[i] == c]
        comp.append(len(good) / len(assigned) if assigned else 0.0)
    best = max(comp)
    return average_of(x_rows, {k for k, v in enumerate(comp) if v == best}), comp


def knora_u(ref_out, y_ref, roc, x_rows):
    preds = _preds(ref_out)
    votes = [sum(1 for i in roc if preds[k][i] == y_ref[i]) for k in range(len(x_rows))]
    if sum(votes) == 0:
        return average_of(x_rows, set(range(len(x_rows))))
    return fuse_rows(x_rows, [v / sum(votes) for v in votes])


def knora_e(ref_out, y_ref, roc, x_rows):
    preds = _preds(ref_out)
    K = len(x_rows)
    for kk in range(len(roc), 0, -1):
        E = {k for k in range(K) if all(preds[k][i] == y_ref[i] for i in roc[:kk])}
        if E:
            return average_of(x_rows, E)
    return average_of(x_rows, set(range(K)))


def mcb(ref_out, y_ref, roc, x_rows, theta):
    preds = _preds(ref_out)
    K = len(x_rows)
    prof = [argmax(r) for r in x_rows]
    kept = [i for i in roc if sum(preds[k][i] == prof[k] for k in range(K)) / K >= theta]
    if not kept:
        kept = list(roc)
    acc = [sum(preds[k][i] == y_ref[i] for i in kept) / len(kept) for k in range(K)]
    best = max(acc)
    return average_of(x_rows, {k for k in range(K) if acc[k] == best})


def rrc(ref_out, y_ref, roc, dist, x_rows):
    preds = _preds(ref_out)
    h = sum(dist) / len(dist)
    if h == 0:
        h = 1.0
    comp = []
    for k in range(len(x_rows)):
        comp.append(sum(math.exp(-d * d / (2 * h * h)) for i, d in zip(roc, dist) if preds[k][i] == y_ref[i]))
    if sum(comp) == 0:
        return average_of(x_rows, set(range(len(x_rows)))), comp
    return fuse_rows(x_rows, [c / sum(comp) for c in comp]), comp


def _pair(ca, cb, measure):
    n11 = sum(a and b for a, b in zip(ca, cb))
    n00 = sum((not a) and (not b) for a, b in zip(ca, cb))
    n10 = sum(a and not b for a, b in zip(ca, cb))
    n01 = sum(b and not a for a, b in zip(ca, cb))
    if measure == "DF":
        return n00 / len(ca)
    if measure == "Q":
        den = n11 * n00 + n01 * n10
        return 1.0 if den == 0 else (n11 * n00 - n01 * n10) / den
    den = n00 + n01 + n10
    return 1.0 if den == 0 else n00 / den


def des_knn(ref_out, y_ref, roc, x_rows, p_a, p_b, measure):
    preds = _preds(ref_out)
    K = len(x_rows)
    corr = [[preds[k][i] == y_ref[i] for i in roc] for k in range(K)]
    acc = [sum(c) / len(c) for c in corr]
    div = [0.0] * K
    for a, b in combinations(range(K), 2):
        m = _pair(corr[a], corr[b], measure)
        div[a] -= m
        div[b] -= m
    if K > 1:
        div = [d / (K - 1) for d in div]
    n_a = min(K, max(1, math.ceil(Fraction(str(p_a)) * K)))
    n_b = min(K, max(1, math.ceil(Fraction(str(p_b)) * K)))
    by_acc = sorted(range(K), key=lambda k: (-acc[k], k))[:n_a]
    by_div = sorted(range(K), key=lambda k: (-div[k], k))[:n_b]
    return average_of(x_rows, set(by_acc) | set(by_div))


def fused_accuracy_all_weights(q, q2, y, resolution):
    """Every grid weight that classifies all samples correctly (binary two-model case)."""
    ok = []
    for a in range(resolution + 1):
        w = a / resolution
        good = True
        for qs, q2s, ys in zip(q, q2, y):
            fused = [w * u + (1 - w) * v for u, v in zip(qs, q2s)]
            if argmax(fused) != ys:
                good = False
                break
        if good:
            ok.append(w)
    return ok


def micro_instance(rng):
    """Small random reference set with coarse values so ties actually happen.

    Returns ``(X_ref, y_ref, ref_out, x, x_rows, k)`` as plain lists.
    """
    import numpy as np

    n_ref = int(rng.integers(2, 13))
    K = int(rng.integers(1, 4))
    C = int(rng.integers(2, 4))
    D = int(rng.integers(1, 3))
    k = int(rng.integers(1, min(5, n_ref) + 1))
    levels = np.array([0.1, 0.2, 0.3, 0.4, 0.5, 0.6])

    def prob_row():
        r = rng.choice(levels, C)
        return (r / r.sum()).tolist()

    X_ref = rng.integers(-2, 3, size=(n_ref, D)).astype(float).tolist()
    y_ref = rng.integers(0, C, n_ref).tolist()
    ref_out = [[prob_row() for _ in range(n_ref)] for _ in range(K)]
    x = rng.integers(-2, 3, size=D).astype(float).tolist()
    x_rows = [prob_row() for _ in range(K)]
    return X_ref, y_ref, ref_out, x, x_rows, k


def mismatch_counts(n_instances, seed=0, atol=1e-12):
    """Run every vectorized DES/DCS rule against the loops above.

    Returns ``{method: mismatches}`` over ``n_instances`` random micro-instances.
    """
    import numpy as np

    from bpens import baselines as bl

    names = ["knn", "lca", "knora_u", "knora_e", "mcb", "rrc"] + [f"des_knn_{m}" for m in ("DF", "Q", "RE")]
    bad = dict.fromkeys(names, 0)
    rng = np.random.default_rng(seed)

    def differ(a, b):
        return not np.allclose(np.asarray(a, float), np.asarray(b, float), atol=atol, rtol=0)

    for _ in range(n_instances):
        X_ref, y_ref, ref_out, x, x_rows, k = micro_instance(rng)
        ref = bl.ReferenceSet(np.array(X_ref), np.array(y_ref), np.array(ref_out))
        roc = bl.knn_query(ref.X, np.array(x), k)
        o_idx, o_dist = knn(X_ref, x, k)
        bad["knn"] += list(roc.idx) != o_idx or differ(roc.dist, o_dist)
        P = np.array(x_rows)
        row, comp = lca(ref_out, y_ref, o_idx, x_rows)
        got_comp = bl.lca_competence(ref, roc.idx[None], P[:, None])[0]
        bad["lca"] += differ(bl.lca_select(ref, roc, P), row) or differ(got_comp, comp)
        bad["knora_u"] += differ(bl.knora_union(ref, roc, P), knora_u(ref_out, y_ref, o_idx, x_rows))
        bad["knora_e"] += differ(bl.knora_eliminate(ref, roc, P), knora_e(ref_out, y_ref, o_idx, x_rows))
        bad["mcb"] += differ(bl.mcb_select(ref, roc, P, 0.7), mcb(ref_out, y_ref, o_idx, x_rows, 0.7))
        row, comp = rrc(ref_out, y_ref, o_idx, o_dist, x_rows)
        got_comp = bl.rrc_competence(ref, roc.idx[None], roc.dist[None])[0]
        bad["rrc"] += differ(bl.rrc_select(ref, roc, P), row) or differ(got_comp, comp)
        for m in ("DF", "Q", "RE"):
            want = des_knn(ref_out, y_ref, o_idx, x_rows, 0.5, 0.3, m)
            bad[f"des_knn_{m}"] += differ(bl.des_knn(ref, roc, P, 0.5, 0.3, m), want)
    return bad
