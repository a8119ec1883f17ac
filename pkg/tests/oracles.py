"""Independent reference implementations used to cross-check the package.

Everything here is deliberately written without importing from catseg and
without sharing data structures with it (no collections.Counter, no numpy
reductions beyond plain sums), so a bug in the package cannot hide behind
an identical bug in the oracle.
"""

import numpy as np


def fd_gradient(f, arrays, eps=1e-5):
    """Central-difference gradient of scalar f() w.r.t. each array in place.

    f is a zero-argument callable that reads the arrays; they are perturbed
    element by element and restored afterwards.
    """
    grads = []
    for a in arrays:
        g = np.zeros_like(a, dtype=np.float64)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f())
            flat[i] = orig - eps
            lo = float(f())
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
        grads.append(g)
    return grads


def relative_error(analytic, numeric):
    num = abs(analytic - numeric)
    den = max(1.0, abs(analytic), abs(numeric))
    return num / den


def max_relative_error(analytic_arrays, numeric_arrays):
    worst = 0.0
    for a, n in zip(analytic_arrays, numeric_arrays):
        for x, y in zip(np.asarray(a).reshape(-1), np.asarray(n).reshape(-1)):
            worst = max(worst, relative_error(float(x), float(y)))
    return worst


def removal_match_count(pred_segments, gold_segments):
    """Multiset intersection size by explicit one-at-a-time removal."""
    pool = list(gold_segments)
    matched = 0
    for seg in pred_segments:
        if seg in pool:
            pool.remove(seg)
            matched += 1
    return matched


def brute_prf(token_pairs):
    """Micro-averaged P/R/F1 over (pred_segments, gold_segments) pairs."""
    matched = 0
    n_pred = 0
    n_gold = 0
    for pred, gold in token_pairs:
        matched += removal_match_count(pred, gold)
        n_pred += len(pred)
        n_gold += len(gold)
    p = matched / n_pred if n_pred else 0.0
    r = matched / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def brute_labeled_prf(token_pairs):
    """Same as brute_prf but over (segment, label) tuples."""
    tupled = []
    for (psegs, plabs), (gsegs, glabs) in token_pairs:
        tupled.append((list(zip(psegs, plabs)), list(zip(gsegs, glabs))))
    return brute_prf(tupled)
