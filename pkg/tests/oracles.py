"""Slow, straightforward reference implementations used as test oracles.

Nothing here imports the package under test.
"""

import math
from fractions import Fraction

from scipy.integrate import quad


def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def chi2_sf_quad(x, df):
    k = df / 2.0
    norm = 1.0 / (2.0**k * math.gamma(k))
    density = lambda t: norm * t ** (k - 1.0) * math.exp(-t / 2.0)
    return quad(density, x, math.inf, epsabs=1e-14, epsrel=1e-12)[0]


def hamming_weighted(p, q, weights):
    d = 0.0
    for a in range(len(weights)):
        if p[a] != q[a]:
            d += weights[a]
    return d


def idw_knn(query, rows, labels, ids, k):
    """Classical inverse-distance-weighted K-NN under uniform attribute weights."""
    m = len(query)
    w = [1.0 / m] * m
    dists = sorted((hamming_weighted(query, r, w), i, y) for r, y, i in zip(rows, labels, ids))
    chosen = dists[:k]
    exact = [c for c in chosen if c[0] == 0.0]
    num = den = 0.0
    if exact:
        for _, _, y in exact:
            num += 1.0 * y
            den += 1.0
    else:
        for d, _, y in chosen:
            t = 1.0 / d
            num += t * y
            den += t
    return num / den


def empirical_logit(pos, total):
    return math.log(Fraction(pos, total - pos))
