"""Independent reference values for the C++ unit tests.

Logits and log-odds ratios are computed from their textbook definitions on
marginal probabilities, without the C/M matrix construction used by the
library. Run with `python3 tests/oracles/oracles.py`; the printed numbers are
frozen in tests/unit/*.cpp.
"""

import itertools

import numpy as np
from scipy.special import gammaln
from scipy.stats import dirichlet


def logit(p, a, kind):
    """Univariate logit a (0-based) of the probability vector p."""
    if kind == "local":
        return np.log(p[a + 1] / p[a])
    if kind == "global":
        return np.log(p[a + 1:].sum() / p[: a + 1].sum())
    if kind == "continuation":
        return np.log(p[a + 1:].sum() / p[a])
    if kind == "reverse_continuation":
        return np.log(p[a + 1] / p[: a + 1].sum())
    raise ValueError(kind)


def split(m, a, kind):
    """(denominator, numerator) category sets of logit a."""
    if kind == "local":
        return [a], [a + 1]
    if kind == "global":
        return list(range(a + 1)), list(range(a + 1, m))
    if kind == "continuation":
        return [a], list(range(a + 1, m))
    return list(range(a + 1)), [a + 1]


def lor(P, j, k, kinds):
    """Generalised log-odds ratio (j, k) of a two-way table P."""
    d1, n1 = split(P.shape[0], j, kinds[0])
    d2, n2 = split(P.shape[1], k, kinds[1])
    s = lambda r, c: P[np.ix_(r, c)].sum()
    return np.log(s(n1, n2)) + np.log(s(d1, d2)) - np.log(s(n1, d2)) - np.log(s(d1, n2))


def eta_two_way(P, kinds):
    m1, m2 = P.shape
    out = [logit(P.sum(1), a, kinds[0]) for a in range(m1 - 1)]
    out += [logit(P.sum(0), a, kinds[1]) for a in range(m2 - 1)]
    out += [lor(P, j, k, kinds) for j in range(m1 - 1) for k in range(m2 - 1)]
    return np.array(out)


def three_way_interaction(P):
    """Local 2x2x2 interaction: log of the ratio of conditional odds ratios."""
    or_given = lambda c: np.log(P[1, 1, c] * P[0, 0, c] / (P[1, 0, c] * P[0, 1, c]))
    return or_given(1) - or_given(0)


def fmt(v):
    return ", ".join(f"{x:.15g}" for x in np.atleast_1d(v))


print("# eta of the 3x3 test table")
P33 = np.array([[0.10, 0.05, 0.05], [0.08, 0.20, 0.07], [0.02, 0.13, 0.30]])
for kind in ["local", "global", "continuation", "reverse_continuation"]:
    print(kind, ":", fmt(eta_two_way(P33, (kind, kind))))
print("mixed global x local :", fmt(eta_two_way(P33, ("global", "local"))))

print("# eta of the 2x3 test table")
P23 = np.array([[0.15, 0.25, 0.10], [0.05, 0.15, 0.30]])
for kind in ["local", "global"]:
    print(kind, ":", fmt(eta_two_way(P23, (kind, kind))))

print("# 2x2x2 table, local logits")
P222 = np.array([0.05, 0.10, 0.15, 0.20, 0.08, 0.12, 0.18, 0.12]).reshape(2, 2, 2)
uni = [np.log(P222.sum((1, 2))[1] / P222.sum((1, 2))[0]),
       np.log(P222.sum((0, 2))[1] / P222.sum((0, 2))[0]),
       np.log(P222.sum((0, 1))[1] / P222.sum((0, 1))[0])]
l12 = lor(P222.sum(2), 0, 0, ("local", "local"))
l13 = lor(P222.sum(1), 0, 0, ("local", "local"))
l23 = lor(P222.sum(0), 0, 0, ("local", "local"))
# Margin order: {1}, {2}, {1,2}, {3}, {1,3}, {2,3}, {1,2,3}.
print("eta :", fmt([uni[0], uni[1], l12, uni[2], l13, l23, three_way_interaction(P222)]))

print("# Dirichlet helpers")
alpha = np.array([0.5, 1.0, 2.5, 7.0])
print("log_multivariate_beta :", fmt(gammaln(alpha).sum() - gammaln(alpha.sum())))
x = np.array([0.1, 0.2, 0.3, 0.4])
print("log_dirichlet_density :", fmt(dirichlet.logpdf(x, alpha)))

print("# father_son independence fit on the smoothed table")
FS = np.array([
    [125, 60, 26, 49, 14, 5],
    [47, 65, 66, 123, 23, 21],
    [31, 58, 110, 223, 64, 32],
    [50, 114, 185, 715, 258, 189],
    [6, 19, 40, 179, 143, 71],
    [3, 14, 32, 141, 91, 106],
], dtype=float)
assert FS.sum() == 3498
S = FS + 0.5
pi_ind = np.outer(S.sum(1), S.sum(0)) / S.sum() ** 2
print("pi_hat[0..5] :", fmt(pi_ind.ravel()[:6]))
print("pi_hat[30..35] :", fmt(pi_ind.ravel()[30:]))
print("loglik (raw counts) :", fmt((FS * np.log(pi_ind)).sum()))

print("# Monte Carlo reference for PQD on father_son (numpy generator, 4e6 draws)")
rng = np.random.default_rng(1)


def pqd_fraction(conc, n, chunk=200000):
    hits = 0
    for _ in range(n // chunk):
        p = rng.dirichlet(conc, size=chunk).reshape(chunk, 6, 6)
        cum = p.cumsum(1).cumsum(2)  # P(A1 <= i, A2 <= j)
        r = p.sum(2).cumsum(1)  # P(A1 <= i)
        c = p.sum(1).cumsum(1)  # P(A2 <= j)
        ok = np.ones(chunk, bool)
        for i, j in itertools.product(range(5), range(5)):
            a = cum[:, i, j]
            b = r[:, i] - a
            cc = c[:, j] - a
            d = 1 - a - b - cc
            ok &= a * d >= b * cc
        hits += ok.sum()
    return hits / n


n = 4_000_000
prior = pqd_fraction(np.ones(36), n)
post = pqd_fraction(np.ones(36) + FS.ravel(), n // 4)
print("prior :", fmt(prior), " se", fmt(np.sqrt(prior * (1 - prior) / n)))
print("posterior :", fmt(post))
print("ln B31 :", fmt(np.log(post / prior)))
