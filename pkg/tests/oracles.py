"""Independent brute-force reference implementations used by the tests."""

import itertools

import numpy as np


def brute_assignment(cost):
    """Minimum total cost and a minimizing permutation, by enumerating all d! permutations."""
    cost = np.asarray(cost, dtype=np.float64)
    d = cost.shape[0]
    perms = np.array(list(itertools.permutations(range(d))), dtype=np.int64).reshape(-1, d)
    totals = cost[np.arange(d), perms].sum(axis=1) if d else np.zeros(1)
    i = int(np.argmin(totals))
    return float(totals[i]), tuple(perms[i]) if d else ()


def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = 0.0
    for a in pos:
        for b in neg:
            wins += 1.0 if a > b else 0.5 if a == b else 0.0
    return wins / (len(pos) * len(neg))


def mc_kl(mu1, cov1, mu2, cov2, n=10**6, seed=0):
    """Monte-Carlo estimate of E_{x~N1}[log N1(x) - log N2(x)]."""
    rng = np.random.default_rng(seed)
    x = rng.multivariate_normal(mu1, cov1, size=n)

    def logpdf(x, mu, cov):
        p = len(mu)
        l = np.linalg.cholesky(cov)
        z = np.linalg.solve(l, (x - mu).T)
        return -0.5 * (z * z).sum(axis=0) - np.log(np.diag(l)).sum() - 0.5 * p * np.log(2 * np.pi)

    return float(np.mean(logpdf(x, mu1, cov1) - logpdf(x, mu2, cov2)))


def loop_cov(rows):
    rows = np.asarray(rows, dtype=np.float64)
    d, p = rows.shape
    mean = [sum(rows[i, j] for i in range(d)) / d for j in range(p)]
    cov = np.zeros((p, p))
    for a in range(p):
        for b in range(p):
            cov[a, b] = sum((rows[i, a] - mean[a]) * (rows[i, b] - mean[b]) for i in range(d)) / (d - 1)
    return np.array(mean), cov


def random_spd(rng, p, jitter=0.5):
    a = rng.normal(size=(p, p))
    return a @ a.T / p + jitter * np.eye(p)
