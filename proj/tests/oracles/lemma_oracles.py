"""Fixed-seed reference runs for the lemma regression suite.

Every quantity is estimated here with numpy's PCG64 stream, independently of
the C++ generator, and written to lemma_oracles.json as (value, std_error).
The C++ suite passes when its own estimate stays within value + 5 combined
standard errors.

    python3 tests/oracles/lemma_oracles.py > tests/oracles/lemma_oracles.json
"""
import json
import math

import numpy as np
from scipy.stats import norm

rng = np.random.default_rng(20240601)


def mean_se(v):
    v = np.asarray(v, dtype=float)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


def quantile_se(sorted_v, p):
    n = len(sorted_v)
    pos = p * (n - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, n - 1)
    value = sorted_v[lo] + (pos - lo) * (sorted_v[hi] - sorted_v[lo])
    spread = math.sqrt(n * p * (1 - p))
    a = int(min(max(math.floor(pos - spread), 0), n - 1))
    b = int(min(max(math.ceil(pos + spread), 0), n - 1))
    return float(value), float(0.5 * (sorted_v[b] - sorted_v[a]))


def two_corr_gap(a, b, sigma, n, chunk=1_000_000):
    cols = [[], [], []]
    for _ in range(n // chunk):
        u = rng.standard_normal(chunk)
        v = rng.standard_normal(chunk)
        xi = sigma * rng.standard_normal(chunk)
        r = np.maximum(a * u + b * v + xi, 0)
        cols[0].append(u * v * r * r)
        cols[1].append(u * r)
        cols[2].append(v * r)
    j, ur, vr = (np.concatenate(c) for c in cols)
    mu, mv = ur.mean(), vr.mean()
    gap = abs(j.mean() - mu * mv)
    return float(gap), mean_se(j - mv * ur - mu * vr)[1]


def G_closed(a, sigma):
    # int_0^a (a - y)^2 phi_sigma(y) dy in closed form
    phi0 = norm.pdf(0, scale=sigma)
    phia = norm.pdf(a, scale=sigma)
    cdf = norm.cdf(a, scale=sigma) - 0.5
    return (a * a + sigma**2) * cdf - 2 * a * sigma**2 * (phi0 - phia) - sigma**2 * a * phia


def abs_H(r, sigma, n):
    z = rng.standard_normal(n)
    return mean_se(np.abs((z * z - 1) * G_closed(r * z, sigma)))


def hhat_samples(k, t, coords, n, chunk=500):
    """h = 1 on 0..k-1; t kept rows of W; returns (W^T x)[coords] per sample."""
    out = []
    alpha = 2.0 / t
    for _ in range(n // chunk):
        w = rng.standard_normal((chunk, t, k))
        x = np.maximum(alpha * w.sum(axis=2), 0)
        out.append(np.einsum("str,st->sr", w[:, :, coords], x))
    return np.concatenate(out)


def pairwise_cov(k, t, n):
    s = hhat_samples(k, t, [0, 1], n)
    a, b = s[:, 0], s[:, 1]
    prod = (a - a.mean()) * (b - b.mean())
    m, se = mean_se(prod)
    return m * n / (n - 1), se


def variance_of(v):
    dev = (v - v.mean()) ** 2
    m, se = mean_se(dev)
    return m * len(v) / (len(v) - 1), se


def linear_comb(k, t, n):
    s = hhat_samples(k, t, list(range(k)), n, chunk=200)
    return variance_of(s.sum(axis=1))


def variance_constant():
    worst = 0.0
    for k in (8, 16, 32):
        for t in (128, 256, 512):
            v, _ = variance_of(hhat_samples(k, t, [0], 20000)[:, 0])
            worst = max(worst, v / (k / t))
    return 1.5 * worst


def concentration_p99(k, t, m, trials):
    h = np.zeros(m)
    h[:k] = 1
    dev = []
    for _ in range(trials):
        w = rng.standard_normal((t, m))
        x = np.maximum(2.0 / t * w @ h, 0)
        dev.append(np.abs(w.T @ x - h).max())
    return quantile_se(np.sort(dev), 0.99)


def linear_median(n, m, trials):
    dev = []
    for _ in range(trials):
        w = rng.standard_normal((n, m))
        h = (rng.random(m) < 0.5).astype(float)
        dev.append(np.abs(w.T @ (w @ h) / n - h).max())
    return quantile_se(np.sort(dev), 0.5)


def two_layer(q, k, t, p, m, n, c_h, trials):
    g = np.zeros(p)
    g[:q] = 1
    errs = []
    for _ in range(trials):
        u = rng.standard_normal((m, p))
        K = rng.choice(m, k, replace=False)
        h = np.zeros(m)
        h[K] = np.maximum(2.0 / k * u[K] @ g, 0)
        w = rng.standard_normal((t, m))
        x = np.maximum(2.0 / t * w @ h, 0)
        b = -c_h * math.sqrt(math.log(n) / t) * np.linalg.norm(h)
        ht = np.maximum(w.T @ x + b, 0)
        gt = max(u[:, 0] @ ht, 0.0)
        errs.append((gt - g[0]) ** 2)
    return mean_se(errs)


def entry(pair):
    return {"value": pair[0], "std_error": pair[1]}


oracles = {
    "two_correlation_gap": entry(two_corr_gap(1.0, 1.0, 10.0, 10_000_000)),
    "abs_H_sigma100_r2": entry(abs_H(2.0, 100.0, 1_000_000)),
    "pairwise_cov_k20_t200": entry(pairwise_cov(20, 200, 100_000)),
    "linear_comb_k16_t256": entry(linear_comb(16, 256, 100_000)),
    "variance_constant": {"value": variance_constant(), "std_error": 0.0},
    "concentration_p99_k16_t256_n2048": entry(concentration_p99(16, 256, 256, 1000)),
    "linear_model_median_n4096_m64": entry(linear_median(4096, 64, 1000)),
    "two_layer_q5_k100_t400": entry(two_layer(5, 100, 400, 64, 1024, 4096, 0.125, 2000)),
}
print(json.dumps(oracles, indent=2, sort_keys=True))
