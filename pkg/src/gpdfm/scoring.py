"""Proper scoring rules and forecast comparison tests."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .store import fmt


def crps(draws, y):
    """Sample CRPS: mean |x - y| - (1 / 2 S^2) sum_{s, s'} |x_s - x_s'|.

    The double sum is evaluated in O(S log S) from the order statistics.
    """
    x = np.sort(np.asarray(draws, dtype=float).ravel())
    S = x.size
    if S < 1:
        raise ValueError("need at least one draw")
    term1 = np.mean(np.abs(x - y))
    weights = 2.0 * np.arange(S) - S + 1.0
    term2 = np.dot(weights, x) / S ** 2
    return float(max(term1 - term2, 0.0))


def energy_score(draws, y, chunk=512):
    """Sample energy score of an S x N draw matrix against the realization ``y``."""
    X = np.asarray(draws, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.atleast_1d(np.asarray(y, dtype=float))
    S = X.shape[0]
    term1 = np.mean(np.sqrt(np.sum((X - y) ** 2, axis=1)))
    total = 0.0
    for i in range(0, S, chunk):
        block = X[i:i + chunk]
        dist = np.sqrt(np.sum((block[:, None, :] - X[None, :, :]) ** 2, axis=2))
        total += dist.sum()
    return float(max(term1 - total / (2.0 * S ** 2), 0.0))


def gaussian_crps(mu, sigma, y):
    """Closed-form CRPS of N(mu, sigma^2)."""
    z = (y - mu) / sigma
    return float(sigma * (z * (2 * stats.norm.cdf(z) - 1) + 2 * stats.norm.pdf(z)
                          - 1 / np.sqrt(np.pi)))


@dataclass
class DMResult:
    statistic: float
    p_value: float
    stars: str
    mean_diff: float
    hac_var: float


def significance_stars(p):
    if not np.isfinite(p):
        return ""
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.10:
        return "*"
    return ""


def hac_variance(d, h):
    """Long-run variance of ``d`` with Bartlett weights 1 - k/h for lags k < h."""
    d = np.asarray(d, dtype=float)
    T = d.size
    u = d - d.mean()
    lrv = u @ u / T
    for k in range(1, max(int(h), 1)):
        if k >= T:
            break
        lrv += 2.0 * (1.0 - k / h) * (u[k:] @ u[:-k]) / T
    return float(lrv)


def dm_test(loss_a, loss_b, h=1, harvey=True):
    """One-sided Diebold-Mariano test that model A has lower expected loss than B.

    The statistic is mean(d) / sqrt(lrv / T) with d = loss_a - loss_b, so
    negative values favour A; ``p_value`` = Phi(statistic). With ``harvey``
    the statistic is scaled by sqrt((T + 1 - 2h + h (h - 1) / T) / T).
    A zero-variance differential gives NaN statistic and p-value.
    """
    d = np.asarray(loss_a, dtype=float) - np.asarray(loss_b, dtype=float)
    T = d.size
    if T < 2:
        return DMResult(np.nan, np.nan, "", float(np.mean(d)) if T else np.nan, np.nan)
    lrv = hac_variance(d, h)
    mean = float(d.mean())
    if np.allclose(d, d[0], rtol=0, atol=0) and mean == 0.0:
        return DMResult(0.0, 0.5, "", 0.0, 0.0)
    # a constant differential leaves only round-off in the variance
    if not lrv > 1e-12 * max(float(np.mean(d * d)), 1e-300):
        return DMResult(np.nan, np.nan, "", mean, lrv)
    stat = mean / np.sqrt(lrv / T)
    if harvey:
        stat *= np.sqrt((T + 1 - 2 * h + h * (h - 1) / T) / T)
    p = float(stats.norm.cdf(stat))
    return DMResult(float(stat), p, significance_stars(p), mean, lrv)


# ---------------------------------------------------------------------------
# density differences on a fixed grid


@dataclass
class DensityGrid:
    edges: np.ndarray
    prob_a: np.ndarray        # periods x bins
    prob_b: np.ndarray
    outside_a: np.ndarray     # periods
    outside_b: np.ndarray

    @property
    def diff(self):
        return self.prob_a - self.prob_b

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            labels = [f"[{fmt(a)},{fmt(b)})" for a, b in zip(self.edges[:-1], self.edges[1:])]
            w.writerow(["period", *labels, "outside_a", "outside_b"])
            for t, row in enumerate(self.diff):
                w.writerow([t, *[fmt(v) for v in row], fmt(self.outside_a[t]),
                            fmt(self.outside_b[t])])


def _bin_probs(draws, edges):
    draws = np.asarray(draws, dtype=float)
    counts = np.array([np.histogram(row, bins=edges)[0] for row in draws], dtype=float)
    probs = counts / draws.shape[1]
    return probs, 1.0 - probs.sum(axis=1)


def density_diff_grid(draws_a, draws_b, grid=None):
    """Per-period differences in bin probabilities between two predictive samples.

    ``draws_a`` and ``draws_b`` are (periods, S) arrays; ``grid`` holds the bin
    edges (default -10, -9, ..., 10). Mass outside the grid is reported
    separately.
    """
    edges = np.arange(-10.0, 11.0, 1.0) if grid is None else np.asarray(grid, dtype=float)
    a = np.atleast_2d(draws_a)
    b = np.atleast_2d(draws_b)
    if a.shape[0] != b.shape[0]:
        raise ValueError("both draw sets must cover the same periods")
    pa, oa = _bin_probs(a, edges)
    pb, ob = _bin_probs(b, edges)
    return DensityGrid(edges, pa, pb, oa, ob)


# ---------------------------------------------------------------------------
# score tables


@dataclass
class ScoreTable:
    """Mean scores per (model, horizon, variable), ratios and DM stars vs a benchmark."""

    rows: list = field(default_factory=list)
    benchmark: str = ""

    COLUMNS = ("model", "horizon", "variable", "score", "ratio", "stars", "best_flag")

    def add(self, **row):
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def lookup(self, model, horizon, variable="joint"):
        for r in self.rows:
            if r["model"] == model and r["horizon"] == horizon and r["variable"] == variable:
                return r
        raise KeyError((model, horizon, variable))

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for r in self.rows:
                w.writerow([r["model"], r["horizon"], r["variable"], fmt(r["score"]),
                            fmt(r["ratio"]), r["stars"], int(r["best_flag"])])

    @classmethod
    def build(cls, losses, benchmark, harvey=True):
        """Assemble a table from per-origin losses.

        ``losses[model][(horizon, variable)]`` is a dict origin -> loss. Means
        and DM tests use the origins common to the model and the benchmark.
        """
        table = cls(benchmark=benchmark)
        keys = sorted({k for m in losses.values() for k in m},
                      key=lambda k: (k[0], k[1] != "joint", str(k[1])))
        for key in keys:
            h, var = key
            bench = losses.get(benchmark, {}).get(key, {})
            entries = []
            for model, by_key in losses.items():
                series = by_key.get(key, {})
                common = sorted(set(series) & set(bench)) if model != benchmark else sorted(series)
                if not common:
                    continue
                la = np.array([series[o] for o in common])
                lb = np.array([bench[o] for o in common])
                score = float(la.mean())
                ratio = score / float(lb.mean()) if lb.mean() > 0 else np.nan
                stars = "" if model == benchmark else dm_test(la, lb, h, harvey).stars
                entries.append(dict(model=model, horizon=h, variable=var, score=score,
                                    ratio=ratio, stars=stars, best_flag=False))
            if entries:
                best = min(range(len(entries)), key=lambda j: entries[j]["score"])
                entries[best]["best_flag"] = True
            table.rows.extend(entries)
        return table
