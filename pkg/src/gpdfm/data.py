"""Panel ingestion: stationarity transforms, standardization and PC initialization.

Transform codes follow the FRED-MD/QD convention:

====  ==========================
code  transform
====  ==========================
1     level
2     first difference
3     second difference
4     log
5     first difference of log
6     second difference of log
7     first difference of the growth rate x_t / x_{t-1} - 1
====  ==========================
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, DomainError

TCODES = (1, 2, 3, 4, 5, 6, 7)
# leading observations lost by each code
DIFF_ORDER = {1: 0, 2: 1, 3: 2, 4: 0, 5: 1, 6: 2, 7: 2}
_TCODE_ROW_LABELS = {"transform", "transform:", "tcode", "tcodes"}


@dataclass
class RawPanel:
    series_ids: list
    dates: list
    values: np.ndarray
    tcodes: list

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ConfigError("panel values must be a T x N matrix")
        if len(self.tcodes) != self.values.shape[1]:
            raise ConfigError(
                f"got {len(self.tcodes)} tcodes for {self.values.shape[1]} series")
        if len(self.series_ids) != self.values.shape[1]:
            raise ConfigError("series_ids length does not match number of columns")
        if len(self.dates) != self.values.shape[0]:
            raise ConfigError("dates length does not match number of rows")
        if any(not (a < b) for a, b in zip(self.dates[:-1], self.dates[1:])):
            raise ConfigError("dates must be strictly increasing")


@dataclass
class Panel:
    """Standardized T x N panel with the statistics needed to undo it."""

    Y: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    target_indices: list = field(default_factory=list)
    series_ids: list = field(default_factory=list)
    dates: list = field(default_factory=list)
    tcodes: list = field(default_factory=list)

    @property
    def T(self):
        return self.Y.shape[0]

    @property
    def N(self):
        return self.Y.shape[1]

    def unstandardize(self, Z):
        """Map standardized values (last axis = series) back to data units."""
        return unstandardize(Z, self.means, self.sds)

    def raw(self):
        return self.unstandardize(self.Y)


@dataclass
class PcInit:
    F0: np.ndarray
    L: float
    loadings: np.ndarray
    eigenvalues: np.ndarray


def apply_tcode(x, code, name="series"):
    """Transform one series to stationarity.

    Leading entries lost to differencing are dropped, so the output has
    ``len(x) - DIFF_ORDER[code]`` entries.
    """
    x = np.asarray(x, dtype=float)
    if code not in DIFF_ORDER:
        raise ConfigError(f"unknown transform code {code!r} for {name}")
    if not np.all(np.isfinite(x)):
        raise DomainError(f"non-finite values in {name}")
    if code in (4, 5, 6) and np.any(x <= 0):
        raise DomainError(f"log transform (code {code}) requires positive values in {name}")
    if code == 7 and np.any(x[:-1] == 0):
        raise DomainError(f"growth-rate transform (code 7) divides by zero in {name}")

    if code == 1:
        return x.copy()
    if code == 2:
        return np.diff(x)
    if code == 3:
        return np.diff(x, n=2)
    if code == 4:
        return np.log(x)
    if code == 5:
        return np.diff(np.log(x))
    if code == 6:
        return np.diff(np.log(x), n=2)
    return np.diff(x[1:] / x[:-1] - 1.0)


def invert_tcode(z, code, initial):
    """Re-integrate a transformed series.

    ``initial`` holds the ``DIFF_ORDER[code]`` original values preceding the
    first element of ``z`` (for codes 1 and 4 it is ignored). Returns the
    reconstructed original values aligned with ``z``.
    """
    z = np.asarray(z, dtype=float)
    initial = np.atleast_1d(np.asarray(initial, dtype=float))
    order = DIFF_ORDER[code]
    if initial.size < order:
        raise ConfigError(f"code {code} needs {order} initial values")
    if code == 1:
        return z.copy()
    if code == 4:
        return np.exp(z)
    if code in (2, 5):
        level0 = initial[-1] if code == 2 else np.log(initial[-1])
        out = level0 + np.cumsum(z)
        return out if code == 2 else np.exp(out)
    if code in (3, 6):
        a, b = initial[-2:]
        if code == 6:
            a, b = np.log(a), np.log(b)
        d = (b - a) + np.cumsum(z)
        out = b + np.cumsum(d)
        return out if code == 3 else np.exp(out)
    # code 7: z_t = g_t - g_{t-1}, g_t = x_t / x_{t-1} - 1
    a, b = initial[-2:]
    g = (b / a - 1.0) + np.cumsum(z)
    return b * np.cumprod(1.0 + g)


def transform_panel(raw: RawPanel):
    """Apply each series' code and cut to the common balanced sample.

    Returns ``(X, dates)`` where X is the transformed T x N matrix.
    """
    cols = []
    for j, (name, code) in enumerate(zip(raw.series_ids, raw.tcodes)):
        x = raw.values[:, j]
        ok = np.isfinite(x)
        if not ok.any():
            raise DomainError(f"series {name} has no observations")
        first = int(np.argmax(ok))
        if not ok[first:].all():
            raise DomainError(f"series {name} has interior missing values")
        z = np.full(x.shape, np.nan)
        z[first + DIFF_ORDER[int(code)]:] = apply_tcode(x[first:], int(code), name)
        cols.append(z)
    X = np.column_stack(cols)
    rows = np.all(np.isfinite(X), axis=1)
    if not rows.any():
        raise DomainError("no balanced sample remains after transformation")
    start = int(np.argmax(rows))
    if not rows[start:].all():
        raise DomainError("balanced sample is not contiguous")
    return X[start:], list(raw.dates[start:])


def standardize(X, series_ids=None, **panel_kwargs):
    """Center and scale each column (sample sd, T-1 denominator)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ConfigError("standardize expects a T x N matrix")
    if X.shape[0] < 2:
        raise DomainError("need at least two observations to standardize")
    if not np.all(np.isfinite(X)):
        raise DomainError("standardize requires a balanced panel without missing values")
    ids = list(series_ids) if series_ids is not None else [f"y{j}" for j in range(X.shape[1])]
    means = X.mean(axis=0)
    sds = X.std(axis=0, ddof=1)
    bad = np.flatnonzero(~(sds > 0) | (sds <= 1e-12 * np.maximum(1.0, np.abs(means))))
    if bad.size:
        raise DomainError(f"zero-variance series: {[ids[j] for j in bad]}")
    Y = (X - means) / sds
    return Panel(Y=Y, means=means, sds=sds, series_ids=ids, **panel_kwargs)


def unstandardize(Z, means, sds):
    return np.asarray(Z) * np.asarray(sds) + np.asarray(means)


def pca_init(Y, D, L_scale=1.2):
    """First ``D`` principal components of ``Y`` and the basis domain half-width.

    Component scores are scaled to unit sample variance and signed so that
    each correlates positively with its highest-loading series.
    """
    Y = np.asarray(Y, dtype=float)
    T, N = Y.shape
    if D < 1:
        raise ConfigError("number of factors D must be at least 1")
    if D > min(T, N):
        raise ConfigError(f"D={D} exceeds min(T, N)={min(T, N)}")
    evals, evecs = np.linalg.eigh(Y.T @ Y)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    tol = evals[0] * max(T, N) * np.finfo(float).eps
    rank = int(np.sum(evals > tol))
    if D > rank:
        raise ConfigError(f"D={D} exceeds the numerical rank {rank} of the panel")
    V = evecs[:, :D].copy()
    lead = np.argmax(np.abs(V), axis=0)
    V *= np.sign(V[lead, np.arange(D)])
    scores = Y @ V
    scores /= scores.std(axis=0, ddof=1)
    L = float(L_scale * np.max(np.abs(scores)))
    return PcInit(F0=scores, L=L, loadings=V, eigenvalues=evals[:D])


def read_panel_csv(path, tcode_path=None, date_col=0):
    """Read a panel CSV.

    Layout: a header row (date column first, then series ids), optionally a
    second row whose first cell is ``transform``/``tcode`` carrying integer
    codes, then one row per period. Empty cells are missing values. When the
    codes are not in the file, ``tcode_path`` must point to a one-row CSV of
    codes (optionally preceded by a header matching the series ids).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise ConfigError(f"{path}: need a header and at least one data row")
    header = [c.strip() for c in rows[0]]
    ids = header[date_col + 1:]
    body = rows[1:]
    tcodes = None
    if body[0][0].strip().lower() in _TCODE_ROW_LABELS:
        tcodes = _parse_codes(body[0][1:], path)
        body = body[1:]
    if tcodes is None:
        if tcode_path is None:
            raise ConfigError(f"{path}: no transform-code row and no tcode file given")
        tcodes = read_tcodes(tcode_path, ids)
    dates, values = [], []
    for r in body:
        dates.append(r[date_col].strip())
        vals = []
        for c in r[date_col + 1:date_col + 1 + len(ids)]:
            c = c.strip()
            vals.append(float(c) if c else np.nan)
        vals += [np.nan] * (len(ids) - len(vals))
        values.append(vals)
    return RawPanel(series_ids=ids, dates=dates, values=np.array(values), tcodes=tcodes)


def read_tcodes(path, ids=None):
    with Path(path).open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) == 2:
        header = [c.strip() for c in rows[0]]
        codes = _parse_codes(rows[1], path)
        if ids is not None and header[-len(ids):] == list(ids):
            codes = codes[-len(ids):]
        return codes
    if len(rows) != 1:
        raise ConfigError(f"{path}: expected a single row of transform codes")
    return _parse_codes(rows[0], path)


def _parse_codes(cells, path):
    cells = [c.strip() for c in cells if c.strip()]
    if cells and cells[0].lower() in _TCODE_ROW_LABELS:
        cells = cells[1:]
    try:
        codes = [int(float(c)) for c in cells]
    except ValueError as exc:
        raise ConfigError(f"{path}: malformed transform code ({exc})") from None
    for c in codes:
        if c not in DIFF_ORDER:
            raise ConfigError(f"{path}: unknown transform code {c}")
    return codes


def load_panel(path, tcode_path=None, targets=()):
    """Read, transform and standardize a panel CSV in one call."""
    raw = read_panel_csv(path, tcode_path)
    X, dates = transform_panel(raw)
    idx = []
    for t in targets:
        if isinstance(t, str) and not t.isdigit():
            if t not in raw.series_ids:
                raise ConfigError(f"target series {t!r} not in panel")
            idx.append(raw.series_ids.index(t))
        else:
            idx.append(int(t))
    return standardize(X, raw.series_ids, target_indices=idx, dates=dates,
                       tcodes=list(raw.tcodes))


def write_panel_csv(path, X, series_ids, dates=None, tcodes=None):
    """Write a panel in the layout accepted by :func:`read_panel_csv`."""
    X = np.asarray(X, dtype=float)
    dates = dates if dates is not None else [f"{t:05d}" for t in range(X.shape[0])]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", *series_ids])
        if tcodes is not None:
            w.writerow(["transform", *[int(c) for c in tcodes]])
        for d, row in zip(dates, X):
            w.writerow([d, *[("" if not np.isfinite(v) else repr(float(v))) for v in row]])
