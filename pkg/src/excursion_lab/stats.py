"""Two-sample and independence tests, slopes and continuity moduli."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats as sps

LEVEL = 0.01


class DegenerateSample(ValueError):
    pass


class SparseCells(ValueError):
    pass


class NonPositiveInput(ValueError):
    pass


def digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


@dataclass
class TestReport:
    __test__ = False  # not a pytest class

    name: str
    statistic: float
    critical_value: float | None = None
    p_value: float | None = None
    sample_sizes: tuple = ()
    level: float = LEVEL
    inputs_digest: str = ""
    extra: dict = field(default_factory=dict)
    inclusive: bool = False  # pass on statistic == critical_value too

    @property
    def verdict(self) -> str:
        if self.critical_value is not None:
            if self.inclusive:
                return "pass" if self.statistic <= self.critical_value else "fail"
            return "pass" if self.statistic < self.critical_value else "fail"
        if self.p_value is not None:
            return "pass" if self.p_value > self.level else "fail"
        return "pass"

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict
        d["sample_sizes"] = list(self.sample_sizes)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), default=_json_default, indent=2)


def _json_default(x):
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def effective_size(weights) -> float:
    """Kish effective sample size ``(sum w)^2 / sum w^2``."""
    w = np.asarray(weights, dtype=np.float64)
    return float(w.sum() ** 2 / (w**2).sum())


def ks_critical(n1: float, n2: float, level: float = LEVEL) -> float:
    return float(sps.kstwobign.isf(level) * math.sqrt(1.0 / n1 + 1.0 / n2))


def _weighted_ecdf_at(x, w, points):
    order = np.argsort(x, kind="mergesort")
    xs, ws = x[order], w[order]
    cw = np.concatenate(([0.0], np.cumsum(ws)))
    cw /= cw[-1]
    return cw[np.searchsorted(xs, points, side="right")]


def ks_two_sample(xs, ys, wx=None, wy=None, name: str = "ks", level: float = LEVEL,
                  min_size: int = 50) -> TestReport:
    """Sup distance between (weighted) empirical CDFs.

    Weighted samples enter the asymptotic Kolmogorov law through their
    effective sizes.
    """
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if x.size < min_size or y.size < min_size:
        raise ValueError(f"samples need at least {min_size} points")
    if np.all(x == x[0]) and np.all(y == y[0]) and x[0] == y[0]:
        raise DegenerateSample("all values equal in both samples")
    wx_ = np.ones_like(x) if wx is None else np.asarray(wx, dtype=np.float64).ravel()
    wy_ = np.ones_like(y) if wy is None else np.asarray(wy, dtype=np.float64).ravel()
    pts = np.concatenate((x, y))
    d = float(np.abs(_weighted_ecdf_at(x, wx_, pts) - _weighted_ecdf_at(y, wy_, pts)).max())
    n1 = x.size if wx is None else effective_size(wx_)
    n2 = y.size if wy is None else effective_size(wy_)
    ne = n1 * n2 / (n1 + n2)
    p = float(sps.kstwobign.sf(d * math.sqrt(ne)))
    return TestReport(
        name, d, ks_critical(n1, n2, level), p, (x.size, y.size), level,
        digest(x, wx_, y, wy_), {"effective_sizes": [n1, n2]})


def jittered(numerators, denominators, rng: np.random.Generator):
    """``(k + U) / d`` with ``U`` uniform on (-1/2, 1/2).

    Spreads lattice values over their cell so that an integer-valued statistic
    can be compared with a continuous law by a sup-distance test.
    """
    k = np.asarray(numerators, dtype=np.float64)
    return (k + rng.uniform(-0.5, 0.5, k.shape)) / np.asarray(denominators, dtype=np.float64)


def chi_square_independence(counts, name: str = "chi2-independence",
                            level: float = LEVEL, merge: bool = True) -> TestReport:
    """Pearson test of independence on a contingency table.

    With ``merge`` sparse rows/columns are folded into their neighbours until
    every expected count is at least 5.
    """
    c = np.asarray(counts, dtype=np.float64)
    if merge:
        c = _merge_sparse(c)
    n = c.sum()
    exp = np.outer(c.sum(axis=1), c.sum(axis=0)) / n
    if exp.min() < 5:
        raise SparseCells("expected counts below 5")
    stat = float(((c - exp) ** 2 / exp).sum())
    dof = (c.shape[0] - 1) * (c.shape[1] - 1)
    p = float(sps.chi2.sf(stat, dof)) if dof > 0 else 1.0
    return TestReport(name, stat, float(sps.chi2.isf(level, dof)) if dof > 0 else None, p,
                      (int(n),), level, digest(c), {"dof": dof, "shape": list(c.shape)})


def _merge_sparse(c):
    c = c.copy()
    for axis in (0, 1):
        while c.shape[axis] > 2:
            n = c.sum()
            exp = np.outer(c.sum(axis=1), c.sum(axis=0)) / n
            low = exp.min(axis=1 - axis)
            j = int(np.argmin(low))
            if low[j] >= 5:
                break
            k = j + 1 if j + 1 < c.shape[axis] else j - 1
            lo, hi = sorted((j, k))
            if axis == 0:
                c[lo] += c[hi]
                c = np.delete(c, hi, axis=0)
            else:
                c[:, lo] += c[:, hi]
                c = np.delete(c, hi, axis=1)
    return c


def binned_counts(x, y, x_edges, y_edges) -> np.ndarray:
    h, _, _ = np.histogram2d(x, y, bins=[x_edges, y_edges])
    return h


def loglog_slope(xs, ys):
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.size < 5:
        raise ValueError("need at least 5 points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise NonPositiveInput("log-log fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    res = sps.linregress(lx, ly)
    # stderr from the residuals: the 1 - r^2 route loses half the digits on exact fits
    resid = ly - (res.intercept + res.slope * lx)
    sxx = np.sum((lx - lx.mean()) ** 2)
    stderr = math.sqrt(np.sum(resid**2) / (x.size - 2) / sxx)
    return float(res.slope), stderr


def continuity_modulus(values, window=(0.0, 1.0), epsilon: float = 0.1) -> float:
    """``sup{|f(t) - f(s)| : s, t in window, |t - s| <= epsilon}`` on a grid of [0, 1]."""
    f = np.asarray(values, dtype=np.float64)
    x, y = window
    if not (0 <= x < y <= 1) or epsilon <= 0:
        raise ValueError("need 0 <= x < y <= 1 and epsilon > 0")
    m = f.size - 1
    i0 = int(math.ceil(x * m - 1e-9))
    i1 = int(math.floor(y * m + 1e-9))
    seg = f[i0 : i1 + 1]
    lag = int(math.floor(epsilon * m + 1e-9))
    if lag >= seg.size - 1:
        return float(seg.max() - seg.min())
    best = 0.0
    for k in range(1, lag + 1):
        best = max(best, float(np.abs(seg[k:] - seg[:-k]).max()))
    return best


def write_reports(reports, path):
    with open(path, "w") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=2, default=_json_default)
