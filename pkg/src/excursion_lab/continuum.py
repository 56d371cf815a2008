"""Continuum objects on uniform time grids.

Brownian bridges are built by midpoint refinement, the standard excursion is
the Euclidean norm of three independent bridges, and the area-normalised
excursion is represented by weighting unit-length excursions with
``A(e)^{1/3}``.  Squared Bessel paths use exact Poisson-Gamma transitions.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np


class AreaExceeded(ValueError):
    pass


class ZeroArea(ValueError):
    pass


class NegativeInput(ValueError):
    pass


@dataclass(frozen=True)
class GridPath:
    values: np.ndarray
    h: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("a grid path needs at least two values")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite values")
        if not self.h > 0:
            raise ValueError("step must be positive")
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.size - 1

    @property
    def duration(self) -> float:
        return self.m * self.h

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) * self.h

    def at(self, t) -> np.ndarray:
        """Linear interpolation; times beyond the duration read the last value."""
        return np.interp(t, self.times, self.values)

    def area(self) -> float:
        return area_profile(self.values, self.h, 1.0).total

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in zip(self.times, self.values):
            w.writerow([format(float(t), ".17g"), format(float(v), ".17g")])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "GridPath":
        rows = list(csv.DictReader(io.StringIO(text)))
        t = np.array([float(r["t"]) for r in rows])
        v = np.array([float(r["value"]) for r in rows])
        return cls(v, float(t[1] - t[0]))


@dataclass(frozen=True)
class AreaProfile:
    running_area: np.ndarray
    total: float
    h: float

    def inverse(self, s):
        """``a(s) = inf{t > 0 : A_t > s}`` with linear interpolation in the cell."""
        s_arr = np.asarray(s, dtype=np.float64)
        if np.any(s_arr >= self.total):
            raise AreaExceeded(f"s must stay below the total area {self.total}")
        return _inverse_staircase(self.running_area, self.h, s_arr)


def _inverse_staircase(run, h, s):
    j = np.searchsorted(run, s, side="right")  # first index with A > s
    j = np.clip(j, 1, run.size - 1)
    lo, hi = run[j - 1], run[j]
    gap = hi - lo
    frac = np.where(gap > 0, (s - lo) / np.where(gap > 0, gap, 1.0), 0.0)
    out = (j - 1 + frac) * h
    return float(out) if np.ndim(out) == 0 else out


def area_profile(values, h, alpha: float = 1.0) -> AreaProfile:
    v = np.asarray(values, dtype=np.float64)
    if alpha != 1.0:
        if alpha == 0.0:
            v = np.ones_like(v)
        else:
            v = np.abs(v) ** alpha
    run = np.concatenate(([0.0], np.cumsum(0.5 * h * (v[1:] + v[:-1]))))
    return AreaProfile(run, float(run[-1]), h)


def area_and_timechange(path: GridPath, alpha: float = 1.0):
    prof = area_profile(path.values, path.h, alpha)
    return prof, prof.inverse


def brownian_bridges(m: int, rng: np.random.Generator, size: int = 1, duration: float = 1.0):
    """``size`` independent standard bridges on ``m + 1`` grid points.

    Midpoint refinement: given the values at the ends of an interval of length
    ``l``, the midpoint is their average plus ``N(0, l/4)``.
    """
    if m < 2 or m & (m - 1):
        raise ValueError("m must be a power of two >= 2")
    out = np.zeros((size, m + 1))
    step = m
    while step > 1:
        half = step // 2
        length = step * duration / m
        left = out[:, 0 : m - step + 1 : step]
        right = out[:, step : m + 1 : step]
        noise = rng.standard_normal(left.shape) * math.sqrt(length / 4)
        out[:, half:m:step] = 0.5 * (left + right) + noise
        step = half
    return out


def bessel3_bridge_batch(m: int, rng: np.random.Generator, size: int) -> np.ndarray:
    b = brownian_bridges(m, rng, 3 * size).reshape(size, 3, m + 1)
    e = np.sqrt(np.einsum("ijk,ijk->ik", b, b))
    e[:, 0] = 0.0
    e[:, -1] = 0.0
    return e


def bessel3_bridge_excursion(m: int, rng: np.random.Generator) -> GridPath:
    return GridPath(bessel3_bridge_batch(m, rng, 1)[0], 1.0 / m)


def meander(m: int, rng: np.random.Generator):
    """Bessel(3) path from 0 with importance weight ``1 / value at 1``.

    Under these weights the path has the law of the Brownian meander.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    h = 1.0 / m
    w = np.cumsum(rng.standard_normal((3, m)) * math.sqrt(h), axis=1)
    r = np.concatenate(([0.0], np.sqrt((w**2).sum(axis=0))))
    return GridPath(r, h), 1.0 / r[-1]


def scale(path: GridPath, c: float, m: int | None = None) -> GridPath:
    """``s_c(w)(t) = w(ct) / sqrt(c)`` on ``[0, T / c]``.

    Without ``m`` the grid is carried over exactly (step ``h / c``); with ``m``
    the result is linearly interpolated onto a fresh ``m``-step grid.
    """
    if not c > 0:
        raise ValueError("c must be positive")
    out = GridPath(path.values / math.sqrt(c), path.h / c)
    if m is None:
        return out
    T = out.duration
    t = np.linspace(0.0, T, m + 1)
    return GridPath(out.at(t), T / m)


def normalize_by_area(path: GridPath) -> GridPath:
    """``A(w)^{-1/3} w(t A(w)^{2/3})``, a path of unit area."""
    A = path.area()
    if not A > 0:
        raise ZeroArea("path has no area")
    return scale(path, A ** (2.0 / 3.0))


@dataclass
class WeightedEnsemble:
    items: list
    weights: np.ndarray
    seed: int | None = None
    replica_count: int = 1
    acceptance_rate: float = 1.0
    spec: object = None
    counters: dict | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (len(self.items),):
            raise ValueError("one weight per item")
        if np.any(~np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise ValueError("weights must be finite and nonnegative")

    def __len__(self):
        return len(self.items)

    def normalized_weights(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    def effective_size(self) -> float:
        w = self.weights
        return float(w.sum() ** 2 / (w**2).sum())


def sample_area_normalized_excursion(count: int, m: int, rng: np.random.Generator,
                                     chunk: int = 256) -> WeightedEnsemble:
    items, weights = [], []
    done = 0
    while done < count:
        k = min(chunk, count - done)
        batch = bessel3_bridge_batch(m, rng, k)
        for e in batch:
            path = GridPath(e, 1.0 / m)
            A = path.area()
            items.append(normalize_by_area(path))
            weights.append(A ** (1.0 / 3.0))
        done += k
    return WeightedEnsemble(items, np.array(weights), spec={"kind": "continuum_E", "m": m})


@dataclass
class ExcursionObservables:
    """Per-draw scalars of the weighted E ensemble (paths are not kept).

    ``shape[:, j] = e_{s_j} = E_{s_j R} / sqrt(R)``,
    ``timechanged[:, j] = E_{a_E(s_j)}``, ``bm_timechanged[:, j] = B_{a_E(s_j)}``
    for an independent Brownian motion B.
    """

    s_grid: np.ndarray
    area: np.ndarray
    weight: np.ndarray
    R: np.ndarray
    shape: np.ndarray
    timechanged: np.ndarray
    bm_timechanged: np.ndarray
    height: np.ndarray


def excursion_observables(count: int, m: int, s_grid, rng: np.random.Generator,
                          chunk: int = 256) -> ExcursionObservables:
    s_grid = np.asarray(s_grid, dtype=np.float64)
    n_s = s_grid.size
    out = {k: [] for k in ("area", "shape", "tc", "bm", "height")}
    h = 1.0 / m
    grid_t = np.arange(m + 1) * h
    done = 0
    while done < count:
        k = min(chunk, count - done)
        e = bessel3_bridge_batch(m, rng, k)
        run = np.concatenate(
            (np.zeros((k, 1)), np.cumsum(0.5 * h * (e[:, 1:] + e[:, :-1]), axis=1)), axis=1)
        A = run[:, -1]
        shape = np.empty((k, n_s))
        tc = np.empty((k, n_s))
        for i in range(k):
            shape[i] = np.interp(s_grid, grid_t, e[i])
            # a_E(s) = A^{-2/3} a_e(sA) and E_{a_E(s)} = A^{-1/3} e(a_e(sA))
            targets = np.minimum(s_grid * A[i], np.nextafter(A[i], 0))
            t_e = _inverse_staircase(run[i], h, targets)
            tc[i] = np.interp(t_e, grid_t, e[i]) * A[i] ** (-1.0 / 3.0)
            tc[i, s_grid >= 1.0] = 0.0
        # a_E(s) = A^{-2/3} a_e(sA); B at that time is N(0, a_E(s))
        a_E = np.empty((k, n_s))
        for i in range(k):
            targets = np.minimum(s_grid * A[i], np.nextafter(A[i], 0))
            a_E[i] = _inverse_staircase(run[i], h, targets) * A[i] ** (-2.0 / 3.0)
        bm = rng.standard_normal((k, n_s)) * np.sqrt(a_E)
        out["area"].append(A)
        out["shape"].append(shape)
        out["tc"].append(tc)
        out["bm"].append(bm)
        out["height"].append(e.max(axis=1))
        done += k
    A = np.concatenate(out["area"])
    return ExcursionObservables(
        s_grid,
        A,
        A ** (1.0 / 3.0),
        A ** (-2.0 / 3.0),
        np.concatenate(out["shape"]),
        np.concatenate(out["tc"]),
        np.concatenate(out["bm"]),
        np.concatenate(out["height"]),
    )


# --- squared Bessel processes and the process Y --------------------------------


def besq_step(z, delta: float, dt: float, rng: np.random.Generator):
    """Exact BESQ(delta) transition over ``dt``: ``2 dt Gamma(delta/2 + Poisson(z / 2dt))``."""
    z = np.asarray(z, dtype=np.float64)
    n = rng.poisson(z / (2 * dt))
    shape = delta / 2 + n
    out = np.zeros(z.shape)
    pos = shape > 0
    out[pos] = 2 * dt * rng.standard_gamma(shape[pos])
    return out if out.ndim else float(out)


def besq_paths(delta: float, z0: float, m: int, rng: np.random.Generator, size: int = 1,
               duration: float = 1.0) -> np.ndarray:
    if delta < 0 or z0 < 0:
        raise ValueError("delta and z0 must be nonnegative")
    dt = duration / m
    out = np.empty((size, m + 1))
    out[:, 0] = z0
    for j in range(m):
        out[:, j + 1] = besq_step(out[:, j], delta, dt, rng)
    return out


def besq_path(delta: float, z0: float, m: int, rng: np.random.Generator,
              duration: float = 1.0) -> GridPath:
    return GridPath(besq_paths(delta, z0, m, rng, 1, duration)[0], duration / m)


def bessel_from_besq(path: GridPath) -> GridPath:
    return GridPath(np.sqrt(np.maximum(path.values, 0.0)), path.h)


def phi_values(rho):
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho < 0):
        raise NegativeInput("phi needs nonnegative input")
    return (1.5 * rho) ** (2.0 / 3.0)


def phi_map(path: GridPath) -> GridPath:
    """``y_t = ((3/2) rho_t)^{2/3}``."""
    return GridPath(phi_values(path.values), path.h)


def _brownian_abs_until_area(m_unit: int, horizon: float, rng: np.random.Generator):
    """|B| on a grid of ``m_unit`` steps per unit time, extended until its area passes 1."""
    h = 1.0 / m_unit
    n = int(round(horizon * m_unit))
    b = np.concatenate(([0.0], np.cumsum(rng.standard_normal(n) * math.sqrt(h))))
    while True:
        a = np.abs(b)
        run = np.concatenate(([0.0], np.cumsum(0.5 * h * (a[1:] + a[:-1]))))
        if run[-1] > 1.0:
            return a, run, h
        ext = b[-1] + np.cumsum(rng.standard_normal(n) * math.sqrt(h))
        b = np.concatenate((b, ext))


def y_process(m: int, horizon: float, rng: np.random.Generator, m_fine: int | None = None) -> GridPath:
    """``Y_s = |B|_{a(s)}`` on an ``m``-step grid of ``[0, 1]``.

    ``a`` inverts the running area of |B|; B is simulated with ``m_fine`` steps
    per unit time (default ``m``) and extended beyond ``horizon`` as needed.
    """
    a, run, h = _brownian_abs_until_area(m_fine or m, horizon, rng)
    s = np.linspace(0.0, 1.0, m + 1)
    t = _inverse_staircase(run, h, np.minimum(s, np.nextafter(run[-1], 0)))
    y = np.interp(t, np.arange(a.size) * h, a)
    y[0] = 0.0
    return GridPath(y, 1.0 / m)


def zero_set(path: GridPath, threshold: float | None = None) -> list:
    """Maximal runs of grid points with value <= threshold, as ``(t_start, t_end)``."""
    if threshold is None:
        threshold = 1.5 * math.sqrt(path.h)
    low = np.asarray(path.values) <= threshold
    if not low.any():
        return []
    d = np.diff(low.astype(np.int8))
    starts = list(np.flatnonzero(d == 1) + 1)
    ends = list(np.flatnonzero(d == -1))
    if low[0]:
        starts.insert(0, 0)
    if low[-1]:
        ends.append(low.size - 1)
    return [(s * path.h, e * path.h) for s, e in zip(starts, ends)]


def last_zero_before(path: GridPath, t: float = 1.0, threshold: float | None = None) -> float:
    """Last grid time ``<= t`` with value at or below the threshold (0 if none)."""
    if threshold is None:
        threshold = 1.5 * math.sqrt(path.h)
    n = int(math.floor(t / path.h + 1e-9))
    low = np.flatnonzero(np.asarray(path.values[: n + 1]) <= threshold)
    return float(low[-1] * path.h) if low.size else 0.0
