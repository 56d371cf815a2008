"""Lattice paths and their discrete functionals.

Conventions (all indices are integer steps):

* ``positions[i-1] = S_i`` for ``i = 1..n``; ``S_0 = start`` is kept apart.
* ``A_n = S_1 + ... + S_n``, ``G_n = |S_1| + ... + |S_n|``, ``K_n = n + G_n``.
* The companion walk flips the sign of every even-numbered increment.
* ``tau_tilde = inf{n >= 1 : S_n <= 0}`` (weak inequality, so hitting 0 ends
  the excursion).
* ``tau_j = inf{i > tau_{j-1} : S_{i-1} != 0, S_{i-1} S_i <= 0}``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .increment_laws import IncrementLaw


class AreaNeverReached(ValueError):
    pass


def floor_index(t, n):
    """``floor(t * n)`` robust to binary representation of decimal ``t``.

    A relative slack of 1e-9 absorbs products like ``0.29 * 100`` that land
    just below an integer; it is far below any grid spacing used here.
    """
    x = np.asarray(t, dtype=np.float64) * n
    out = np.floor(x + 1e-9 * np.maximum(1.0, np.abs(x))).astype(np.int64)
    return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LatticePath:
    start: int
    increments: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=np.int64)
        pos = np.asarray(self.positions, dtype=np.int64)
        inc.setflags(write=False)
        pos.setflags(write=False)
        object.__setattr__(self, "increments", inc)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "start", int(self.start))

    @classmethod
    def from_increments(cls, start: int, increments) -> "LatticePath":
        inc = np.asarray(increments, dtype=np.int64)
        return cls(start, inc, int(start) + np.cumsum(inc))

    @property
    def length(self) -> int:
        return int(self.increments.size)

    @property
    def values(self) -> np.ndarray:
        """``(S_0, S_1, ..., S_n)``."""
        return np.concatenate(([self.start], self.positions))

    def check(self) -> bool:
        return bool(np.array_equal(self.start + np.cumsum(self.increments), self.positions))

    def to_csv(self) -> str:
        f = functionals(self)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "X_i", "S_i", "A_i", "G_i", "Sbar_i"])
        w.writerow([0, "", self.start, 0, 0, 0])
        for i in range(self.length):
            w.writerow(
                [
                    i + 1,
                    int(self.increments[i]),
                    int(self.positions[i]),
                    int(f.algebraic_area[i]),
                    int(f.geometric_area[i]),
                    int(f.companion[i]),
                ]
            )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "LatticePath":
        rows = list(csv.DictReader(io.StringIO(text)))
        start = int(rows[0]["S_i"])
        inc = [int(r["X_i"]) for r in rows[1:]]
        path = cls.from_increments(start, inc)
        stored = np.array([int(r["S_i"]) for r in rows[1:]], dtype=np.int64)
        if not np.array_equal(stored, path.positions):
            raise ValueError("CSV positions disagree with increments")
        return path


def evolve(start: int, law: IncrementLaw, horizon: int, rng: np.random.Generator) -> LatticePath:
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    return LatticePath.from_increments(start, law.sample(rng, horizon))


@dataclass(frozen=True)
class PathFunctionals:
    algebraic_area: np.ndarray
    geometric_area: np.ndarray
    perturbed_area: np.ndarray
    companion: np.ndarray
    tau_tilde: int | None
    tau_seq: tuple
    positions: np.ndarray
    start: int

    @property
    def length(self) -> int:
        return int(self.positions.size)


def companion_walk(increments) -> np.ndarray:
    inc = np.asarray(increments, dtype=np.int64)
    signs = np.where(np.arange(1, inc.size + 1) % 2 == 1, 1, -1)
    return np.cumsum(signs * inc)


def stopping_times(start: int, positions) -> tuple:
    s = np.concatenate(([start], np.asarray(positions, dtype=np.int64)))
    prev, cur = s[:-1], s[1:]
    hits = np.flatnonzero((prev != 0) & (prev * cur <= 0)) + 1
    # successive infima over i > tau_{j-1} are just the successive hit indices
    return tuple(int(h) for h in hits)


def functionals(path: LatticePath) -> PathFunctionals:
    s = path.positions
    a = np.cumsum(s)
    g = np.cumsum(np.abs(s))
    k = np.arange(1, s.size + 1) + g
    nonpos = np.flatnonzero(s <= 0)
    tau_tilde = int(nonpos[0]) + 1 if nonpos.size else None
    return PathFunctionals(
        algebraic_area=a,
        geometric_area=g,
        perturbed_area=k,
        companion=companion_walk(path.increments),
        tau_tilde=tau_tilde,
        tau_seq=stopping_times(path.start, s),
        positions=s,
        start=path.start,
    )


def chi(f: PathFunctionals, s: float) -> int:
    """``inf{n >= 1 : A_n >= s}``."""
    hit = np.flatnonzero(f.algebraic_area >= s)
    if hit.size == 0:
        raise AreaNeverReached(f"area {s} never reached within {f.length} steps")
    return int(hit[0]) + 1


def xi(f: PathFunctionals, s: float) -> int:
    """``inf{i >= 0 : K_i >= s}`` with ``K_0 = 0``."""
    if s <= 0:
        return 0
    hit = np.flatnonzero(f.perturbed_area >= s)
    if hit.size == 0:
        raise AreaNeverReached(f"K never reaches {s} within {f.length} steps")
    return int(hit[0]) + 1


def chi_staircase(f: PathFunctionals, s: float) -> int:
    """``chi`` computed by inverting the rescaled running-area staircase.

    Only valid up to ``tau_tilde`` (where the area is nondecreasing): with
    ``T = tau_tilde`` and ``u = s / T^{3/2}`` this returns
    ``T * inf{t > 0 : A_{floor(tT)} / T^{3/2} >= u}``.
    """
    T = f.tau_tilde
    if T is None:
        raise ValueError("staircase inversion needs tau_tilde")
    area = f.algebraic_area[:T]
    if s > area[-1]:
        raise AreaNeverReached(f"area {s} exceeds A_tau = {area[-1]}")
    # rescaled staircase values at t = n / T, n = 1..T, compared in integer units
    n = int(np.searchsorted(area, s, side="left")) + 1
    return n


def rescaled_marginal(path: LatticePath, times, denominator: float) -> np.ndarray:
    idx = floor_index(times, path.length)
    idx = np.atleast_1d(idx)
    if np.any(idx > path.length) or np.any(idx < 0):
        raise ValueError("time outside the path")
    return path.values[idx] / denominator
