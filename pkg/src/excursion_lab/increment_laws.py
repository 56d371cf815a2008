"""Integer increment laws and initial laws.

Every law is validated at construction: probabilities sum to one, the law is
centred, has zero third moment and (being finitely supported) a finite fourth
moment, and it can move both up and down.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MOMENT_TOL = 1e-12
TAIL_TOL = 1e-12


class LawError(ValueError):
    pass


class TruncationTooSmall(LawError):
    pass


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class IncrementLaw:
    support: np.ndarray
    probabilities: np.ndarray
    label: str = ""
    tail_mass_dropped: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        k = _frozen(self.support, np.int64)
        p = _frozen(self.probabilities, np.float64)
        object.__setattr__(self, "support", k)
        object.__setattr__(self, "probabilities", p)
        if k.ndim != 1 or k.shape != p.shape or k.size == 0:
            raise LawError("support and probabilities must be 1-d of equal length")
        if np.any(np.diff(k) <= 0):
            raise LawError("support must be strictly increasing")
        if np.any(p < 0):
            raise LawError("negative probability")
        if abs(math.fsum(p) - 1.0) > MOMENT_TOL:
            raise LawError(f"probabilities sum to {math.fsum(p)!r}")
        if not (np.any((k > 0) & (p > 0)) and np.any((k < 0) & (p > 0))):
            raise LawError("support needs a positive and a negative value")
        kf = k.astype(np.float64)
        mean = math.fsum(kf * p)
        third = math.fsum(kf**3 * p)
        if abs(mean) > MOMENT_TOL:
            raise LawError(f"law is not centred (mean={mean!r})")
        if abs(third) > MOMENT_TOL:
            raise LawError(f"third moment is not zero ({third!r})")
        cdf = np.cumsum(p)
        cdf[-1] = 1.0
        object.__setattr__(self, "_cdf", _frozen(cdf, np.float64))

    @property
    def sigma2(self) -> float:
        return math.fsum(self.support.astype(np.float64) ** 2 * self.probabilities)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def cdf(self) -> np.ndarray:
        return self._cdf

    def moment(self, r: int) -> float:
        return math.fsum(self.support.astype(np.float64) ** r * self.probabilities)

    @property
    def kmin(self) -> int:
        return int(self.support[0])

    @property
    def kmax(self) -> int:
        return int(self.support[-1])

    def pmf(self, k) -> float:
        i = np.searchsorted(self.support, k)
        if i < self.support.size and self.support[i] == k:
            return float(self.probabilities[i])
        return 0.0

    def dense(self) -> tuple[int, np.ndarray]:
        """Return ``(kmin, p)`` with ``p[j] = P(X = kmin + j)``."""
        p = np.zeros(self.kmax - self.kmin + 1)
        p[self.support - self.kmin] = self.probabilities
        return self.kmin, p

    def is_symmetric(self) -> bool:
        return bool(
            np.array_equal(self.support, -self.support[::-1])
            and np.array_equal(self.probabilities, self.probabilities[::-1])
        )

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.random(size)
        idx = np.searchsorted(self._cdf, u, side="right")
        out = self.support[np.minimum(idx, self.support.size - 1)]
        return int(out) if size is None else out


@dataclass(frozen=True)
class InitialLaw:
    support: np.ndarray
    probabilities: np.ndarray
    label: str = ""
    tail_mass_dropped: float = 0.0

    def __post_init__(self):
        k = _frozen(self.support, np.int64)
        p = _frozen(self.probabilities, np.float64)
        object.__setattr__(self, "support", k)
        object.__setattr__(self, "probabilities", p)
        if k.shape != p.shape or np.any(p < 0):
            raise LawError("bad initial law")
        if abs(math.fsum(p) - 1.0) > MOMENT_TOL:
            raise LawError(f"initial law sums to {math.fsum(p)!r}")
        cdf = np.cumsum(p)
        cdf[-1] = 1.0
        object.__setattr__(self, "_cdf", _frozen(cdf, np.float64))

    def pmf(self, k) -> float:
        i = np.searchsorted(self.support, k)
        if i < self.support.size and self.support[i] == k:
            return float(self.probabilities[i])
        return 0.0

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.random(size)
        idx = np.searchsorted(self._cdf, u, side="right")
        out = self.support[np.minimum(idx, self.support.size - 1)]
        return int(out) if size is None else out


def point_mass(x: int = 0) -> InitialLaw:
    return InitialLaw([x], [1.0], label=f"delta:{x}")


def make_lazy_law() -> IncrementLaw:
    """P(0) = 1/2, P(+1) = P(-1) = 1/4."""
    return IncrementLaw([-1, 0, 1], [0.25, 0.5, 0.25], label="lazy")


def make_simple_law() -> IncrementLaw:
    """Two-point law on {-1, +1} (periodic, so not used by the LCLT checks)."""
    return IncrementLaw([-1, 1], [0.5, 0.5], label="simple")


def make_table_law(support, probabilities, label="table") -> IncrementLaw:
    return IncrementLaw(support, probabilities, label=label)


def laplace_constant(beta: float) -> float:
    q = math.exp(-beta / 2)
    return (1 + q) / (1 - q)


def laplace_variance(beta: float) -> float:
    """Variance of the untruncated symmetric Laplace law."""
    q = math.exp(-beta / 2)
    return 2.0 / laplace_constant(beta) * q * (1 + q) / (1 - q) ** 3


def _laplace_tail(beta: float, truncation: int) -> float:
    # two-sided mass of |k| > truncation under the untruncated law
    q = math.exp(-beta / 2)
    return 2 * q ** (truncation + 1) / ((1 - q) * laplace_constant(beta))


def min_laplace_truncation(beta: float, tol: float = TAIL_TOL) -> int:
    t = 1
    while _laplace_tail(beta, t) >= tol:
        t += 1
    return t


def make_laplace_law(beta: float, truncation: int | None = None) -> IncrementLaw:
    """Symmetric Laplace law P(X = k) proportional to exp(-beta |k| / 2).

    The law is truncated to ``|k| <= truncation`` and renormalised; the
    dropped two-sided mass must be below 1e-12.
    """
    if beta <= 0:
        raise LawError("beta must be positive")
    if truncation is None:
        truncation = min_laplace_truncation(beta)
    dropped = _laplace_tail(beta, truncation)
    if dropped >= TAIL_TOL:
        raise TruncationTooSmall(
            f"truncation {truncation} drops mass {dropped:.3e} >= {TAIL_TOL:g}"
        )
    k = np.arange(-truncation, truncation + 1)
    w = np.exp(-beta / 2 * np.abs(k))
    w = 0.5 * (w + w[::-1])
    p = w / math.fsum(w)
    return IncrementLaw(
        k,
        p,
        label=f"laplace:beta={beta:g}",
        tail_mass_dropped=dropped,
        metadata={
            "beta": beta,
            "truncation": truncation,
            "c_beta": laplace_constant(beta),
            "sigma2_untruncated": laplace_variance(beta),
        },
    )


def make_mu_law(beta: float, truncation: int | None = None) -> InitialLaw:
    """Law of the starting point of an IPDSAW excursion."""
    if beta <= 0:
        raise LawError("beta must be positive")
    if truncation is None:
        truncation = min_laplace_truncation(beta)
    q = math.exp(-beta / 2)
    dropped = 2 * (1 - q) / 2 * q ** (truncation + 1) / (1 - q)
    if dropped >= TAIL_TOL:
        raise TruncationTooSmall(
            f"truncation {truncation} drops mass {dropped:.3e} >= {TAIL_TOL:g}"
        )
    k = np.arange(-truncation, truncation + 1)
    w = np.where(k == 0, 1 - q, (1 - q) / 2 * q ** np.abs(k))
    p = w / math.fsum(w)
    return InitialLaw(k, p, label=f"mu:beta={beta:g}", tail_mass_dropped=dropped)


def sample_increment(law: IncrementLaw, rng: np.random.Generator) -> int:
    return law.sample(rng)


def read_table_law(path) -> IncrementLaw:
    ks, ps = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ks.append(int(row["k"]))
            ps.append(float(row["p"]))
    order = np.argsort(ks)
    return IncrementLaw(
        np.asarray(ks)[order], np.asarray(ps)[order], label=f"table:{Path(path).name}"
    )


def parse_law(text: str) -> IncrementLaw:
    """Resolve ``lazy``, ``simple``, ``laplace:beta=<f>[,truncation=<n>]`` or
    ``table:<csv path>``."""
    name, _, rest = text.partition(":")
    if name == "lazy" and not rest:
        return make_lazy_law()
    if name == "simple" and not rest:
        return make_simple_law()
    if name == "laplace":
        opts = dict(kv.split("=", 1) for kv in rest.split(",") if kv)
        if "beta" not in opts:
            raise LawError("laplace law needs beta=<value>")
        trunc = int(opts["truncation"]) if "truncation" in opts else None
        return make_laplace_law(float(opts["beta"]), trunc)
    if name == "table" and rest:
        return read_table_law(rest)
    raise LawError(f"unknown law {text!r}")
